#pragma once

// Helpers shared by the test binaries.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "auedit/core/error.hpp"
#include "auedit/core/rng.hpp"
#include "auedit/core/types.hpp"

namespace auedit::testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "auedit") {
    std::string tmpl = (fs::temp_directory_path() / (tag + "-XXXXXX")).string();
    if (!::mkdtemp(tmpl.data())) fail(ErrorKind::io, "mkdtemp failed");
    path_ = tmpl;
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

inline std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Gradient-vector relative error, ||g - ref|| / max(||ref||, 1e-8).
inline double rel_err(const Eigen::VectorXd& g, const Eigen::VectorXd& ref) {
  return (g - ref).norm() / std::max(ref.norm(), 1e-8);
}

// Central differences of a scalar function.
inline Eigen::VectorXd central_fd(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                  double h = 1e-3) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x, xm = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
    xp[i] = xm[i] = x[i];
  }
  return g;
}

inline Eigen::VectorXd random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = scale * rng.normal();
  return v;
}

inline ActivationTensor random_activations(Rng& rng, std::size_t c, std::size_t h, std::size_t w, double lo = -1.0,
                                           double hi = 1.0) {
  ActivationTensor a(c, h, w);
  for (auto& v : a.data) v = rng.uniform(lo, hi);
  return a;
}

template <class F>
ErrorKind error_kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  fail(ErrorKind::invalid_argument, "expected an auedit::Error");
}

}  // namespace auedit::testing

#define EXPECT_ERROR_KIND(stmt, kind) EXPECT_EQ(::auedit::testing::error_kind_of([&] { stmt; }), (kind))
