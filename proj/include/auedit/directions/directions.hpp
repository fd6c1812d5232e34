#pragma once

// Linear edit directions obtained by collapsing the predictor's weight
// matrices, their combination, correlation and orthogonalisation, and both
// global editing modes.

#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "auedit/core/descent.hpp"
#include "auedit/core/error.hpp"
#include "auedit/core/kv.hpp"
#include "auedit/core/tensor.hpp"
#include "auedit/core/types.hpp"
#include "auedit/predictor/io.hpp"
#include "auedit/predictor/mlp.hpp"

namespace auedit::directions {

struct DirectionSet {
  Eigen::MatrixXd raw;   // S x d
  Eigen::MatrixXd unit;  // S x d; zero rows where undefined
  std::vector<bool> defined;
  std::string source;    // predictor weights hash

  std::size_t au_count() const { return static_cast<std::size_t>(raw.rows()); }
  std::size_t latent_dim() const { return static_cast<std::size_t>(raw.cols()); }
  Eigen::VectorXd unit_of(std::size_t au) const {
    require(au < au_count(), ErrorKind::invalid_argument, "AU index " + std::to_string(au) + " out of range");
    require(defined[au], ErrorKind::numerical, "direction for AU " + std::to_string(au) + " is undefined");
    return unit.row(static_cast<Eigen::Index>(au)).transpose();
  }
};

inline DirectionSet from_raw(Eigen::MatrixXd raw, std::string source = {}) {
  DirectionSet d;
  d.unit = Eigen::MatrixXd::Zero(raw.rows(), raw.cols());
  d.defined.assign(static_cast<std::size_t>(raw.rows()), false);
  for (Eigen::Index s = 0; s < raw.rows(); ++s) {
    const double n = raw.row(s).norm();
    if (n > 0.0 && std::isfinite(n)) {
      d.unit.row(s) = raw.row(s) / n;
      d.defined[static_cast<std::size_t>(s)] = true;
    }
  }
  d.raw = std::move(raw);
  d.source = std::move(source);
  return d;
}

// Input-space gradient of the network with ReLUs replaced by identity and
// biases dropped: n_au = (W5 W4 W3 W2 W1)^T.
inline DirectionSet collapse_directions(const predictor::PredictorWeights& p) {
  Eigen::MatrixXd raw(static_cast<Eigen::Index>(p.arch.au_count), static_cast<Eigen::Index>(p.arch.latent_dim));
  const Eigen::MatrixXd trunk = p.l2.W * p.l1.W;
  for (std::size_t s = 0; s < p.arch.au_count; ++s)
    raw.row(static_cast<Eigen::Index>(s)) = p.l5[s].W * p.l4[s].W * p.l3[s].W * trunk;
  return from_raw(std::move(raw), predictor::weights_hash(p));
}

using EditRequest = std::map<std::size_t, double>;

// n_edit = sum over requested AUs of lambda_au * unit_au.
inline Eigen::VectorXd combine(const DirectionSet& dirs, const EditRequest& req) {
  Eigen::VectorXd n = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dirs.latent_dim()));
  for (const auto& [au, lambda] : req) n += lambda * dirs.unit_of(au);
  return n;
}

// |cos| between unit directions; undefined entries are NaN.
inline Eigen::MatrixXd correlation(const DirectionSet& dirs) {
  const auto S = static_cast<Eigen::Index>(dirs.au_count());
  Eigen::MatrixXd c(S, S);
  for (Eigen::Index a = 0; a < S; ++a)
    for (Eigen::Index b = 0; b < S; ++b) {
      if (!dirs.defined[static_cast<std::size_t>(a)] || !dirs.defined[static_cast<std::size_t>(b)]) {
        c(a, b) = std::numeric_limits<double>::quiet_NaN();
      } else if (a == b) {
        c(a, b) = 1.0;
      } else {
        c(a, b) = std::min(1.0, std::abs(dirs.unit.row(a).dot(dirs.unit.row(b))));
      }
    }
  return c;
}

// Component of unit_target orthogonal to unit_against, renormalised.
inline Eigen::VectorXd orthogonalize(const DirectionSet& dirs, std::size_t target, std::size_t against) {
  const Eigen::VectorXd a = dirs.unit_of(target);
  const Eigen::VectorXd b = dirs.unit_of(against);
  Eigen::VectorXd r = a - a.dot(b) * b;
  const double n = r.norm();
  require(n > 1e-8, ErrorKind::numerical,
          "directions " + std::to_string(target) + " and " + std::to_string(against) + " are parallel");
  r /= n;
  r -= r.dot(b) * b;  // second pass removes rounding residue
  return r / r.norm();
}

inline LatentVector global_edit_linear(const LatentVector& w, const Eigen::VectorXd& n_edit) {
  require(w.size() == static_cast<std::size_t>(n_edit.size()), ErrorKind::dimension,
          "edit direction length does not match latent");
  return LatentVector(Eigen::VectorXd(w.values() + n_edit));
}

struct OptimizeConfig {
  double learning_rate = 0.1;
  std::size_t iterations = 300;
  double tolerance = 1e-4;
};

struct OptimizeResult {
  LatentVector latent;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> losses;
};

// Gradient descent on mean_s (f_s(w) - t_s)^2, where frozen AUs target
// their prediction at the starting latent.
inline OptimizeResult global_edit_optimize(const predictor::PredictorWeights& p, const LatentVector& w,
                                           const AUVector& target, const std::set<std::size_t>& frozen,
                                           const OptimizeConfig& cfg = {}) {
  require(target.size() == p.arch.au_count, ErrorKind::dimension, "target length does not match AU count");
  AUVector goal = target;
  if (!frozen.empty()) {
    const auto start = predictor::forward(p, w);
    for (auto au : frozen) {
      require(au < goal.size(), ErrorKind::invalid_argument, "frozen AU index out of range");
      goal[au] = start[au];
    }
  }
  auto objective = [&](const Eigen::VectorXd& x) {
    auto g = predictor::predict_grad_w(p, LatentVector(x), goal);
    return std::pair{g.loss, g.grad.values()};
  };
  DescentConfig dc;
  dc.learning_rate = cfg.learning_rate;
  dc.iterations = cfg.iterations;
  dc.tolerance = cfg.tolerance;
  auto res = descend(objective, w.values(), dc);
  return {LatentVector(res.best), res.initial_loss, res.best_loss, std::move(res.losses)};
}

// ---- persistence -----------------------------------------------------------

inline void save_directions(const DirectionSet& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_tensor(to_tensor(d.raw), dir / "raw.aued");
  save_tensor(to_tensor(d.unit), dir / "unit.aued");
  KeyValues kv;
  kv.set("S", static_cast<std::uint64_t>(d.au_count()));
  kv.set("d", static_cast<std::uint64_t>(d.latent_dim()));
  kv.set("source", d.source);
  std::string defined;
  for (bool b : d.defined) defined += b ? '1' : '0';
  kv.set("defined", defined);
  kv.save(dir / "manifest.txt");
}

// Recomputes unit rows from the stored raw rows.
inline DirectionSet load_directions(const std::filesystem::path& dir) {
  require(std::filesystem::exists(dir / "manifest.txt"), ErrorKind::missing_artifact,
          "directions not found in " + dir.string() + " (run `analyze` first)");
  const auto kv = KeyValues::load(dir / "manifest.txt");
  auto d = from_raw(matrix_from_tensor(load_tensor(dir / "raw.aued")), kv.get("source"));
  require(d.au_count() == kv.get_u64("S") && d.latent_dim() == kv.get_u64("d"), ErrorKind::format,
          "direction manifest disagrees with tensor shape");
  return d;
}

}  // namespace auedit::directions
