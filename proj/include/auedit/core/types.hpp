#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "auedit/core/error.hpp"
#include "auedit/core/tensor.hpp"

namespace auedit {

// Fixed-role vector; the tag keeps latents and AU intensities from mixing.
template <class Tag>
class TaggedVector {
 public:
  TaggedVector() = default;
  explicit TaggedVector(std::size_t n) : v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))) {}
  explicit TaggedVector(Eigen::VectorXd v) : v_(std::move(v)) {}
  TaggedVector(std::initializer_list<double> xs) : v_(static_cast<Eigen::Index>(xs.size())) {
    Eigen::Index i = 0;
    for (double x : xs) v_[i++] = x;
  }

  std::size_t size() const { return static_cast<std::size_t>(v_.size()); }
  double operator[](std::size_t i) const { return v_[static_cast<Eigen::Index>(i)]; }
  double& operator[](std::size_t i) { return v_[static_cast<Eigen::Index>(i)]; }

  const Eigen::VectorXd& values() const { return v_; }
  Eigen::VectorXd& values() { return v_; }

  bool all_finite() const { return v_.allFinite(); }

  friend bool operator==(const TaggedVector& a, const TaggedVector& b) {
    return a.v_.size() == b.v_.size() && (a.v_.array() == b.v_.array()).all();
  }

 private:
  Eigen::VectorXd v_;
};

using LatentVector = TaggedVector<struct LatentTag>;
using AUVector = TaggedVector<struct AUTag>;

// Edit-layer feature maps, (channel, height, width) row-major.
struct ActivationTensor {
  std::size_t channels = 0, height = 0, width = 0;
  std::vector<double> data;

  ActivationTensor() = default;
  ActivationTensor(std::size_t c, std::size_t h, std::size_t w)
      : channels(c), height(h), width(w), data(c * h * w, 0.0) {}

  double& at(std::size_t c, std::size_t h, std::size_t w) { return data[(c * height + h) * width + w]; }
  double at(std::size_t c, std::size_t h, std::size_t w) const { return data[(c * height + h) * width + w]; }
  std::size_t plane() const { return height * width; }
  bool same_shape(const ActivationTensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  friend bool operator==(const ActivationTensor&, const ActivationTensor&) = default;
};

// Single-channel image, row-major, nominal range [0, 1].
struct ImageTensor {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  ImageTensor() = default;
  ImageTensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  bool same_shape(const ImageTensor& o) const { return rows == o.rows && cols == o.cols; }
  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

// Binary H x W map at either edit-layer or image resolution.
struct BinaryMask {
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(std::size_t r, std::size_t c, std::uint8_t fill = 0) : rows(r), cols(c), data(r * c, fill) {}

  std::uint8_t& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : data) n += v;
    return n;
  }
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

// ---- conversions to the on-disk tensor type ------------------------------

inline std::vector<float> to_f32(std::span<const double> xs) {
  std::vector<float> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = static_cast<float>(xs[i]);
  return out;
}

inline DenseTensor to_tensor(const ActivationTensor& a) {
  return DenseTensor::f32({a.channels, a.height, a.width}, to_f32(a.data));
}

inline DenseTensor to_tensor(const ImageTensor& im) {
  return DenseTensor::f32({im.rows, im.cols}, to_f32(im.data));
}

inline DenseTensor to_tensor(const BinaryMask& m) { return DenseTensor::u8({m.rows, m.cols}, m.data); }

inline DenseTensor to_tensor(const Eigen::MatrixXd& m) {
  std::vector<float> out(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      out[static_cast<std::size_t>(r * m.cols() + c)] = static_cast<float>(m(r, c));
  return DenseTensor::f32({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, std::move(out));
}

inline Eigen::MatrixXd matrix_from_tensor(const DenseTensor& t) {
  require(t.dtype() == DType::f32, ErrorKind::format, "expected f32 tensor");
  require(t.rank() == 2 || t.rank() == 1, ErrorKind::dimension, "expected rank-1 or rank-2 tensor");
  const auto rows = static_cast<Eigen::Index>(t.rank() == 2 ? t.dim(0) : t.dim(0));
  const auto cols = static_cast<Eigen::Index>(t.rank() == 2 ? t.dim(1) : 1);
  Eigen::MatrixXd m(rows, cols);
  auto d = t.f32_data();
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = d[static_cast<std::size_t>(r * cols + c)];
  return m;
}

inline ActivationTensor activations_from_tensor(const DenseTensor& t) {
  require(t.dtype() == DType::f32 && t.rank() == 3, ErrorKind::dimension, "expected f32 C x H x W tensor");
  ActivationTensor a(t.dim(0), t.dim(1), t.dim(2));
  auto d = t.f32_data();
  for (std::size_t i = 0; i < d.size(); ++i) a.data[i] = d[i];
  return a;
}

inline ImageTensor image_from_tensor(const DenseTensor& t) {
  require(t.dtype() == DType::f32 && t.rank() == 2, ErrorKind::dimension, "expected f32 rows x cols tensor");
  ImageTensor im(t.dim(0), t.dim(1));
  auto d = t.f32_data();
  for (std::size_t i = 0; i < d.size(); ++i) im.data[i] = d[i];
  return im;
}

// Rounds every entry through f32 so in-memory values equal what a file holds.
inline Eigen::VectorXd round_to_f32(const Eigen::VectorXd& v) {
  return v.cast<float>().cast<double>();
}

}  // namespace auedit
