#pragma once

// Local editing: cluster-union masks, mask-restricted latent optimisation,
// activation multiplexing, and the whole-channel interpolation baseline.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "auedit/clustering/spherical_kmeans.hpp"
#include "auedit/core/descent.hpp"
#include "auedit/core/error.hpp"
#include "auedit/core/types.hpp"
#include "auedit/synthgen/backend.hpp"

namespace auedit::local {

struct EditMask {
  BinaryMask low;   // edit-layer resolution
  BinaryMask high;  // image resolution
  std::vector<std::size_t> selected;
};

inline BinaryMask upsample_nearest(const BinaryMask& m, std::size_t factor) {
  require(factor >= 1, ErrorKind::invalid_argument, "upsample factor must be >= 1");
  BinaryMask out(m.rows * factor, m.cols * factor);
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c) out.at(r, c) = m.at(r / factor, c / factor);
  return out;
}

inline EditMask build_mask(const cluster::Membership& u, const std::vector<std::size_t>& selected,
                           std::size_t factor) {
  EditMask m;
  m.low = BinaryMask(u.height, u.width);
  for (auto k : selected) {
    require(k < u.clusters, ErrorKind::invalid_argument, "selected cluster " + std::to_string(k) + " out of range");
    for (std::size_t h = 0; h < u.height; ++h)
      for (std::size_t w = 0; w < u.width; ++w) m.low.at(h, w) = std::min<int>(1, m.low.at(h, w) + u.at(k, h, w));
  }
  m.high = upsample_nearest(m.low, factor);
  m.selected = selected;
  return m;
}

struct LocalEditConfig {
  double alpha = 1.0;
  double beta = 1.0;
  double learning_rate = 0.05;
  std::size_t iterations = 300;
  double tolerance = 0.0;
  bool adaptive = true;  // grow on accepted steps, halve on rejected ones

  void validate() const {
    require(alpha >= 0.0 && beta >= 0.0, ErrorKind::invalid_argument, "alpha and beta must be >= 0");
    require(learning_rate >= 0.0, ErrorKind::invalid_argument, "learning_rate must be >= 0");
  }
};

struct LossParts {
  double edit = 0.0;         // mean((M (I - I_global))^2)
  double consistency = 0.0;  // mean(((1 - M) (I - I_orig))^2)
};

// Both terms average over every pixel of the image.
inline LossParts local_losses(const ImageTensor& im, const ImageTensor& i_global, const ImageTensor& i_orig,
                              const BinaryMask& high) {
  require(im.same_shape(i_global) && im.same_shape(i_orig) && high.rows == im.rows && high.cols == im.cols,
          ErrorKind::dimension, "mask and image shapes differ");
  LossParts l;
  for (std::size_t i = 0; i < im.data.size(); ++i) {
    const double m = high.data[i];
    const double de = m * (im.data[i] - i_global.data[i]);
    const double dc = (1.0 - m) * (im.data[i] - i_orig.data[i]);
    l.edit += de * de;
    l.consistency += dc * dc;
  }
  const double inv = 1.0 / static_cast<double>(im.data.size());
  l.edit *= inv;
  l.consistency *= inv;
  return l;
}

struct LocalEditResult {
  LatentVector latent;
  ImageTensor image;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> losses;
};

template <GeneratorBackend G>
LocalEditResult local_edit_optimize(const G& gen, const LatentVector& w_orig, const LatentVector& w_global,
                                    const EditMask& mask, const LocalEditConfig& cfg) {
  cfg.validate();
  const auto i_orig = gen.generate(w_orig).image;
  const auto i_global = gen.generate(w_global).image;
  require(mask.high.rows == i_orig.rows && mask.high.cols == i_orig.cols, ErrorKind::dimension,
          "mask resolution does not match image");
  const auto& act_shape = gen.generate(w_orig).activations;
  const ActivationTensor no_act(act_shape.channels, act_shape.height, act_shape.width);
  const double inv = 1.0 / static_cast<double>(i_orig.data.size());
  auto objective = [&](const Eigen::VectorXd& x) {
    const LatentVector w(x);
    const auto im = gen.generate(w).image;
    ImageTensor cot(im.rows, im.cols);
    double loss = 0.0;
    for (std::size_t i = 0; i < im.data.size(); ++i) {
      const double m = mask.high.data[i];
      const double de = m * (im.data[i] - i_global.data[i]);
      const double dc = (1.0 - m) * (im.data[i] - i_orig.data[i]);
      loss += cfg.alpha * de * de + cfg.beta * dc * dc;
      cot.data[i] = 2.0 * inv * (cfg.alpha * m * de + cfg.beta * (1.0 - m) * dc);
    }
    return std::pair{loss * inv, gen.generate_grad(w, cot, no_act).values()};
  };
  DescentConfig dc;
  dc.learning_rate = cfg.learning_rate;
  dc.iterations = cfg.iterations;
  dc.tolerance = cfg.tolerance;
  dc.adaptive = cfg.adaptive;
  auto res = descend(objective, w_global.values(), dc);
  LatentVector best(res.best);
  auto image = gen.generate(best).image;
  return {std::move(best), std::move(image), res.initial_loss, res.best_loss, std::move(res.losses)};
}

// A_local = (1 - M) A_orig + M A_global, M broadcast over channels.
inline ActivationTensor multiplex(const ActivationTensor& a_orig, const ActivationTensor& a_global,
                                  const BinaryMask& low) {
  require(a_orig.same_shape(a_global), ErrorKind::dimension, "activation shapes differ");
  require(low.rows == a_orig.height && low.cols == a_orig.width, ErrorKind::dimension,
          "mask must be at edit-layer resolution");
  ActivationTensor out = a_orig;
  const auto plane = a_orig.plane();
  for (std::size_t c = 0; c < a_orig.channels; ++c)
    for (std::size_t p = 0; p < plane; ++p)
      if (low.data[p]) out.data[c * plane + p] = a_global.data[c * plane + p];
  return out;
}

template <GeneratorBackend G>
ImageTensor render_from_activations(const G& gen, const ActivationTensor& a) {
  return gen.render(a);
}

// Whole-channel blend weighted by the region-channel relation row of
// cluster k: s_c = clamp(strength * R[k,c] / max_c R[k,c], 0, 1).
inline ActivationTensor baseline_channel_interpolation(const ActivationTensor& a_orig,
                                                       const ActivationTensor& a_global, const Eigen::MatrixXd& r_kc,
                                                       std::size_t k, double strength) {
  require(a_orig.same_shape(a_global), ErrorKind::dimension, "activation shapes differ");
  require(static_cast<Eigen::Index>(k) < r_kc.rows() && static_cast<std::size_t>(r_kc.cols()) == a_orig.channels,
          ErrorKind::dimension, "relation matrix does not match activations");
  const double top = r_kc.row(static_cast<Eigen::Index>(k)).maxCoeff();
  require(top > 0.0, ErrorKind::numerical, "relation row for cluster " + std::to_string(k) + " is zero");
  ActivationTensor out = a_orig;
  const auto plane = a_orig.plane();
  for (std::size_t c = 0; c < a_orig.channels; ++c) {
    const double s = std::clamp(strength * r_kc(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) / top, 0.0, 1.0);
    for (std::size_t p = 0; p < plane; ++p) {
      const auto i = c * plane + p;
      out.data[i] = (1.0 - s) * a_orig.data[i] + s * a_global.data[i];
    }
  }
  return out;
}

// Mean |a - b| over pixels where the mask equals `inside`.
inline double masked_mean_abs(const ImageTensor& a, const ImageTensor& b, const BinaryMask& m, bool inside) {
  require(a.same_shape(b) && m.rows == a.rows && m.cols == a.cols, ErrorKind::dimension, "shapes differ");
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    if ((m.data[i] != 0) != inside) continue;
    s += std::abs(a.data[i] - b.data[i]);
    ++n;
  }
  return n == 0 ? 0.0 : s / static_cast<double>(n);
}

}  // namespace auedit::local
