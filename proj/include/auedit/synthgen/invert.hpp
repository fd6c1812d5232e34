#pragma once

// Optimisation-based inversion: find w whose rendered image matches a target.

#include <cmath>

#include "auedit/core/descent.hpp"
#include "auedit/core/error.hpp"
#include "auedit/core/types.hpp"
#include "auedit/synthgen/generator.hpp"

namespace auedit::synth {

struct InversionConfig {
  std::size_t iterations = 500;
  double learning_rate = 5.0;
  bool adaptive = true;
};

struct InversionResult {
  LatentVector latent;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> losses;
};

inline double mean_squared_error(const ImageTensor& a, const ImageTensor& b) {
  require(a.same_shape(b), ErrorKind::dimension, "image shapes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

// Peak signal-to-noise ratio for unit dynamic range.
inline double psnr(const ImageTensor& a, const ImageTensor& b) {
  const double mse = mean_squared_error(a, b);
  return mse <= 0.0 ? std::numeric_limits<double>::infinity() : -10.0 * std::log10(mse);
}

inline InversionResult invert(const SynthGenerator& gen, const ImageTensor& target, const InversionConfig& cfg,
                              const LatentVector* init = nullptr) {
  const auto r = gen.config().image_size;
  require(target.rows == r && target.cols == r, ErrorKind::dimension, "target image shape does not match generator");
  const ActivationTensor no_act(gen.config().channels, gen.config().height, gen.config().width);
  const double inv_n = 1.0 / static_cast<double>(target.data.size());
  auto objective = [&](const Eigen::VectorXd& x) {
    const LatentVector w(x);
    const auto out = gen.generate(w);
    ImageTensor cot(r, r);
    double loss = 0.0;
    for (std::size_t i = 0; i < cot.data.size(); ++i) {
      const double d = out.image.data[i] - target.data[i];
      loss += d * d;
      cot.data[i] = 2.0 * d * inv_n;
    }
    return std::pair{loss * inv_n, gen.generate_grad(w, cot, no_act).values()};
  };
  Eigen::VectorXd x0 = init ? init->values() : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(gen.latent_dim()));
  DescentConfig dc;
  dc.learning_rate = cfg.learning_rate;
  dc.iterations = cfg.iterations;
  dc.adaptive = cfg.adaptive;
  auto res = descend(objective, std::move(x0), dc);
  return {LatentVector(res.best), res.initial_loss, res.best_loss, std::move(res.losses)};
}

}  // namespace auedit::synth
