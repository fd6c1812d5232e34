#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "auedit/core/dataset.hpp"
#include "auedit/core/error.hpp"
#include "auedit/core/rng.hpp"
#include "auedit/predictor/mlp.hpp"

namespace auedit::predictor {

struct TrainConfig {
  double learning_rate = 1e-2;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double init_scale = 0.5;
  double val_fraction = 0.1;

  void validate() const {
    require(std::isfinite(learning_rate) && learning_rate >= 0.0, ErrorKind::invalid_argument,
            "learning_rate must be >= 0");
    require(batch_size >= 1, ErrorKind::invalid_argument, "batch_size must be >= 1");
    require(val_fraction >= 0.0 && val_fraction < 1.0, ErrorKind::invalid_argument,
            "val_fraction must lie in [0, 1)");
  }
};

struct TrainReport {
  std::vector<double> train_mse;
  std::vector<double> val_mse;
  std::vector<std::vector<double>> val_r2;  // [epoch][au]
};

struct Split {
  std::vector<std::size_t> train, val;
};

// Seeded permutation; the first round(n * fraction) indices validate.
inline Split split_indices(std::size_t n, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0xA11D));
  rng.shuffle(idx.begin(), idx.end());
  const auto nv = std::min(n, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  Split s;
  s.val.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(nv));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(nv), idx.end());
  return s;
}

struct Evaluation {
  double mse = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> r2;
};

// R^2 = 1 - SS_res / SS_tot per AU; a constant target column scores 1 when
// fitted exactly and 0 otherwise.
inline Evaluation evaluate(const PredictorWeights& p, const LatentDataset& ds, const std::vector<std::size_t>& rows) {
  Evaluation e;
  const auto S = p.arch.au_count;
  if (rows.empty()) {
    e.r2.assign(S, std::numeric_limits<double>::quiet_NaN());
    return e;
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(p.arch.latent_dim), static_cast<Eigen::Index>(rows.size()));
  Eigen::MatrixXd t(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.col(static_cast<Eigen::Index>(i)) = ds.latents[rows[i]].values();
    t.col(static_cast<Eigen::Index>(i)) = ds.labels[rows[i]].values();
  }
  const Eigen::MatrixXd y = forward_batch(p, x);
  const Eigen::MatrixXd r = y - t;
  e.mse = r.squaredNorm() / static_cast<double>(r.size());
  for (std::size_t s = 0; s < S; ++s) {
    const auto row = t.row(static_cast<Eigen::Index>(s));
    const double mean = row.mean();
    const double ss_tot = (row.array() - mean).square().sum();
    const double ss_res = r.row(static_cast<Eigen::Index>(s)).squaredNorm();
    e.r2.push_back(ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0));
  }
  return e;
}

inline double median(std::vector<double> v) {
  require(!v.empty(), ErrorKind::invalid_argument, "median of empty set");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct TrainResult {
  PredictorWeights weights;
  TrainReport report;
  Split split;
};

// Minibatch SGD from the given weights; batches follow a fresh seeded
// permutation of the training rows every epoch.
inline TrainResult train_from(PredictorWeights w, const LatentDataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  ds.validate();
  require(!ds.empty(), ErrorKind::invalid_argument, "cannot train on an empty dataset");
  require(ds.latent_dim == w.arch.latent_dim && ds.au_count == w.arch.au_count, ErrorKind::dimension,
          "dataset shape does not match predictor architecture");
  auto split = split_indices(ds.size(), cfg.val_fraction, cfg.seed);
  require(!split.train.empty(), ErrorKind::invalid_argument, "validation split leaves no training rows");
  TrainReport rep;
  std::vector<LatentVector> bx;
  std::vector<AUVector> by;
  auto order = split.train;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, epoch + 1));
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const auto stop = std::min(order.size(), start + cfg.batch_size);
      bx.clear();
      by.clear();
      for (std::size_t i = start; i < stop; ++i) {
        bx.push_back(ds.latents[order[i]]);
        by.push_back(ds.labels[order[i]]);
      }
      const auto g = backward(w, bx, by);
      w.axpy(-cfg.learning_rate, g.grads);
    }
    rep.train_mse.push_back(evaluate(w, ds, split.train).mse);
    auto ev = evaluate(w, ds, split.val);
    rep.val_mse.push_back(ev.mse);
    rep.val_r2.push_back(std::move(ev.r2));
  }
  return {std::move(w), std::move(rep), std::move(split)};
}

inline TrainResult train(const LatentDataset& ds, const TrainConfig& cfg, Architecture arch) {
  arch.latent_dim = ds.latent_dim;
  arch.au_count = ds.au_count;
  return train_from(init_weights(arch, cfg.seed, cfg.init_scale), ds, cfg);
}

}  // namespace auedit::predictor
