#pragma once

// Correlated latent sampling. Each AU's designated part control is drawn
// from a Gaussian whose correlation matrix is the requested AU correlation;
// all other controls are independent. Controls are pulled back to a latent
// through the minimum-norm inverse of the generator's latent map, plus an
// isotropic component in that map's null space.

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "auedit/core/dataset.hpp"
#include "auedit/core/error.hpp"
#include "auedit/core/rng.hpp"
#include "auedit/synthgen/generator.hpp"
#include "auedit/synthgen/oracle.hpp"

namespace auedit::synth {

struct SamplerConfig {
  double control_scale = 1.0;  // std-dev of pre-tanh controls
  double nuisance_scale = 0.5; // std-dev of controls no AU is designated to
  double null_scale = 0.3;     // std-dev of null-space latent noise
};

// Symmetric factor F with F F^T = corr; rejects non-PSD input.
inline Eigen::MatrixXd correlation_factor(const Eigen::MatrixXd& corr) {
  require(corr.rows() == corr.cols(), ErrorKind::invalid_argument, "correlation matrix must be square");
  require((corr - corr.transpose()).cwiseAbs().maxCoeff() <= 1e-9, ErrorKind::invalid_argument,
          "correlation matrix must be symmetric");
  for (Eigen::Index i = 0; i < corr.rows(); ++i)
    require(std::abs(corr(i, i) - 1.0) <= 1e-9, ErrorKind::invalid_argument, "correlation diagonal must be 1");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr);
  const Eigen::VectorXd ev = es.eigenvalues();
  require(ev.minCoeff() >= -1e-9, ErrorKind::invalid_argument, "correlation matrix is not positive semidefinite");
  return es.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

inline Eigen::MatrixXd pair_correlation(std::size_t s, std::size_t a, std::size_t b, double rho) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s));
  c(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = rho;
  c(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = rho;
  return c;
}

// Minimum-norm latent realising the given pre-tanh controls, plus null-space noise.
class LatentPullback {
 public:
  explicit LatentPullback(const SynthGenerator& gen) : gen_(gen) {
    const auto& m = gen.latent_map();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto rank = static_cast<Eigen::Index>((svd.singularValues().array() > 1e-10).count());
    require(rank == m.rows(), ErrorKind::numerical, "latent map is not full row rank");
    pinv_ = svd.matrixV().leftCols(rank) *
            svd.singularValues().head(rank).cwiseInverse().asDiagonal() * svd.matrixU().leftCols(rank).transpose();
    null_ = svd.matrixV().rightCols(m.cols() - rank);
  }

  LatentVector operator()(const Eigen::VectorXd& controls, const Eigen::VectorXd& null_coeffs) const {
    Eigen::VectorXd w = pinv_ * (controls - gen_.latent_bias());
    if (null_.cols() > 0) w += null_ * null_coeffs;
    return LatentVector(std::move(w));
  }

  Eigen::Index null_dim() const { return null_.cols(); }
  const Eigen::MatrixXd& pseudo_inverse() const { return pinv_; }

 private:
  const SynthGenerator& gen_;
  Eigen::MatrixXd pinv_;
  Eigen::MatrixXd null_;
};

inline LatentDataset sample_dataset(const SynthGenerator& gen, const AUOracle& oracle, std::size_t n,
                                    const Eigen::MatrixXd& au_correlation, std::uint64_t seed,
                                    const SamplerConfig& cfg = {}) {
  const auto s = oracle.au_count();
  require(static_cast<std::size_t>(au_correlation.rows()) == s, ErrorKind::dimension,
          "correlation matrix size differs from AU count");
  const Eigen::MatrixXd factor = correlation_factor(au_correlation);

  std::vector<std::size_t> designated(s);
  for (std::size_t i = 0; i < s; ++i) {
    const auto& part = gen.parts()[oracle.part_of(i)];
    designated[i] = part.control_rows[designated_param(oracle.definitions()[i].statistic)];
    for (std::size_t j = 0; j < i; ++j)
      require(designated[j] != designated[i], ErrorKind::invalid_argument, "two AUs share a designated control");
  }

  const LatentPullback pullback(gen);
  LatentDataset ds;
  ds.seed = seed;
  ds.latent_dim = gen.latent_dim();
  ds.au_count = s;
  ds.latents.reserve(n);
  ds.labels.reserve(n);
  const auto np = static_cast<Eigen::Index>(gen.param_count());
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    Eigen::VectorXd controls(np);
    for (Eigen::Index j = 0; j < np; ++j) controls[j] = cfg.nuisance_scale * rng.normal();
    Eigen::VectorXd white(static_cast<Eigen::Index>(s));
    for (Eigen::Index j = 0; j < white.size(); ++j) white[j] = rng.normal();
    const Eigen::VectorXd coupled = factor * white;
    for (std::size_t j = 0; j < s; ++j)
      controls[static_cast<Eigen::Index>(designated[j])] = cfg.control_scale * coupled[static_cast<Eigen::Index>(j)];
    Eigen::VectorXd null_coeffs(pullback.null_dim());
    for (Eigen::Index j = 0; j < null_coeffs.size(); ++j) null_coeffs[j] = cfg.null_scale * rng.normal();
    LatentVector w(round_to_f32(pullback(controls, null_coeffs).values()));
    AUVector y(round_to_f32(oracle.measure(gen.generate(w).image).values()));
    ds.latents.push_back(std::move(w));
    ds.labels.push_back(std::move(y));
  }
  return ds;
}

}  // namespace auedit::synth
