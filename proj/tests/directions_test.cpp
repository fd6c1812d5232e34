#include <gtest/gtest.h>

#include <cmath>

#include "auedit/directions/directions.hpp"
#include "auedit/predictor/train.hpp"
#include "auedit/synthgen/oracle.hpp"
#include "auedit/synthgen/sampler.hpp"
#include "test_support.hpp"

using namespace auedit;
using namespace auedit::directions;
using predictor::Architecture;
using predictor::PredictorWeights;
using auedit::testing::random_vector;
using auedit::testing::TempDir;

namespace {

PredictorWeights random_predictor(std::uint64_t seed, const Architecture& arch = {}) {
  auto p = predictor::init_weights(arch, seed, 1.0);
  Rng rng(derive_seed(seed, 99));
  p.for_each_layer([&](const std::string&, predictor::Dense& d) { d.b = random_vector(rng, d.out(), 0.3); });
  return p;
}

// Output s of the network with identity activations and no biases.
double linear_output(const PredictorWeights& p, std::size_t s, const Eigen::VectorXd& x) {
  auto layer = [](const predictor::Dense& d, const Eigen::VectorXd& v) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(d.W.rows());
    for (Eigen::Index i = 0; i < d.W.rows(); ++i)
      for (Eigen::Index j = 0; j < d.W.cols(); ++j) y[i] += d.W(i, j) * v[j];
    return y;
  };
  return layer(p.l5[s], layer(p.l4[s], layer(p.l3[s], layer(p.l2, layer(p.l1, x)))))[0];
}

// Small trained predictor over the reference generator.
const PredictorWeights& trained() {
  static const PredictorWeights p = [] {
    const synth::SynthGenerator gen{synth::GeneratorConfig{}};
    const synth::AUOracle oracle(gen, synth::default_au_definitions(), 2);
    const auto ds = synth::sample_dataset(gen, oracle, 1000, Eigen::MatrixXd::Identity(8, 8), 3);
    predictor::TrainConfig cfg;
    cfg.epochs = 60;
    cfg.seed = 4;
    return predictor::train(ds, cfg, Architecture{}).weights;
  }();
  return p;
}

}  // namespace

TEST(Collapse, ScalarChainMultiplies) {
  PredictorWeights p(Architecture{1, 1, 1, 1, 1, 1});
  p.l1.W(0, 0) = 2.0;
  p.l2.W(0, 0) = 3.0;
  p.l3[0].W(0, 0) = 1.0;
  p.l4[0].W(0, 0) = 1.0;
  p.l5[0].W(0, 0) = 5.0;
  p.l1.b[0] = 7.0;
  const auto d = collapse_directions(p);
  EXPECT_EQ(d.raw(0, 0), 30.0);
  EXPECT_EQ(d.unit(0, 0), 1.0);
}

TEST(Collapse, ZeroBranchIsUndefined) {
  auto p = random_predictor(1);
  p.l5[3].W.setZero();
  const auto d = collapse_directions(p);
  EXPECT_FALSE(d.defined[3]);
  EXPECT_EQ(d.unit.row(3).norm(), 0.0);
  EXPECT_ERROR_KIND(d.unit_of(3), ErrorKind::numerical);
  EXPECT_ERROR_KIND(d.unit_of(8), ErrorKind::invalid_argument);
  EXPECT_TRUE(std::isnan(correlation(d)(3, 0)));
  EXPECT_ERROR_KIND(combine(d, {{3, 1.0}}), ErrorKind::numerical);
}

TEST(Collapse, EqualsGradientOfLinearisedNetwork) {
  const auto p = random_predictor(2);
  const auto d = collapse_directions(p);
  Rng rng(3);
  for (int point = 0; point < 3; ++point) {
    const Eigen::VectorXd x = random_vector(rng, 32);
    for (std::size_t s = 0; s < 8; ++s) {
      const auto fd = auedit::testing::central_fd([&](const Eigen::VectorXd& v) { return linear_output(p, s, v); }, x);
      EXPECT_LE((d.raw.row(static_cast<Eigen::Index>(s)).transpose() - fd).norm(), 1e-6 * fd.norm()) << s;
    }
  }
  EXPECT_EQ(d.source, predictor::weights_hash(p));
}

TEST(Combine, LinearInIntensities) {
  const auto d = collapse_directions(random_predictor(4));
  EXPECT_EQ(combine(d, {{2, 1.0}}), d.unit_of(2));
  EXPECT_EQ(combine(d, {{2, 0.0}, {5, 0.0}}).norm(), 0.0);
  EXPECT_LE((combine(d, {{1, 1.0}, {6, 1.0}}) - (d.unit_of(1) + d.unit_of(6))).norm(), 1e-15);
  EXPECT_LE((combine(d, {{1, 0.5}, {6, -2.0}}) - (0.5 * d.unit_of(1) - 2.0 * d.unit_of(6))).norm(), 1e-15);
  EXPECT_EQ(combine(d, {}).norm(), 0.0);
}

TEST(Correlation, BasicProperties) {
  Eigen::MatrixXd raw(3, 4);
  raw << 1, 0, 0, 0,  //
      0, 1, 0, 0,     //
      2, 0, 0, 0;
  const auto c = correlation(from_raw(raw));
  EXPECT_EQ(c(0, 0), 1.0);
  EXPECT_EQ(c(0, 1), 0.0);
  EXPECT_EQ(c(0, 2), 1.0);
  raw.row(2) *= -1.0;
  EXPECT_EQ(correlation(from_raw(raw))(0, 2), 1.0);
}

TEST(Correlation, InvariantToRescaling) {
  const auto d = collapse_directions(random_predictor(5));
  Eigen::MatrixXd scaled = d.raw;
  Rng rng(6);
  for (Eigen::Index s = 0; s < scaled.rows(); ++s) scaled.row(s) *= rng.uniform(0.1, 10.0);
  const auto a = correlation(d), b = correlation(from_raw(scaled));
  EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((a - a.transpose()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Orthogonalize, RemovesComponent) {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::MatrixXd raw(2, 32);
    raw.row(0) = random_vector(rng, 32).transpose();
    raw.row(1) = raw.row(0) * rng.uniform(-1.0, 1.0) + random_vector(rng, 32).transpose();
    const auto d = from_raw(raw);
    const auto r = orthogonalize(d, 0, 1);
    EXPECT_LE(std::abs(r.dot(d.unit_of(1))), 1e-10);
    EXPECT_NEAR(r.norm(), 1.0, 1e-12);
    EXPECT_GT(r.dot(d.unit_of(0)), 0.0);
  }
}

TEST(Orthogonalize, OrthogonalInputUnchangedParallelRejected) {
  Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(3, 4);
  raw(0, 0) = 3.0;
  raw(1, 1) = 2.0;
  raw(2, 0) = -1.0;
  const auto d = from_raw(raw);
  EXPECT_EQ(orthogonalize(d, 0, 1), d.unit_of(0));
  EXPECT_ERROR_KIND(orthogonalize(d, 0, 2), ErrorKind::numerical);
}

TEST(Orthogonalize, DecouplesLinearisedOutput) {
  const auto d = collapse_directions(trained());
  const Eigen::VectorXd nb = d.raw.row(5).transpose();
  const auto r = orthogonalize(d, 0, 5);
  EXPECT_LE(std::abs(nb.dot(r)), 1e-10 * nb.norm());
  // Along the original direction the cross-term is the projection itself.
  EXPECT_NEAR(nb.dot(d.unit_of(0)), nb.norm() * d.unit_of(5).dot(d.unit_of(0)), 1e-12 * nb.norm());
}

TEST(LinearEdit, AddsAndComposes) {
  Rng rng(8);
  const LatentVector w(random_vector(rng, 32));
  const Eigen::VectorXd n1 = random_vector(rng, 32), n2 = random_vector(rng, 32);
  EXPECT_EQ(global_edit_linear(w, Eigen::VectorXd::Zero(32)), w);
  const auto twice = global_edit_linear(global_edit_linear(w, n1), n2);
  EXPECT_LE((twice.values() - global_edit_linear(w, n1 + n2).values()).norm(), 1e-14);
  EXPECT_ERROR_KIND(global_edit_linear(w, Eigen::VectorXd::Zero(31)), ErrorKind::dimension);
}

TEST(OptimizeEdit, FixedPointsAndBudget) {
  const auto& p = trained();
  Rng rng(9);
  const LatentVector w(random_vector(rng, 32, 0.5));
  const auto at = global_edit_optimize(p, w, predictor::forward(p, w), {});
  EXPECT_EQ(at.latent, w);
  OptimizeConfig none;
  none.iterations = 0;
  auto target = predictor::forward(p, w);
  target[0] += 1.0;
  EXPECT_EQ(global_edit_optimize(p, w, target, {}, none).latent, w);
  EXPECT_ERROR_KIND(global_edit_optimize(p, w, AUVector(7), {}), ErrorKind::dimension);
  EXPECT_ERROR_KIND(global_edit_optimize(p, w, target, {9}), ErrorKind::invalid_argument);
}

TEST(OptimizeEdit, RaisesOneAUWithOthersFrozen) {
  const auto& p = trained();
  Rng rng(10);
  for (int rep = 0; rep < 5; ++rep) {
    const LatentVector w(random_vector(rng, 32, 0.5));
    const auto au = static_cast<std::size_t>(rep) % 8;
    const auto start = predictor::forward(p, w);
    auto target = start;
    target[au] += 1.0;
    std::set<std::size_t> frozen;
    for (std::size_t s = 0; s < 8; ++s)
      if (s != au) frozen.insert(s);
    const auto res = global_edit_optimize(p, w, target, frozen);
    EXPECT_LE(res.final_loss, res.initial_loss);
    const auto y = predictor::forward(p, res.latent);
    for (std::size_t s = 0; s < 8; ++s) EXPECT_LE(std::abs(y[s] - target[s]), 0.1) << "rep " << rep << " au " << s;
  }
}

TEST(OptimizeEdit, NeverWorseThanStart) {
  const auto& p = trained();
  Rng rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    const LatentVector w(random_vector(rng, 32, 0.5));
    OptimizeConfig hot;
    hot.learning_rate = 50.0;
    hot.iterations = 20;
    const auto res = global_edit_optimize(p, w, AUVector(random_vector(rng, 8, 2.0)), {}, hot);
    EXPECT_LE(res.final_loss, res.initial_loss);
    for (double l : res.losses) EXPECT_GE(l, res.final_loss);
  }
}

TEST(OptimizeEdit, TransfersPredictionsBetweenLatents) {
  const auto& p = trained();
  Rng rng(12);
  for (int rep = 0; rep < 3; ++rep) {
    const LatentVector src(random_vector(rng, 32, 0.5)), ref(random_vector(rng, 32, 0.5));
    const auto goal = predictor::forward(p, ref);
    const auto res = global_edit_optimize(p, src, goal, {}, OptimizeConfig{0.1, 2000, 1e-4});
    const auto y = predictor::forward(p, res.latent);
    for (std::size_t s = 0; s < 8; ++s) EXPECT_LE(std::abs(y[s] - goal[s]), 0.3) << rep << " " << s;
  }
}

TEST(DirectionsIo, RoundTrip) {
  TempDir dir;
  auto p = random_predictor(13);
  p.l5[2].W.setZero();
  const auto d = collapse_directions(p);
  save_directions(d, dir / "dirs");
  const auto back = load_directions(dir / "dirs");
  EXPECT_EQ(back.source, d.source);
  EXPECT_EQ(back.defined, d.defined);
  EXPECT_LE((back.raw - d.raw).cwiseAbs().maxCoeff(), 1e-6 * d.raw.cwiseAbs().maxCoeff());
  for (std::size_t s = 0; s < 8; ++s)
    if (d.defined[s]) {
      EXPECT_NEAR(back.unit_of(s).norm(), 1.0, 1e-12);
    }
  EXPECT_ERROR_KIND(load_directions(dir / "none"), ErrorKind::missing_artifact);
}
