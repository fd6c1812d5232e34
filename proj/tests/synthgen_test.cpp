#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "auedit/synthgen/backend.hpp"
#include "auedit/synthgen/generator.hpp"
#include "auedit/synthgen/invert.hpp"
#include "auedit/synthgen/oracle.hpp"
#include "auedit/synthgen/sampler.hpp"
#include "test_support.hpp"

using namespace auedit;
using namespace auedit::synth;
using auedit::testing::central_fd;
using auedit::testing::random_vector;
using auedit::testing::rel_err;

static_assert(GeneratorBackend<SynthGenerator>);
static_assert(AULabeler<AUOracle>);

namespace {

const SynthGenerator& desk_gen() {
  static const SynthGenerator g{GeneratorConfig{}};
  return g;
}

const AUOracle& desk_oracle() {
  static const AUOracle o(desk_gen(), default_au_definitions(), 2);
  return o;
}

double inner(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Image-resolution pixels of a grid window; `dilate` grows it by whole cells.
BinaryMask grid_window_mask(const SynthGenerator& g, const Window& w, std::size_t dilate = 0) {
  const auto f = g.upsample_y();
  const auto r0 = w.row0 >= dilate ? w.row0 - dilate : 0, c0 = w.col0 >= dilate ? w.col0 - dilate : 0;
  const auto r1 = std::min(g.config().height, w.row1 + dilate), c1 = std::min(g.config().width, w.col1 + dilate);
  const Window big{r0 * f, r1 * f, c0 * f, c1 * f};
  BinaryMask m(g.config().image_size, g.config().image_size);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) m.at(r, c) = big.contains(r, c);
  return m;
}

double outside_mean_abs(const ImageTensor& a, const ImageTensor& b, const BinaryMask& inside) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    if (!inside.data[i]) {
      s += std::abs(a.data[i] - b.data[i]);
      ++n;
    }
  return s / static_cast<double>(n);
}

}  // namespace

TEST(Generator, DeskShapes) {
  const auto out = desk_gen().generate(LatentVector(32));
  EXPECT_EQ(out.activations.channels, 16u);
  EXPECT_EQ(out.activations.height, 16u);
  EXPECT_EQ(out.activations.width, 16u);
  EXPECT_EQ(out.image.rows, 64u);
  EXPECT_EQ(out.image.cols, 64u);
  EXPECT_EQ(desk_gen().parts().size(), 8u);
}

TEST(Generator, DeterministicPerSeed) {
  Rng rng(1);
  const LatentVector w(random_vector(rng, 32));
  const SynthGenerator again{GeneratorConfig{}};
  const auto a = desk_gen().generate(w), b = again.generate(w);
  EXPECT_EQ(a.activations, b.activations);
  EXPECT_EQ(a.image, b.image);
  GeneratorConfig other;
  other.seed = 2;
  EXPECT_NE(SynthGenerator(other).generate(w).image, a.image);
}

TEST(Generator, ImageIsRenderOfActivations) {
  Rng rng(3);
  for (int i = 0; i < 5; ++i) {
    const auto out = desk_gen().generate(LatentVector(random_vector(rng, 32)));
    EXPECT_EQ(desk_gen().render(out.activations), out.image);
    for (double v : out.image.data) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Generator, RejectsBadShapesAndConfigs) {
  EXPECT_ERROR_KIND(desk_gen().generate(LatentVector(31)), ErrorKind::dimension);
  EXPECT_ERROR_KIND(desk_gen().render(ActivationTensor(16, 8, 8)), ErrorKind::dimension);
  EXPECT_ERROR_KIND(desk_gen().generate_grad(LatentVector(32), ImageTensor(63, 64), ActivationTensor(16, 16, 16)),
                    ErrorKind::dimension);
  GeneratorConfig c;
  c.image_size = 60;
  EXPECT_ERROR_KIND(SynthGenerator{c}, ErrorKind::invalid_argument);
  c = {};
  c.channels = 15;
  EXPECT_ERROR_KIND(SynthGenerator{c}, ErrorKind::invalid_argument);
  c = {};
  std::vector<PartSpec> overlapping(2);
  overlapping[0] = {"a", {0, 4, 0, 4}, {0, 1, 2}};
  overlapping[1] = {"b", {1, 5, 1, 5}, {3, 4, 5}};
  EXPECT_ERROR_KIND(SynthGenerator(c, overlapping), ErrorKind::invalid_argument);
  std::vector<PartSpec> outside(1);
  outside[0] = {"a", {10, 17, 0, 4}, {0, 1, 2}};
  c.coupled_a = c.coupled_b = "";
  EXPECT_ERROR_KIND(SynthGenerator(c, outside), ErrorKind::invalid_argument);
}

TEST(Generator, ConfigRoundTrip) {
  GeneratorConfig c;
  c.seed = 99;
  c.coupling = 0.25;
  const auto back = GeneratorConfig::from_kv(KeyValues::parse(c.to_kv().to_string()));
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.coupling, 0.25);
  EXPECT_EQ(back.coupled_a, c.coupled_a);
}

TEST(Generator, CoupledRowsHaveRequestedCosine) {
  const auto& g = desk_gen();
  const auto& m = g.latent_map();
  const auto a = g.parts()[g.part_index("left-brow")].control_rows[kOffset];
  const auto b = g.parts()[g.part_index("mouth")].control_rows[kWidth];
  const double cosv = m.row(static_cast<Eigen::Index>(a)).dot(m.row(static_cast<Eigen::Index>(b)));
  EXPECT_NEAR(cosv, 0.5, 1e-12);
  // Every other pair of rows is orthonormal.
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.rows(); ++j) {
      if ((i == Eigen::Index(a) && j == Eigen::Index(b)) || (i == Eigen::Index(b) && j == Eigen::Index(a))) continue;
      EXPECT_NEAR(m.row(i).dot(m.row(j)), i == j ? 1.0 : 0.0, 1e-12);
    }
}

TEST(GeneratorGrad, ZeroCotangentGivesZeroGradient) {
  Rng rng(4);
  const LatentVector w(random_vector(rng, 32));
  const auto g = desk_gen().generate_grad(w, ImageTensor(64, 64), ActivationTensor(16, 16, 16));
  EXPECT_EQ(g.values().norm(), 0.0);
}

TEST(GeneratorGrad, AdditiveInCotangents) {
  Rng rng(5);
  const LatentVector w(random_vector(rng, 32));
  ImageTensor i1(64, 64), i2(64, 64), i12(64, 64);
  ActivationTensor a1(16, 16, 16), a2(16, 16, 16), a12(16, 16, 16);
  for (std::size_t k = 0; k < i1.data.size(); ++k) {
    i1.data[k] = rng.normal();
    i2.data[k] = rng.normal();
    i12.data[k] = i1.data[k] + i2.data[k];
  }
  for (std::size_t k = 0; k < a1.data.size(); ++k) {
    a1.data[k] = rng.normal();
    a2.data[k] = rng.normal();
    a12.data[k] = a1.data[k] + a2.data[k];
  }
  const auto& g = desk_gen();
  const Eigen::VectorXd sum = g.generate_grad(w, i1, a1).values() + g.generate_grad(w, i2, a2).values();
  EXPECT_LE((g.generate_grad(w, i12, a12).values() - sum).norm(), 1e-6 * std::max(1.0, sum.norm()));
}

TEST(GeneratorGrad, MatchesFiniteDifferences) {
  Rng rng(6);
  const auto& g = desk_gen();
  for (int point = 0; point < 5; ++point) {
    const Eigen::VectorXd w = random_vector(rng, 32);
    ImageTensor ic(64, 64);
    ActivationTensor ac(16, 16, 16);
    for (auto& v : ic.data) v = rng.normal();
    for (auto& v : ac.data) v = rng.normal();
    auto loss = [&](const Eigen::VectorXd& x) {
      const auto out = g.generate(LatentVector(x));
      return inner(out.image.data, ic.data) + inner(out.activations.data, ac.data);
    };
    EXPECT_LE(rel_err(g.generate_grad(LatentVector(w), ic, ac).values(), central_fd(loss, w)), 1e-4) << point;
  }
}

TEST(GeneratorLocality, PartParametersOnlyMoveTheirWindow) {
  const auto& g = desk_gen();
  Rng rng(7);
  Eigen::VectorXd base(static_cast<Eigen::Index>(g.param_count()));
  for (auto& v : base) v = rng.uniform(-0.5, 0.5);
  const auto i0 = g.generate_from_params(base).image;
  for (std::size_t p = 0; p < g.parts().size(); ++p) {
    Eigen::VectorXd moved = base;
    for (auto row : g.parts()[p].control_rows) moved[static_cast<Eigen::Index>(row)] = rng.uniform(-1.0, 1.0);
    const auto i1 = g.generate_from_params(moved).image;
    const auto window = grid_window_mask(g, g.parts()[p].window);
    const auto footprint = grid_window_mask(g, g.parts()[p].window, 1);
    EXPECT_LE(outside_mean_abs(i1, i0, window), 0.01) << g.parts()[p].name;
    for (std::size_t i = 0; i < i0.data.size(); ++i)
      if (!footprint.data[i]) {
        ASSERT_EQ(i1.data[i], i0.data[i]) << g.parts()[p].name;
      }
  }
}

TEST(GeneratorLocality, ZeroingDominantChannelsStaysInWindow) {
  const auto& g = desk_gen();
  Rng rng(8);
  for (int rep = 0; rep < 5; ++rep) {
    const auto out = g.generate(LatentVector(random_vector(rng, 32)));
    for (std::size_t p = 0; p < g.parts().size(); ++p) {
      auto a = out.activations;
      for (std::size_t c = 0; c < a.channels; ++c)
        if (g.dominant_part(c) == p)
          for (std::size_t i = 0; i < a.plane(); ++i) a.data[c * a.plane() + i] = 0.0;
      const auto im = g.render(a);
      const auto window = grid_window_mask(g, g.parts()[p].window);
      EXPECT_LE(outside_mean_abs(im, out.image, window), 0.01) << g.parts()[p].name;
    }
  }
}

TEST(Oracle, ZeroImageClampsToFloor) {
  const auto y = desk_oracle().measure(ImageTensor(64, 64));
  for (std::size_t s = 0; s < y.size(); ++s) EXPECT_EQ(y[s], 0.0);
}

TEST(Oracle, FrozenSnapshotAtZeroLatent) {
  const auto y = desk_oracle().measure(desk_gen().generate(LatentVector(32)).image);
  const double frozen[] = {2.6550725726192268, 2.6663032932291495, 1.1813383372793069, 1.1271804241113514,
                           1.2487151632299565, 2.4675833977003698, 1.4936909866311847, 1.7922127588645864};
  ASSERT_EQ(y.size(), 8u);
  for (std::size_t s = 0; s < 8; ++s) EXPECT_NEAR(y[s], frozen[s], 1e-9) << s;
}

TEST(Oracle, MeanIntensityMatchesDirectWindowAverage) {
  const auto& o = desk_oracle();
  Rng rng(9);
  const auto im = desk_gen().generate(LatentVector(random_vector(rng, 32))).image;
  const auto y = o.measure(im);
  for (std::size_t s = 0; s < o.au_count(); ++s) {
    const auto& d = o.definitions()[s];
    if (d.statistic != Statistic::mean_intensity) continue;
    const auto& w = o.image_window(s);
    double sum = 0.0;
    for (std::size_t r = w.row0; r < w.row1; ++r)
      for (std::size_t c = w.col0; c < w.col1; ++c) sum += im.at(r, c);
    const double expect = std::clamp(d.scale * sum / static_cast<double>(w.area()) + d.offset, 0.0, 5.0);
    EXPECT_NEAR(y[s], expect, 1e-12);
  }
}

TEST(Oracle, ReadsOnlyItsWindow) {
  const auto& o = desk_oracle();
  Rng rng(10);
  const auto im = desk_gen().generate(LatentVector(random_vector(rng, 32))).image;
  const auto y = o.measure(im);
  for (std::size_t s = 0; s < o.au_count(); ++s) {
    auto noisy = im;
    const auto& w = o.image_window(s);
    for (std::size_t r = 0; r < noisy.rows; ++r)
      for (std::size_t c = 0; c < noisy.cols; ++c)
        if (!w.contains(r, c)) noisy.at(r, c) = rng.uniform();
    EXPECT_EQ(o.measure(noisy)[s], y[s]);
  }
}

TEST(Oracle, AmplitudeSweepIsMonotone) {
  const auto& g = desk_gen();
  const auto& o = desk_oracle();
  for (std::size_t s = 0; s < o.au_count(); ++s) {
    if (o.definitions()[s].statistic != Statistic::mean_intensity) continue;
    const auto row = g.parts()[o.part_of(s)].control_rows[kAmplitude];
    const Eigen::VectorXd dir = g.latent_map().row(static_cast<Eigen::Index>(row)).transpose();
    double prev = -1.0;
    for (int i = 0; i <= 10; ++i) {
      const double t = -2.0 + 0.4 * i;
      const double v = o.measure(g.generate(LatentVector(Eigen::VectorXd(t * dir))).image)[s];
      EXPECT_GT(v, prev) << o.definitions()[s].name << " at " << t;
      prev = v;
    }
  }
}

TEST(Oracle, DesignatedControlMonotoneAcrossTanhRange) {
  const auto& g = desk_gen();
  const auto& o = desk_oracle();
  for (std::size_t s = 0; s < o.au_count(); ++s) {
    const auto row = g.parts()[o.part_of(s)].control_rows[designated_param(o.definitions()[s].statistic)];
    double prev = -1.0;
    for (int i = 0; i <= 20; ++i) {
      Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.param_count()));
      p[static_cast<Eigen::Index>(row)] = -1.0 + 0.1 * i;
      const double v = o.measure(g.generate_from_params(p).image)[s];
      EXPECT_GE(v, prev) << o.definitions()[s].name;
      prev = v;
    }
  }
}

TEST(Oracle, CalibrationSpansTheScale) {
  const auto& g = desk_gen();
  const auto& o = desk_oracle();
  for (std::size_t s = 0; s < o.au_count(); ++s) {
    const auto row = g.parts()[o.part_of(s)].control_rows[designated_param(o.definitions()[s].statistic)];
    Eigen::VectorXd lo = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.param_count())), hi = lo;
    lo[static_cast<Eigen::Index>(row)] = -1.0;
    hi[static_cast<Eigen::Index>(row)] = 1.0;
    const double span = o.measure(g.generate_from_params(hi).image)[s] - o.measure(g.generate_from_params(lo).image)[s];
    EXPECT_GT(span, 2.5) << o.definitions()[s].name;
  }
}

TEST(Oracle, RoundTripsThroughText) {
  const auto back = AUOracle::from_kv(desk_gen(), KeyValues::parse(desk_oracle().to_kv().to_string()));
  Rng rng(11);
  const auto im = desk_gen().generate(LatentVector(random_vector(rng, 32))).image;
  EXPECT_EQ(back.measure(im), desk_oracle().measure(im));
  EXPECT_ERROR_KIND(statistic_from_string("median"), ErrorKind::invalid_argument);
  EXPECT_ERROR_KIND(desk_oracle().measure(ImageTensor(32, 32)), ErrorKind::dimension);
}

TEST(Sampler, EmptyDataset) {
  const auto ds = sample_dataset(desk_gen(), desk_oracle(), 0, Eigen::MatrixXd::Identity(8, 8), 1);
  EXPECT_TRUE(ds.empty());
  EXPECT_EQ(ds.latent_dim, 32u);
  EXPECT_EQ(ds.au_count, 8u);
}

TEST(Sampler, RejectsInvalidCorrelation) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(8, 8);
  c(0, 1) = c(1, 0) = 1.5;
  EXPECT_ERROR_KIND(sample_dataset(desk_gen(), desk_oracle(), 1, c, 1), ErrorKind::invalid_argument);
  c(0, 1) = 0.3;
  EXPECT_ERROR_KIND(sample_dataset(desk_gen(), desk_oracle(), 1, c, 1), ErrorKind::invalid_argument);
  EXPECT_ERROR_KIND(sample_dataset(desk_gen(), desk_oracle(), 1, Eigen::MatrixXd::Identity(7, 7), 1),
                    ErrorKind::dimension);
}

TEST(Sampler, PullbackRealisesControls) {
  const LatentPullback pb(desk_gen());
  Rng rng(12);
  const Eigen::VectorXd ctl = random_vector(rng, desk_gen().param_count());
  const Eigen::VectorXd null = random_vector(rng, static_cast<std::size_t>(pb.null_dim()));
  EXPECT_LE((desk_gen().controls(pb(ctl, null)) - ctl).norm(), 1e-10);
}

TEST(Sampler, OrderIndependentRows) {
  const auto a = sample_dataset(desk_gen(), desk_oracle(), 5, Eigen::MatrixXd::Identity(8, 8), 77);
  const auto b = sample_dataset(desk_gen(), desk_oracle(), 3, Eigen::MatrixXd::Identity(8, 8), 77);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.latents[i], b.latents[i]);
    EXPECT_EQ(a.labels[i], b.labels[i]);
  }
}

namespace {

Eigen::MatrixXd empirical_correlation(const LatentDataset& ds) {
  Eigen::MatrixXd y(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(ds.au_count));
  for (std::size_t i = 0; i < ds.size(); ++i) y.row(static_cast<Eigen::Index>(i)) = ds.labels[i].values().transpose();
  y.rowwise() -= y.colwise().mean();
  const Eigen::MatrixXd cov = y.transpose() * y;
  const Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
  return cov.array() / (sd * sd.transpose()).array();
}

}  // namespace

TEST(Sampler, IdentityPresetIsNearlyUncorrelated) {
  const auto ds = sample_dataset(desk_gen(), desk_oracle(), 2000, Eigen::MatrixXd::Identity(8, 8), 21);
  const auto c = empirical_correlation(ds);
  for (Eigen::Index a = 0; a < 8; ++a)
    for (Eigen::Index b = 0; b < 8; ++b)
      if (a != b) {
        EXPECT_LE(std::abs(c(a, b)), 0.15) << a << "," << b;
      }
}

TEST(Sampler, CorrelatedPresetHitsTarget) {
  const auto ds = sample_dataset(desk_gen(), desk_oracle(), 2000, pair_correlation(8, 0, 5, 0.8), 22);
  const auto c = empirical_correlation(ds);
  EXPECT_GE(c(0, 5), 0.6);
  EXPECT_LE(c(0, 5), 0.95);
  EXPECT_NEAR(c(0, 5), 0.8, 0.15);
}

TEST(Inversion, RecoversGeneratedImage) {
  Rng rng(13);
  for (int rep = 0; rep < 3; ++rep) {
    const LatentVector w_star(random_vector(rng, 32, 0.6));
    const auto target = desk_gen().generate(w_star).image;
    const auto res = invert(desk_gen(), target, InversionConfig{});
    EXPECT_GE(psnr(desk_gen().generate(res.latent).image, target), 35.0) << rep;
    EXPECT_LE(res.final_loss, res.initial_loss);
  }
}

TEST(Inversion, FixedPointAndZeroBudget) {
  Rng rng(14);
  const LatentVector w_star(random_vector(rng, 32, 0.6));
  const auto target = desk_gen().generate(w_star).image;
  const auto at_star = invert(desk_gen(), target, InversionConfig{}, &w_star);
  EXPECT_LT(at_star.initial_loss, 1e-8);
  EXPECT_EQ(at_star.latent, w_star);
  InversionConfig none;
  none.iterations = 0;
  const auto zero = invert(desk_gen(), target, none);
  EXPECT_EQ(zero.latent, LatentVector(32));
}
