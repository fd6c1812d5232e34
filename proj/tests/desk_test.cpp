// Pipeline behaviour on the default desk configuration.

#include <gtest/gtest.h>

#include "auedit/pipeline/commands.hpp"
#include "test_support.hpp"

using namespace auedit;
using namespace auedit::pipeline;
using auedit::testing::TempDir;

class Desk : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("auedit-desk");
    cfg_ = new PipelineConfig(PipelineConfig::from_kv(KeyValues{}));
    dataset_ = new DatasetOutcome(cmd_synth_dataset(*cfg_, dir_->path()));
    train_ = new TrainOutcome(cmd_train(*cfg_, dir_->path()));
    analysis_ = new AnalysisOutcome(cmd_analyze(*cfg_, dir_->path()));
  }
  static void TearDownTestSuite() {
    delete analysis_;
    delete train_;
    delete dataset_;
    delete cfg_;
    delete dir_;
  }
  const fs::path& out() const { return dir_->path(); }

  static TempDir* dir_;
  static PipelineConfig* cfg_;
  static DatasetOutcome* dataset_;
  static TrainOutcome* train_;
  static AnalysisOutcome* analysis_;
};

TempDir* Desk::dir_ = nullptr;
PipelineConfig* Desk::cfg_ = nullptr;
DatasetOutcome* Desk::dataset_ = nullptr;
TrainOutcome* Desk::train_ = nullptr;
AnalysisOutcome* Desk::analysis_ = nullptr;

TEST_F(Desk, CorrelatedPresetReproducesTargetCorrelation) {
  EXPECT_EQ(dataset_->dataset.size(), 2000u);
  EXPECT_NEAR(dataset_->label_correlation(0, 5), 0.8, 0.15);
}

TEST_F(Desk, TrainedPredictorFitsValidation) {
  EXPECT_GE(predictor::median(train_->report.val_r2.back()), 0.9);
}

TEST_F(Desk, TopClustersCoverTheirParts) {
  std::size_t good = 0;
  for (double v : analysis_->top1_iou) good += v >= 0.5;
  EXPECT_GE(good, 6u);
}

TEST_F(Desk, BrowEditWithMultiplexStaysInsideMask) {
  const auto res = cmd_edit(*cfg_, out());
  EXPECT_GT(res.oracle_local[0], res.oracle_orig[0]);
  EXPECT_LE(local::masked_mean_abs(res.i_local, res.i_orig, res.mask.high, false), 0.02);
}

TEST_F(Desk, OptimizeModeHitsTargetAndFreezesOthers) {
  auto cfg = *cfg_;
  cfg.edit_mode = GlobalMode::optimize;
  cfg.edit_local = LocalMode::none;
  cfg.edit_request = "2:1";
  cfg.edit_name = "optimize";
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    cfg.edit_latent_seed = derive_seed(55, seed);
    const auto res = cmd_edit(cfg, out());
    for (std::size_t s = 0; s < 8; ++s)
      EXPECT_NEAR(res.pred_global[s] - res.pred_orig[s], s == 2 ? 1.0 : 0.0, 0.1) << "seed " << seed << " AU " << s;
  }
}

TEST_F(Desk, SmileRecipeRaisesBothConstituents) {
  const auto world = load_world(out());
  const auto& recipe = cfg_->recipe("smile-analog");
  std::size_t tried = 0;
  for (std::uint64_t seed = 0; tried < 8 && seed < 200; ++seed) {
    const auto w = sample_latent(world, *cfg_, derive_seed(77, seed));
    const auto before = world.oracle.measure(world.gen.generate(w).image);
    // Constituents already near the top of the scale have no room to rise.
    if (std::any_of(recipe.aus.begin(), recipe.aus.end(), [&](const auto& a) { return before[a.first] >= 3.0; }))
      continue;
    ++tried;
    save_tensor(latent_tensor(w), out() / "smile-w.aued");
    auto cfg = *cfg_;
    cfg.edit_latent = (out() / "smile-w.aued").string();
    const auto res = cmd_recipe(cfg, out());
    for (const auto& [au, lambda] : recipe.aus)
      EXPECT_GE(res.oracle_local[au] - res.oracle_orig[au], 0.5) << "seed " << seed << " AU " << au;
  }
  EXPECT_EQ(tried, 8u);
}

TEST_F(Desk, TransferMovesMostAusTowardTarget) {
  const auto res = cmd_transfer(*cfg_, out());
  EXPECT_LE(res.max_gap, 0.3);
  EXPECT_GE(res.toward, 6u);
}
