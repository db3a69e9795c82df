#include <gtest/gtest.h>

#include <cmath>

#include <fmt/format.h>

#include "countex/errors.hpp"
#include "countex/eval.hpp"
#include "countex/io.hpp"
#include "oracles.hpp"

namespace countex {
namespace {

using eval::SceneRecord;

io::RunConfig small_run() {
  io::RunConfig c;
  c.scene.grid_rows = c.scene.grid_cols = 10;
  c.scene.count_min = 1;
  c.scene.count_max = 4;
  c.scene.distractor_max = 2;
  c.model.encoder.queries = 8;
  c.model.encoder.dim = 16;
  c.model.dqr.prototypes = 2;
  c.train.steps = 5;
  c.train.batch = 2;
  c.seed = 3;
  c.finalize();
  return c;
}

std::vector<scene::SyntheticScene> scenes(const scene::SceneConfig& sc, const std::string& prefix, std::size_t n) {
  std::vector<scene::SyntheticScene> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(scene::generate_scene(sc, fmt::format("{}{}", prefix, i), RngStream(9, "train-eval")));
  return out;
}

TEST(Metrics, PerfectPredictions) {
  auto r = eval::summarize({{"a", 3, 3}, {"b", 7, 7}}, 0.5, "T_pos", 0);
  EXPECT_EQ(r.mae, 0.0);
  EXPECT_EQ(r.rmse, 0.0);
  EXPECT_EQ(r.nae, 0.0);
}

TEST(Metrics, HandExample) {
  auto r = eval::summarize({{"a", 10, 12}, {"b", 20, 16}}, 0.5, "T_pos", 0);
  EXPECT_DOUBLE_EQ(r.mae, 3.0);
  EXPECT_NEAR(r.rmse, std::sqrt(10.0), 1e-12);
  EXPECT_NEAR(r.nae, 0.2, 1e-12);
}

TEST(Metrics, ZeroTruthLeftOutOfNae) {
  auto r = eval::summarize({{"a", 0, 2}, {"b", 10, 15}}, 0.5, "T_pos", 0);
  EXPECT_EQ(r.nae_excluded, 1u);
  EXPECT_DOUBLE_EQ(r.nae, 0.5);
  EXPECT_DOUBLE_EQ(r.mae, 3.5);
}

TEST(Metrics, MaeNeverExceedsRmse) {
  RngStream rng(1, "metrics");
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<SceneRecord> recs;
    const auto n = rng.uniform_int(1, 20);
    for (int i = 0; i < n; ++i)
      recs.push_back({"s", static_cast<double>(rng.uniform_int(1, 50)), static_cast<double>(rng.uniform_int(0, 60))});
    auto r = eval::summarize(recs, 0.5, "T_pos", 0);
    EXPECT_LE(r.mae, r.rmse + 1e-12);
    EXPECT_GE(r.nae, 0.0);
  }
}

TEST(Metrics, Median) {
  EXPECT_EQ(eval::median({3, 1, 2}), 2.0);
  EXPECT_EQ(eval::median({4, 1, 2, 3}), 2.5);
}

TEST(Metrics, Pearson) {
  EXPECT_NEAR(eval::pearson({1, 2, 3}, {2, 4, 6}), 1.0, 1e-12);
  EXPECT_NEAR(eval::pearson({1, 2, 3}, {3, 2, 1}), -1.0, 1e-12);
  EXPECT_EQ(eval::pearson({1, 1, 1}, {1, 2, 3}), 0.0);
}

TEST(Train, ZeroStepsKeepsInitialization) {
  auto c = small_run();
  c.train.steps = 0;
  auto tr = scenes(c.scene, "t", 4), va = scenes(c.scene, "v", 2);
  auto result = train::train(c.model, c.train, tr, va);
  EXPECT_EQ(result.params, model::init_params(c.model, c.seed));
  EXPECT_TRUE(result.curve.empty());
}

TEST(Train, SameSeedSameParameters) {
  auto c = small_run();
  auto tr = scenes(c.scene, "t", 6), va = scenes(c.scene, "v", 2);
  auto a = train::train(c.model, c.train, tr, va);
  auto b = train::train(c.model, c.train, tr, va);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.tau, b.tau);
  ASSERT_EQ(a.curve.size(), c.train.steps);
  EXPECT_NE(a.params, model::init_params(c.model, c.seed));
}

TEST(Train, ThreadCountDoesNotChangeResult) {
  auto c = small_run();
  auto tr = scenes(c.scene, "t", 6), va = scenes(c.scene, "v", 2);
  auto one = train::train(c.model, c.train, tr, va);
  c.train.threads = 3;
  auto three = train::train(c.model, c.train, tr, va);
  EXPECT_EQ(one.params, three.params);
}

TEST(Train, OverlappingSplitsRejected) {
  auto c = small_run();
  auto tr = scenes(c.scene, "t", 4);
  EXPECT_THROW(train::train(c.model, c.train, tr, {tr[0]}), ContractError);
}

TEST(Train, FixedBatchLossDecreasesWithDefaults) {
  io::RunConfig c;
  c.finalize();
  int decreased = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::vector<scene::SyntheticScene> batch;
    for (std::size_t i = 0; i < c.train.batch; ++i)
      batch.push_back(scene::generate_scene(c.scene, fmt::format("fb{}", i), RngStream(seed, "fixed-batch")));
    std::vector<const scene::SyntheticScene*> ptrs;
    for (const auto& s : batch) ptrs.push_back(&s);
    const std::vector<model::ModalityMask> masks(batch.size(), model::ModalityMask::all());
    auto params = model::init_params(c.model, seed);
    train::Adam adam(c.train.learning_rate, c.train.beta1, c.train.beta2, c.train.adam_eps);
    double first = 0.0, last = 0.0;
    for (std::size_t step = 0; step <= 50; ++step) {
      // Same step index every time so dropout masks stay fixed too.
      auto r = train::batch_gradients(params, ptrs, masks, c.model, 0, seed, 1);
      if (step == 0) first = r.losses.total;
      last = r.losses.total;
      if (step < 50) adam.step(params, r.gradients);
    }
    if (last < first) ++decreased;
  }
  EXPECT_GE(decreased, 4);
}

TEST(Calibrate, TauOnGrid) {
  auto c = small_run();
  auto va = scenes(c.scene, "v", 4);
  const double tau = train::calibrate_tau(model::init_params(c.model, 1), va, {model::ModalityMask::all()}, c.model, 1);
  const double k = tau * 20.0;
  EXPECT_NEAR(k, std::round(k), 1e-9);
  EXPECT_GE(tau, 0.05 - 1e-12);
  EXPECT_LE(tau, 0.95 + 1e-12);
}

TEST(Protocols, RowCounts) {
  auto c = small_run();
  auto te = scenes(c.scene, "e", 4);
  auto params = model::init_params(c.model, 1);
  auto ab = eval::run_modality_ablation(params, 0.5, te, c.model);
  ASSERT_EQ(ab.size(), 4u);
  EXPECT_EQ(ab[0].mask, "T_pos");
  EXPECT_EQ(ab[3].mask, model::ModalityMask::all().name());
  auto irr = eval::run_irrelevant_negative(params, 0.5, te, c.model);
  ASSERT_EQ(irr.size(), 3u);
  EXPECT_EQ(irr[1].mask, eval::kIrrelevantLabel);
  for (const auto& r : irr) EXPECT_EQ(r.records.size(), te.size());
}

TEST(Protocols, IrrelevantCategoryIsAbsent) {
  auto c = small_run();
  for (const auto& s : scenes(c.scene, "i", 30)) {
    const auto irr = model::irrelevant_category(s, c.scene.attributes);
    EXPECT_FALSE(s.knows_category(irr));
    EXPECT_EQ(scene::CategoryId::parse(irr).base, scene::CategoryId::parse(s.positive_category).base);
  }
}

TEST(Protocols, SwapTwiceIsIdentity) {
  auto c = small_run();
  auto te = scenes(c.scene, "w", 4);
  std::vector<scene::SyntheticScene> twice;
  for (const auto& s : te) twice.push_back(s.swapped().swapped());
  auto params = model::init_params(c.model, 2);
  auto a = eval::run_swap_test(params, 0.5, te, model::ModalityMask::all(), c.model);
  auto b = eval::run_swap_test(params, 0.5, twice, model::ModalityMask::all(), c.model);
  EXPECT_EQ(io::swap_records_csv(a.records), io::swap_records_csv(b.records));
  ASSERT_EQ(a.records.size(), te.size());
  for (std::size_t i = 0; i < te.size(); ++i) {
    EXPECT_EQ(a.records[i].gt_a, te[i].positive_count());
    EXPECT_EQ(a.records[i].gt_b, te[i].negative_count());
  }
}

TEST(Protocols, SwapRecordTargeting) {
  EXPECT_TRUE((eval::SwapRecord{"s", 10, 3, 9, 4}).targets_prompt());
  EXPECT_FALSE((eval::SwapRecord{"s", 10, 3, 5, 4}).targets_prompt());
  EXPECT_FALSE((eval::SwapRecord{"s", 4, 4, 4, 4}).targets_prompt());
}

TEST(Protocols, ReportCsvRoundTrip) {
  auto c = small_run();
  auto te = scenes(c.scene, "r", 3);
  auto reports = eval::run_modality_ablation(model::init_params(c.model, 1), 0.35, te, c.model, {.seed = 7});
  const auto text = io::report_csv(reports);
  const auto back = io::reports_from_csv(text);
  ASSERT_EQ(back.size(), reports.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].mae, reports[i].mae);
    EXPECT_EQ(back[i].rmse, reports[i].rmse);
    EXPECT_EQ(back[i].nae, reports[i].nae);
    EXPECT_EQ(back[i].mask, reports[i].mask);
    EXPECT_EQ(back[i].tau, reports[i].tau);
    EXPECT_EQ(back[i].seed, 7u);
  }
  EXPECT_EQ(io::report_csv(back), text);
}

TEST(Protocols, EvaluateIsDeterministic) {
  auto c = small_run();
  auto te = scenes(c.scene, "d", 5);
  auto p = model::init_params(c.model, 4);
  auto a = eval::evaluate(p, 0.5, te, model::ModalityMask::all(), c.model);
  auto b = eval::evaluate(p, 0.5, te, model::ModalityMask::all(), c.model, {.threads = 2});
  EXPECT_EQ(io::scene_records_csv(a.records), io::scene_records_csv(b.records));
}

TEST(Oracle, NearestCentroidOnSeparatedScene) {
  auto c = small_run();
  c.scene.attribute_separation = 2.0;
  c.scene.feature_noise = 0.01;
  for (const auto& s : scenes(c.scene, "o", 20)) EXPECT_EQ(eval::nearest_centroid_count(s), s.positive_count());
}

}  // namespace
}  // namespace countex
