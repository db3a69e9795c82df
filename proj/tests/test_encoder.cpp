#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "countex/encoder.hpp"
#include "countex/errors.hpp"
#include "countex/gradcheck.hpp"
#include "oracles.hpp"

namespace countex::encoder {
namespace {

struct Fixture {
  EncoderConfig config;
  scene::SceneConfig scene_config;
  nn::ParamStore store;
  scene::SyntheticScene scene;

  Fixture() {
    config.queries = 12;
    config.dim = 16;
    scene_config.grid_rows = scene_config.grid_cols = 12;
    scene_config.count_min = 2;
    scene_config.count_max = 6;
    config.feature_dim = scene_config.feature_dim();
    add_params(store, config, RngStream(5, "encoder"));
    scene = scene::generate_scene(scene_config, "enc", RngStream(3, "scenes"));
  }

  Prompt prompt_for(const std::string& category, bool exemplars) const {
    Prompt p{TextPrompt::from_category(category), {}};
    if (exemplars) {
      for (const auto& inst : scene.instances)
        if (inst.category == category && p.exemplars.size() < 3) p.exemplars.push_back(inst.features);
      while (p.exemplars.size() < 3) p.exemplars.push_back(p.exemplars.front());
    }
    return p;
  }

  Matrix queries(const scene::SyntheticScene& sc, const Prompt& prompt) {
    nn::Binder bind(store);
    auto cond = encode_prompt(bind, prompt, config);
    return encode_queries(bind, encode_scene(bind, sc, config), cond, Role::positive, config).queries->value;
  }
};

TEST(EncodePrompt, SentinelIsOneToken) {
  Fixture f;
  nn::Binder bind(f.store);
  auto seq = encode_prompt(bind, Prompt{TextPrompt::sentinel(), {}}, f.config);
  EXPECT_EQ(seq->rows(), 1u);
  EXPECT_EQ(seq->cols(), f.config.dim);
}

TEST(EncodePrompt, TextAndExemplarsConcatenate) {
  Fixture f;
  nn::Binder bind(f.store);
  auto p = f.prompt_for(f.scene.positive_category, true);
  ASSERT_EQ(p.text.token_count(), 2u);
  EXPECT_EQ(encode_prompt(bind, p, f.config)->rows(), 5u);
}

TEST(EncodePrompt, Deterministic) {
  Fixture f;
  auto p = f.prompt_for(f.scene.positive_category, true);
  nn::Binder b1(f.store), b2(f.store);
  EXPECT_EQ(encode_prompt(b1, p, f.config)->value, encode_prompt(b2, p, f.config)->value);
}

TEST(EncodePrompt, ExemplarCountContract) {
  Fixture f;
  nn::Binder bind(f.store);
  auto p = f.prompt_for(f.scene.positive_category, true);
  p.exemplars.pop_back();
  EXPECT_THROW(encode_prompt(bind, p, f.config), ContractError);
  PromptSpec spec{p, std::nullopt};
  EXPECT_THROW(spec.validate(), ContractError);
  spec.positive = Prompt{TextPrompt::sentinel(), {}};
  EXPECT_THROW(spec.validate(), ContractError);
}

TEST(EncodeQueries, ShapeAndFiniteness) {
  Fixture f;
  Matrix q = f.queries(f.scene, f.prompt_for(f.scene.positive_category, true));
  EXPECT_EQ(q.rows(), f.config.queries);
  EXPECT_EQ(q.cols(), f.config.dim);
  for (double v : q.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(EncodeQueries, SameConditioningGivesSameQueries) {
  Fixture f;
  auto p = f.prompt_for(f.scene.positive_category, false);
  nn::Binder bind(f.store);
  auto tokens = encode_scene(bind, f.scene, f.config);
  auto cond = encode_prompt(bind, p, f.config);
  auto qpos = encode_queries(bind, tokens, cond, Role::positive, f.config);
  auto qneg = encode_queries(bind, tokens, cond, Role::negative, f.config);
  EXPECT_EQ(qpos.queries->value, qneg.queries->value);
  EXPECT_EQ(qneg.role, Role::negative);
}

TEST(EncodeQueries, InstanceOrderInvariance) {
  Fixture f;
  auto p = f.prompt_for(f.scene.positive_category, true);
  auto shuffled = f.scene;
  std::reverse(shuffled.instances.begin(), shuffled.instances.end());
  std::rotate(shuffled.instances.begin(), shuffled.instances.begin() + 2, shuffled.instances.end());
  Matrix a = f.queries(f.scene, p), b = f.queries(shuffled, p);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-12);
}

TEST(EncodeQueries, ZeroQueriesIsConfigError) {
  Fixture f;
  f.config.queries = 0;
  EXPECT_THROW(f.queries(f.scene, f.prompt_for(f.scene.positive_category, false)), ConfigError);
}

TEST(EncodeQueries, PromptChangesQueries) {
  Fixture f;
  Matrix a = f.queries(f.scene, f.prompt_for(f.scene.positive_category, false));
  Matrix b = f.queries(f.scene, f.prompt_for(f.scene.negative_category, false));
  EXPECT_NE(a, b);
}

TEST(EncodeQueries, GradientReachesConditioning) {
  Fixture f;
  nn::Binder bind(f.store);
  auto cond = ad::leaf(encode_prompt(bind, f.prompt_for(f.scene.positive_category, true), f.config)->value);
  auto q = encode_queries(bind, encode_scene(bind, f.scene, f.config), cond, Role::positive, f.config);
  ad::backward(ad::sum(ad::square(q.queries)));
  double norm = 0.0;
  for (double v : cond->grad.data()) norm += v * v;
  EXPECT_GT(norm, 0.0);

  // Central differences on a few conditioning entries.
  const Matrix base = cond->value;
  const Matrix analytic = cond->grad;
  auto value_at = [&](const Matrix& c) {
    nn::Binder b(f.store);
    auto qq = encode_queries(b, encode_scene(b, f.scene, f.config), ad::constant(c), Role::positive, f.config);
    return ad::sum(ad::square(qq.queries))->scalar();
  };
  std::vector<double> a, n;
  for (std::size_t k = 0; k < base.size(); k += 7) {
    Matrix plus = base, minus = base;
    plus.data()[k] += gradcheck::kStep;
    minus.data()[k] -= gradcheck::kStep;
    a.push_back(analytic.data()[k]);
    n.push_back((value_at(plus) - value_at(minus)) / (2 * gradcheck::kStep));
  }
  EXPECT_LT(gradcheck::relative_error(a, n), gradcheck::kTolerance);
}

TEST(PositionCode, Width) {
  EXPECT_EQ(position_code(0.25, 0.75, 4).size(), 2u + 16u);
}

TEST(TextPrompt, FromCategory) {
  auto t = TextPrompt::from_category("c2/a5");
  EXPECT_FALSE(t.none);
  EXPECT_EQ(t.category, 2u);
  EXPECT_EQ(t.attributes, (std::vector<std::size_t>{5}));
}

}  // namespace
}  // namespace countex::encoder
