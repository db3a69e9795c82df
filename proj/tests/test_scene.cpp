#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include <nlohmann/json.hpp>

#include "countex/errors.hpp"
#include "countex/nn.hpp"
#include "countex/scene.hpp"

namespace countex::scene {
namespace {

SceneConfig small_config() {
  SceneConfig c;
  c.grid_rows = 16;
  c.grid_cols = 16;
  c.count_min = 2;
  c.count_max = 8;
  c.distractor_max = 3;
  return c;
}

TEST(Scene, FixedCountRange) {
  SceneConfig c = small_config();
  c.count_min = c.count_max = 5;
  for (int i = 0; i < 20; ++i) {
    auto s = generate_scene(c, "s", RngStream(i, "scenes"));
    EXPECT_EQ(s.positive_count(), 5u);
    EXPECT_EQ(s.negative_count(), 5u);
  }
}

TEST(Scene, SameSeedIsByteIdentical) {
  const auto c = small_config();
  const auto a = generate_scene(c, "x", RngStream(3, "scenes"));
  const auto b = generate_scene(c, "x", RngStream(3, "scenes"));
  EXPECT_EQ(scene_to_json(a), scene_to_json(b));
  EXPECT_NE(scene_to_json(a), scene_to_json(generate_scene(c, "x", RngStream(4, "scenes"))));
}

TEST(Scene, StructuralInvariants) {
  const auto c = small_config();
  for (int i = 0; i < 200; ++i) {
    auto s = generate_scene(c, "s", RngStream(i, "inv"));
    EXPECT_NE(s.positive_category, s.negative_category);
    EXPECT_GE(s.positive_count(), 1u);
    EXPECT_GE(s.negative_count(), 1u);
    EXPECT_LE(s.distractor_count(), c.distractor_max);
    const auto p = CategoryId::parse(s.positive_category), n = CategoryId::parse(s.negative_category);
    EXPECT_EQ(p.base, n.base);
    for (const auto& inst : s.instances) {
      EXPECT_GE(inst.row, 0.0);
      EXPECT_LT(inst.row, static_cast<double>(c.grid_rows));
      EXPECT_GE(inst.col, 0.0);
      EXPECT_LT(inst.col, static_cast<double>(c.grid_cols));
      EXPECT_EQ(inst.features.size(), c.feature_dim());
    }
  }
}

TEST(Scene, CountsCoverRangeUniformly) {
  SceneConfig c = small_config();
  c.count_min = 1;
  c.count_max = 5;
  std::map<std::size_t, int> hist;
  const int n = 1000;
  for (int i = 0; i < n; ++i) ++hist[generate_scene(c, "s", RngStream(i, "hist")).positive_count()];
  ASSERT_EQ(hist.size(), 5u);
  const double expected = n / 5.0;
  double chi2 = 0.0;
  for (const auto& [k, v] : hist) chi2 += (v - expected) * (v - expected) / expected;
  // 4 degrees of freedom; 18.47 is the 0.999 quantile.
  EXPECT_LT(chi2, 18.47);
}

TEST(Scene, CapacityError) {
  SceneConfig c = small_config();
  c.grid_rows = c.grid_cols = 3;
  c.count_min = c.count_max = 6;
  EXPECT_THROW(generate_scene(c, "s", RngStream(1, "cap")), CapacityError);
}

TEST(Scene, SwappedExchangesRoles) {
  auto s = generate_scene(small_config(), "s", RngStream(5, "swap"));
  auto t = s.swapped();
  EXPECT_EQ(t.positive_category, s.negative_category);
  EXPECT_EQ(t.positive_count(), s.negative_count());
  EXPECT_EQ(t.swapped(), s);
}

TEST(Scene, ConfusabilityFallsWithSeparation) {
  double previous = 2.0;
  for (double sep : {0.0, 0.4, 0.8, 1.2, 1.6, 2.0}) {
    SceneConfig c = small_config();
    c.attribute_separation = sep;
    double total = 0.0;
    std::size_t pairs = 0;
    for (int i = 0; i < 100; ++i) {
      auto s = generate_scene(c, "s", RngStream(i, "conf"));
      for (const auto& a : s.instances) {
        if (a.category != s.positive_category) continue;
        for (const auto& b : s.instances) {
          if (b.category != s.negative_category) continue;
          total += nn::cosine_similarity(a.features, b.features);
          ++pairs;
        }
      }
    }
    const double mean = total / static_cast<double>(pairs);
    EXPECT_LT(mean, previous) << "separation " << sep;
    previous = mean;
  }
}

TEST(World, PairedVariantsShareBase) {
  SceneConfig c = small_config();
  World w(c);
  RngStream rng(1, "pair");
  auto [a, b] = w.variant_pair(2, 1, 4, 0.7, 0.5, rng);
  EXPECT_EQ(a.base, b.base);
  double na = 0, nb = 0, dist = 0, nbase = 0;
  for (std::size_t i = 0; i < a.attribute.size(); ++i) {
    na += a.attribute[i] * a.attribute[i];
    nb += b.attribute[i] * b.attribute[i];
    dist += (a.attribute[i] - b.attribute[i]) * (a.attribute[i] - b.attribute[i]);
  }
  for (double v : a.base) nbase += v * v;
  EXPECT_NEAR(na, 1.0, 1e-12);
  EXPECT_NEAR(nb, 1.0, 1e-12);
  EXPECT_NEAR(nbase, 1.0, 1e-12);
  EXPECT_NEAR(std::sqrt(dist), 0.7, 1e-9);
}

TEST(Density, EmptyCategoryIsZero) {
  auto s = generate_scene(small_config(), "s", RngStream(1, "d"));
  s.instances.erase(std::remove_if(s.instances.begin(), s.instances.end(),
                                   [&](const Instance& i) { return i.category == s.positive_category; }),
                    s.instances.end());
  EXPECT_EQ(render_density(s, s.positive_category, 1.0).mass(), 0.0);
}

TEST(Density, CentredInstance) {
  SyntheticScene s;
  s.grid_rows = s.grid_cols = 21;
  s.positive_category = "c0/a0";
  s.negative_category = "c0/a1";
  s.instances.push_back({10.5, 10.5, "c0/a0", {1.0}});
  s.instances.push_back({2.5, 2.5, "c0/a1", {1.0}});
  auto d = render_density(s, "c0/a0", 1.0);
  EXPECT_NEAR(d.mass(), 1.0, 1e-9);
  std::size_t best = 0;
  for (std::size_t i = 0; i < d.grid.size(); ++i)
    if (d.grid.data()[i] > d.grid.data()[best]) best = i;
  EXPECT_EQ(best, 10u * 21u + 10u);
}

TEST(Density, BoundaryInstancesKeepMass) {
  SyntheticScene s;
  s.grid_rows = s.grid_cols = 12;
  s.positive_category = "c0/a0";
  s.negative_category = "c0/a1";
  const double spots[7][2] = {{0.1, 0.1}, {0.2, 11.9}, {11.8, 0.3}, {11.5, 11.5}, {0.5, 6.0}, {6.0, 0.2}, {11.9, 6.0}};
  for (const auto& p : spots) s.instances.push_back({p[0], p[1], "c0/a0", {1.0}});
  s.instances.push_back({6.0, 6.0, "c0/a1", {1.0}});
  EXPECT_NEAR(render_density(s, "c0/a0", 2.0).mass(), 7.0, 1e-6);
}

TEST(Density, MassEqualsCountOnGeneratedScenes) {
  for (int i = 0; i < 50; ++i) {
    auto s = generate_scene(small_config(), "s", RngStream(i, "mass"));
    for (const auto& cat : {s.positive_category, s.negative_category})
      EXPECT_NEAR(render_density(s, cat, 1.5).mass(), static_cast<double>(s.count(cat)), 1e-6);
  }
}

TEST(Density, Errors) {
  auto s = generate_scene(small_config(), "s", RngStream(1, "err"));
  EXPECT_THROW(render_density(s, "c9/a9", 1.0), LookupError);
  EXPECT_THROW(render_density(s, s.positive_category, 0.0), ContractError);
}

TEST(SceneJson, RoundTrip) {
  for (int i = 0; i < 20; ++i) {
    auto s = generate_scene(small_config(), "scene-" + std::to_string(i), RngStream(i, "rt"));
    EXPECT_EQ(scene_from_json(scene_to_json(s)), s);
  }
}

TEST(SceneJson, FileRoundTrip) {
  auto s = generate_scene(small_config(), "file", RngStream(2, "rt"));
  const auto path = std::filesystem::temp_directory_path() / "countex_scene_roundtrip.json";
  write_scene(path, s);
  EXPECT_EQ(read_scene(path), s);
  std::filesystem::remove(path);
}

TEST(SceneJson, HandWrittenFixture) {
  const char* text = R"({
    "scene_id": "fixture",
    "grid": [4, 5],
    "positive_category": "c1/a0",
    "negative_category": "c1/a2",
    "instances": [
      {"center": [0.5, 1.5], "category": "c1/a0", "features": [0.25, -1.0]},
      {"center": [3.5, 4.5], "category": "c1/a2", "features": [0.5, 0.75]}
    ]
  })";
  auto s = scene_from_json(text);
  EXPECT_EQ(s.scene_id, "fixture");
  EXPECT_EQ(s.grid_rows, 4u);
  EXPECT_EQ(s.grid_cols, 5u);
  ASSERT_EQ(s.instances.size(), 2u);
  EXPECT_EQ(s.instances[1].features, (std::vector<double>{0.5, 0.75}));
}

std::string pointer_of(const std::string& text) {
  try {
    scene_from_json(text);
  } catch (const SchemaError& e) {
    return e.what();
  }
  return "";
}

TEST(SceneJson, SchemaErrorsCarryPointer) {
  auto j = nlohmann::json::parse(scene_to_json(generate_scene(small_config(), "p", RngStream(1, "schema"))));
  auto missing = j;
  missing.erase("positive_category");
  EXPECT_NE(pointer_of(missing.dump()).find("/positive_category"), std::string::npos);
  auto bad_center = j;
  bad_center["instances"][1]["center"] = "here";
  EXPECT_NE(pointer_of(bad_center.dump()).find("/instances/1/center"), std::string::npos);
  EXPECT_FALSE(pointer_of("{not json").empty());
}

TEST(SceneJson, MissingFileIsIoError) { EXPECT_THROW(read_scene("/nonexistent/countex.json"), IoError); }

}  // namespace
}  // namespace countex::scene
