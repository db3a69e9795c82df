#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "countex/errors.hpp"
#include "countex/heads.hpp"
#include "oracles.hpp"

namespace countex::heads {
namespace {

Var scores_of(std::initializer_list<double> s) {
  Matrix m(s.size(), 1);
  std::size_t i = 0;
  for (double v : s) m(i++, 0) = v;
  return ad::constant(m);
}

TEST(Decode, ZeroWeightsGiveHalfScores) {
  nn::ParamStore store;
  add_params(store, 6, RngStream(1, "heads"));
  for (auto& [name, m] : store.all()) m.fill(0.0);
  nn::Binder bind(store);
  RngStream rng(2, "q");
  auto p = decode(ad::constant(oracle::random_matrix(rng, 5, 6)), Matrix(5, 2, 3.0), bind_decoder(bind));
  for (double s : p.scores->value.data()) EXPECT_EQ(s, 0.5);
}

TEST(Decode, IdenticalRowsIdenticalPredictions) {
  nn::ParamStore store;
  add_params(store, 6, RngStream(1, "heads"));
  nn::Binder bind(store);
  RngStream rng(3, "q");
  Matrix q = oracle::random_matrix(rng, 2, 6);
  std::copy(q.row(0).begin(), q.row(0).end(), q.row(1).begin());
  auto p = decode(ad::constant(q), Matrix(2, 2, 1.0), bind_decoder(bind));
  EXPECT_EQ(p.scores->value(0, 0), p.scores->value(1, 0));
  EXPECT_EQ(p.centers->value(0, 1), p.centers->value(1, 1));
}

TEST(Match, SingleQueryAlwaysMatched) {
  auto r = match(Matrix::from_rows({{0, 0}}), std::vector<double>{0.1}, Matrix::from_rows({{50, 50}}));
  ASSERT_EQ(r.matched(), 1u);
  EXPECT_EQ(r.pairs[0], (std::pair<std::size_t, std::size_t>{0, 0}));
}

TEST(Match, ExactCentersChooseSpatialAssignment) {
  Matrix centers = Matrix::from_rows({{5, 5}, {1, 1}});
  Matrix points = Matrix::from_rows({{1, 1}, {5, 5}});
  auto r = match(centers, std::vector<double>{0.5, 0.5}, points);
  ASSERT_EQ(r.matched(), 2u);
  EXPECT_EQ(r.pairs[0].second, 1u);
  EXPECT_EQ(r.pairs[1].second, 0u);
}

TEST(Match, ThreeQueriesTwoPoints) {
  RngStream rng(4, "match");
  for (int trial = 0; trial < 100; ++trial) {
    Matrix centers = oracle::random_matrix(rng, 3, 2, 0, 10), points = oracle::random_matrix(rng, 2, 2, 0, 10);
    std::vector<double> s{rng.uniform(), rng.uniform(), rng.uniform()};
    auto r = match(centers, s, points);
    EXPECT_EQ(r.matched(), 2u);
    EXPECT_EQ(r.unmatched.size(), 1u);
    const Matrix cost = matching_cost(centers, s, points);
    EXPECT_NEAR(oracle::assignment_cost(cost, r.pairs), oracle::min_assignment_cost(cost), 1e-12);
  }
}

TEST(Match, OptimalOnSmallInstances) {
  RngStream rng(5, "match-small");
  for (int trial = 0; trial < 300; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(0, 6));
    const auto g = static_cast<std::size_t>(rng.uniform_int(0, 6));
    Matrix centers = oracle::random_matrix(rng, n, 2, 0, 8), points = oracle::random_matrix(rng, g, 2, 0, 8);
    std::vector<double> s(n);
    for (double& v : s) v = rng.uniform();
    auto r = match(centers, s, points);
    EXPECT_EQ(r.matched(), std::min(n, g));
    EXPECT_EQ(r.matched() + r.unmatched.size(), n);
    std::vector<bool> seen(g, false);
    for (const auto& [q, p] : r.pairs) {
      EXPECT_FALSE(seen[p]);
      seen[p] = true;
    }
    const Matrix cost = matching_cost(centers, s, points);
    EXPECT_NEAR(oracle::assignment_cost(cost, r.pairs), oracle::min_assignment_cost(cost), 1e-9);
  }
}

TEST(Hungarian, AgreesWithBruteForce) {
  RngStream rng(6, "hung");
  for (int trial = 0; trial < 300; ++trial) {
    const auto rows = static_cast<std::size_t>(rng.uniform_int(1, 6));
    const auto cols = static_cast<std::size_t>(rng.uniform_int(1, 6));
    Matrix cost = oracle::random_matrix(rng, rows, cols, 0, 3);
    // Coarse values so ties appear.
    for (double& v : cost.data()) v = std::round(v * 2.0) / 2.0;
    const auto assign = hungarian(cost);
    double total = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < rows; ++i)
      if (assign[i] >= 0) {
        total += cost(i, static_cast<std::size_t>(assign[i]));
        ++used;
      }
    EXPECT_EQ(used, std::min(rows, cols));
    EXPECT_NEAR(total, oracle::min_assignment_cost(cost), 1e-12);
  }
}

TEST(Hungarian, NonFiniteCostRejected) {
  Matrix cost = Matrix::from_rows({{1, 2}, {3, std::numeric_limits<double>::quiet_NaN()}});
  EXPECT_THROW(hungarian(cost), ContractError);
}

TEST(Focal, HalfScorePositive) {
  const std::vector<double> y{1.0};
  EXPECT_NEAR(focal_loss(scores_of({0.5}), y)->scalar(), -0.25 * 0.25 * std::log(0.5), 1e-12);
  EXPECT_NEAR(focal_loss(scores_of({0.5}), y)->scalar(), 0.043322, 1e-6);
}

TEST(Focal, PerfectPositiveIsZero) {
  const std::vector<double> y{1.0};
  EXPECT_LT(focal_loss(scores_of({1.0}), y)->scalar(), 1e-12);
  EXPECT_TRUE(std::isfinite(focal_loss(scores_of({0.0}), y)->scalar()));
}

TEST(Focal, ReducesToHalfCrossEntropy) {
  RngStream rng(7, "focal");
  for (int trial = 0; trial < 100; ++trial) {
    const double s = rng.uniform(0.01, 0.99);
    const double y = trial % 2 ? 1.0 : 0.0;
    const double bce = -(y * std::log(s) + (1 - y) * std::log(1 - s));
    const std::vector<double> labels{y};
    EXPECT_NEAR(focal_loss(scores_of({s}), labels, 0.5, 0.0)->scalar(), 0.5 * bce, 1e-12);
  }
}

TEST(Localization, Examples) {
  MatchResult m;
  m.pairs = {{0, 0}};
  auto centers = ad::constant(Matrix::from_rows({{1, 2}, {100, 100}}));
  EXPECT_DOUBLE_EQ(localization_loss(m, centers, Matrix::from_rows({{4, 6}}))->scalar(), 7.0);
  EXPECT_EQ(localization_loss(m, centers, Matrix::from_rows({{1, 2}}))->scalar(), 0.0);
  EXPECT_EQ(localization_loss(MatchResult{}, centers, Matrix(0, 2))->scalar(), 0.0);
}

TEST(DensityHead, ZeroWeightsGiveZeroMap) {
  RngStream rng(8, "den");
  auto d = density_head(ad::constant(oracle::random_matrix(rng, 12, 4)), DensityWeights{ad::constant(Matrix(4, 1, 0.0))}, 3,
                        4);
  EXPECT_EQ(d->rows(), 3u);
  EXPECT_EQ(d->cols(), 4u);
  for (double v : d->value.data()) EXPECT_EQ(v, 0.0);
}

TEST(DensityHead, NonNegativeAndShaped) {
  RngStream rng(9, "den");
  auto d = density_head(ad::constant(oracle::random_matrix(rng, 20, 4)),
                        DensityWeights{ad::constant(oracle::random_matrix(rng, 4, 1))}, 4, 5);
  EXPECT_EQ(d->rows(), 4u);
  EXPECT_EQ(d->cols(), 5u);
  for (double v : d->value.data()) EXPECT_GE(v, 0.0);
  EXPECT_THROW(density_head(ad::constant(Matrix(7, 4)), DensityWeights{ad::constant(Matrix(4, 1))}, 4, 5), ShapeError);
}

TEST(DensityLoss, Examples) {
  RngStream rng(10, "dl");
  Matrix t = oracle::random_matrix(rng, 3, 4);
  EXPECT_EQ(density_loss(ad::constant(t), t)->scalar(), 0.0);
  Matrix shifted = t;
  for (double& v : shifted.data()) v += 1.0;
  EXPECT_NEAR(density_loss(ad::constant(shifted), t)->scalar(), 1.0, 1e-12);
  Matrix p = oracle::random_matrix(rng, 3, 4);
  double direct = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) direct += (p.data()[i] - t.data()[i]) * (p.data()[i] - t.data()[i]);
  EXPECT_NEAR(density_loss(ad::constant(p), t)->scalar(), direct / 12.0, 1e-12);
  EXPECT_ANY_THROW(density_loss(ad::constant(Matrix(2, 2)), t));
}

LossParts parts(double cls, double loc, double den, double share, double div) {
  return {ad::scalar_constant(cls), ad::scalar_constant(loc), ad::scalar_constant(den), ad::scalar_constant(share),
          ad::scalar_constant(div)};
}

TEST(TotalLoss, Examples) {
  EXPECT_EQ(total_loss(parts(0, 0, 0, 0, 0)).total, 0.0);
  EXPECT_NEAR(total_loss(parts(1, 1, 1, 1, 1)).total, 208.01, 1e-12);
}

TEST(TotalLoss, LinearInEachPart) {
  const double w[5] = {5.0, 1.0, 200.0, 2.0, 0.01};
  for (int k = 0; k < 5; ++k) {
    double v[5] = {0, 0, 0, 0, 0};
    v[k] = 3.0;
    EXPECT_NEAR(total_loss(parts(v[0], v[1], v[2], v[3], v[4])).total, 3.0 * w[k], 1e-12) << "term " << k;
  }
}

TEST(TotalLoss, GradientIsWeightedSum) {
  auto cls = ad::leaf(Matrix(1, 1, 0.3)), den = ad::leaf(Matrix(1, 1, 0.2));
  LossParts p{cls, ad::scalar_constant(1.0), den, ad::scalar_constant(0.0), ad::scalar_constant(0.0)};
  auto b = total_loss(p);
  ad::backward(b.total_var);
  EXPECT_DOUBLE_EQ(cls->grad(0, 0), 5.0);
  EXPECT_DOUBLE_EQ(den->grad(0, 0), 200.0);
}

TEST(TotalLoss, NonFiniteTermIsNamed) {
  try {
    total_loss(parts(0, 0, std::numeric_limits<double>::quiet_NaN(), 0, 0), {}, 17);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("den"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("17"), std::string::npos) << e.what();
  }
}

TEST(Count, Examples) {
  const std::vector<double> s{0.9, 0.4, 0.8};
  EXPECT_EQ(count(s, 0.5), 2u);
  EXPECT_EQ(count(s, 0.999999), 0u);
  EXPECT_THROW(count(s, 1.0), ContractError);
  EXPECT_THROW(count(s, 0.0), ContractError);
}

TEST(Count, MatchesFilterAndIsMonotone) {
  RngStream rng(11, "count");
  for (int trial = 0; trial < 200; ++trial) {
    auto s = oracle::tied_scores(rng, 20);
    for (double& v : s) v += 0.5;
    std::size_t previous = s.size() + 1;
    for (int k = 1; k < 20; ++k) {
      const double tau = k / 20.0;
      const auto n = count(s, tau);
      EXPECT_EQ(n, oracle::filter_count(s, tau));
      EXPECT_LE(n, previous);
      previous = n;
    }
  }
}

}  // namespace
}  // namespace countex::heads
