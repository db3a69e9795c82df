#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "countex/errors.hpp"
#include "countex/gradcheck.hpp"
#include "countex/nn.hpp"
#include "oracles.hpp"

namespace countex {
namespace {

using ad::Var;

void expect_near(const Matrix& a, const Matrix& b, double tol) {
  ASSERT_EQ(a.rows(), b.rows());
  ASSERT_EQ(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], tol) << "entry " << i;
}

Var row_ones(std::size_t d) { return ad::constant(Matrix(1, d, 1.0)); }
Var row_zeros(std::size_t d) { return ad::constant(Matrix(1, d, 0.0)); }

TEST(Linear, IdentityWeights) {
  auto y = nn::linear(ad::constant(Matrix::from_rows({{1, 2}})), ad::constant(Matrix::identity(2)), row_zeros(2));
  expect_near(y->value, Matrix::from_rows({{1, 2}}), 0.0);
}

TEST(Linear, HandArithmetic) {
  auto y = nn::linear(ad::constant(Matrix::identity(2)), ad::constant(Matrix::from_rows({{2, 0}, {0, 3}})),
                      ad::constant(Matrix::from_rows({{1, 1}})));
  expect_near(y->value, Matrix::from_rows({{3, 1}, {1, 4}}), 0.0);
}

TEST(Linear, BiasGradientCountsRows) {
  auto b = ad::leaf(Matrix(1, 3, 0.0));
  RngStream rng(1, "linear");
  auto y = nn::linear(ad::constant(oracle::random_matrix(rng, 4, 2)), ad::constant(oracle::random_matrix(rng, 2, 3)), b);
  ad::backward(ad::sum(y));
  expect_near(b->grad, Matrix(1, 3, 4.0), 0.0);
}

TEST(Linear, ShapeMismatchNamesBothShapes) {
  try {
    nn::linear(ad::constant(Matrix(2, 3)), ad::constant(Matrix(2, 2)), row_zeros(2));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("2x2"), std::string::npos) << msg;
  }
}

TEST(LayerNorm, ConstantRowMapsToZero) {
  auto y = nn::layer_norm(ad::constant(Matrix::from_rows({{5, 5, 5, 5}})), row_ones(4), row_zeros(4));
  expect_near(y->value, Matrix(1, 4, 0.0), 0.0);
}

TEST(LayerNorm, AlreadyStandardRow) {
  auto y = nn::layer_norm(ad::constant(Matrix::from_rows({{1, -1}})), row_ones(2), row_zeros(2), 0.0);
  expect_near(y->value, Matrix::from_rows({{1, -1}}), 1e-15);
}

TEST(LayerNorm, DegenerateWidthThrows) {
  EXPECT_THROW(nn::layer_norm(ad::constant(Matrix(3, 1, 2.0)), row_ones(1), row_zeros(1)), ShapeError);
}

TEST(LayerNorm, RowMomentsOnRandomRows) {
  RngStream rng(7, "ln-moments");
  for (int trial = 0; trial < 50; ++trial) {
    const auto d = static_cast<std::size_t>(rng.uniform_int(2, 16));
    Matrix x = oracle::random_matrix(rng, 5, d, -10.0, 10.0);
    auto y = ad::standardize_rows(ad::constant(x), nn::kLayerNormEps);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      auto in = x.row(i);
      const double mu = std::accumulate(in.begin(), in.end(), 0.0) / static_cast<double>(d);
      double raw_var = 0.0;
      for (double v : in) raw_var += (v - mu) * (v - mu);
      raw_var /= static_cast<double>(d);
      auto out = y->value.row(i);
      const double m = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(d);
      double var = 0.0;
      for (double v : out) var += (v - m) * (v - m);
      var /= static_cast<double>(d);
      EXPECT_LT(std::abs(m), 1e-7);
      if (raw_var >= 1.0) EXPECT_LT(std::abs(var - 1.0), 1e-5) << "raw variance " << raw_var;
    }
  }
}

TEST(Softmax, Examples) {
  expect_near(ad::softmax_rows(ad::constant(Matrix::from_rows({{0, 0}})))->value, Matrix::from_rows({{0.5, 0.5}}),
              1e-15);
  auto big = ad::softmax_rows(ad::constant(Matrix::from_rows({{1000, 1000, 1000}})))->value;
  expect_near(big, Matrix(1, 3, 1.0 / 3.0), 1e-15);
  auto logs = ad::softmax_rows(ad::constant(Matrix::from_rows({{std::log(1.0), std::log(2.0), std::log(3.0)}})));
  expect_near(logs->value, Matrix::from_rows({{1.0 / 6, 2.0 / 6, 3.0 / 6}}), 1e-12);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  RngStream rng(3, "softmax");
  for (int trial = 0; trial < 100; ++trial) {
    Matrix x = oracle::random_matrix(rng, 3, 7, -30.0, 30.0);
    Matrix shifted = x;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const double c = rng.uniform(-100.0, 100.0);
      for (double& v : shifted.row(i)) v += c;
    }
    auto a = ad::softmax_rows(ad::constant(x))->value;
    auto b = ad::softmax_rows(ad::constant(shifted))->value;
    for (std::size_t i = 0; i < a.rows(); ++i) {
      auto r = a.row(i);
      EXPECT_NEAR(std::accumulate(r.begin(), r.end(), 0.0), 1.0, 1e-9);
      for (double v : r) EXPECT_GE(v, 0.0);
    }
    expect_near(a, b, 1e-9);
  }
}

class Attention : public ::testing::Test {
 protected:
  static constexpr std::size_t kD = 8;
  nn::ParamStore store;
  void SetUp() override { nn::add_mha(store, "mha", kD, RngStream(11, "mha")); }

  Matrix run(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t heads = 4) {
    nn::Binder bind(store);
    return nn::multi_head_attention(ad::constant(q), ad::constant(k), ad::constant(v), heads, nn::bind_mha(bind, "mha"))
        ->value;
  }
};

TEST_F(Attention, SingleKeyIgnoresScores) {
  RngStream rng(1, "single");
  Matrix v = oracle::random_matrix(rng, 1, kD);
  Matrix a = run(oracle::random_matrix(rng, 3, kD), oracle::random_matrix(rng, 1, kD), v);
  Matrix b = run(oracle::random_matrix(rng, 3, kD), oracle::random_matrix(rng, 1, kD), v);
  expect_near(a, b, 1e-12);
  for (std::size_t i = 1; i < a.rows(); ++i)
    for (std::size_t j = 0; j < kD; ++j) EXPECT_NEAR(a(i, j), a(0, j), 1e-12);
}

TEST_F(Attention, KeyValuePermutationInvariance) {
  RngStream rng(2, "perm");
  for (int trial = 0; trial < 20; ++trial) {
    Matrix q = oracle::random_matrix(rng, 4, kD), k = oracle::random_matrix(rng, 6, kD), v = oracle::random_matrix(rng, 6, kD);
    std::vector<std::size_t> perm(6);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = perm.size() - 1; i > 0; --i)
      std::swap(perm[i], perm[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
    Matrix kp(6, kD), vp(6, kD);
    for (std::size_t i = 0; i < 6; ++i) {
      std::copy(k.row(perm[i]).begin(), k.row(perm[i]).end(), kp.row(i).begin());
      std::copy(v.row(perm[i]).begin(), v.row(perm[i]).end(), vp.row(i).begin());
    }
    expect_near(run(q, k, v), run(q, kp, vp), 1e-12);
  }
}

TEST_F(Attention, QueryPermutationEquivariance) {
  RngStream rng(3, "qperm");
  Matrix q = oracle::random_matrix(rng, 3, kD), k = oracle::random_matrix(rng, 5, kD), v = oracle::random_matrix(rng, 5, kD);
  Matrix qr(3, kD);
  for (std::size_t i = 0; i < 3; ++i) std::copy(q.row(2 - i).begin(), q.row(2 - i).end(), qr.row(i).begin());
  Matrix a = run(q, k, v), b = run(qr, k, v);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < kD; ++j) EXPECT_NEAR(a(i, j), b(2 - i, j), 1e-12);
}

TEST_F(Attention, IdentityProjectionsGiveSoftmaxAverage) {
  for (const char* p : {"q", "k", "v", "o"}) {
    store.get(std::string("mha.") + p + ".w") = Matrix::identity(kD);
    store.get(std::string("mha.") + p + ".b") = Matrix(1, kD, 0.0);
  }
  RngStream rng(4, "hand");
  Matrix q = oracle::random_matrix(rng, 2, kD), k = oracle::random_matrix(rng, 2, kD), v = oracle::random_matrix(rng, 2, kD);
  Matrix got = run(q, k, v, 1);
  for (std::size_t i = 0; i < 2; ++i) {
    double s[2];
    for (std::size_t j = 0; j < 2; ++j) {
      s[j] = 0.0;
      for (std::size_t c = 0; c < kD; ++c) s[j] += q(i, c) * k(j, c);
      s[j] /= std::sqrt(static_cast<double>(kD));
    }
    const double w0 = 1.0 / (1.0 + std::exp(s[1] - s[0]));
    for (std::size_t c = 0; c < kD; ++c) EXPECT_NEAR(got(i, c), w0 * v(0, c) + (1.0 - w0) * v(1, c), 1e-12);
  }
}

TEST_F(Attention, IndivisibleWidthThrows) { EXPECT_THROW(run(Matrix(1, kD), Matrix(1, kD), Matrix(1, kD), 3), ConfigError); }

TEST(Cosine, Examples) {
  const std::vector<double> e1{1, 0}, e2{0, 1}, diag{1, 1}, zero{0, 0};
  EXPECT_NEAR(nn::cosine_similarity(e1, e1), 1.0, 1e-11);
  EXPECT_EQ(nn::cosine_similarity(e1, e2), 0.0);
  EXPECT_NEAR(nn::cosine_similarity(diag, e1), 1.0 / std::sqrt(2.0), 1e-11);
  EXPECT_EQ(nn::cosine_similarity(zero, zero), 0.0);
}

TEST(Cosine, MatrixAgreesWithScalarForm) {
  RngStream rng(5, "cos");
  Matrix a = oracle::random_matrix(rng, 3, 4), b = oracle::random_matrix(rng, 5, 4);
  Matrix c = nn::cosine_matrix(ad::constant(a), ad::constant(b))->value;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(c(i, j), nn::cosine_similarity(a.row(i), b.row(j)), 1e-12);
}

TEST(Backward, SumGivesOnes) {
  auto x = ad::leaf(Matrix::from_rows({{1, -2, 3}, {4, 5, -6}}));
  ad::backward(ad::sum(x));
  expect_near(x->grad, Matrix(2, 3, 1.0), 0.0);
}

TEST(Backward, SquaredNormGivesTwiceX) {
  Matrix v = Matrix::from_rows({{1.5, -2}, {0.25, 3}});
  auto x = ad::leaf(v);
  ad::backward(ad::sum(ad::square(x)));
  expect_near(x->grad, v * 2.0, 1e-15);
}

TEST(Backward, NonScalarRootThrows) { EXPECT_THROW(ad::backward(ad::leaf(Matrix(2, 2, 1.0))), ContractError); }

TEST(Backward, RepeatedPassesAreBitIdentical) {
  RngStream rng(9, "repeat");
  auto x = ad::leaf(oracle::random_matrix(rng, 4, 6));
  auto w = ad::leaf(oracle::random_matrix(rng, 6, 6));
  auto y = ad::softmax_rows(ad::matmul(ad::tanh(x), w));
  auto root = ad::sum(ad::square(ad::standardize_rows(ad::add(y, ad::matmul(x, w)), 1e-5)));
  ad::backward(root);
  const Matrix gx = x->grad, gw = w->grad;
  ad::backward(root);
  EXPECT_EQ(x->grad, gx);
  EXPECT_EQ(w->grad, gw);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  auto x = ad::leaf(Matrix::from_rows({{2.0}}));
  auto y = ad::hadamard(x, x);
  ad::backward(ad::add(y, y));
  EXPECT_DOUBLE_EQ(x->grad(0, 0), 8.0);
}

TEST(GradCheck, EveryCasePasses) {
  for (const auto& r : gradcheck::run_all(2024, 20)) {
    EXPECT_TRUE(r.passed) << r.name << " max rel error " << r.max_rel_error;
    EXPECT_EQ(r.points, 20u);
  }
}

TEST(GradCheck, DetectsWrongGradient) {
  const auto r = gradcheck::check(gradcheck::perturbed_case(), 1);
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_rel_error, gradcheck::kTolerance);
}

TEST(GradCheck, RelativeErrorDefinition) {
  const std::vector<double> a{1.0, 2.0}, n{1.0, 2.5};
  EXPECT_DOUBLE_EQ(gradcheck::relative_error(a, n), 0.5 / 2.5);
  const std::vector<double> z{0.0, 0.0};
  EXPECT_EQ(gradcheck::relative_error(z, z), 0.0);
}

TEST(Rng, SameSeedAndLabelRepeat) {
  RngStream a(42, "x"), b(42, "x"), c(42, "y");
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    EXPECT_EQ(va, b.next_u64());
    differs |= va != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

}  // namespace
}  // namespace countex
