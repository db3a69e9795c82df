#include "countex/heads.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace countex::heads {

void add_params(nn::ParamStore& store, std::size_t dim, const RngStream& rng) {
  nn::add_linear(store, "dec.score", dim, 1, rng);
  nn::add_linear(store, "dec.center", dim, 2, rng);
  nn::add_linear(store, "dec.extent", dim, 2, rng);
  store.add_uniform("den.w", dim, 1, dim, rng);
}

DecoderWeights bind_decoder(nn::Binder& bind) {
  return {nn::bind_linear(bind, "dec.score"), nn::bind_linear(bind, "dec.center"),
          nn::bind_linear(bind, "dec.extent")};
}

DensityWeights bind_density(nn::Binder& bind) { return {bind("den.w")}; }

Predictions decode(const Var& refined, const Matrix& anchors, const DecoderWeights& w) {
  if (anchors.rows() != refined->rows() || anchors.cols() != 2) {
    throw ShapeError(fmt::format("decode: anchors {} do not match queries {}", anchors.shape_str(),
                                 refined->value.shape_str()));
  }
  Predictions p;
  p.logits = nn::linear(refined, w.score);
  p.scores = ad::sigmoid(p.logits);
  p.centers = ad::add(ad::constant(anchors), nn::linear(refined, w.center));
  p.extents = ad::softplus(nn::linear(refined, w.extent));
  return p;
}

PredictionSet snapshot(const Predictions& preds, double tau) {
  PredictionSet out;
  out.tau = tau;
  const auto& c = preds.centers->value;
  const auto& e = preds.extents->value;
  for (std::size_t i = 0; i < c.rows(); ++i) {
    out.boxes.push_back({c(i, 0), c(i, 1), e(i, 0), e(i, 1)});
    out.scores.push_back(preds.scores->value(i, 0));
  }
  out.count = count(out.scores, tau);
  return out;
}

std::vector<long> hungarian(const Matrix& cost) {
  const std::size_t rows = cost.rows(), cols = cost.cols();
  if (rows == 0 || cols == 0) return std::vector<long>(rows, -1);
  for (double v : cost.data())
    if (!std::isfinite(v)) throw ContractError("hungarian: non-finite cost");
  const bool transposed = rows > cols;
  const Matrix a = transposed ? cost.transposed() : cost;
  const std::size_t n = a.rows(), m = a.cols();  // n <= m

  // Shortest augmenting path with potentials (1-based, column 0 is virtual).
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> owner(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = owner[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<long> assignment(rows, -1);
  for (std::size_t j = 1; j <= m; ++j) {
    if (owner[j] == 0) continue;
    const std::size_t i = owner[j] - 1;
    if (transposed) {
      assignment[j - 1] = static_cast<long>(i);
    } else {
      assignment[i] = static_cast<long>(j - 1);
    }
  }
  return assignment;
}

Matrix matching_cost(const Matrix& centers, std::span<const double> scores, const Matrix& points) {
  if (centers.cols() != 2 || points.cols() != 2 || scores.size() != centers.rows()) {
    throw ShapeError(fmt::format("match: centers {}, {} scores, points {}", centers.shape_str(), scores.size(),
                                 points.shape_str()));
  }
  Matrix cost(centers.rows(), points.rows());
  for (std::size_t i = 0; i < centers.rows(); ++i)
    for (std::size_t j = 0; j < points.rows(); ++j)
      cost(i, j) = std::abs(centers(i, 0) - points(j, 0)) + std::abs(centers(i, 1) - points(j, 1)) +
                   (1.0 - scores[i]);
  return cost;
}

MatchResult match(const Matrix& centers, std::span<const double> scores, const Matrix& points) {
  const Matrix cost = matching_cost(centers, scores, points);
  const auto assignment = hungarian(cost);
  MatchResult out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] >= 0) {
      out.pairs.emplace_back(i, static_cast<std::size_t>(assignment[i]));
    } else {
      out.unmatched.push_back(i);
    }
  }
  return out;
}

Var focal_loss(const Var& scores, std::span<const double> labels, double alpha, double gamma) {
  if (scores->cols() != 1 || labels.size() != scores->rows()) {
    throw ShapeError(fmt::format("focal_loss: scores {} with {} labels", scores->value.shape_str(), labels.size()));
  }
  Var s = ad::clamp(scores, kScoreClamp, 1.0 - kScoreClamp);
  Var one_minus_s = ad::add_scalar(ad::scale(s, -1.0), 1.0);
  Var pos = ad::scale(ad::hadamard(ad::pow_scalar(one_minus_s, gamma), ad::log(s)), -alpha);
  Var neg = ad::scale(ad::hadamard(ad::pow_scalar(s, gamma), ad::log(one_minus_s)), -(1.0 - alpha));
  Matrix y = Matrix::column_vector(labels);
  Matrix not_y(y.rows(), 1);
  for (std::size_t i = 0; i < y.rows(); ++i) not_y(i, 0) = 1.0 - y(i, 0);
  return ad::sum(ad::add(ad::hadamard(pos, ad::constant(std::move(y))), ad::hadamard(neg, ad::constant(std::move(not_y)))));
}

Var localization_loss(const MatchResult& m, const Var& centers, const Matrix& points) {
  if (m.pairs.empty()) return ad::scalar_constant(0.0);
  std::vector<std::size_t> queries;
  Matrix target(m.pairs.size(), points.cols());
  for (std::size_t k = 0; k < m.pairs.size(); ++k) {
    queries.push_back(m.pairs[k].first);
    auto src = points.row(m.pairs[k].second);
    std::copy(src.begin(), src.end(), target.row(k).begin());
  }
  return ad::sum(ad::abs(ad::sub(ad::gather_rows(centers, queries), ad::constant(std::move(target)))));
}

Var density_head(const Var& fused_tokens, const DensityWeights& w, std::size_t grid_rows, std::size_t grid_cols) {
  if (fused_tokens->rows() != grid_rows * grid_cols) {
    throw ShapeError(fmt::format("density_head: {} tokens for a {}x{} grid", fused_tokens->rows(), grid_rows,
                                 grid_cols));
  }
  Var shifted = ad::add_scalar(ad::softplus(ad::matmul(fused_tokens, w.weight)), -std::log(2.0));
  Var per_cell = ad::clamp(shifted, 0.0, std::numeric_limits<double>::infinity());
  return ad::reshape(per_cell, grid_rows, grid_cols);
}

Var density_loss(const Var& predicted, const Matrix& target) {
  require_same_shape(predicted->value, target, "density_loss");
  return ad::mean(ad::square(ad::sub(predicted, ad::constant(target))));
}

LossBreakdown total_loss(const LossParts& parts, const LossWeights& weights, long step) {
  const std::pair<const char*, const Var*> named[] = {
      {"L_cls", &parts.cls}, {"L_loc", &parts.loc}, {"L_den", &parts.den}, {"L_share", &parts.share},
      {"L_div", &parts.div}};
  for (const auto& [name, var] : named) {
    if (!*var || (*var)->rows() != 1 || (*var)->cols() != 1) {
      throw ContractError(fmt::format("total_loss: {} must be a 1x1 value", name));
    }
    if (!std::isfinite((*var)->scalar())) {
      throw NumericError(name, step, fmt::format("non-finite {} = {} at step {}", name, (*var)->scalar(), step));
    }
  }
  LossBreakdown out;
  out.weights = weights;
  out.cls = parts.cls->scalar();
  out.loc = parts.loc->scalar();
  out.den = parts.den->scalar();
  out.share = parts.share->scalar();
  out.div = parts.div->scalar();
  out.total_var = ad::add(
      ad::add(ad::add(ad::scale(parts.cls, weights.cls), parts.loc), ad::scale(parts.den, weights.den)),
      ad::add(ad::scale(parts.share, weights.share), ad::scale(parts.div, weights.div)));
  out.total = out.total_var->scalar();
  if (!std::isfinite(out.total)) throw NumericError("total", step, fmt::format("non-finite total at step {}", step));
  return out;
}

std::size_t count(std::span<const double> scores, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ContractError(fmt::format("count: tau = {} outside (0, 1)", tau));
  return static_cast<std::size_t>(std::count_if(scores.begin(), scores.end(), [tau](double s) { return s > tau; }));
}

}  // namespace countex::heads
