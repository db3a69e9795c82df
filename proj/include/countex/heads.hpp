#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "countex/nn.hpp"

namespace countex::heads {

using ad::Var;

inline constexpr double kFocalAlpha = 0.25;
inline constexpr double kFocalGamma = 2.0;
inline constexpr double kScoreClamp = 1e-7;

/// Loss weights. Defaults are the published training weights.
struct LossWeights {
  double cls = 5.0;
  double share = 2.0;
  double div = 0.01;
  double den = 200.0;
};

struct DecoderWeights {
  nn::LinearWeights score;   // d -> 1
  nn::LinearWeights center;  // d -> 2, offset in cells from the query anchor
  nn::LinearWeights extent;  // d -> 2, softplus'd box half-sizes
};

struct DensityWeights {
  Var weight;  // d x 1
};

void add_params(nn::ParamStore& store, std::size_t dim, const RngStream& rng);
DecoderWeights bind_decoder(nn::Binder& bind);
DensityWeights bind_density(nn::Binder& bind);

/// Differentiable per-query outputs, coordinates in cell units.
struct Predictions {
  Var logits;   // n x 1
  Var scores;   // n x 1, sigmoid(logits)
  Var centers;  // n x 2
  Var extents;  // n x 2
};

Predictions decode(const Var& refined, const Matrix& anchors, const DecoderWeights& weights);

struct Box {
  double row = 0.0;
  double col = 0.0;
  double half_height = 0.0;
  double half_width = 0.0;
};

/// Detached predictions with the derived count.
struct PredictionSet {
  std::vector<Box> boxes;
  std::vector<double> scores;
  double tau = 0.5;
  std::size_t count = 0;
};

PredictionSet snapshot(const Predictions& preds, double tau);

struct MatchResult {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (query, ground-truth point), ascending by query
  std::vector<std::size_t> unmatched;                      // unmatched query indices, ascending
  std::size_t matched() const { return pairs.size(); }
};

/// Minimum-cost assignment on a dense rows x cols cost matrix (rows <= cols
/// not required). Returns, for each row, its column or -1.
std::vector<long> hungarian(const Matrix& cost);

/// Optimal bipartite matching with cost |center_i - point_j|_1 + (1 - s_i).
MatchResult match(const Matrix& centers, std::span<const double> scores, const Matrix& points);

/// Per-pair matching cost used by `match`.
Matrix matching_cost(const Matrix& centers, std::span<const double> scores, const Matrix& points);

/// sum_i FL(s_i, y_i); scores are clamped to [1e-7, 1 - 1e-7] first.
Var focal_loss(const Var& scores, std::span<const double> labels, double alpha = kFocalAlpha,
               double gamma = kFocalGamma);

/// Sum of L1 distances between matched predicted centers and their points.
Var localization_loss(const MatchResult& match, const Var& centers, const Matrix& points);

/// max(0, softplus(tokens w) - ln 2) laid out as grid_rows x grid_cols. The
/// shift makes empty cells and zero weights give an exactly zero map.
Var density_head(const Var& fused_tokens, const DensityWeights& weights, std::size_t grid_rows,
                 std::size_t grid_cols);

/// Mean over cells of the squared difference.
Var density_loss(const Var& predicted, const Matrix& target);

struct LossBreakdown {
  double cls = 0.0;
  double loc = 0.0;
  double den = 0.0;
  double share = 0.0;
  double div = 0.0;
  double total = 0.0;
  LossWeights weights;
  Var total_var;
};

struct LossParts {
  Var cls;
  Var loc;
  Var den;
  Var share;
  Var div;
};

/// cls_w L_cls + L_loc + den_w L_den + share_w L_share + div_w L_div. Throws
/// NumericError naming the first non-finite term.
LossBreakdown total_loss(const LossParts& parts, const LossWeights& weights = {}, long step = -1);

/// Number of scores strictly above tau. Throws ContractError unless 0 < tau < 1.
std::size_t count(std::span<const double> scores, double tau);

}  // namespace countex::heads
