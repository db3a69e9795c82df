#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "countex/nn.hpp"

namespace countex::dqr {

using ad::Var;

/// How negative queries are split into shared and exclusive parts.
enum class ProjectionMode {
  orthonormal,  // q - q B^T B with B = Gram-Schmidt(C): an exact orthogonal projection
  literal,      // q - q C^T C on the fused prototypes as they are
};

inline constexpr double kRankDropTolerance = 1e-8;

struct DqrConfig {
  std::size_t prototypes = 8;  // r
  std::size_t exclusive = 0;   // m; 0 means ceil(n / 8)
  std::size_t heads = 4;
  double dropout = 0.1;
  /// Starting value of the refinement gate g.
  double gate_init = 0.0;
  ProjectionMode projection = ProjectionMode::orthonormal;
  /// Add C^proto back onto the prototype attention output before Linear.
  bool prototype_residual = false;

  std::size_t exclusive_for(std::size_t n) const { return exclusive != 0 ? exclusive : (n + 7) / 8; }
};

struct SharedWeights {
  Var prototypes;  // C^proto, r x d
  nn::MhaWeights attention;
  nn::LinearWeights fuse;
  nn::LayerNormWeights norm;
};

struct RefineWeights {
  nn::MhaWeights attention;
  Var gate;  // 1 x 1
  nn::LayerNormWeights norm;
};

void add_params(nn::ParamStore& store, std::size_t dim, const DqrConfig& config, const RngStream& rng);
SharedWeights bind_shared(nn::Binder& bind);
RefineWeights bind_refine(nn::Binder& bind);

struct PrototypeBank {
  Var raw;        // C^proto
  Var attention;  // H
  Var fused;      // C = LN(Linear(H))
  Var basis;      // orthonormal rows spanning C's row space
  std::size_t rank = 0;
};

/// Gram-Schmidt over rows (two passes), dropping rows whose residual norm is
/// below kRankDropTolerance. Differentiable through the kept rows.
Var orthonormal_rows(const Var& rows, std::size_t* rank = nullptr);

PrototypeBank identify_shared(const Var& qpos, const Var& qneg, const SharedWeights& weights,
                              const DqrConfig& config);

/// -(1/r) sum_j [max_i cos(c_j, qpos_i) + max_i cos(c_j, qneg_i)].
Var shareability_loss(const Var& fused, const Var& qpos, const Var& qneg);

/// |C^proto C^proto^T - I|_F^2.
Var diversity_loss(const Var& raw_prototypes);

struct ExclusivitySelection {
  std::vector<double> scores;         // sigma_i, one per negative query
  std::vector<std::size_t> selected;  // ascending indices of the m smallest scores
  std::size_t m = 0;
};

/// The m smallest scores, ties broken by ascending index; result sorted ascending.
ExclusivitySelection select_exclusive(std::span<const double> scores, std::size_t m);

/// rows - rows B^T B.
Var project_out(const Var& rows, const Var& basis);

struct ExclusiveFeatures {
  ExclusivitySelection selection;
  Var residuals;  // R^neg, m x d
};

ExclusiveFeatures extract_exclusive(const Var& qneg, const PrototypeBank& bank, std::size_t m,
                                    ProjectionMode mode = ProjectionMode::orthonormal);

struct RefineResult {
  Var refined;
  bool bypassed = false;  // no negative references; refined = LN(qpos)
};

/// LN(qpos - g * Dropout(MHA(qpos, R, R))). A null or empty `residuals`
/// bypasses attention. Dropout is applied only when `training` and needs `rng`.
RefineResult refine_queries(const Var& qpos, const Var& residuals, const RefineWeights& weights, std::size_t heads,
                            double dropout, bool training, RngStream* rng);

struct DqrOutput {
  Var refined;
  Var share_loss;
  Var div_loss;
  bool bypassed = false;
  std::optional<PrototypeBank> bank;
  std::optional<ExclusiveFeatures> exclusive;
};

/// All three stages. With no negative query set, refined = LN(qpos) and both
/// prototype losses are zero.
DqrOutput dqr_forward(const Var& qpos, const Var& qneg, const SharedWeights& shared, const RefineWeights& refine,
                      const DqrConfig& config, bool training, RngStream* rng);

}  // namespace countex::dqr
