#include "countex/dqr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace countex::dqr {

void add_params(nn::ParamStore& store, std::size_t dim, const DqrConfig& config, const RngStream& rng) {
  if (config.prototypes < 1) throw ConfigError("DQR needs at least one prototype");
  if (config.prototypes > dim) {
    throw ConfigError(fmt::format("DQR: {} prototypes exceed width {}", config.prototypes, dim));
  }
  if (config.dropout < 0.0 || config.dropout >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
  if (!std::isfinite(config.gate_init)) throw ConfigError("gate_init must be finite");
  store.add_unit_rows("dqr.prototypes", config.prototypes, dim, rng);
  nn::add_mha(store, "dqr.share_attn", dim, rng);
  nn::add_linear(store, "dqr.share_fuse", dim, dim, rng);
  nn::add_layer_norm(store, "dqr.share_norm", dim);
  nn::add_mha(store, "dqr.refine_attn", dim, rng);
  store.add("dqr.gate", Matrix(1, 1, config.gate_init));
  nn::add_layer_norm(store, "dqr.refine_norm", dim);
}

SharedWeights bind_shared(nn::Binder& bind) {
  return {bind("dqr.prototypes"), nn::bind_mha(bind, "dqr.share_attn"), nn::bind_linear(bind, "dqr.share_fuse"),
          nn::bind_layer_norm(bind, "dqr.share_norm")};
}

RefineWeights bind_refine(nn::Binder& bind) {
  return {nn::bind_mha(bind, "dqr.refine_attn"), bind("dqr.gate"), nn::bind_layer_norm(bind, "dqr.refine_norm")};
}

Var orthonormal_rows(const Var& rows, std::size_t* rank) {
  std::vector<Var> basis;
  for (std::size_t k = 0; k < rows->rows(); ++k) {
    Var v = ad::slice_rows(rows, k, 1);
    if (!basis.empty()) {
      Var b = basis.size() == 1 ? basis.front() : ad::concat_rows(basis);
      for (int pass = 0; pass < 2; ++pass) v = ad::sub(v, ad::matmul(ad::matmul_nt(v, b), b));
    }
    Var norm = ad::row_norms(v);
    if (norm->scalar() < kRankDropTolerance) continue;
    basis.push_back(ad::mul_scalar(v, ad::pow_scalar(norm, -1.0)));
  }
  if (rank) *rank = basis.size();
  if (basis.empty()) return ad::constant(Matrix(0, rows->cols()));
  return basis.size() == 1 ? basis.front() : ad::concat_rows(basis);
}

PrototypeBank identify_shared(const Var& qpos, const Var& qneg, const SharedWeights& w, const DqrConfig& config) {
  if (qpos->cols() != qneg->cols() || qpos->rows() != qneg->rows()) {
    throw ShapeError(fmt::format("identify_shared: query sets {} and {} differ", qpos->value.shape_str(),
                                 qneg->value.shape_str()));
  }
  const std::size_t r = w.prototypes->rows();
  const std::size_t d = w.prototypes->cols();
  if (r > d) throw ConfigError(fmt::format("identify_shared: {} prototypes exceed width {}", r, d));
  PrototypeBank bank;
  bank.raw = w.prototypes;
  Var both = ad::concat_rows({qpos, qneg});
  bank.attention = nn::multi_head_attention(w.prototypes, both, both, config.heads, w.attention);
  Var fused_in = config.prototype_residual ? ad::add(bank.attention, w.prototypes) : bank.attention;
  bank.fused = nn::layer_norm(nn::linear(fused_in, w.fuse), w.norm);
  bank.basis = orthonormal_rows(bank.fused, &bank.rank);
  return bank;
}

Var shareability_loss(const Var& fused, const Var& qpos, const Var& qneg) {
  const double r = static_cast<double>(fused->rows());
  Var best_pos = ad::max_rows(nn::cosine_matrix(fused, qpos));
  Var best_neg = ad::max_rows(nn::cosine_matrix(fused, qneg));
  return ad::scale(ad::add(ad::sum(best_pos), ad::sum(best_neg)), -1.0 / r);
}

Var diversity_loss(const Var& raw) {
  Var gram = ad::matmul_nt(raw, raw);
  return ad::sum(ad::square(ad::sub(gram, ad::constant(Matrix::identity(raw->rows())))));
}

ExclusivitySelection select_exclusive(std::span<const double> scores, std::size_t m) {
  if (m < 1 || m > scores.size()) {
    throw ContractError(fmt::format("select_exclusive: m = {} outside [1, {}]", m, scores.size()));
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  ExclusivitySelection sel;
  sel.scores.assign(scores.begin(), scores.end());
  sel.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
  std::sort(sel.selected.begin(), sel.selected.end());
  sel.m = m;
  return sel;
}

Var project_out(const Var& rows, const Var& basis) {
  if (basis->rows() == 0) return rows;
  return ad::sub(rows, ad::matmul(ad::matmul_nt(rows, basis), basis));
}

ExclusiveFeatures extract_exclusive(const Var& qneg, const PrototypeBank& bank, std::size_t m, ProjectionMode mode) {
  if (m < 1 || m > qneg->rows()) {
    throw ContractError(fmt::format("extract_exclusive: m = {} outside [1, {}]", m, qneg->rows()));
  }
  const Matrix sim = nn::cosine_matrix(ad::constant(qneg->value), ad::constant(bank.fused->value))->value;
  std::vector<double> sigma(sim.rows());
  for (std::size_t i = 0; i < sim.rows(); ++i) {
    auto r = sim.row(i);
    sigma[i] = *std::max_element(r.begin(), r.end());
  }
  ExclusiveFeatures out;
  out.selection = select_exclusive(sigma, m);
  Var chosen = ad::gather_rows(qneg, out.selection.selected);
  out.residuals = project_out(chosen, mode == ProjectionMode::orthonormal ? bank.basis : bank.fused);
  return out;
}

RefineResult refine_queries(const Var& qpos, const Var& residuals, const RefineWeights& w, std::size_t heads,
                            double dropout, bool training, RngStream* rng) {
  if (!residuals || residuals->rows() == 0) return {nn::layer_norm(qpos, w.norm), true};
  Var attended = nn::multi_head_attention(qpos, residuals, residuals, heads, w.attention);
  if (training && dropout > 0.0) {
    if (!rng) throw ContractError("refine_queries: training-mode dropout needs an RngStream");
    Matrix mask(attended->rows(), attended->cols());
    const double keep_scale = 1.0 / (1.0 - dropout);
    for (double& v : mask.data()) v = rng->uniform() < dropout ? 0.0 : keep_scale;
    attended = ad::hadamard(attended, ad::constant(std::move(mask)));
  }
  return {nn::layer_norm(ad::sub(qpos, ad::mul_scalar(attended, w.gate)), w.norm), false};
}

DqrOutput dqr_forward(const Var& qpos, const Var& qneg, const SharedWeights& shared, const RefineWeights& refine,
                      const DqrConfig& config, bool training, RngStream* rng) {
  DqrOutput out;
  if (!qneg) {
    out.refined = nn::layer_norm(qpos, refine.norm);
    out.share_loss = ad::scalar_constant(0.0);
    out.div_loss = ad::scalar_constant(0.0);
    out.bypassed = true;
    return out;
  }
  out.bank = identify_shared(qpos, qneg, shared, config);
  out.share_loss = shareability_loss(out.bank->fused, qpos, qneg);
  out.div_loss = diversity_loss(out.bank->raw);
  out.exclusive = extract_exclusive(qneg, *out.bank, config.exclusive_for(qneg->rows()), config.projection);
  auto refined = refine_queries(qpos, out.exclusive->residuals, refine, config.heads, config.dropout, training, rng);
  out.refined = refined.refined;
  out.bypassed = refined.bypassed;
  return out;
}

}  // namespace countex::dqr
