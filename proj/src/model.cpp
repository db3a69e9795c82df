#include "countex/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace countex::model {

std::string ModalityMask::name() const {
  std::string out = "T_pos";
  if (pos_exemplars) out += "+E_pos";
  if (neg_text) out += "+T_neg";
  if (neg_exemplars) out += "+E_neg";
  return out;
}

ModalityMask ModalityMask::parse(const std::string& text) {
  ModalityMask m;
  bool has_pos_text = false;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, '+')) {
    if (part == "T_pos") {
      has_pos_text = true;
    } else if (part == "E_pos") {
      m.pos_exemplars = true;
    } else if (part == "T_neg") {
      m.neg_text = true;
    } else if (part == "E_neg") {
      m.neg_exemplars = true;
    } else {
      throw ConfigError(fmt::format("unknown modality '{}' in '{}'", part, text));
    }
  }
  if (!has_pos_text) throw ConfigError(fmt::format("modality mask '{}' lacks the required T_pos", text));
  return m;
}

std::vector<ModalityMask> ModalityMask::ablation_rows() {
  return {positive_text(), positive_both(), with_negative_text(), all()};
}

void add_params(nn::ParamStore& store, const ModelConfig& config, const RngStream& rng) {
  encoder::add_params(store, config.encoder, rng.child("encoder"));
  dqr::add_params(store, config.encoder.dim, config.dqr, rng.child("dqr"));
  heads::add_params(store, config.encoder.dim, rng.child("heads"));
}

nn::ParamStore init_params(const ModelConfig& config, std::uint64_t seed) {
  nn::ParamStore store;
  add_params(store, config, RngStream(seed, "params"));
  return store;
}

std::vector<std::vector<double>> sample_exemplars(const scene::SyntheticScene& sc, const std::string& category,
                                                  std::uint64_t seed) {
  std::vector<const scene::Instance*> pool;
  for (const auto& inst : sc.instances)
    if (inst.category == category) pool.push_back(&inst);
  if (pool.empty()) throw LookupError(fmt::format("scene {} has no instance of {}", sc.scene_id, category));
  // Canonical order so the draw does not depend on how instances are listed.
  std::sort(pool.begin(), pool.end(), [](const scene::Instance* a, const scene::Instance* b) {
    return std::tie(a->row, a->col, a->features) < std::tie(b->row, b->col, b->features);
  });
  RngStream rng = RngStream(seed, "exemplars").child(sc.scene_id).child(category);
  std::vector<std::size_t> picks(pool.size());
  for (std::size_t i = 0; i < picks.size(); ++i) picks[i] = i;
  std::vector<std::vector<double>> out;
  if (pool.size() >= 3) {
    for (std::size_t i = 0; i < 3; ++i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i),
                                                              static_cast<std::int64_t>(picks.size()) - 1));
      std::swap(picks[i], picks[j]);
      out.push_back(pool[picks[i]]->features);
    }
  } else {
    for (std::size_t i = 0; i < 3; ++i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1));
      out.push_back(pool[j]->features);
    }
  }
  return out;
}

std::string irrelevant_category(const scene::SyntheticScene& sc, std::size_t attribute_count) {
  const auto pos = scene::CategoryId::parse(sc.positive_category);
  std::set<std::string> present{sc.positive_category, sc.negative_category};
  for (const auto& inst : sc.instances) present.insert(inst.category);
  for (std::size_t a = 0; a < attribute_count; ++a) {
    const std::string id = scene::CategoryId{pos.base, a}.str();
    if (!present.count(id)) return id;
  }
  throw LookupError(fmt::format("scene {}: every attribute variant of base {} is present", sc.scene_id, pos.base));
}

encoder::PromptSpec build_prompts(const scene::SyntheticScene& sc, const ModalityMask& mask, const ModelConfig& config,
                                  const std::optional<std::string>& negative) {
  encoder::PromptSpec spec;
  spec.positive.text = encoder::TextPrompt::from_category(sc.positive_category);
  if (mask.pos_exemplars) spec.positive.exemplars = sample_exemplars(sc, sc.positive_category, config.exemplar_seed);
  if (mask.has_negative()) {
    const std::string neg = negative.value_or(sc.negative_category);
    encoder::Prompt p;
    p.text = mask.neg_text ? encoder::TextPrompt::from_category(neg) : encoder::TextPrompt::sentinel();
    // An absent category has no instances to show, so only its text is given.
    if (mask.neg_exemplars && sc.count(neg) > 0) p.exemplars = sample_exemplars(sc, neg, config.exemplar_seed);
    spec.negative = std::move(p);
  }
  spec.validate();
  return spec;
}

ForwardResult forward(nn::Binder& bind, const scene::SyntheticScene& sc, const encoder::PromptSpec& prompts,
                      const ModelConfig& config, bool training, RngStream* rng) {
  prompts.validate();
  const auto& ec = config.encoder;
  ForwardResult out;
  const encoder::SceneTokens tokens = encoder::encode_scene(bind, sc, ec);
  Var cond_pos = encoder::encode_prompt(bind, prompts.positive, ec);
  out.positive_queries = encoder::encode_queries(bind, tokens, cond_pos, encoder::Role::positive, ec);
  Var qneg;
  if (prompts.negative) {
    Var cond_neg = encoder::encode_prompt(bind, *prompts.negative, ec);
    qneg = encoder::encode_queries(bind, tokens, cond_neg, encoder::Role::negative, ec).queries;
  }
  out.dqr = dqr::dqr_forward(out.positive_queries.queries, qneg, dqr::bind_shared(bind), dqr::bind_refine(bind),
                             config.dqr, training, rng);

  Matrix anchors = out.positive_queries.anchors;
  for (std::size_t i = 0; i < anchors.rows(); ++i) {
    anchors(i, 0) *= static_cast<double>(sc.grid_rows);
    anchors(i, 1) *= static_cast<double>(sc.grid_cols);
  }
  out.predictions = heads::decode(out.dqr.refined, anchors, heads::bind_decoder(bind));

  // Density branch: instance tokens splatted onto the grid, gated by the
  // pooled positive prompt.
  const std::size_t len = cond_pos->rows();
  Var pooled = ad::matmul(ad::constant(Matrix(1, len, 1.0 / static_cast<double>(len))), cond_pos);
  Var cells = ad::sparse_matmul(scene::splat_matrix(sc, config.density_sigma), tokens.tokens);
  out.density = heads::density_head(ad::mul_row(cells, pooled), heads::bind_density(bind), sc.grid_rows,
                                    sc.grid_cols);
  return out;
}

Matrix ground_truth_points(const scene::SyntheticScene& sc) {
  std::vector<const scene::Instance*> pos;
  for (const auto& inst : sc.instances)
    if (inst.category == sc.positive_category) pos.push_back(&inst);
  Matrix pts(pos.size(), 2);
  for (std::size_t i = 0; i < pos.size(); ++i) {
    pts(i, 0) = pos[i]->row;
    pts(i, 1) = pos[i]->col;
  }
  return pts;
}

SceneLoss scene_loss(const ForwardResult& fwd, const scene::SyntheticScene& sc, const ModelConfig& config, long step) {
  const auto& preds = fwd.predictions;
  const Matrix points = ground_truth_points(sc);
  SceneLoss out;
  for (const auto* v : {&preds.centers->value, &preds.scores->value})
    for (double x : v->data())
      if (!std::isfinite(x))
        throw NumericError("predictions", step, fmt::format("non-finite prediction at step {}", step));
  out.match = heads::match(preds.centers->value, preds.scores->value.data(), points);
  std::vector<double> labels(preds.scores->rows(), 0.0);
  for (const auto& [q, g] : out.match.pairs) labels[q] = 1.0;
  heads::LossParts parts;
  parts.cls = heads::focal_loss(preds.scores, labels);
  parts.loc = heads::localization_loss(out.match, preds.centers, points);
  const auto target = scene::render_density(sc, sc.positive_category, config.density_sigma);
  parts.den = heads::density_loss(fwd.density, target.grid);
  parts.share = fwd.dqr.share_loss;
  parts.div = fwd.dqr.div_loss;
  out.breakdown = heads::total_loss(parts, config.weights, step);
  return out;
}

std::vector<double> predict_scores(const nn::ParamStore& params, const scene::SyntheticScene& sc,
                                   const ModalityMask& mask, const ModelConfig& config,
                                   const std::optional<std::string>& negative) {
  nn::Binder bind(params);
  const auto fwd = forward(bind, sc, build_prompts(sc, mask, config, negative), config, false, nullptr);
  const auto s = fwd.predictions.scores->value.data();
  return {s.begin(), s.end()};
}

}  // namespace countex::model
