#include "countex/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

namespace countex::encoder {

TextPrompt TextPrompt::from_category(const std::string& category_id) {
  const auto id = scene::CategoryId::parse(category_id);
  return TextPrompt{false, id.base, {id.attribute}};
}

void PromptSpec::validate() const {
  if (positive.text.none) throw ContractError("positive prompt text is required");
  const auto check = [](const Prompt& p, const char* which) {
    if (!p.exemplars.empty() && p.exemplars.size() != 3) {
      throw ContractError(fmt::format("{} prompt has {} exemplars (expected 0 or 3)", which, p.exemplars.size()));
    }
  };
  check(positive, "positive");
  if (negative) check(*negative, "negative");
}

void add_params(nn::ParamStore& store, const EncoderConfig& c, const RngStream& rng) {
  const std::size_t d = c.dim;
  store.add_uniform("enc.category_embedding", c.category_vocab, d, 1, rng);
  store.add_uniform("enc.attribute_embedding", c.attribute_vocab, d, 1, rng);
  store.add_uniform("enc.null_token", 1, d, 1, rng);
  nn::add_linear(store, "enc.text_proj", d, d, rng);
  nn::add_linear(store, "enc.exemplar_proj", c.feature_dim, d, rng);
  nn::add_linear(store, "enc.feature_proj", c.feature_dim, d, rng);
  store.add_uniform("enc.position_proj", c.position_dim(), d, c.position_dim(), rng);
  store.add_uniform("enc.seeds", c.queries, d, d, rng);
  nn::add_mha(store, "enc.attn", d, rng);
  nn::add_layer_norm(store, "enc.norm", d);
}

std::vector<double> position_code(double row01, double col01, std::size_t frequencies) {
  std::vector<double> code{row01, col01};
  for (std::size_t f = 1; f <= frequencies; ++f) {
    const double w = 2.0 * std::numbers::pi * static_cast<double>(1u << (f - 1));
    code.push_back(std::sin(w * row01));
    code.push_back(std::cos(w * row01));
    code.push_back(std::sin(w * col01));
    code.push_back(std::cos(w * col01));
  }
  return code;
}

Var encode_prompt(nn::Binder& bind, const Prompt& prompt, const EncoderConfig& config) {
  if (!prompt.exemplars.empty() && prompt.exemplars.size() != 3) {
    throw ContractError(fmt::format("encode_prompt: {} exemplars (expected 0 or 3)", prompt.exemplars.size()));
  }
  std::vector<Var> parts;
  if (prompt.text.none) {
    parts.push_back(bind("enc.null_token"));
  } else {
    if (prompt.text.category >= config.category_vocab) {
      throw LookupError(fmt::format("category token {} outside vocabulary of {}", prompt.text.category,
                                    config.category_vocab));
    }
    for (std::size_t a : prompt.text.attributes) {
      if (a >= config.attribute_vocab) {
        throw LookupError(fmt::format("attribute token {} outside vocabulary of {}", a, config.attribute_vocab));
      }
    }
    Var embedded = ad::concat_rows({ad::gather_rows(bind("enc.category_embedding"), {prompt.text.category}),
                                    ad::gather_rows(bind("enc.attribute_embedding"), prompt.text.attributes)});
    parts.push_back(nn::linear(embedded, nn::bind_linear(bind, "enc.text_proj")));
  }
  if (!prompt.exemplars.empty()) {
    Matrix ex(prompt.exemplars.size(), config.feature_dim);
    for (std::size_t i = 0; i < prompt.exemplars.size(); ++i) {
      if (prompt.exemplars[i].size() != config.feature_dim) {
        throw ShapeError(fmt::format("exemplar {} has {} features, encoder expects {}", i,
                                     prompt.exemplars[i].size(), config.feature_dim));
      }
      std::copy(prompt.exemplars[i].begin(), prompt.exemplars[i].end(), ex.row(i).begin());
    }
    parts.push_back(nn::linear(ad::constant(std::move(ex)), nn::bind_linear(bind, "enc.exemplar_proj")));
  }
  return parts.size() == 1 ? parts.front() : ad::concat_rows(parts);
}

SceneTokens encode_scene(nn::Binder& bind, const scene::SyntheticScene& sc, const EncoderConfig& config) {
  const std::size_t n = sc.instances.size();
  if (n == 0) throw ContractError(fmt::format("scene {} has no instances", sc.scene_id));
  Matrix features(n, config.feature_dim);
  Matrix positions(n, config.position_dim());
  SceneTokens out;
  out.scene_id = sc.scene_id;
  out.centers = Matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& inst = sc.instances[i];
    if (inst.features.size() != config.feature_dim) {
      throw ShapeError(fmt::format("scene {} instance {} has {} features, encoder expects {}", sc.scene_id, i,
                                   inst.features.size(), config.feature_dim));
    }
    std::copy(inst.features.begin(), inst.features.end(), features.row(i).begin());
    const double r01 = inst.row / static_cast<double>(sc.grid_rows);
    const double c01 = inst.col / static_cast<double>(sc.grid_cols);
    const auto code = position_code(r01, c01, config.position_frequencies);
    std::copy(code.begin(), code.end(), positions.row(i).begin());
    out.centers(i, 0) = r01;
    out.centers(i, 1) = c01;
    std::vector<double> key{inst.row, inst.col};
    key.insert(key.end(), inst.features.begin(), inst.features.end());
    out.tie_keys.push_back(std::move(key));
  }
  out.tokens = nn::linear(ad::constant(std::move(features)), nn::bind_linear(bind, "enc.feature_proj"));
  out.tokens = ad::add(out.tokens, ad::matmul(ad::constant(std::move(positions)), bind("enc.position_proj")));
  return out;
}

QuerySet encode_queries(nn::Binder& bind, const SceneTokens& sc, const Var& conditioning, Role role,
                        const EncoderConfig& config) {
  if (config.queries < 1) throw ConfigError("encode_queries: need at least one query");
  if (conditioning->cols() != sc.tokens->cols()) {
    throw ShapeError(fmt::format("encode_queries: conditioning {} vs scene tokens {}",
                                 conditioning->value.shape_str(), sc.tokens->value.shape_str()));
  }
  const std::size_t n_inst = sc.tokens->rows();
  const Matrix affinity = matmul_nt(sc.tokens->value, conditioning->value);
  std::vector<double> score(n_inst);
  for (std::size_t i = 0; i < n_inst; ++i) {
    auto r = affinity.row(i);
    score[i] = *std::max_element(r.begin(), r.end());
  }
  std::vector<std::size_t> order(n_inst);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return sc.tie_keys[a] < sc.tie_keys[b];
  });

  const std::size_t n = config.queries;
  const std::size_t k = std::min(n, n_inst);
  order.resize(k);

  QuerySet out;
  out.role = role;
  out.scene_id = sc.scene_id;
  out.anchors = Matrix(n, 2, 0.5);
  out.instance_of_query.assign(n, -1);
  for (std::size_t j = 0; j < k; ++j) {
    out.anchors(j, 0) = sc.centers(order[j], 0);
    out.anchors(j, 1) = sc.centers(order[j], 1);
    out.instance_of_query[j] = static_cast<long>(order[j]);
  }

  Var selected = ad::gather_rows(sc.tokens, order);
  const std::size_t len = conditioning->rows();
  Var pooled = ad::matmul(ad::constant(Matrix(1, len, 1.0 / static_cast<double>(len))), conditioning);
  selected = ad::add(selected, ad::mul_row(selected, pooled));
  if (k < n) selected = ad::concat_rows({selected, ad::constant(Matrix(n - k, config.dim))});
  Var x = ad::add(bind("enc.seeds"), selected);
  Var memory = ad::concat_rows({sc.tokens, conditioning});
  Var attended = nn::multi_head_attention(x, memory, memory, config.heads, nn::bind_mha(bind, "enc.attn"));
  out.queries = nn::layer_norm(ad::add(x, attended), nn::bind_layer_norm(bind, "enc.norm"));
  return out;
}

}  // namespace countex::encoder
