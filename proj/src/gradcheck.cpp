#include "countex/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "countex/dqr.hpp"
#include "countex/encoder.hpp"
#include "countex/heads.hpp"

namespace countex::gradcheck {
namespace {

using ad::Var;

Matrix random_matrix(RngStream& rng, std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

// Random weighting keeps every output coordinate in play.
Var weighted_sum(const Var& x, nn::Binder& b) { return ad::sum(ad::hadamard(x, b("r"))); }

void add_weighting(nn::ParamStore& s, RngStream& rng, std::size_t rows, std::size_t cols) {
  s.add("r", random_matrix(rng, rows, cols));
}

void add_random_linear(nn::ParamStore& s, RngStream& rng, const std::string& prefix, std::size_t in,
                       std::size_t out) {
  s.add(prefix + ".w", random_matrix(rng, in, out));
  s.add(prefix + ".b", random_matrix(rng, 1, out));
}

void add_random_mha(nn::ParamStore& s, RngStream& rng, const std::string& prefix, std::size_t d) {
  for (const char* part : {".q", ".k", ".v", ".o"}) add_random_linear(s, rng, prefix + part, d, d);
}

void add_random_norm(nn::ParamStore& s, RngStream& rng, const std::string& prefix, std::size_t d) {
  s.add(prefix + ".gain", random_matrix(rng, 1, d, 0.5, 1.5));
  s.add(prefix + ".shift", random_matrix(rng, 1, d));
}

bool is_fixed(const Case& c, const std::string& name) {
  return std::find(c.fixed.begin(), c.fixed.end(), name) != c.fixed.end();
}

std::vector<double> flatten(const Case& c, const std::map<std::string, Matrix>& grads, const nn::ParamStore& store) {
  std::vector<double> out;
  for (const auto& [name, value] : store.all()) {
    if (is_fixed(c, name)) continue;
    auto it = grads.find(name);
    if (it == grads.end()) {
      out.insert(out.end(), value.size(), 0.0);
    } else {
      out.insert(out.end(), it->second.data().begin(), it->second.data().end());
    }
  }
  return out;
}

double evaluate(const Case& c, const nn::ParamStore& store) {
  nn::Binder bind(store);
  return c.loss(bind)->scalar();
}

encoder::EncoderConfig tiny_encoder() {
  encoder::EncoderConfig c;
  c.queries = 3;
  c.dim = 8;
  c.feature_dim = 4;
  c.heads = 2;
  c.category_vocab = 2;
  c.attribute_vocab = 2;
  c.position_frequencies = 1;
  return c;
}

}  // namespace

double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  double diff = 0.0, na = 0.0, nn_ = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    na = std::max(na, std::abs(analytic[i]));
    nn_ = std::max(nn_, std::abs(numeric[i]));
  }
  return diff / std::max({na, nn_, 1e-8});
}

Result check(const Case& c, std::uint64_t seed, std::size_t points, double h, double tolerance) {
  Result res;
  res.name = c.name;
  res.points = points;
  RngStream rng = RngStream(seed, "gradcheck").child(c.name);
  for (std::size_t p = 0; p < points; ++p) {
    nn::ParamStore store = c.sample(rng);
    nn::Binder bind(store);
    ad::backward(c.loss(bind));
    const auto analytic = flatten(c, bind.gradients(), store);

    std::vector<double> numeric;
    std::vector<std::pair<std::string, std::size_t>> coords;
    for (const auto& [name, value] : store.all()) {
      if (is_fixed(c, name)) continue;
      for (std::size_t k = 0; k < value.size(); ++k) {
        nn::ParamStore plus = store, minus = store;
        plus.get(name)[k] += h;
        minus.get(name)[k] -= h;
        numeric.push_back((evaluate(c, plus) - evaluate(c, minus)) / (2.0 * h));
        coords.emplace_back(name, k);
      }
    }
    const double err = relative_error(analytic, numeric);
    if (err >= res.max_rel_error) {
      std::size_t worst = 0;
      for (std::size_t i = 0; i < numeric.size(); ++i)
        if (std::abs(analytic[i] - numeric[i]) > std::abs(analytic[worst] - numeric[worst])) worst = i;
      res.max_rel_error = err;
      if (!numeric.empty()) {
        res.worst_param = coords[worst].first;
        res.worst_index = coords[worst].second;
        res.analytic = analytic[worst];
        res.numeric = numeric[worst];
      }
    }
  }
  res.passed = res.max_rel_error < tolerance;
  return res;
}

std::vector<Case> standard_cases() {
  std::vector<Case> cases;

  cases.push_back({"linear",
                   [](RngStream& rng) {
                     nn::ParamStore s;
                     s.add("x", random_matrix(rng, 3, 4));
                     add_random_linear(s, rng, "lin", 4, 5);
                     add_weighting(s, rng, 3, 5);
                     return s;
                   },
                   [](nn::Binder& b) { return weighted_sum(nn::linear(b("x"), nn::bind_linear(b, "lin")), b); }});

  cases.push_back({"layer_norm",
                   [](RngStream& rng) {
                     nn::ParamStore s;
                     s.add("x", random_matrix(rng, 4, 6));
                     add_random_norm(s, rng, "ln", 6);
                     add_weighting(s, rng, 4, 6);
                     return s;
                   },
                   [](nn::Binder& b) { return weighted_sum(nn::layer_norm(b("x"), nn::bind_layer_norm(b, "ln")), b); }});

  cases.push_back({"softmax_rows",
                   [](RngStream& rng) {
                     nn::ParamStore s;
                     s.add("x", random_matrix(rng, 3, 5, -2.0, 2.0));
                     add_weighting(s, rng, 3, 5);
                     return s;
                   },
                   [](nn::Binder& b) { return weighted_sum(ad::softmax_rows(b("x")), b); }});

  cases.push_back({"multi_head_attention",
                   [](RngStream& rng) {
                     nn::ParamStore s;
                     s.add("q", random_matrix(rng, 3, 8));
                     s.add("k", random_matrix(rng, 5, 8));
                     s.add("v", random_matrix(rng, 5, 8));
                     add_random_mha(s, rng, "mha", 8);
                     add_weighting(s, rng, 3, 8);
                     return s;
                   },
                   [](nn::Binder& b) {
                     return weighted_sum(nn::multi_head_attention(b("q"), b("k"), b("v"), 2, nn::bind_mha(b, "mha")), b);
                   }});

  cases.push_back({"cosine_similarity",
                   [](RngStream& rng) {
                     nn::ParamStore s;
                     s.add("a", random_matrix(rng, 3, 6));
                     s.add("b", random_matrix(rng, 4, 6));
                     add_weighting(s, rng, 3, 4);
                     return s;
                   },
                   [](nn::Binder& b) { return weighted_sum(nn::cosine_matrix(b("a"), b("b")), b); }});

  cases.push_back({"projection",
                   [](RngStream& rng) {
                     nn::ParamStore s;
                     s.add("c", random_matrix(rng, 3, 6));
                     s.add("q", random_matrix(rng, 4, 6));
                     add_weighting(s, rng, 4, 6);
                     return s;
                   },
                   [](nn::Binder& b) { return weighted_sum(dqr::project_out(b("q"), dqr::orthonormal_rows(b("c"))), b); }});

  cases.push_back({"elementwise",
                   [](RngStream& rng) {
                     nn::ParamStore s;
                     s.add("x", random_matrix(rng, 3, 4));
                     s.add("y", random_matrix(rng, 3, 4, 0.5, 2.0));
                     add_weighting(s, rng, 3, 4);
                     return s;
                   },
                   [](nn::Binder& b) {
                     Var x = b("x"), y = b("y");
                     Var t = ad::add(ad::tanh(x), ad::div(ad::exp(x), y));
                     t = ad::add(t, ad::hadamard(ad::log(y), ad::sqrt(y)));
                     t = ad::add(t, ad::sub(ad::softplus(x), ad::sigmoid(x)));
                     t = ad::add(t, ad::pow_scalar(y, 1.5));
                     t = ad::mul_col(t, ad::row_norms(y));
                     return weighted_sum(ad::transpose(ad::transpose(t)), b);
                   }});

  cases.push_back({"shareability_loss",
                   [](RngStream& rng) {
                     nn::ParamStore s;
                     s.add("c", random_matrix(rng, 3, 6));
                     s.add("qpos", random_matrix(rng, 4, 6));
                     s.add("qneg", random_matrix(rng, 4, 6));
                     return s;
                   },
                   [](nn::Binder& b) { return dqr::shareability_loss(b("c"), b("qpos"), b("qneg")); }});

  cases.push_back({"diversity_loss",
                   [](RngStream& rng) {
                     nn::ParamStore s;
                     s.add("c", random_matrix(rng, 3, 6));
                     return s;
                   },
                   [](nn::Binder& b) { return dqr::diversity_loss(b("c")); }});

  cases.push_back({"focal_loss",
                   [](RngStream& rng) {
                     nn::ParamStore s;
                     s.add("logits", random_matrix(rng, 6, 1, -3.0, 3.0));
                     return s;
                   },
                   [](nn::Binder& b) {
                     const std::vector<double> labels{1, 0, 0, 1, 0, 1};
                     return heads::focal_loss(ad::sigmoid(b("logits")), labels);
                   }});

  cases.push_back({"localization_loss",
                   [](RngStream& rng) {
                     nn::ParamStore s;
                     s.add("centers", random_matrix(rng, 5, 2, 0.0, 8.0));
                     s.add("logits", random_matrix(rng, 5, 1));
                     s.add("points", random_matrix(rng, 3, 2, 0.0, 8.0));
                     return s;
                   },
                   [](nn::Binder& b) {
                     Var centers = b("centers");
                     Var scores = ad::sigmoid(b("logits"));
                     const Matrix& points = b("points")->value;
                     const auto m = heads::match(centers->value, scores->value.data(), points);
                     return heads::localization_loss(m, centers, points);
                   },
                   {"points"}});

  cases.push_back({"density_loss",
                   [](RngStream& rng) {
                     nn::ParamStore s;
                     s.add("tokens", random_matrix(rng, 12, 4));
                     s.add("w", random_matrix(rng, 4, 1));
                     s.add("target", random_matrix(rng, 3, 4, 0.0, 1.0));
                     return s;
                   },
                   [](nn::Binder& b) {
                     Var d = heads::density_head(b("tokens"), heads::DensityWeights{b("w")}, 3, 4);
                     return heads::density_loss(d, b("target")->value);
                   },
                   {"target"}});

  cases.push_back({"total_loss",
                   [](RngStream& rng) {
                     nn::ParamStore s;
                     for (const char* n : {"cls", "loc", "den", "share", "div"}) s.add(n, random_matrix(rng, 1, 1));
                     return s;
                   },
                   [](nn::Binder& b) {
                     heads::LossParts parts{b("cls"), b("loc"), b("den"), b("share"), b("div")};
                     return heads::total_loss(parts).total_var;
                   }});

  cases.push_back({"dqr_heads_composite",
                   [](RngStream& rng) {
                     nn::ParamStore s;
                     const std::size_t d = 8;
                     s.add("qpos", random_matrix(rng, 4, d));
                     s.add("qneg", random_matrix(rng, 4, d));
                     s.add("dqr.prototypes", random_matrix(rng, 2, d));
                     add_random_mha(s, rng, "dqr.share_attn", d);
                     add_random_linear(s, rng, "dqr.share_fuse", d, d);
                     add_random_norm(s, rng, "dqr.share_norm", d);
                     add_random_mha(s, rng, "dqr.refine_attn", d);
                     s.add("dqr.gate", random_matrix(rng, 1, 1, 0.5, 1.5));
                     add_random_norm(s, rng, "dqr.refine_norm", d);
                     add_random_linear(s, rng, "dec.score", d, 1);
                     add_random_linear(s, rng, "dec.center", d, 2);
                     add_random_linear(s, rng, "dec.extent", d, 2);
                     return s;
                   },
                   [](nn::Binder& b) {
                     dqr::DqrConfig cfg;
                     cfg.prototypes = 2;
                     cfg.exclusive = 2;
                     cfg.heads = 2;
                     cfg.dropout = 0.0;
                     auto out = dqr::dqr_forward(b("qpos"), b("qneg"), dqr::bind_shared(b), dqr::bind_refine(b), cfg,
                                                 false, nullptr);
                     const Matrix anchors = Matrix::from_rows({{1, 1}, {2, 5}, {6, 2}, {4, 4}});
                     const Matrix points = Matrix::from_rows({{1.2, 1.1}, {5.8, 2.3}});
                     auto preds = heads::decode(out.refined, anchors, heads::bind_decoder(b));
                     const auto m = heads::match(preds.centers->value, preds.scores->value.data(), points);
                     std::vector<double> labels(4, 0.0);
                     for (const auto& [q, g] : m.pairs) labels[q] = 1.0;
                     heads::LossParts parts{heads::focal_loss(preds.scores, labels),
                                            heads::localization_loss(m, preds.centers, points),
                                            ad::mean(ad::square(preds.extents)), out.share_loss, out.div_loss};
                     return heads::total_loss(parts).total_var;
                   }});
  cases.push_back({"encoder_composite",
                   [](RngStream& rng) {
                     nn::ParamStore s;
                     encoder::add_params(s, tiny_encoder(), RngStream(rng.next_u64(), "encoder"));
                     add_weighting(s, rng, 3, 8);
                     return s;
                   },
                   [](nn::Binder& b) {
                     scene::SyntheticScene sc;
                     sc.scene_id = "tiny";
                     sc.grid_rows = sc.grid_cols = 8;
                     sc.positive_category = "c0/a0";
                     sc.negative_category = "c0/a1";
                     sc.instances = {{1, 2, "c0/a0", {0.9, 0.1, -0.3, 0.4}},
                                     {5, 6, "c0/a1", {0.8, -0.2, 0.5, 0.1}},
                                     {3, 3, "c1/a0", {-0.4, 0.7, 0.2, -0.6}}};
                     encoder::Prompt prompt;
                     prompt.text = encoder::TextPrompt::from_category("c1/a1");
                     prompt.exemplars = {{0.1, 0.2, 0.3, 0.4}, {0.5, -0.1, 0.0, 0.2}, {-0.3, 0.3, 0.6, 0.1}};
                     const auto cfg = tiny_encoder();
                     const auto tokens = encoder::encode_scene(b, sc, cfg);
                     const auto q = encoder::encode_queries(b, tokens, encoder::encode_prompt(b, prompt, cfg),
                                                            encoder::Role::positive, cfg);
                     return weighted_sum(q.queries, b);
                   }});
  return cases;
}

Case perturbed_case() {
  return {"perturbed_fixture",
          [](RngStream& rng) {
            nn::ParamStore s;
            s.add("x", random_matrix(rng, 2, 3, 0.5, 1.5));
            return s;
          },
          // x * x * stop_gradient(x): the analytic gradient misses one factor.
          [](nn::Binder& b) {
            Var x = b("x");
            return ad::sum(ad::hadamard(ad::hadamard(x, x), ad::constant(x->value)));
          }};
}

std::vector<Result> run_all(std::uint64_t seed, std::size_t points) {
  std::vector<Result> out;
  for (const auto& c : standard_cases()) out.push_back(check(c, seed, points));
  return out;
}

}  // namespace countex::gradcheck
