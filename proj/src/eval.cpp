#include "countex/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <fmt/format.h>

namespace countex::eval {

EvalReport summarize(std::vector<SceneRecord> records, double tau, std::string mask, std::uint64_t seed) {
  EvalReport out;
  out.tau = tau;
  out.mask = std::move(mask);
  out.seed = seed;
  out.records = std::move(records);
  if (out.records.empty()) return out;
  double abs_sum = 0.0, sq_sum = 0.0, rel_sum = 0.0;
  std::size_t rel_n = 0;
  for (const auto& r : out.records) {
    const double e = r.pred - r.gt;
    abs_sum += std::abs(e);
    sq_sum += e * e;
    if (r.gt > 0.0) {
      rel_sum += std::abs(e) / r.gt;
      ++rel_n;
    } else {
      ++out.nae_excluded;
    }
  }
  const auto n = static_cast<double>(out.records.size());
  out.mae = abs_sum / n;
  out.rmse = std::sqrt(sq_sum / n);
  out.nae = rel_n ? rel_sum / static_cast<double>(rel_n) : 0.0;
  return out;
}

namespace {

std::optional<std::string> negative_for(const scene::SyntheticScene& sc, NegativeSource source,
                                        const model::ModelConfig& config) {
  if (source == NegativeSource::scene) return std::nullopt;
  return model::irrelevant_category(sc, config.encoder.attribute_vocab);
}

std::vector<double> counts(const nn::ParamStore& params, double tau, const std::vector<scene::SyntheticScene>& scenes,
                           const model::ModalityMask& mask, const model::ModelConfig& config,
                           NegativeSource source, std::size_t threads) {
  std::vector<double> out(scenes.size());
  train::parallel_for(scenes.size(), threads, [&](std::size_t i) {
    const auto scores = model::predict_scores(params, scenes[i], mask, config, negative_for(scenes[i], source, config));
    out[i] = static_cast<double>(heads::count(scores, tau));
  });
  return out;
}

}  // namespace

EvalReport evaluate(const nn::ParamStore& params, double tau, const std::vector<scene::SyntheticScene>& scenes,
                    const model::ModalityMask& mask, const model::ModelConfig& config, const EvalOptions& options) {
  const auto pred = counts(params, tau, scenes, mask, config, options.negative, options.threads);
  std::vector<SceneRecord> records;
  records.reserve(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    records.push_back({scenes[i].scene_id, static_cast<double>(scenes[i].positive_count()), pred[i]});
  }
  const std::string label = options.negative == NegativeSource::irrelevant ? kIrrelevantLabel : mask.name();
  return summarize(std::move(records), tau, label, options.seed);
}

std::vector<EvalReport> run_modality_ablation(const nn::ParamStore& params, double tau,
                                              const std::vector<scene::SyntheticScene>& scenes,
                                              const model::ModelConfig& config, const EvalOptions& options) {
  for (const auto& sc : scenes) {
    if (sc.positive_count() == 0 || sc.negative_count() == 0) {
      throw ContractError(fmt::format("ablation: scene {} lacks one of its two target categories", sc.scene_id));
    }
  }
  EvalOptions opts = options;
  opts.negative = NegativeSource::scene;
  std::vector<EvalReport> rows;
  for (const auto& mask : model::ModalityMask::ablation_rows()) rows.push_back(evaluate(params, tau, scenes, mask, config, opts));
  return rows;
}

std::vector<EvalReport> run_irrelevant_negative(const nn::ParamStore& params, double tau,
                                                const std::vector<scene::SyntheticScene>& scenes,
                                                const model::ModelConfig& config, const EvalOptions& options) {
  EvalOptions opts = options;
  std::vector<EvalReport> rows;
  opts.negative = NegativeSource::scene;
  rows.push_back(evaluate(params, tau, scenes, model::ModalityMask::positive_text(), config, opts));
  opts.negative = NegativeSource::irrelevant;
  rows.push_back(evaluate(params, tau, scenes, model::ModalityMask::with_negative_text(), config, opts));
  opts.negative = NegativeSource::scene;
  rows.push_back(evaluate(params, tau, scenes, model::ModalityMask::with_negative_text(), config, opts));
  return rows;
}

bool SwapRecord::targets_prompt() const {
  return std::abs(pred_a - gt_a) < std::abs(pred_a - gt_b) && std::abs(pred_b - gt_b) < std::abs(pred_b - gt_a);
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("pearson: samples differ in length");
  if (x.empty()) return 0.0;
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

SwapReport run_swap_test(const nn::ParamStore& params, double tau, const std::vector<scene::SyntheticScene>& scenes,
                         const model::ModalityMask& mask, const model::ModelConfig& config,
                         const EvalOptions& options) {
  std::vector<scene::SyntheticScene> swapped;
  swapped.reserve(scenes.size());
  for (const auto& sc : scenes) {
    if (sc.positive_count() == 0 || sc.negative_count() == 0) {
      throw ContractError(fmt::format("swap test: scene {} lacks one of its two target categories", sc.scene_id));
    }
    swapped.push_back(sc.swapped());
  }
  EvalOptions opts = options;
  opts.negative = NegativeSource::scene;
  SwapReport out;
  out.role_a = evaluate(params, tau, scenes, mask, config, opts);
  out.role_b = evaluate(params, tau, swapped, mask, config, opts);

  std::vector<double> pred, prompted, other;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    SwapRecord r{scenes[i].scene_id, out.role_a.records[i].gt, out.role_b.records[i].gt, out.role_a.records[i].pred,
                 out.role_b.records[i].pred};
    if (r.targets_prompt()) ++hits;
    pred.insert(pred.end(), {r.pred_a, r.pred_b});
    prompted.insert(prompted.end(), {r.gt_a, r.gt_b});
    other.insert(other.end(), {r.gt_b, r.gt_a});
    out.records.push_back(std::move(r));
  }
  out.fraction_on_target = scenes.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(scenes.size());
  out.corr_prompted = pearson(pred, prompted);
  out.corr_other = pearson(pred, other);
  return out;
}

std::size_t nearest_centroid_count(const scene::SyntheticScene& sc) {
  std::map<std::string, std::pair<std::vector<double>, std::size_t>> sums;
  for (const auto& inst : sc.instances) {
    auto& [sum, n] = sums[inst.category];
    if (sum.empty()) sum.assign(inst.features.size(), 0.0);
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += inst.features[k];
    ++n;
  }
  std::vector<std::pair<std::string, std::vector<double>>> centroids;
  for (auto& [cat, entry] : sums) {
    for (auto& v : entry.first) v /= static_cast<double>(entry.second);
    centroids.emplace_back(cat, std::move(entry.first));
  }
  std::size_t count = 0;
  for (const auto& inst : sc.instances) {
    double best = std::numeric_limits<double>::infinity();
    const std::string* label = nullptr;
    for (const auto& [cat, c] : centroids) {
      double d = 0.0;
      for (std::size_t k = 0; k < c.size(); ++k) d += (inst.features[k] - c[k]) * (inst.features[k] - c[k]);
      if (d < best) {
        best = d;
        label = &cat;
      }
    }
    if (label && *label == sc.positive_category) ++count;
  }
  return count;
}

OracleAgreement compare_with_oracle(const nn::ParamStore& params, double tau,
                                    const std::vector<scene::SyntheticScene>& scenes, const model::ModalityMask& mask,
                                    const model::ModelConfig& config, std::size_t threads) {
  const auto pred = counts(params, tau, scenes, mask, config, NegativeSource::scene, threads);
  OracleAgreement out;
  out.scenes = scenes.size();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const double gt = static_cast<double>(scenes[i].positive_count());
    const double oracle = static_cast<double>(nearest_centroid_count(scenes[i]));
    out.model.push_back({scenes[i].scene_id, gt, pred[i]});
    out.oracle.push_back({scenes[i].scene_id, gt, oracle});
    if (pred[i] == oracle) ++out.agree;
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

}  // namespace countex::eval
