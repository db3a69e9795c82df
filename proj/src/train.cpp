#include "countex/train.hpp"

#include <cmath>
#include <set>
#include <thread>

#include <fmt/format.h>

namespace countex::train {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError(fmt::format("learning rate must be positive, got {}", learning_rate));
  if (batch < 1) throw ConfigError("batch size must be at least 1");
  if (masks.empty()) throw ConfigError("at least one training modality mask is required");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam moment constants must lie in [0, 1)");
  }
}

void Adam::step(nn::ParamStore& params, const std::map<std::string, Matrix>& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (auto& [name, value] : params.all()) {
    auto g = grads.find(name);
    if (g == grads.end()) continue;
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.size() != value.size()) {
      m = Matrix(value.rows(), value.cols());
      v = Matrix(value.rows(), value.cols());
    }
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double gi = g->second[i];
      m[i] = b1_ * m[i] + (1.0 - b1_) * gi;
      v[i] = b2_ * v[i] + (1.0 - b2_) * gi * gi;
      value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

BatchResult batch_gradients(const nn::ParamStore& params, const std::vector<const scene::SyntheticScene*>& batch,
                            const std::vector<model::ModalityMask>& masks, const model::ModelConfig& config,
                            std::size_t step, std::uint64_t seed, std::size_t threads) {
  if (masks.size() != batch.size()) throw ContractError("batch_gradients: one mask per scene is required");
  std::vector<std::map<std::string, Matrix>> grads(batch.size());
  std::vector<heads::LossBreakdown> losses(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    const auto& sc = *batch[i];
    nn::Binder bind(params);
    RngStream dropout = RngStream(seed, "dropout").child(fmt::format("{}/{}", step, i));
    const auto fwd = model::forward(bind, sc, model::build_prompts(sc, masks[i], config), config, true, &dropout);
    auto loss = model::scene_loss(fwd, sc, config, static_cast<long>(step));
    ad::backward(loss.breakdown.total_var);
    grads[i] = bind.gradients();
    loss.breakdown.total_var.reset();
    losses[i] = loss.breakdown;
  });

  BatchResult out;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (auto& [name, g] : grads[i]) {
      auto it = out.gradients.find(name);
      if (it == out.gradients.end()) {
        out.gradients.emplace(name, g * inv);
      } else {
        for (std::size_t k = 0; k < g.size(); ++k) it->second[k] += g[k] * inv;
      }
    }
    const auto& b = losses[i];
    out.losses.cls += b.cls * inv;
    out.losses.loc += b.loc * inv;
    out.losses.den += b.den * inv;
    out.losses.share += b.share * inv;
    out.losses.div += b.div * inv;
    out.losses.total += b.total * inv;
  }
  out.losses.step = step;
  return out;
}

std::vector<std::size_t> predict_counts(const nn::ParamStore& params, const std::vector<scene::SyntheticScene>& scenes,
                                        const model::ModalityMask& mask, const model::ModelConfig& config, double tau,
                                        std::size_t threads) {
  std::vector<std::size_t> out(scenes.size());
  parallel_for(scenes.size(), threads, [&](std::size_t i) {
    out[i] = heads::count(model::predict_scores(params, scenes[i], mask, config), tau);
  });
  return out;
}

double calibrate_tau(const nn::ParamStore& params, const std::vector<scene::SyntheticScene>& val,
                     const std::vector<model::ModalityMask>& masks, const model::ModelConfig& config,
                     std::size_t threads) {
  if (val.empty() || masks.empty()) return 0.5;
  const std::size_t per_mask = val.size();
  std::vector<std::vector<double>> scores(per_mask * masks.size());
  parallel_for(scores.size(), threads, [&](std::size_t i) {
    scores[i] = model::predict_scores(params, val[i % per_mask], masks[i / per_mask], config);
  });
  double best_tau = 0.5;
  double best_err = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 19; ++k) {
    const double tau = k / 20.0;
    double err = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double gt = static_cast<double>(val[i % per_mask].positive_count());
      err += std::abs(static_cast<double>(heads::count(scores[i], tau)) - gt);
    }
    if (err < best_err) {
      best_err = err;
      best_tau = tau;
    }
  }
  return best_tau;
}

TrainResult train(const model::ModelConfig& config, const TrainConfig& tc,
                  const std::vector<scene::SyntheticScene>& train_scenes,
                  const std::vector<scene::SyntheticScene>& val_scenes) {
  tc.validate();
  std::set<std::string> ids;
  for (const auto& s : train_scenes) ids.insert(s.scene_id);
  for (const auto& s : val_scenes) {
    if (ids.count(s.scene_id)) throw ContractError(fmt::format("scene {} is in both train and val", s.scene_id));
  }
  TrainResult out;
  out.params = model::init_params(config, tc.seed);
  if (tc.steps > 0 && train_scenes.empty()) throw ContractError("train: no training scenes");

  Adam adam(tc.learning_rate, tc.beta1, tc.beta2, tc.adam_eps);
  RngStream sampler(tc.seed, "batches");
  const auto last = static_cast<std::int64_t>(train_scenes.size()) - 1;
  const auto last_mask = static_cast<std::int64_t>(tc.masks.size()) - 1;
  for (std::size_t step = 0; step < tc.steps; ++step) {
    std::vector<const scene::SyntheticScene*> batch;
    std::vector<model::ModalityMask> masks;
    for (std::size_t b = 0; b < tc.batch; ++b) {
      batch.push_back(&train_scenes[static_cast<std::size_t>(sampler.uniform_int(0, last))]);
      masks.push_back(tc.masks[static_cast<std::size_t>(sampler.uniform_int(0, last_mask))]);
    }
    auto result = batch_gradients(out.params, batch, masks, config, step, tc.seed, tc.threads);
    adam.step(out.params, result.gradients);
    out.curve.push_back(result.losses);
  }
  out.tau = calibrate_tau(out.params, val_scenes, tc.masks, config, tc.threads);
  return out;
}

}  // namespace countex::train
