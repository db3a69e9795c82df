#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "countex/model.hpp"

namespace countex::train {

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch = 8;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  /// Prompt combinations sampled uniformly per training scene.
  std::vector<model::ModalityMask> masks = model::ModalityMask::ablation_rows();
  std::size_t threads = 1;

  /// Throws ConfigError on a non-positive learning rate or empty batch.
  void validate() const;
};

/// Adaptive moment estimation over a ParamStore, visiting names in store order.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(nn::ParamStore& params, const std::map<std::string, Matrix>& grads);
  long steps_taken() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::map<std::string, Matrix> m_, v_;
};

struct LossRow {
  std::size_t step = 0;
  double cls = 0.0, loc = 0.0, den = 0.0, share = 0.0, div = 0.0, total = 0.0;
};

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers. Results must be
/// written by index so the outcome does not depend on scheduling.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

struct BatchResult {
  std::map<std::string, Matrix> gradients;  // mean over the batch
  LossRow losses;                           // mean over the batch
};

/// Forward and backward over `batch` with one mask per scene. Gradients are
/// reduced in batch order.
BatchResult batch_gradients(const nn::ParamStore& params, const std::vector<const scene::SyntheticScene*>& batch,
                            const std::vector<model::ModalityMask>& masks, const model::ModelConfig& config,
                            std::size_t step, std::uint64_t seed, std::size_t threads);

struct TrainResult {
  nn::ParamStore params;
  double tau = 0.5;
  std::vector<LossRow> curve;
};

/// Counts strictly above tau for each scene, evaluated in parallel.
std::vector<std::size_t> predict_counts(const nn::ParamStore& params, const std::vector<scene::SyntheticScene>& scenes,
                                        const model::ModalityMask& mask, const model::ModelConfig& config, double tau,
                                        std::size_t threads);

/// Grid {0.05, 0.10, ..., 0.95} minimizing MAE on `val` pooled over `masks`;
/// the lowest tau wins ties.
double calibrate_tau(const nn::ParamStore& params, const std::vector<scene::SyntheticScene>& val,
                     const std::vector<model::ModalityMask>& masks, const model::ModelConfig& config,
                     std::size_t threads);

/// Throws ContractError when train and val share a scene id, NumericError
/// (with the step and term) on a non-finite loss.
TrainResult train(const model::ModelConfig& config, const TrainConfig& tc,
                  const std::vector<scene::SyntheticScene>& train_scenes,
                  const std::vector<scene::SyntheticScene>& val_scenes);

}  // namespace countex::train
