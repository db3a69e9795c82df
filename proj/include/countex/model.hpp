#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "countex/dqr.hpp"
#include "countex/encoder.hpp"
#include "countex/heads.hpp"
#include "countex/scene.hpp"

namespace countex::model {

using ad::Var;

/// Which prompt parts are supplied. Positive text is always present.
struct ModalityMask {
  bool pos_exemplars = false;
  bool neg_text = false;
  bool neg_exemplars = false;

  bool has_negative() const { return neg_text || neg_exemplars; }
  /// "T_pos", "T_pos+E_pos", "T_pos+T_neg", "T_pos+E_pos+T_neg+E_neg", ...
  std::string name() const;
  /// Inverse of name(). Throws ConfigError for unknown parts or a missing T_pos.
  static ModalityMask parse(const std::string& text);
  friend bool operator==(const ModalityMask&, const ModalityMask&) = default;

  static ModalityMask positive_text() { return {}; }
  static ModalityMask positive_both() { return {true, false, false}; }
  static ModalityMask with_negative_text() { return {false, true, false}; }
  static ModalityMask all() { return {true, true, true}; }
  /// The four rows of the prompt-combination ablation, in table order.
  static std::vector<ModalityMask> ablation_rows();
};

struct ModelConfig {
  encoder::EncoderConfig encoder;
  dqr::DqrConfig dqr;
  heads::LossWeights weights;
  double density_sigma = 1.0;
  /// Seed of the exemplar sampler; fixed so every run sees the same exemplars.
  std::uint64_t exemplar_seed = 0;
};

void add_params(nn::ParamStore& store, const ModelConfig& config, const RngStream& rng);
nn::ParamStore init_params(const ModelConfig& config, std::uint64_t seed);

/// Three instance feature vectors of `category` drawn from the scene (with
/// replacement when fewer than three exist). Deterministic in the scene id.
std::vector<std::vector<double>> sample_exemplars(const scene::SyntheticScene& scene, const std::string& category,
                                                  std::uint64_t seed);

/// The lowest-attribute variant of the positive base that is absent from the scene.
std::string irrelevant_category(const scene::SyntheticScene& scene, std::size_t attribute_count);

/// Prompt for counting `scene.positive_category` and excluding `negative`
/// (defaults to the scene's negative category).
encoder::PromptSpec build_prompts(const scene::SyntheticScene& scene, const ModalityMask& mask,
                                  const ModelConfig& config, const std::optional<std::string>& negative = {});

struct ForwardResult {
  heads::Predictions predictions;
  Var density;  // grid_rows x grid_cols
  dqr::DqrOutput dqr;
  encoder::QuerySet positive_queries;
};

/// One define-by-run pass. `rng` drives dropout and is only used when training.
ForwardResult forward(nn::Binder& bind, const scene::SyntheticScene& scene, const encoder::PromptSpec& prompts,
                      const ModelConfig& config, bool training, RngStream* rng);

/// Positive-category centers in cell units, k x 2.
Matrix ground_truth_points(const scene::SyntheticScene& scene);

struct SceneLoss {
  heads::LossBreakdown breakdown;
  heads::MatchResult match;
};

/// Matching plus the five loss terms for one forward pass.
SceneLoss scene_loss(const ForwardResult& fwd, const scene::SyntheticScene& scene, const ModelConfig& config,
                     long step = -1);

/// Detached per-query scores of an evaluation pass.
std::vector<double> predict_scores(const nn::ParamStore& params, const scene::SyntheticScene& scene,
                                   const ModalityMask& mask, const ModelConfig& config,
                                   const std::optional<std::string>& negative = {});

}  // namespace countex::model
