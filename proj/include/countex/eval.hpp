#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "countex/train.hpp"

namespace countex::eval {

struct SceneRecord {
  std::string scene_id;
  double gt = 0.0;
  double pred = 0.0;
};

struct EvalReport {
  double mae = 0.0;
  double rmse = 0.0;
  double nae = 0.0;
  std::vector<SceneRecord> records;
  double tau = 0.5;
  std::string mask;
  std::uint64_t seed = 0;
  /// Scenes with gt = 0, left out of NAE only.
  std::size_t nae_excluded = 0;
};

/// MAE, RMSE and NAE over `records`. An empty record list gives zeros.
EvalReport summarize(std::vector<SceneRecord> records, double tau, std::string mask, std::uint64_t seed);

/// Which category the negative prompt names.
enum class NegativeSource {
  scene,       // the scene's own negative category
  irrelevant,  // an attribute variant of the positive base absent from the scene
};

struct EvalOptions {
  NegativeSource negative = NegativeSource::scene;
  std::size_t threads = 1;
  std::uint64_t seed = 0;
};

EvalReport evaluate(const nn::ParamStore& params, double tau, const std::vector<scene::SyntheticScene>& scenes,
                    const model::ModalityMask& mask, const model::ModelConfig& config,
                    const EvalOptions& options = {});

/// One report per mask in ModalityMask::ablation_rows(), all at the same tau.
std::vector<EvalReport> run_modality_ablation(const nn::ParamStore& params, double tau,
                                              const std::vector<scene::SyntheticScene>& scenes,
                                              const model::ModelConfig& config, const EvalOptions& options = {});

/// Rows: positive text only, irrelevant negative text, the scene's negative text.
std::vector<EvalReport> run_irrelevant_negative(const nn::ParamStore& params, double tau,
                                                const std::vector<scene::SyntheticScene>& scenes,
                                                const model::ModelConfig& config, const EvalOptions& options = {});

inline const std::string kIrrelevantLabel = "T_pos+T_neg(irrelevant)";

struct SwapRecord {
  std::string scene_id;
  double gt_a = 0.0;    // original positive category
  double gt_b = 0.0;    // original negative category
  double pred_a = 0.0;  // prompted for a, excluding b
  double pred_b = 0.0;  // prompted for b, excluding a
  /// Both estimates strictly closer to the prompted truth than to the other one.
  bool targets_prompt() const;
};

struct SwapReport {
  EvalReport role_a;
  EvalReport role_b;
  std::vector<SwapRecord> records;
  double fraction_on_target = 0.0;
  /// Pearson correlation of all estimates with the prompted and the other truth.
  double corr_prompted = 0.0;
  double corr_other = 0.0;
};

SwapReport run_swap_test(const nn::ParamStore& params, double tau, const std::vector<scene::SyntheticScene>& scenes,
                         const model::ModalityMask& mask, const model::ModelConfig& config,
                         const EvalOptions& options = {});

/// Pearson correlation; 0 when either side has zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Assigns every instance to the category whose mean feature vector (over
/// the scene's labelled instances) is nearest, and counts the positive ones.
std::size_t nearest_centroid_count(const scene::SyntheticScene& scene);

struct OracleAgreement {
  std::size_t scenes = 0;
  std::size_t agree = 0;
  std::vector<SceneRecord> model;   // pred = model count
  std::vector<SceneRecord> oracle;  // pred = oracle count
  double rate() const { return scenes ? static_cast<double>(agree) / static_cast<double>(scenes) : 0.0; }
};

OracleAgreement compare_with_oracle(const nn::ParamStore& params, double tau,
                                    const std::vector<scene::SyntheticScene>& scenes, const model::ModalityMask& mask,
                                    const model::ModelConfig& config, std::size_t threads = 1);

/// Median of a non-empty sample (mean of the middle pair for even sizes).
double median(std::vector<double> values);

}  // namespace countex::eval
