#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "countex/nn.hpp"
#include "countex/scene.hpp"

namespace countex::encoder {

using ad::Var;

struct EncoderConfig {
  std::size_t queries = 100;  // n
  std::size_t dim = 32;       // d
  std::size_t feature_dim = 32;
  std::size_t heads = 4;
  std::size_t category_vocab = 6;
  std::size_t attribute_vocab = 6;
  std::size_t position_frequencies = 4;

  std::size_t position_dim() const { return 2 + 4 * position_frequencies; }
};

enum class Role { positive, negative };

/// Text part of a prompt: one category token plus attribute tokens, or the
/// sentinel "none" which encodes to a single learned null token.
struct TextPrompt {
  bool none = false;
  std::size_t category = 0;
  std::vector<std::size_t> attributes;

  static TextPrompt sentinel() { return TextPrompt{true, 0, {}}; }
  /// From a category id such as "c2/a5": tokens (category 2, attribute 5).
  static TextPrompt from_category(const std::string& category_id);
  std::size_t token_count() const { return none ? 1 : 1 + attributes.size(); }
};

/// Text plus zero or exactly three exemplar feature vectors.
struct Prompt {
  TextPrompt text;
  std::vector<std::vector<double>> exemplars;
};

/// A required positive prompt and an optional negative one.
struct PromptSpec {
  Prompt positive;
  std::optional<Prompt> negative;

  /// Throws ContractError when the positive text is missing or an exemplar
  /// list has a length other than 0 or 3.
  void validate() const;
};

/// Projected instance tokens of one scene plus the per-instance data the
/// query encoder needs for ordering and anchoring.
struct SceneTokens {
  Var tokens;       // instances x d
  Matrix centers;   // instances x 2, normalized to [0, 1)
  std::vector<std::vector<double>> tie_keys;  // (row, col, features...) per instance
  std::string scene_id;
};

struct QuerySet {
  Var queries;      // n x d
  Role role = Role::positive;
  std::string scene_id;
  Matrix anchors;   // n x 2 normalized reference points
  std::vector<long> instance_of_query;  // selected instance per query, -1 for seed-only rows
};

void add_params(nn::ParamStore& store, const EncoderConfig& config, const RngStream& rng);

/// Fixed sinusoidal code of a normalized (row, col) position.
std::vector<double> position_code(double row01, double col01, std::size_t frequencies);

/// Conditioning sequence: text tokens (embedded then projected), followed by
/// each exemplar projected through a linear layer.
Var encode_prompt(nn::Binder& bind, const Prompt& prompt, const EncoderConfig& config);

SceneTokens encode_scene(nn::Binder& bind, const scene::SyntheticScene& scene, const EncoderConfig& config);

/// Instances are ranked by their best dot product with the conditioning
/// tokens (ties by position, then features) and the top-n seed the queries,
/// which then cross-attend to [instance tokens; conditioning] through one
/// attention + layer-norm block.
QuerySet encode_queries(nn::Binder& bind, const SceneTokens& scene, const Var& conditioning, Role role,
                        const EncoderConfig& config);

}  // namespace countex::encoder
