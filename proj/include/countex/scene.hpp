#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "countex/autograd.hpp"
#include "countex/matrix.hpp"
#include "countex/rng.hpp"

namespace countex::scene {

/// Generator constants. Every field is exposed through the flat JSON config.
struct SceneConfig {
  std::size_t grid_rows = 64;
  std::size_t grid_cols = 64;
  std::size_t base_dim = 24;
  std::size_t attribute_dim = 8;
  double feature_noise = 0.05;
  std::size_t count_min = 5;
  std::size_t count_max = 60;
  std::size_t distractor_min = 0;
  std::size_t distractor_max = 10;
  /// Euclidean distance between the paired variants' unit attribute descriptors, in [0, 2].
  double attribute_separation = 0.5;
  /// Per-scene perturbation of the shared attribute direction (illumination analog).
  double attribute_drift = 0.5;
  std::size_t base_categories = 6;
  std::size_t attributes = 6;
  std::uint64_t world_seed = 7;
  double density_sigma = 1.0;

  std::size_t feature_dim() const { return base_dim + attribute_dim; }
  /// Throws ConfigError on inconsistent settings.
  void validate() const;
};

/// "c<base>/a<attribute>", e.g. "c2/a5". Paired variants share the base.
struct CategoryId {
  std::size_t base = 0;
  std::size_t attribute = 0;

  std::string str() const;
  /// Throws LookupError for malformed ids.
  static CategoryId parse(const std::string& text);
  friend bool operator==(const CategoryId&, const CategoryId&) = default;
};

/// Descriptors of one category variant; both parts have unit norm.
struct CategorySpec {
  CategoryId id;
  std::vector<double> base;
  std::vector<double> attribute;
};

/// Fixed vocabulary shared by all scenes of a config: base descriptors,
/// attribute directions and per-base mean attribute directions.
class World {
 public:
  explicit World(const SceneConfig& config);

  const std::vector<double>& base_descriptor(std::size_t base) const { return bases_.at(base); }
  const std::vector<double>& attribute_direction(std::size_t attribute) const { return attributes_.at(attribute); }
  const std::vector<double>& attribute_mean(std::size_t base) const { return means_.at(base); }

  /// The two paired variants of `base` with the given attribute ids, their
  /// shared attribute centre perturbed by `drift` draws from `rng`.
  std::pair<CategorySpec, CategorySpec> variant_pair(std::size_t base, std::size_t attr_a, std::size_t attr_b,
                                                     double separation, double drift, RngStream& rng) const;

 private:
  std::size_t attribute_dim_;
  std::vector<std::vector<double>> bases_;
  std::vector<std::vector<double>> attributes_;
  std::vector<std::vector<double>> means_;
};

struct Instance {
  double row = 0.0;
  double col = 0.0;
  std::string category;
  std::vector<double> features;

  friend bool operator==(const Instance&, const Instance&) = default;
};

struct SyntheticScene {
  std::string scene_id;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  std::string positive_category;
  std::string negative_category;
  std::vector<Instance> instances;

  std::size_t count(const std::string& category) const;
  std::size_t positive_count() const { return count(positive_category); }
  std::size_t negative_count() const { return count(negative_category); }
  std::size_t distractor_count() const;
  bool knows_category(const std::string& category) const;
  std::size_t feature_dim() const { return instances.empty() ? 0 : instances.front().features.size(); }
  /// The same scene with the positive and negative roles exchanged.
  SyntheticScene swapped() const;

  friend bool operator==(const SyntheticScene&, const SyntheticScene&) = default;
};

/// Deterministic in (config, rng seed/label, scene_id). Throws CapacityError
/// when the sampled instances cannot fit one per grid cell.
SyntheticScene generate_scene(const SceneConfig& config, const std::string& scene_id, RngStream rng);

/// One truncated (radius 3 sigma), renormalized Gaussian kernel: grid cell
/// index (row * cols + col) and weight. Weights sum to exactly one.
struct KernelTap {
  std::size_t cell;
  double weight;
};
std::vector<KernelTap> gaussian_taps(double row, double col, std::size_t grid_rows, std::size_t grid_cols,
                                     double sigma);

struct DensityMap {
  Matrix grid;  // grid_rows x grid_cols
  double mass() const { return grid.sum(); }
};

/// Sum of one kernel per instance of `category`. Throws LookupError for an
/// unknown category and ContractError for sigma <= 0.
DensityMap render_density(const SyntheticScene& scene, const std::string& category, double sigma);

/// Sparse (cells x instances) splat matrix carrying each instance's kernel.
ad::SparseMatrix splat_matrix(const SyntheticScene& scene, double sigma);

std::string scene_to_json(const SyntheticScene& scene);
/// Throws SchemaError carrying a JSON pointer to the offending field.
SyntheticScene scene_from_json(const std::string& text);
void write_scene(const std::filesystem::path& path, const SyntheticScene& scene);
SyntheticScene read_scene(const std::filesystem::path& path);

}  // namespace countex::scene
