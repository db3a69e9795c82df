#include "countex/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "countex/errors.hpp"

namespace countex::scene {
namespace {

std::vector<double> random_unit(std::size_t dim, RngStream& rng) {
  std::vector<double> v(dim);
  double norm = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void normalize(std::vector<double>& v) {
  const double n = std::sqrt(dot(v, v));
  if (n == 0.0) throw ContractError("normalize: zero vector");
  for (double& x : v) x /= n;
}

// Unit vector along `dir` with its component on the unit vector `axis` removed.
std::vector<double> orthogonal_part(std::vector<double> dir, const std::vector<double>& axis, RngStream& rng) {
  const double p = dot(dir, axis);
  for (std::size_t i = 0; i < dir.size(); ++i) dir[i] -= p * axis[i];
  if (std::sqrt(dot(dir, dir)) < 1e-9) {
    dir = random_unit(axis.size(), rng);
    return orthogonal_part(std::move(dir), axis, rng);
  }
  normalize(dir);
  return dir;
}

}  // namespace

void SceneConfig::validate() const {
  if (grid_rows == 0 || grid_cols == 0) throw ConfigError("grid must have at least one cell");
  if (base_dim == 0 || attribute_dim < 2) throw ConfigError("base_dim >= 1 and attribute_dim >= 2 required");
  if (count_min < 1 || count_max < count_min) throw ConfigError("count range must satisfy 1 <= count_min <= count_max");
  if (distractor_max < distractor_min) throw ConfigError("distractor range is empty");
  if (attribute_separation < 0.0 || attribute_separation > 2.0) {
    throw ConfigError("attribute_separation must lie in [0, 2] for unit descriptors");
  }
  if (attribute_drift < 0.0 || feature_noise < 0.0) throw ConfigError("noise scales must be nonnegative");
  if (base_categories < 2) throw ConfigError("need at least two base categories (targets plus distractors)");
  if (attributes < 3) throw ConfigError("need at least three attributes (pair plus an irrelevant one)");
  if (!(density_sigma > 0.0)) throw ConfigError("density_sigma must be positive");
}

std::string CategoryId::str() const { return fmt::format("c{}/a{}", base, attribute); }

CategoryId CategoryId::parse(const std::string& text) {
  CategoryId id;
  char tail = 0;
  if (std::sscanf(text.c_str(), "c%zu/a%zu%c", &id.base, &id.attribute, &tail) != 2) {
    throw LookupError(fmt::format("malformed category id '{}' (expected c<base>/a<attribute>)", text));
  }
  return id;
}

World::World(const SceneConfig& config) : attribute_dim_(config.attribute_dim) {
  config.validate();
  RngStream rng(config.world_seed, "world");
  RngStream base_rng = rng.child("base");
  RngStream attr_rng = rng.child("attribute");
  RngStream mean_rng = rng.child("mean");
  for (std::size_t i = 0; i < config.base_categories; ++i) bases_.push_back(random_unit(config.base_dim, base_rng));
  for (std::size_t i = 0; i < config.attributes; ++i)
    attributes_.push_back(random_unit(config.attribute_dim, attr_rng));
  for (std::size_t i = 0; i < config.base_categories; ++i)
    means_.push_back(random_unit(config.attribute_dim, mean_rng));
}

std::pair<CategorySpec, CategorySpec> World::variant_pair(std::size_t base, std::size_t attr_a, std::size_t attr_b,
                                                          double separation, double drift, RngStream& rng) const {
  std::vector<double> centre = means_.at(base);
  const double per_dim = drift / std::sqrt(static_cast<double>(attribute_dim_));
  for (double& x : centre) x += per_dim * rng.normal();
  normalize(centre);

  std::vector<double> diff = attributes_.at(attr_a);
  const auto& b = attributes_.at(attr_b);
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= b[i];
  const std::vector<double> axis = orthogonal_part(std::move(diff), centre, rng);

  // Rotating the centre by +-theta in the (centre, axis) plane keeps both
  // descriptors unit-norm at chord distance 2 sin(theta) = separation.
  const double theta = std::asin(separation / 2.0);
  CategorySpec a{{base, attr_a}, bases_.at(base), std::vector<double>(attribute_dim_)};
  CategorySpec bspec{{base, attr_b}, bases_.at(base), std::vector<double>(attribute_dim_)};
  for (std::size_t i = 0; i < attribute_dim_; ++i) {
    a.attribute[i] = std::cos(theta) * centre[i] + std::sin(theta) * axis[i];
    bspec.attribute[i] = std::cos(theta) * centre[i] - std::sin(theta) * axis[i];
  }
  return {std::move(a), std::move(bspec)};
}

std::size_t SyntheticScene::count(const std::string& category) const {
  return static_cast<std::size_t>(std::count_if(instances.begin(), instances.end(),
                                                [&](const Instance& i) { return i.category == category; }));
}

std::size_t SyntheticScene::distractor_count() const {
  return instances.size() - positive_count() - negative_count();
}

bool SyntheticScene::knows_category(const std::string& category) const {
  if (category == positive_category || category == negative_category) return true;
  return std::any_of(instances.begin(), instances.end(), [&](const Instance& i) { return i.category == category; });
}

SyntheticScene SyntheticScene::swapped() const {
  SyntheticScene s = *this;
  std::swap(s.positive_category, s.negative_category);
  return s;
}

SyntheticScene generate_scene(const SceneConfig& config, const std::string& scene_id, RngStream rng) {
  config.validate();
  const World world(config);
  RngStream r = rng.child(scene_id);

  const auto base = static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>(config.base_categories) - 1));
  const auto attr_a = static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>(config.attributes) - 1));
  auto attr_b = static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>(config.attributes) - 2));
  if (attr_b >= attr_a) ++attr_b;
  auto [variant_a, variant_b] =
      world.variant_pair(base, attr_a, attr_b, config.attribute_separation, config.attribute_drift, r);

  auto distractor_base =
      static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>(config.base_categories) - 2));
  if (distractor_base >= base) ++distractor_base;
  const auto distractor_attr =
      static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>(config.attributes) - 1));
  std::size_t distractor_partner = (distractor_attr + 1) % config.attributes;
  CategorySpec distractor = world
                                .variant_pair(distractor_base, distractor_attr, distractor_partner,
                                              config.attribute_separation, config.attribute_drift, r)
                                .first;

  const auto draw_count = [&](std::size_t lo, std::size_t hi) {
    return static_cast<std::size_t>(r.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
  };
  const std::size_t count_a = draw_count(config.count_min, config.count_max);
  const std::size_t count_b = draw_count(config.count_min, config.count_max);
  const std::size_t count_d = draw_count(config.distractor_min, config.distractor_max);
  const bool a_is_positive = r.uniform() < 0.5;

  const std::size_t total = count_a + count_b + count_d;
  const std::size_t cells = config.grid_rows * config.grid_cols;
  if (total > cells) {
    throw CapacityError(
        fmt::format("scene {}: {} instances do not fit in a {}x{} grid", scene_id, total, config.grid_rows,
                    config.grid_cols));
  }

  // Distinct cells via a partial Fisher-Yates shuffle over cell indices.
  std::vector<std::size_t> cell_ids(cells);
  std::iota(cell_ids.begin(), cell_ids.end(), std::size_t{0});
  for (std::size_t i = 0; i < total; ++i) {
    const auto j = static_cast<std::size_t>(r.uniform_int(static_cast<std::int64_t>(i),
                                                          static_cast<std::int64_t>(cells) - 1));
    std::swap(cell_ids[i], cell_ids[j]);
  }

  SyntheticScene scene;
  scene.scene_id = scene_id;
  scene.grid_rows = config.grid_rows;
  scene.grid_cols = config.grid_cols;
  scene.positive_category = (a_is_positive ? variant_a : variant_b).id.str();
  scene.negative_category = (a_is_positive ? variant_b : variant_a).id.str();

  std::size_t next_cell = 0;
  const auto emit = [&](const CategorySpec& spec, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
      Instance inst;
      const std::size_t cell = cell_ids[next_cell++];
      inst.row = static_cast<double>(cell / config.grid_cols);
      inst.col = static_cast<double>(cell % config.grid_cols);
      inst.category = spec.id.str();
      inst.features.reserve(config.feature_dim());
      for (double v : spec.base) inst.features.push_back(v + config.feature_noise * r.normal());
      for (double v : spec.attribute) inst.features.push_back(v + config.feature_noise * r.normal());
      scene.instances.push_back(std::move(inst));
    }
  };
  emit(variant_a, count_a);
  emit(variant_b, count_b);
  emit(distractor, count_d);
  for (std::size_t i = scene.instances.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(scene.instances[i - 1], scene.instances[j]);
  }
  return scene;
}

std::vector<KernelTap> gaussian_taps(double row, double col, std::size_t grid_rows, std::size_t grid_cols,
                                     double sigma) {
  if (!(sigma > 0.0)) throw ContractError("gaussian kernel: sigma must be positive");
  const double radius = 3.0 * sigma;
  const auto lo_r = static_cast<long>(std::ceil(row - radius));
  const auto hi_r = static_cast<long>(std::floor(row + radius));
  const auto lo_c = static_cast<long>(std::ceil(col - radius));
  const auto hi_c = static_cast<long>(std::floor(col + radius));
  std::vector<KernelTap> taps;
  double total = 0.0;
  for (long rr = std::max(lo_r, 0L); rr <= std::min(hi_r, static_cast<long>(grid_rows) - 1); ++rr) {
    for (long cc = std::max(lo_c, 0L); cc <= std::min(hi_c, static_cast<long>(grid_cols) - 1); ++cc) {
      const double dr = static_cast<double>(rr) - row;
      const double dc = static_cast<double>(cc) - col;
      const double d2 = dr * dr + dc * dc;
      if (d2 > radius * radius) continue;
      const double w = std::exp(-d2 / (2.0 * sigma * sigma));
      taps.push_back({static_cast<std::size_t>(rr) * grid_cols + static_cast<std::size_t>(cc), w});
      total += w;
    }
  }
  if (taps.empty()) {
    // Centre outside the grid: fall back to the nearest cell so mass is kept.
    const auto rr = static_cast<std::size_t>(std::clamp(std::lround(row), 0L, static_cast<long>(grid_rows) - 1));
    const auto cc = static_cast<std::size_t>(std::clamp(std::lround(col), 0L, static_cast<long>(grid_cols) - 1));
    return {{rr * grid_cols + cc, 1.0}};
  }
  for (auto& t : taps) t.weight /= total;
  return taps;
}

DensityMap render_density(const SyntheticScene& scene, const std::string& category, double sigma) {
  if (!(sigma > 0.0)) throw ContractError("render_density: sigma must be positive");
  if (!scene.knows_category(category)) {
    throw LookupError(fmt::format("render_density: category '{}' is not part of scene {}", category, scene.scene_id));
  }
  DensityMap map{Matrix(scene.grid_rows, scene.grid_cols)};
  for (const auto& inst : scene.instances) {
    if (inst.category != category) continue;
    for (const auto& tap : gaussian_taps(inst.row, inst.col, scene.grid_rows, scene.grid_cols, sigma))
      map.grid[tap.cell] += tap.weight;
  }
  return map;
}

ad::SparseMatrix splat_matrix(const SyntheticScene& scene, double sigma) {
  ad::SparseMatrix s;
  s.rows = scene.grid_rows * scene.grid_cols;
  s.cols = scene.instances.size();
  for (std::size_t i = 0; i < scene.instances.size(); ++i) {
    const auto& inst = scene.instances[i];
    for (const auto& tap : gaussian_taps(inst.row, inst.col, scene.grid_rows, scene.grid_cols, sigma))
      s.entries.push_back({tap.cell, i, tap.weight});
  }
  return s;
}

// ---------------------------------------------------------------------------
// JSON. Written by hand so every float carries exactly 17 significant digits.

namespace {

std::string quote(const std::string& s) { return nlohmann::json(s).dump(); }

std::string number(double v) { return fmt::format("{:.17g}", v); }

using nlohmann::json;

const json& require(const json& obj, const std::string& key, const std::string& ptr) {
  if (!obj.is_object()) throw SchemaError(ptr.empty() ? "/" : ptr, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(ptr + "/" + key, "required field is missing");
  return *it;
}

std::string require_string(const json& obj, const std::string& key, const std::string& ptr) {
  const json& v = require(obj, key, ptr);
  if (!v.is_string()) throw SchemaError(ptr + "/" + key, "expected a string");
  return v.get<std::string>();
}

double require_number(const json& v, const std::string& ptr) {
  if (!v.is_number()) throw SchemaError(ptr, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw SchemaError(ptr, "number is not finite");
  return d;
}

}  // namespace

std::string scene_to_json(const SyntheticScene& scene) {
  std::ostringstream out;
  out << "{\n";
  out << "  \"scene_id\": " << quote(scene.scene_id) << ",\n";
  out << "  \"grid\": [" << scene.grid_rows << ", " << scene.grid_cols << "],\n";
  out << "  \"positive_category\": " << quote(scene.positive_category) << ",\n";
  out << "  \"negative_category\": " << quote(scene.negative_category) << ",\n";
  out << "  \"instances\": [";
  for (std::size_t i = 0; i < scene.instances.size(); ++i) {
    const auto& inst = scene.instances[i];
    out << (i == 0 ? "\n" : ",\n");
    out << "    {\"center\": [" << number(inst.row) << ", " << number(inst.col) << "], \"category\": "
        << quote(inst.category) << ", \"features\": [";
    for (std::size_t k = 0; k < inst.features.size(); ++k) out << (k ? ", " : "") << number(inst.features[k]);
    out << "]}";
  }
  out << (scene.instances.empty() ? "]\n" : "\n  ]\n");
  out << "}\n";
  return out.str();
}

SyntheticScene scene_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("/", fmt::format("invalid JSON: {}", e.what()));
  }
  if (!doc.is_object()) throw SchemaError("/", "expected a top-level object");

  SyntheticScene scene;
  scene.scene_id = require_string(doc, "scene_id", "");
  const json& grid = require(doc, "grid", "");
  if (!grid.is_array() || grid.size() != 2) throw SchemaError("/grid", "expected [rows, cols]");
  for (std::size_t k = 0; k < 2; ++k) {
    if (!grid[k].is_number_integer() || grid[k].get<long long>() <= 0) {
      throw SchemaError(fmt::format("/grid/{}", k), "expected a positive integer");
    }
  }
  scene.grid_rows = grid[0].get<std::size_t>();
  scene.grid_cols = grid[1].get<std::size_t>();
  scene.positive_category = require_string(doc, "positive_category", "");
  scene.negative_category = require_string(doc, "negative_category", "");
  if (scene.positive_category == scene.negative_category) {
    throw SchemaError("/negative_category", "must differ from positive_category");
  }

  const json& instances = require(doc, "instances", "");
  if (!instances.is_array()) throw SchemaError("/instances", "expected an array");
  std::size_t feature_dim = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const std::string ptr = fmt::format("/instances/{}", i);
    const json& item = instances[i];
    Instance inst;
    const json& center = require(item, "center", ptr);
    if (!center.is_array() || center.size() != 2) throw SchemaError(ptr + "/center", "expected [row, col]");
    inst.row = require_number(center[0], ptr + "/center/0");
    inst.col = require_number(center[1], ptr + "/center/1");
    if (inst.row < 0.0 || inst.row >= static_cast<double>(scene.grid_rows)) {
      throw SchemaError(ptr + "/center/0", "row lies outside the grid");
    }
    if (inst.col < 0.0 || inst.col >= static_cast<double>(scene.grid_cols)) {
      throw SchemaError(ptr + "/center/1", "col lies outside the grid");
    }
    inst.category = require_string(item, "category", ptr);
    const json& features = require(item, "features", ptr);
    if (!features.is_array() || features.empty()) throw SchemaError(ptr + "/features", "expected a nonempty array");
    if (i == 0) feature_dim = features.size();
    if (features.size() != feature_dim) {
      throw SchemaError(ptr + "/features",
                        fmt::format("expected {} values like /instances/0, got {}", feature_dim, features.size()));
    }
    for (std::size_t k = 0; k < features.size(); ++k)
      inst.features.push_back(require_number(features[k], fmt::format("{}/features/{}", ptr, k)));
    scene.instances.push_back(std::move(inst));
  }
  if (scene.positive_count() == 0) throw SchemaError("/instances", "no instance of positive_category");
  if (scene.negative_count() == 0) throw SchemaError("/instances", "no instance of negative_category");
  return scene;
}

void write_scene(const std::filesystem::path& path, const SyntheticScene& scene) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  out << scene_to_json(scene);
  if (!out) throw IoError(fmt::format("failed writing {}", path.string()));
}

SyntheticScene read_scene(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return scene_from_json(buf.str());
}

}  // namespace countex::scene
