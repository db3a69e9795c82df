#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "countex/eval.hpp"

namespace countex::io {

namespace fs = std::filesystem;

/// Every tunable of a run, addressable by one flat JSON key.
struct RunConfig {
  scene::SceneConfig scene;
  model::ModelConfig model;
  train::TrainConfig train;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t scene_count = 100;
  /// Generation split; floors are taken first and the remainder goes to test.
  double split_train = 0.70;
  double split_val = 0.15;
  double split_test = 0.15;
  model::ModalityMask eval_mask = model::ModalityMask::all();
  model::ModalityMask swap_mask = model::ModalityMask::all();

  /// Copies the shared fields (seed, threads, vocabulary sizes, feature width,
  /// density sigma) into the nested configs and validates them.
  void finalize();
};

enum class Source { built_in, file, env, flag };
const char* source_name(Source s);

/// Keys with their origin, in key order.
using SourceMap = std::map<std::string, Source>;

/// All config keys, sorted.
std::vector<std::string> config_keys();

/// Applies a flat JSON object. Unknown keys raise ConfigError; values of the
/// wrong type raise SchemaError with the key's JSON pointer.
void apply_json(RunConfig& config, const std::string& text, SourceMap* sources = nullptr,
                Source source = Source::file);
RunConfig load_config(const fs::path& path, SourceMap* sources = nullptr);

/// Flat JSON with every key, 17 significant digits for reals.
std::string config_to_json(const RunConfig& config);
/// (key, value as text) for every key.
std::vector<std::pair<std::string, std::string>> describe(const RunConfig& config);

/// Reals as 17 significant digits, so text round-trips exactly.
std::string number(double v);

/// Writes to a sibling temporary file and renames it into place.
void write_text_atomic(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

struct ModelFile {
  nn::ParamStore params;
  double tau = 0.5;
};
std::string model_to_json(const ModelFile& model);
ModelFile model_from_json(const std::string& text);

std::string report_csv(const std::vector<eval::EvalReport>& reports,
                       const std::vector<std::string>& metrics = {"MAE", "RMSE", "NAE"});
std::vector<eval::EvalReport> reports_from_csv(const std::string& text);
std::string scene_records_csv(const std::vector<eval::SceneRecord>& records);
std::string loss_curve_csv(const std::vector<train::LossRow>& curve);

struct PredictionRow {
  std::string scene_id;
  std::size_t query_index = 0;
  double row = 0.0;
  double col = 0.0;
  double score = 0.0;
};
std::string predictions_csv(const std::vector<PredictionRow>& rows);
std::string swap_records_csv(const std::vector<eval::SwapRecord>& records);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Self-contained SVG; the plotted numbers are repeated in a comment block.
std::string line_plot_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<Series>& series);
std::string bar_plot_svg(const std::string& title, const std::string& y_label,
                         const std::vector<std::pair<std::string, double>>& bars);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const fs::path& path);

struct RunManifest {
  std::string command;
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::string timestamp;
  std::vector<std::pair<std::string, std::string>> artifacts;  // (path relative to out_dir, sha256)
};

/// Checksums `files` (relative to out_dir) and writes manifest.json atomically.
RunManifest write_manifest(const fs::path& out_dir, const std::string& command, const std::string& config_path,
                           std::uint64_t seed, const std::vector<std::string>& files);

}  // namespace countex::io
