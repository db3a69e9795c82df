#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "countex/io.hpp"

namespace countex::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumeric = 3;

/// Values given on the command line; unset fields fall back to the
/// environment (threads only), then the config file, then built-in defaults.
struct Options {
  std::optional<fs::path> config;
  fs::path out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> data;
  std::optional<std::size_t> threads;
  /// Trained model for eval, ablate and swap; defaults to <out>/model.json.
  std::optional<fs::path> model;
  /// Scene count for generate; overrides scene_count.
  std::optional<std::size_t> count;
  std::ostream* log = nullptr;  // null means stdout
};

struct Resolved {
  io::RunConfig config;
  io::SourceMap sources;
};

/// Merges defaults, the config file, COUNTEX_THREADS and flags (in rising
/// priority) and finalizes the result.
Resolved resolve(const Options& options);
/// One "key = value (source)" line per config key.
void print_config(std::ostream& out, const Resolved& resolved);

/// Floors of count * ratio for train and val; the remainder goes to test.
std::array<std::size_t, 3> split_counts(std::size_t count, double train_ratio, double val_ratio);

/// Scene files of <dir>/<split>, sorted by file name. A missing split
/// directory raises IoError.
std::vector<scene::SyntheticScene> read_split(const fs::path& data, const std::string& split);

int cmd_generate(const Options& options);
int cmd_train(const Options& options);
int cmd_eval(const Options& options);
int cmd_ablate(const Options& options);
int cmd_swap(const Options& options);
int cmd_gradcheck(const Options& options);

/// Runs `command`, reporting exceptions on stderr and mapping them to exit
/// codes: input and config errors 2, non-finite values 3, anything else 1.
int run_guarded(const std::function<int()>& command);

}  // namespace countex::cli
