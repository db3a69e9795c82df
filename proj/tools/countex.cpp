// countex command-line front end.
#include <CLI11.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "countex/cli.hpp"

namespace {

struct Flags {
  std::string config;
  std::string out = "out";
  std::uint64_t seed = 0;
  std::string data;
  std::size_t threads = 1;
  std::string model;
  std::size_t count = 0;
};

void add_shared(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "Flat JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "Output directory")->capture_default_str();
  cmd->add_option("--seed", f.seed, "Run seed (overrides the config's seed)")->capture_default_str();
  cmd->add_option("--data", f.data, "Scene directory with train/, val/ and test/");
  cmd->add_option("--threads", f.threads, "Worker threads; COUNTEX_THREADS is used when absent")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
}

countex::cli::Options to_options(const CLI::App* cmd, const Flags& f) {
  countex::cli::Options o;
  if (cmd->count("--config")) o.config = f.config;
  o.out = f.out;
  if (cmd->count("--seed")) o.seed = f.seed;
  if (cmd->count("--data")) o.data = f.data;
  if (cmd->count("--threads")) o.threads = f.threads;
  if (cmd->get_option_no_throw("--model") && cmd->count("--model")) o.model = f.model;
  if (cmd->get_option_no_throw("--count") && cmd->count("--count")) o.count = f.count;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompted counting with negative-query refinement on synthetic scenes"};
  app.require_subcommand(1);
  Flags f;

  using Command = std::function<int(const countex::cli::Options&)>;
  const std::map<std::string, std::pair<std::string, Command>> commands = {
      {"generate", {"Write seeded synthetic scenes split into train/val/test", countex::cli::cmd_generate}},
      {"train", {"Train on <data>/train, calibrate tau on <data>/val", countex::cli::cmd_train}},
      {"eval", {"Evaluate a trained model on <data>/test", countex::cli::cmd_eval}},
      {"ablate", {"Prompt-modality and irrelevant-negative ablations on <data>/test", countex::cli::cmd_ablate}},
      {"swap", {"Swap the positive and negative prompts on <data>/test", countex::cli::cmd_swap}},
      {"gradcheck", {"Finite-difference check of every differentiable operation", countex::cli::cmd_gradcheck}},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, entry] : commands) {
    auto* cmd = app.add_subcommand(name, entry.first);
    add_shared(cmd, f);
    if (name == "eval" || name == "ablate" || name == "swap") {
      cmd->add_option("--model", f.model, "Trained model file (default <out>/model.json)");
    }
    if (name == "generate") cmd->add_option("--count", f.count, "Number of scenes (overrides scene_count)");
    subs[name] = cmd;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : countex::cli::kExitInput;
  }

  for (const auto& [name, cmd] : subs) {
    if (!cmd->parsed()) continue;
    const auto options = to_options(cmd, f);
    const auto& run = commands.at(name).second;
    return countex::cli::run_guarded([&] { return run(options); });
  }
  return countex::cli::kExitInput;
}
