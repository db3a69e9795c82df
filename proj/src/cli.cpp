#include "countex/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "countex/gradcheck.hpp"

namespace countex::cli {

namespace {

std::ostream& log_of(const Options& o) { return o.log ? *o.log : std::cout; }

std::size_t parse_threads(const std::string& text, const std::string& origin) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size() || v < 1) throw ConfigError(fmt::format("{}: expected a positive integer, got '{}'", origin, text));
  return static_cast<std::size_t>(v);
}

fs::path require_data(const Options& o) {
  if (!o.data) throw ConfigError("--data DIR is required for this command");
  return *o.data;
}

fs::path model_path(const Options& o) { return o.model ? *o.model : o.out / "model.json"; }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError(fmt::format("cannot create directory {}", dir.string()));
}

void put(const fs::path& out, const std::string& name, const std::string& text, std::vector<std::string>& files) {
  io::write_text_atomic(out / name, text);
  files.push_back(name);
}

Resolved start(const Options& o, const std::string& command) {
  auto r = resolve(o);
  auto& log = log_of(o);
  fmt::print(log, "countex {}\n", command);
  print_config(log, r);
  return r;
}

void finish(const Options& o, const Resolved& r, const std::string& command, const std::vector<std::string>& files) {
  io::write_manifest(o.out, command, o.config ? o.config->string() : "", r.config.seed, files);
}

train::TrainResult train_model(const Options& o, const Resolved& r) {
  const fs::path data = require_data(o);
  const auto tr = read_split(data, "train");
  const auto va = read_split(data, "val");
  auto& log = log_of(o);
  fmt::print(log, "training on {} scenes, calibrating on {}\n", tr.size(), va.size());
  auto result = train::train(r.config.model, r.config.train, tr, va);
  fmt::print(log, "tau = {}\n", io::number(result.tau));
  return result;
}

io::ModelFile load_or_train(const Options& o, const Resolved& r, std::vector<std::string>& files) {
  const fs::path p = model_path(o);
  if (fs::exists(p)) return io::model_from_json(io::read_text(p));
  fmt::print(log_of(o), "no model at {}; training a fresh one\n", p.string());
  auto t = train_model(o, r);
  io::ModelFile m{std::move(t.params), t.tau};
  put(o.out, "model.json", io::model_to_json(m), files);
  return m;
}

std::vector<std::pair<std::string, double>> mae_bars(const std::vector<eval::EvalReport>& rows) {
  std::vector<std::pair<std::string, double>> bars;
  for (const auto& r : rows) bars.emplace_back(r.mask, r.mae);
  return bars;
}

void print_reports(std::ostream& log, const std::vector<eval::EvalReport>& rows) {
  for (const auto& r : rows) {
    fmt::print(log, "  {:<26} MAE {:>8.4f}  RMSE {:>8.4f}  NAE {:>7.4f}\n", r.mask, r.mae, r.rmse, r.nae);
  }
}

}  // namespace

Resolved resolve(const Options& o) {
  Resolved r;
  for (const auto& k : io::config_keys()) r.sources[k] = io::Source::built_in;
  if (o.config) io::apply_json(r.config, io::read_text(*o.config), &r.sources, io::Source::file);
  if (const char* env = std::getenv("COUNTEX_THREADS"); env && !o.threads) {
    r.config.threads = parse_threads(env, "COUNTEX_THREADS");
    r.sources["threads"] = io::Source::env;
  }
  if (o.threads) {
    if (*o.threads < 1) throw ConfigError("--threads must be at least 1");
    r.config.threads = *o.threads;
    r.sources["threads"] = io::Source::flag;
  }
  if (o.seed) {
    r.config.seed = *o.seed;
    r.sources["seed"] = io::Source::flag;
  }
  if (o.count) {
    r.config.scene_count = *o.count;
    r.sources["scene_count"] = io::Source::flag;
  }
  r.config.finalize();
  return r;
}

void print_config(std::ostream& out, const Resolved& r) {
  for (const auto& [k, v] : io::describe(r.config)) {
    fmt::print(out, "  {} = {} ({})\n", k, v, io::source_name(r.sources.at(k)));
  }
}

std::array<std::size_t, 3> split_counts(std::size_t count, double train_ratio, double val_ratio) {
  const auto part = [&](double ratio) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(count) * ratio + 1e-9));
  };
  const std::size_t tr = std::min(count, part(train_ratio));
  const std::size_t va = std::min(count - tr, part(val_ratio));
  return {tr, va, count - tr - va};
}

std::vector<scene::SyntheticScene> read_split(const fs::path& data, const std::string& split) {
  const fs::path dir = data / split;
  if (!fs::is_directory(dir)) throw IoError(fmt::format("missing scene directory {}", dir.string()));
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<scene::SyntheticScene> out;
  for (const auto& f : files) {
    try {
      out.push_back(scene::read_scene(f));
    } catch (const SchemaError& e) {
      throw SchemaError(e.pointer(), fmt::format("{}: {}", f.string(), e.what()));
    }
  }
  return out;
}

int cmd_generate(const Options& o) {
  const auto r = start(o, "generate");
  const auto& c = r.config;
  const auto sizes = split_counts(c.scene_count, c.split_train, c.split_val);
  const char* names[] = {"train", "val", "test"};
  for (const char* n : names) {
    ensure_dir(o.out / n);
    for (const auto& e : fs::directory_iterator(o.out / n)) {
      if (e.path().extension() == ".json") fs::remove(e.path());
    }
  }
  const RngStream rng(c.seed, "scenes");
  std::vector<std::string> files;
  std::size_t index = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t k = 0; k < sizes[s]; ++k, ++index) {
      const std::string id = fmt::format("s{:05d}", index);
      const auto sc = scene::generate_scene(c.scene, id, rng);
      put(o.out, fmt::format("{}/{}.json", names[s], id), scene::scene_to_json(sc), files);
    }
  }
  put(o.out, "config.json", io::config_to_json(c), files);
  fmt::print(log_of(o), "wrote {}/{}/{} scenes to {}\n", sizes[0], sizes[1], sizes[2], o.out.string());
  finish(o, r, "generate", files);
  return kExitOk;
}

int cmd_train(const Options& o) {
  const auto r = start(o, "train");
  ensure_dir(o.out);
  std::vector<std::string> files;
  const auto result = train_model(o, r);
  put(o.out, "model.json", io::model_to_json({result.params, result.tau}), files);
  put(o.out, "loss_curve.csv", io::loss_curve_csv(result.curve), files);
  std::vector<io::Series> series(6);
  const char* names[] = {"L_cls", "L_loc", "L_den", "L_share", "L_div", "total"};
  for (std::size_t k = 0; k < 6; ++k) series[k].name = names[k];
  for (const auto& row : result.curve) {
    const double v[] = {row.cls, row.loc, row.den, row.share, row.div, row.total};
    for (std::size_t k = 0; k < 6; ++k) {
      series[k].x.push_back(static_cast<double>(row.step));
      series[k].y.push_back(v[k]);
    }
  }
  put(o.out, "loss_curve.svg", io::line_plot_svg("Training loss", "step", "loss", series), files);
  finish(o, r, "train", files);
  return kExitOk;
}

int cmd_eval(const Options& o) {
  const auto r = start(o, "eval");
  ensure_dir(o.out);
  const auto& c = r.config;
  const auto model = io::model_from_json(io::read_text(model_path(o)));
  const auto scenes = read_split(require_data(o), "test");

  std::vector<std::vector<io::PredictionRow>> dumps(scenes.size());
  std::vector<double> counts(scenes.size());
  train::parallel_for(scenes.size(), c.threads, [&](std::size_t i) {
    const auto& sc = scenes[i];
    nn::Binder bind(model.params);
    const auto fwd =
        model::forward(bind, sc, model::build_prompts(sc, c.eval_mask, c.model), c.model, false, nullptr);
    const auto snap = heads::snapshot(fwd.predictions, model.tau);
    for (std::size_t q = 0; q < snap.scores.size(); ++q) {
      dumps[i].push_back({sc.scene_id, q, snap.boxes[q].row, snap.boxes[q].col, snap.scores[q]});
    }
    counts[i] = static_cast<double>(snap.count);
  });
  std::vector<eval::SceneRecord> records;
  std::vector<io::PredictionRow> rows;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    records.push_back({scenes[i].scene_id, static_cast<double>(scenes[i].positive_count()), counts[i]});
    rows.insert(rows.end(), dumps[i].begin(), dumps[i].end());
  }
  const auto report = eval::summarize(std::move(records), model.tau, c.eval_mask.name(), c.seed);
  if (report.nae_excluded) {
    fmt::print(log_of(o), "warning: {} scenes with no positive instance left out of NAE\n", report.nae_excluded);
  }
  print_reports(log_of(o), {report});

  std::vector<std::string> files;
  put(o.out, "eval_report.csv", io::report_csv({report}), files);
  put(o.out, "eval_scenes.csv", io::scene_records_csv(report.records), files);
  put(o.out, "predictions.csv", io::predictions_csv(rows), files);
  put(o.out, "eval_metrics.svg",
      io::bar_plot_svg(fmt::format("Counting error ({})", report.mask), "error",
                       {{"MAE", report.mae}, {"RMSE", report.rmse}, {"NAE", report.nae}}),
      files);
  finish(o, r, "eval", files);
  return kExitOk;
}

int cmd_ablate(const Options& o) {
  const auto r = start(o, "ablate");
  ensure_dir(o.out);
  const auto& c = r.config;
  std::vector<std::string> files;
  const auto model = load_or_train(o, r, files);
  const auto scenes = read_split(require_data(o), "test");
  eval::EvalOptions opts;
  opts.threads = c.threads;
  opts.seed = c.seed;

  const auto rows = eval::run_modality_ablation(model.params, model.tau, scenes, c.model, opts);
  fmt::print(log_of(o), "modality ablation\n");
  print_reports(log_of(o), rows);
  put(o.out, "ablation.csv", io::report_csv(rows, {"MAE"}), files);
  put(o.out, "ablation_full.csv", io::report_csv(rows), files);
  put(o.out, "ablation.svg", io::bar_plot_svg("MAE by prompt modality", "MAE", mae_bars(rows)), files);

  const auto irr = eval::run_irrelevant_negative(model.params, model.tau, scenes, c.model, opts);
  fmt::print(log_of(o), "irrelevant negative\n");
  print_reports(log_of(o), irr);
  put(o.out, "irrelevant.csv", io::report_csv(irr, {"MAE"}), files);
  put(o.out, "irrelevant_full.csv", io::report_csv(irr), files);
  put(o.out, "irrelevant.svg", io::bar_plot_svg("MAE by negative prompt", "MAE", mae_bars(irr)), files);
  finish(o, r, "ablate", files);
  return kExitOk;
}

int cmd_swap(const Options& o) {
  const auto r = start(o, "swap");
  ensure_dir(o.out);
  const auto& c = r.config;
  std::vector<std::string> files;
  const auto model = load_or_train(o, r, files);
  const auto scenes = read_split(require_data(o), "test");
  eval::EvalOptions opts;
  opts.threads = c.threads;
  opts.seed = c.seed;
  auto rep = eval::run_swap_test(model.params, model.tau, scenes, c.swap_mask, c.model, opts);
  rep.role_a.mask = "A:" + rep.role_a.mask;
  rep.role_b.mask = "B:" + rep.role_b.mask;
  auto& log = log_of(o);
  print_reports(log, {rep.role_a, rep.role_b});
  fmt::print(log, "on target in both orders: {:.4f}; corr(pred, prompted) {:.4f}, corr(pred, other) {:.4f}\n",
             rep.fraction_on_target, rep.corr_prompted, rep.corr_other);
  put(o.out, "swap_report.csv", io::report_csv({rep.role_a, rep.role_b}), files);
  put(o.out, "swap_scenes.csv", io::swap_records_csv(rep.records), files);
  put(o.out, "swap.svg",
      io::bar_plot_svg("Swapped prompts", "MAE", {{rep.role_a.mask, rep.role_a.mae}, {rep.role_b.mask, rep.role_b.mae}}),
      files);
  finish(o, r, "swap", files);
  return kExitOk;
}

int cmd_gradcheck(const Options& o) {
  const auto r = start(o, "gradcheck");
  ensure_dir(o.out);
  const auto results = gradcheck::run_all(r.config.seed);
  auto& log = log_of(o);
  std::string csv = "operation,points,max_rel_error,worst_param,worst_index,analytic,numeric,passed\n";
  bool ok = true;
  for (const auto& g : results) {
    fmt::print(log, "  {:<24} {:>10.3e}  {}\n", g.name, g.max_rel_error, g.passed ? "pass" : "FAIL");
    if (!g.passed) {
      ok = false;
      fmt::print(log, "    worst {}[{}]: analytic {} vs numeric {}\n", g.worst_param, g.worst_index,
                 io::number(g.analytic), io::number(g.numeric));
    }
    csv += fmt::format("{},{},{},{},{},{},{},{}\n", g.name, g.points, io::number(g.max_rel_error), g.worst_param,
                       g.worst_index, io::number(g.analytic), io::number(g.numeric), g.passed ? 1 : 0);
  }
  std::vector<std::string> files;
  put(o.out, "gradcheck.csv", csv, files);
  finish(o, r, "gradcheck", files);
  return ok ? kExitOk : kExitNumeric;
}

int run_guarded(const std::function<int()>& command) {
  try {
    return command();
  } catch (const SchemaError& e) {
    std::cerr << fmt::format("schema error at {}: {}\n", e.pointer(), e.what());
    return kExitInput;
  } catch (const NumericError& e) {
    std::cerr << fmt::format("numeric failure in {} at step {}: {}\n", e.term(), e.step(), e.what());
    return kExitNumeric;
  } catch (const ConfigError& e) {
    std::cerr << fmt::format("config error: {}\n", e.what());
    return kExitInput;
  } catch (const IoError& e) {
    std::cerr << fmt::format("i/o error: {}\n", e.what());
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    std::cerr << fmt::format("i/o error: {}\n", e.what());
    return kExitInput;
  } catch (const LookupError& e) {
    std::cerr << fmt::format("lookup error: {}\n", e.what());
    return kExitInput;
  } catch (const CapacityError& e) {
    std::cerr << fmt::format("capacity error: {}\n", e.what());
    return kExitInput;
  } catch (const ContractError& e) {
    std::cerr << fmt::format("invalid input: {}\n", e.what());
    return kExitInput;
  } catch (const ShapeError& e) {
    std::cerr << fmt::format("shape error: {}\n", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << fmt::format("error: {}\n", e.what());
    return 1;
  }
}

}  // namespace countex::cli
