#include "countex/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

namespace countex::io {

using nlohmann::json;

std::string number(double v) { return fmt::format("{:.17g}", v); }

const char* source_name(Source s) {
  switch (s) {
    case Source::built_in: return "default";
    case Source::file: return "file";
    case Source::env: return "env";
    case Source::flag: return "flag";
  }
  return "?";
}

void RunConfig::finalize() {
  model.encoder.feature_dim = scene.feature_dim();
  model.encoder.category_vocab = scene.base_categories;
  model.encoder.attribute_vocab = scene.attributes;
  model.density_sigma = scene.density_sigma;
  train.seed = seed;
  train.threads = threads;
  scene.validate();
  train.validate();
  for (double r : {split_train, split_val, split_test}) {
    if (!(r >= 0.0)) throw ConfigError("split ratios must be non-negative");
  }
  if (std::abs(split_train + split_val + split_test - 1.0) > 1e-9) {
    throw ConfigError(fmt::format("split ratios sum to {}, expected 1", split_train + split_val + split_test));
  }
  if (threads < 1) throw ConfigError("threads must be at least 1");
}

namespace {

struct Key {
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&, const std::string&)> set;
};

std::size_t as_size(const json& v, const std::string& ptr) {
  if (!v.is_number_integer() || v.get<long long>() < 0) throw SchemaError(ptr, "expected a non-negative integer");
  return v.get<std::size_t>();
}

double as_real(const json& v, const std::string& ptr) {
  if (!v.is_number()) throw SchemaError(ptr, "expected a number");
  return v.get<double>();
}

bool as_bool(const json& v, const std::string& ptr) {
  if (!v.is_boolean()) throw SchemaError(ptr, "expected true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& ptr) {
  if (!v.is_string()) throw SchemaError(ptr, "expected a string");
  return v.get<std::string>();
}

model::ModalityMask as_mask(const json& v, const std::string& ptr) {
  try {
    return model::ModalityMask::parse(as_string(v, ptr));
  } catch (const ConfigError& e) {
    throw SchemaError(ptr, e.what());
  }
}

#define COUNTEX_SIZE(key, field) \
  {key, {[](const RunConfig& c) { return json(c.field); }, \
          [](RunConfig& c, const json& v, const std::string& p) { c.field = as_size(v, p); }}}
#define COUNTEX_U64(key, field) \
  {key, {[](const RunConfig& c) { return json(c.field); }, \
          [](RunConfig& c, const json& v, const std::string& p) { c.field = as_size(v, p); }}}
#define COUNTEX_REAL(key, field) \
  {key, {[](const RunConfig& c) { return json(c.field); }, \
          [](RunConfig& c, const json& v, const std::string& p) { c.field = as_real(v, p); }}}
#define COUNTEX_BOOL(key, field) \
  {key, {[](const RunConfig& c) { return json(c.field); }, \
          [](RunConfig& c, const json& v, const std::string& p) { c.field = as_bool(v, p); }}}
#define COUNTEX_MASK(key, field) \
  {key, {[](const RunConfig& c) { return json(c.field.name()); }, \
          [](RunConfig& c, const json& v, const std::string& p) { c.field = as_mask(v, p); }}}

const std::map<std::string, Key>& keys() {
  static const std::map<std::string, Key> table = {
      COUNTEX_SIZE("grid_rows", scene.grid_rows),
      COUNTEX_SIZE("grid_cols", scene.grid_cols),
      COUNTEX_SIZE("base_dim", scene.base_dim),
      COUNTEX_SIZE("attribute_dim", scene.attribute_dim),
      COUNTEX_REAL("feature_noise", scene.feature_noise),
      COUNTEX_SIZE("count_min", scene.count_min),
      COUNTEX_SIZE("count_max", scene.count_max),
      COUNTEX_SIZE("distractor_min", scene.distractor_min),
      COUNTEX_SIZE("distractor_max", scene.distractor_max),
      COUNTEX_REAL("attribute_separation", scene.attribute_separation),
      COUNTEX_REAL("attribute_drift", scene.attribute_drift),
      COUNTEX_SIZE("base_categories", scene.base_categories),
      COUNTEX_SIZE("attributes", scene.attributes),
      COUNTEX_U64("world_seed", scene.world_seed),
      COUNTEX_REAL("density_sigma", scene.density_sigma),
      COUNTEX_SIZE("queries", model.encoder.queries),
      COUNTEX_SIZE("model_dim", model.encoder.dim),
      COUNTEX_SIZE("encoder_heads", model.encoder.heads),
      COUNTEX_SIZE("position_frequencies", model.encoder.position_frequencies),
      COUNTEX_SIZE("prototypes", model.dqr.prototypes),
      COUNTEX_SIZE("exclusive", model.dqr.exclusive),
      COUNTEX_SIZE("dqr_heads", model.dqr.heads),
      COUNTEX_REAL("dropout", model.dqr.dropout),
      COUNTEX_REAL("gate_init", model.dqr.gate_init),
      COUNTEX_BOOL("prototype_residual", model.dqr.prototype_residual),
      {"projection",
       {[](const RunConfig& c) {
          return json(c.model.dqr.projection == dqr::ProjectionMode::orthonormal ? "orthonormal" : "literal");
        },
        [](RunConfig& c, const json& v, const std::string& p) {
          const auto s = as_string(v, p);
          if (s == "orthonormal") {
            c.model.dqr.projection = dqr::ProjectionMode::orthonormal;
          } else if (s == "literal") {
            c.model.dqr.projection = dqr::ProjectionMode::literal;
          } else {
            throw SchemaError(p, "expected \"orthonormal\" or \"literal\"");
          }
        }}},
      COUNTEX_REAL("lambda_cls", model.weights.cls),
      COUNTEX_REAL("lambda_share", model.weights.share),
      COUNTEX_REAL("lambda_div", model.weights.div),
      COUNTEX_REAL("lambda_den", model.weights.den),
      COUNTEX_U64("exemplar_seed", model.exemplar_seed),
      COUNTEX_SIZE("steps", train.steps),
      COUNTEX_SIZE("batch", train.batch),
      COUNTEX_REAL("learning_rate", train.learning_rate),
      COUNTEX_REAL("beta1", train.beta1),
      COUNTEX_REAL("beta2", train.beta2),
      COUNTEX_REAL("adam_eps", train.adam_eps),
      {"train_masks",
       {[](const RunConfig& c) {
          json arr = json::array();
          for (const auto& m : c.train.masks) arr.push_back(m.name());
          return arr;
        },
        [](RunConfig& c, const json& v, const std::string& p) {
          if (!v.is_array()) throw SchemaError(p, "expected an array of modality masks");
          std::vector<model::ModalityMask> masks;
          for (std::size_t i = 0; i < v.size(); ++i) masks.push_back(as_mask(v[i], fmt::format("{}/{}", p, i)));
          c.train.masks = std::move(masks);
        }}},
      COUNTEX_U64("seed", seed),
      COUNTEX_SIZE("threads", threads),
      COUNTEX_SIZE("scene_count", scene_count),
      COUNTEX_REAL("split_train", split_train),
      COUNTEX_REAL("split_val", split_val),
      COUNTEX_REAL("split_test", split_test),
      COUNTEX_MASK("eval_mask", eval_mask),
      COUNTEX_MASK("swap_mask", swap_mask),
  };
  return table;
}

#undef COUNTEX_SIZE
#undef COUNTEX_U64
#undef COUNTEX_REAL
#undef COUNTEX_BOOL
#undef COUNTEX_MASK

std::string json_text(const json& v) {
  if (v.is_number_float()) return number(v.get<double>());
  if (v.is_array()) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + json_text(v[i]);
    return out + "]";
  }
  return v.dump();
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : keys()) out.push_back(k);
  return out;
}

void apply_json(RunConfig& config, const std::string& text, SourceMap* sources, Source source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("/", fmt::format("invalid JSON: {}", e.what()));
  }
  if (!doc.is_object()) throw SchemaError("/", "expected a flat object of key/value pairs");
  const auto& table = keys();
  for (const auto& [k, v] : doc.items()) {
    auto it = table.find(k);
    if (it == table.end()) throw ConfigError(fmt::format("unknown config key '{}'", k));
    it->second.set(config, v, "/" + k);
    if (sources) (*sources)[k] = source;
  }
}

RunConfig load_config(const fs::path& path, SourceMap* sources) {
  RunConfig config;
  apply_json(config, read_text(path), sources, Source::file);
  return config;
}

std::string config_to_json(const RunConfig& config) {
  std::string out = "{\n";
  const auto rows = describe(config);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out += fmt::format("  \"{}\": {}{}\n", rows[i].first, rows[i].second, i + 1 < rows.size() ? "," : "");
  }
  return out + "}\n";
}

std::vector<std::pair<std::string, std::string>> describe(const RunConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [k, key] : keys()) out.emplace_back(k, json_text(key.get(config)));
  return out;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot open {} for writing", tmp.string()));
    out << text;
    out.flush();
    if (!out) throw IoError(fmt::format("failed writing {}", tmp.string()));
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError(fmt::format("cannot move {} into place: {}", path.string(), ec.message()));
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string model_to_json(const ModelFile& model) {
  std::string out = fmt::format("{{\n  \"tau\": {},\n  \"params\": {{", number(model.tau));
  bool first = true;
  for (const auto& [name, m] : model.params.all()) {
    out += fmt::format("{}\n    \"{}\": {{\"rows\": {}, \"cols\": {}, \"data\": [", first ? "" : ",", name, m.rows(),
                       m.cols());
    for (std::size_t i = 0; i < m.size(); ++i) out += (i ? ", " : "") + number(m[i]);
    out += "]}";
    first = false;
  }
  return out + "\n  }\n}\n";
}

ModelFile model_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("/", fmt::format("invalid JSON: {}", e.what()));
  }
  if (!doc.is_object()) throw SchemaError("/", "expected an object");
  if (!doc.contains("tau")) throw SchemaError("/tau", "missing");
  if (!doc.contains("params") || !doc["params"].is_object()) throw SchemaError("/params", "expected an object");
  ModelFile out;
  out.tau = as_real(doc["tau"], "/tau");
  for (const auto& [name, entry] : doc["params"].items()) {
    const std::string ptr = "/params/" + name;
    if (!entry.is_object()) throw SchemaError(ptr, "expected an object");
    for (const char* k : {"rows", "cols", "data"}) {
      if (!entry.contains(k)) throw SchemaError(ptr + "/" + k, "missing");
    }
    const std::size_t rows = as_size(entry["rows"], ptr + "/rows");
    const std::size_t cols = as_size(entry["cols"], ptr + "/cols");
    const json& data = entry["data"];
    if (!data.is_array() || data.size() != rows * cols) {
      throw SchemaError(ptr + "/data", fmt::format("expected {} numbers", rows * cols));
    }
    std::vector<double> values(data.size());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = as_real(data[i], fmt::format("{}/data/{}", ptr, i));
    out.params.add(name, Matrix(rows, cols, std::move(values)));
  }
  return out;
}

std::string report_csv(const std::vector<eval::EvalReport>& reports, const std::vector<std::string>& metrics) {
  std::string out = "metric,value,modality_mask,tau,seed\n";
  for (const auto& r : reports) {
    for (const auto& m : metrics) {
      double v = 0.0;
      if (m == "MAE") {
        v = r.mae;
      } else if (m == "RMSE") {
        v = r.rmse;
      } else if (m == "NAE") {
        v = r.nae;
      } else {
        throw ContractError(fmt::format("report_csv: unknown metric {}", m));
      }
      out += fmt::format("{},{},{},{},{}\n", m, number(v), r.mask, number(r.tau), r.seed);
    }
  }
  return out;
}

namespace {

std::vector<std::vector<std::string>> parse_csv(const std::string& text, const std::string& header) {
  std::stringstream ss(text);
  std::string line;
  if (!std::getline(ss, line) || line != header) throw SchemaError("/0", fmt::format("expected header '{}'", header));
  std::vector<std::vector<std::string>> rows;
  std::size_t n = 1;
  while (std::getline(ss, line)) {
    ++n;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) throw SchemaError(fmt::format("/{}", n - 1), "expected 5 fields");
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

std::vector<eval::EvalReport> reports_from_csv(const std::string& text) {
  std::vector<eval::EvalReport> out;
  for (const auto& row : parse_csv(text, "metric,value,modality_mask,tau,seed")) {
    const double tau = std::stod(row[3]);
    const std::uint64_t seed = std::stoull(row[4]);
    if (out.empty() || out.back().mask != row[2] || out.back().tau != tau || out.back().seed != seed) {
      eval::EvalReport r;
      r.mask = row[2];
      r.tau = tau;
      r.seed = seed;
      out.push_back(r);
    }
    const double v = std::stod(row[1]);
    if (row[0] == "MAE") {
      out.back().mae = v;
    } else if (row[0] == "RMSE") {
      out.back().rmse = v;
    } else if (row[0] == "NAE") {
      out.back().nae = v;
    } else {
      throw SchemaError("/metric", fmt::format("unknown metric {}", row[0]));
    }
  }
  return out;
}

std::string scene_records_csv(const std::vector<eval::SceneRecord>& records) {
  std::string out = "scene_id,gt,pred\n";
  for (const auto& r : records) out += fmt::format("{},{},{}\n", r.scene_id, number(r.gt), number(r.pred));
  return out;
}

std::string loss_curve_csv(const std::vector<train::LossRow>& curve) {
  std::string out = "step,L_cls,L_loc,L_den,L_share,L_div,total\n";
  for (const auto& r : curve) {
    out += fmt::format("{},{},{},{},{},{},{}\n", r.step, number(r.cls), number(r.loc), number(r.den), number(r.share),
                       number(r.div), number(r.total));
  }
  return out;
}

std::string predictions_csv(const std::vector<PredictionRow>& rows) {
  std::string out = "scene_id,query_index,row,col,score\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{}\n", r.scene_id, r.query_index, number(r.row), number(r.col), number(r.score));
  }
  return out;
}

std::string swap_records_csv(const std::vector<eval::SwapRecord>& records) {
  std::string out = "scene_id,gt_a,gt_b,pred_a,pred_b,on_target\n";
  for (const auto& r : records) {
    out += fmt::format("{},{},{},{},{},{}\n", r.scene_id, number(r.gt_a), number(r.gt_b), number(r.pred_a),
                       number(r.pred_b), r.targets_prompt() ? 1 : 0);
  }
  return out;
}

namespace {

constexpr double kWidth = 640, kHeight = 400, kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// "--" may not appear inside an XML comment.
std::string comment_safe(std::string s) {
  for (std::size_t p = s.find("--"); p != std::string::npos; p = s.find("--")) s.replace(p, 2, "- -");
  return s;
}

std::string svg_open(const std::string& title) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{3}</text>\n",
      kWidth, kHeight, kWidth / 2, escape(title));
}

std::string axes(const std::string& x_label, const std::string& y_label, double y_lo, double y_hi) {
  const double x0 = kLeft, y0 = kHeight - kBottom, x1 = kWidth - kRight, y1 = kTop;
  std::string out = fmt::format(
      "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n"
      "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{3}\" stroke=\"black\"/>\n",
      x0, y0, x1, y1);
  for (int k = 0; k <= 4; ++k) {
    const double v = y_lo + (y_hi - y_lo) * k / 4.0;
    const double y = y0 - (y0 - y1) * k / 4.0;
    out += fmt::format(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{:.4g}</text>\n",
        x0 - 6, y + 4, v);
  }
  out += fmt::format(
      "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
      (x0 + x1) / 2, kHeight - 15, escape(x_label));
  out += fmt::format(
      "<text x=\"16\" y=\"{0}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" "
      "transform=\"rotate(-90 16 {0})\">{1}</text>\n",
      (y0 + y1) / 2, escape(y_label));
  return out;
}

std::pair<double, double> padded_range(double lo, double hi) {
  if (!(hi > lo)) return {lo - 1.0, hi + 1.0};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

}  // namespace

std::string line_plot_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<Series>& series) {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  std::string data = "<!-- data\n";
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ShapeError("line_plot_svg: x and y differ in length");
    data += comment_safe(fmt::format("series,{}\n", s.name));
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      data += fmt::format("{},{}\n", number(s.x[i]), number(s.y[i]));
      xlo = std::min(xlo, s.x[i]);
      xhi = std::max(xhi, s.x[i]);
      ylo = std::min(ylo, s.y[i]);
      yhi = std::max(yhi, s.y[i]);
    }
  }
  data += "-->\n";
  if (!std::isfinite(xlo)) xlo = xhi = ylo = yhi = 0.0;
  if (!(xhi > xlo)) xhi = xlo + 1.0;
  std::tie(ylo, yhi) = padded_range(ylo, yhi);

  std::string out = svg_open(title) + data + axes(x_label, y_label, ylo, yhi);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double px = kLeft + pw * (s.x[i] - xlo) / (xhi - xlo);
      const double py = kHeight - kBottom - ph * (s.y[i] - ylo) / (yhi - ylo);
      pts += fmt::format("{}{:.2f},{:.2f}", i ? " " : "", px, py);
    }
    out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", color, pts);
    out += fmt::format(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{}\">{}</text>\n",
        kWidth - kRight - 150, kTop + 14 * (k + 1), color, escape(s.name));
  }
  return out + "</svg>\n";
}

std::string bar_plot_svg(const std::string& title, const std::string& y_label,
                         const std::vector<std::pair<std::string, double>>& bars) {
  std::string data = "<!-- data\nlabel,value\n";
  double hi = 0.0;
  for (const auto& [label, v] : bars) {
    data += comment_safe(fmt::format("{},{}\n", label, number(v)));
    hi = std::max(hi, v);
  }
  data += "-->\n";
  if (!(hi > 0.0)) hi = 1.0;
  hi *= 1.1;
  std::string out = svg_open(title) + data + axes("", y_label, 0.0, hi);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const double slot = bars.empty() ? pw : pw / static_cast<double>(bars.size());
  for (std::size_t k = 0; k < bars.size(); ++k) {
    const double h = ph * std::max(0.0, bars[k].second) / hi;
    const double x = kLeft + slot * static_cast<double>(k) + slot * 0.15;
    out += fmt::format("<rect class=\"bar\" x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\"/>\n", x,
                       kHeight - kBottom - h, slot * 0.7, h, kPalette[k % std::size(kPalette)]);
    out += fmt::format(
        "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
        x + slot * 0.35, kHeight - kBottom + 14, escape(bars[k].first));
    out += fmt::format(
        "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{:.4g}</text>\n",
        x + slot * 0.35, kHeight - kBottom - h - 4, bars[k].second);
  }
  return out + "</svg>\n";
}

std::string sha256_file(const fs::path& path) {
  const std::string bytes = read_text(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError(fmt::format("SHA-256 failed for {}", path.string()));
  }
  std::string out;
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", digest[i]);
  return out;
}

RunManifest write_manifest(const fs::path& out_dir, const std::string& command, const std::string& config_path,
                           std::uint64_t seed, const std::vector<std::string>& files) {
  RunManifest m;
  m.command = command;
  m.config_path = config_path;
  m.out_dir = out_dir.string();
  m.seed = seed;
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  std::ostringstream ts;
  ts << std::put_time(&utc, "%Y-%m-%dT%H:%M:%SZ");
  m.timestamp = ts.str();
  for (const auto& f : files) m.artifacts.emplace_back(f, sha256_file(out_dir / f));

  json doc;
  doc["command"] = m.command;
  doc["config_path"] = m.config_path;
  doc["out_dir"] = m.out_dir;
  doc["seed"] = m.seed;
  doc["timestamp"] = m.timestamp;
  json arts = json::array();
  for (const auto& [f, sum] : m.artifacts) arts.push_back({{"path", f}, {"sha256", sum}});
  doc["artifacts"] = arts;
  write_text_atomic(out_dir / "manifest.json", doc.dump(2) + "\n");
  return m;
}

}  // namespace countex::io
