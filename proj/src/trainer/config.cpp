#include "kwscl/trainer/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "kwscl/common.hpp"
#include "kwscl/metrics/metrics.hpp"

namespace kwscl::train {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void flatten_into(const nlohmann::json& j, const std::string& prefix, ConfigMap& out, const std::string& source) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten_into(v, prefix.empty() ? k : prefix + "." + k, out, source);
    return;
  }
  if (prefix.empty()) throw ConfigError(source + ": expected a JSON object at top level");
  if (j.is_string()) {
    out[prefix] = j.get<std::string>();
  } else if (j.is_boolean()) {
    out[prefix] = j.get<bool>() ? "true" : "false";
  } else if (j.is_number_integer() || j.is_number_unsigned()) {
    out[prefix] = j.dump();
  } else if (j.is_number_float()) {
    out[prefix] = metrics::format_double(j.get<double>());
  } else if (j.is_array()) {
    std::string joined;
    for (const auto& e : j) {
      if (e.is_structured()) throw ConfigError(source + ": field '" + prefix + "' must be a flat list");
      if (!joined.empty()) joined += ",";
      joined += e.is_string() ? e.get<std::string>() : e.dump();
    }
    out[prefix] = joined;
  } else if (j.is_null()) {
    throw ConfigError(source + ": field '" + prefix + "' is null");
  }
}

double to_double(const std::string& source, const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw ConfigError(source + ": field '" + key + "' expects a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& source, const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long out = 0;
  const bool negative = !v.empty() && v[0] == '-';
  try {
    if (!negative) out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (negative || pos == 0 || pos != v.size()) {
    throw ConfigError(source + ": field '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& source, const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(source + ": field '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string& source, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["seed"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.seed = to_uint(s, k, v); };
    t["label"] = [](RunConfig& c, auto&, auto&, auto& v) { c.label = v; };
    t["stream.source"] = [](RunConfig& c, auto& s, auto& k, auto& v) {
      if (v == "synthetic") {
        c.source = data::SourceKind::kSynthetic;
      } else if (v == "corpus") {
        c.source = data::SourceKind::kCorpus;
      } else {
        throw ConfigError(s + ": field '" + k + "' must be 'synthetic' or 'corpus', got '" + v + "'");
      }
    };
    t["stream.corpus"] = [](RunConfig& c, auto&, auto&, auto& v) { c.corpus_dir = v; };
    t["stream.synth_keywords"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.synth.n_keywords = to_uint(s, k, v); };
    t["stream.synth_clips"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.synth.clips_per_keyword = to_uint(s, k, v); };
    t["stream.synth_syllables"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.synth.syllables = to_uint(s, k, v); };
    t["stream.synth_variability"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.synth.variability = to_double(s, k, v); };
    t["stream.synth_snr_min_db"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.synth.snr_min_db = to_double(s, k, v); };
    t["stream.synth_snr_max_db"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.synth.snr_max_db = to_double(s, k, v); };
    t["stream.pretrain_keywords"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.stream.pretrain_keywords = to_uint(s, k, v); };
    t["stream.tasks"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.stream.n_tasks = to_uint(s, k, v); };
    t["stream.keywords_per_task"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.stream.keywords_per_task = to_uint(s, k, v); };
    t["stream.train_fraction"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.stream.train_fraction = to_double(s, k, v); };
    t["frontend.n_mfcc"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.frontend.n_mfcc = to_uint(s, k, v); };
    t["frontend.n_mel"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.frontend.n_mel = to_uint(s, k, v); };
    t["frontend.frame_length_ms"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.frontend.frame_length_ms = to_double(s, k, v); };
    t["frontend.frame_shift_ms"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.frontend.frame_shift_ms = to_double(s, k, v); };
    t["strategy.name"] = [](RunConfig& c, auto&, auto&, auto& v) { c.strategy.name = v; };
    t["ewc.lambda"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.strategy.ewc_lambda = to_double(s, k, v); };
    t["si.lambda"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.strategy.si_lambda = to_double(s, k, v); };
    t["si.epsilon"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.strategy.si_epsilon = to_double(s, k, v); };
    t["nr.xi"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.strategy.nr_xi = to_double(s, k, v); };
    t["gem.buffer"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.strategy.gem_buffer = to_uint(s, k, v); };
    t["pcl.mu"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.strategy.pcl_mu = to_double(s, k, v); };
    t["pcl.fixed"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.strategy.pcl_fixed = to_bool(s, k, v); };
    t["pcl.freeze_shared"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.strategy.pcl_freeze_shared = to_bool(s, k, v); };
    t["pcl.shared_lr_scale"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.strategy.pcl_shared_lr_scale = to_double(s, k, v); };
    t["pcl.shared_bn_update"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.strategy.pcl_shared_bn_update = to_bool(s, k, v); };
    t["sgd.lr"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.sgd.learning_rate = to_double(s, k, v); };
    t["sgd.momentum"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.sgd.momentum = to_double(s, k, v); };
    t["sgd.weight_decay"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.sgd.weight_decay = to_double(s, k, v); };
    t["sgd.batch_size"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.sgd.batch_size = to_uint(s, k, v); };
    t["train.pretrain_epochs"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.pretrain_epochs = to_uint(s, k, v); };
    t["train.task_epochs"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.task_epochs = to_uint(s, k, v); };
    t["eval.batch_size"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.eval_batch = to_uint(s, k, v); };
    t["output.dir"] = [](RunConfig& c, auto&, auto&, auto& v) { c.output_dir = v; };
    t["output.checkpoints"] = [](RunConfig& c, auto& s, auto& k, auto& v) { c.save_checkpoints = to_bool(s, k, v); };
    return t;
  }();
  return table;
}

std::string run_dir_name(const RunConfig& cfg) {
  std::string name = cfg.display_label();
  for (auto& ch : name) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')) ch = '_';
  }
  return name + "-seed" + std::to_string(cfg.seed);
}

}  // namespace

ConfigMap flatten_json(const nlohmann::json& j, const std::string& source) {
  ConfigMap out;
  flatten_into(j, "", out, source);
  return out;
}

ConfigMap parse_config_text(const std::string& text, const std::string& source) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(source + ": invalid JSON: " + e.what());
    }
    return flatten_json(j, source);
  }
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    if (body.front() == '[') {
      if (body.back() != ']' || body.size() < 3) throw ConfigError(where + ": malformed section header '" + body + "'");
      section = trim(std::string_view(body).substr(1, body.size() - 2)) + ".";
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value', got '" + body + "'");
    const auto key = trim(std::string_view(body).substr(0, eq));
    auto value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": missing key before '='");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    const auto full = section + key;
    if (out.count(full)) throw ConfigError(where + ": duplicate key '" + full + "'");
    out[full] = value;
  }
  return out;
}

ConfigMap parse_config_file(const std::filesystem::path& path) { return parse_config_text(read_text(path), path.string()); }

std::filesystem::path default_output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  if (env != nullptr && *env != '\0') return env;
  return "runs";
}

void RunConfig::validate() const {
  stream.validate();
  strategy.validate();
  sgd.validate();
  frontend.validate();
  if (source == data::SourceKind::kCorpus && corpus_dir.empty()) throw ConfigError("stream.corpus is required for a corpus source");
  if (source == data::SourceKind::kSynthetic) {
    if (synth.n_keywords < stream.keywords_needed()) {
      throw ConfigError("stream.synth_keywords must be >= " + std::to_string(stream.keywords_needed()) + " for this stream");
    }
    if (synth.clips_per_keyword < 2) throw ConfigError("stream.synth_clips must be >= 2");
    synth.validate();
  }
  if (pretrain_epochs == 0) throw ConfigError("train.pretrain_epochs must be >= 1");
  if (task_epochs == 0) throw ConfigError("train.task_epochs must be >= 1");
  if (eval_batch == 0) throw ConfigError("eval.batch_size must be >= 1");
}

ConfigMap RunConfig::to_map() const {
  using metrics::format_double;
  ConfigMap m;
  m["seed"] = std::to_string(seed);
  m["label"] = display_label();
  m["stream.source"] = source == data::SourceKind::kSynthetic ? "synthetic" : "corpus";
  if (source == data::SourceKind::kCorpus) m["stream.corpus"] = corpus_dir.string();
  m["stream.synth_keywords"] = std::to_string(synth.n_keywords);
  m["stream.synth_clips"] = std::to_string(synth.clips_per_keyword);
  m["stream.synth_syllables"] = std::to_string(synth.syllables);
  m["stream.synth_variability"] = format_double(synth.variability);
  m["stream.synth_snr_min_db"] = format_double(synth.snr_min_db);
  m["stream.synth_snr_max_db"] = format_double(synth.snr_max_db);
  m["stream.pretrain_keywords"] = std::to_string(stream.pretrain_keywords);
  m["stream.tasks"] = std::to_string(stream.n_tasks);
  m["stream.keywords_per_task"] = std::to_string(stream.keywords_per_task);
  m["stream.train_fraction"] = format_double(stream.train_fraction);
  m["frontend.n_mfcc"] = std::to_string(frontend.n_mfcc);
  m["frontend.n_mel"] = std::to_string(frontend.n_mel);
  m["frontend.frame_length_ms"] = format_double(frontend.frame_length_ms);
  m["frontend.frame_shift_ms"] = format_double(frontend.frame_shift_ms);
  m["strategy.name"] = strategy.name;
  m["ewc.lambda"] = format_double(strategy.ewc_lambda);
  m["si.lambda"] = format_double(strategy.si_lambda);
  m["si.epsilon"] = format_double(strategy.si_epsilon);
  m["nr.xi"] = format_double(strategy.nr_xi);
  m["gem.buffer"] = std::to_string(strategy.gem_buffer);
  m["pcl.mu"] = format_double(strategy.pcl_mu);
  m["pcl.fixed"] = strategy.pcl_fixed ? "true" : "false";
  m["pcl.freeze_shared"] = strategy.pcl_freeze_shared ? "true" : "false";
  m["pcl.shared_lr_scale"] = format_double(strategy.pcl_shared_lr_scale);
  m["pcl.shared_bn_update"] = strategy.pcl_shared_bn_update ? "true" : "false";
  m["sgd.lr"] = format_double(sgd.learning_rate);
  m["sgd.momentum"] = format_double(sgd.momentum);
  m["sgd.weight_decay"] = format_double(sgd.weight_decay);
  m["sgd.batch_size"] = std::to_string(sgd.batch_size);
  m["train.pretrain_epochs"] = std::to_string(pretrain_epochs);
  m["train.task_epochs"] = std::to_string(task_epochs);
  m["eval.batch_size"] = std::to_string(eval_batch);
  m["output.checkpoints"] = save_checkpoints ? "true" : "false";
  return m;
}

RunConfig RunConfig::from_map(const ConfigMap& map, const std::string& source) {
  RunConfig cfg;
  const auto& table = setters();
  for (const auto& [key, value] : map) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError(source + ": unknown field '" + key + "'");
    it->second(cfg, source, key, value);
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

std::string RunConfig::hash() const {
  auto m = to_map();
  m.erase("label");
  std::string canon;
  for (const auto& [k, v] : m) canon += k + "=" + v + "\n";
  return hex64(fnv1a64(canon));
}

std::string RunConfig::display_label() const { return label.empty() ? strategy.label() : label; }

std::filesystem::path RunConfig::resolved_output_dir() const {
  if (!output_dir.empty()) return output_dir;
  return default_output_root() / run_dir_name(*this);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return RunConfig::from_map(parse_config_file(path), path.string());
}

bool is_stream_key(const std::string& key) {
  return key == "seed" || key.rfind("stream.", 0) == 0 || key.rfind("frontend.", 0) == 0;
}

Manifest parse_manifest_text(const std::string& text, const std::string& source) {
  ConfigMap base;
  std::vector<std::pair<std::string, ConfigMap>> runs;
  std::vector<std::uint64_t> seeds;
  Manifest manifest;
  std::string seeds_text;

  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(source + ": invalid JSON: " + e.what());
    }
    for (const auto& [k, v] : j.items()) {
      if (k != "output_dir" && k != "seeds" && k != "base" && k != "runs") {
        throw ConfigError(source + ": unknown manifest field '" + k + "'");
      }
    }
    if (j.contains("output_dir")) manifest.output_dir = j["output_dir"].get<std::string>();
    if (j.contains("seeds")) {
      for (const auto& s : j["seeds"]) seeds.push_back(s.get<std::uint64_t>());
    }
    if (j.contains("base")) base = flatten_json(j["base"], source + ": base");
    if (!j.contains("runs") || !j["runs"].is_array()) throw ConfigError(source + ": field 'runs' must be a list");
    for (std::size_t i = 0; i < j["runs"].size(); ++i) {
      auto entry = flatten_json(j["runs"][i], source + ": runs[" + std::to_string(i) + "]");
      std::string name = entry.count("label") ? entry["label"] : "run" + std::to_string(i);
      runs.emplace_back(name, entry);
    }
  } else {
    std::vector<std::string> order;
    std::map<std::string, ConfigMap> by_label;
    for (const auto& [key, value] : parse_config_text(text, source)) {
      if (key == "output_dir") {
        manifest.output_dir = value;
      } else if (key == "seeds") {
        seeds_text = value;
      } else if (key.rfind("base.", 0) == 0) {
        base[key.substr(5)] = value;
      } else if (key.rfind("runs.", 0) == 0) {
        const auto rest = key.substr(5);
        const auto dot = rest.find('.');
        if (dot == std::string::npos || dot == 0) throw ConfigError(source + ": expected 'runs.<label>.<key>', got '" + key + "'");
        const auto name = rest.substr(0, dot);
        if (!by_label.count(name)) order.push_back(name);
        by_label[name][rest.substr(dot + 1)] = value;
      } else {
        throw ConfigError(source + ": unknown manifest field '" + key + "'");
      }
    }
    for (const auto& name : order) {
      auto entry = by_label[name];
      if (!entry.count("label")) entry["label"] = name;
      runs.emplace_back(name, entry);
    }
    for (const auto& s : split_list(seeds_text)) seeds.push_back(to_uint(source, "seeds", s));
  }
  if (runs.empty()) throw ConfigError(source + ": manifest lists no runs");

  for (const auto& [name, entry] : runs) {
    for (const auto& [k, v] : entry) {
      if (is_stream_key(k) && (!base.count(k) || base.at(k) != v)) {
        throw ConfigError(source + ": run '" + name + "' overrides '" + k +
                          "'; all runs in a comparison must share the stream and seed");
      }
    }
  }
  if (seeds.empty()) seeds.push_back(base.count("seed") ? to_uint(source, "base.seed", base.at("seed")) : 0);
  if (manifest.output_dir.empty()) manifest.output_dir = default_output_root() / "sweep";

  for (auto seed : seeds) {
    for (const auto& [name, entry] : runs) {
      ConfigMap merged = base;
      for (const auto& [k, v] : entry) merged[k] = v;
      merged["seed"] = std::to_string(seed);
      merged.erase("output.dir");
      auto cfg = RunConfig::from_map(merged, source + ": run '" + name + "'");
      cfg.output_dir = manifest.output_dir / run_dir_name(cfg);
      manifest.runs.push_back(std::move(cfg));
    }
  }
  return manifest;
}

Manifest load_manifest(const std::filesystem::path& path) { return parse_manifest_text(read_text(path), path.string()); }

}  // namespace kwscl::train
