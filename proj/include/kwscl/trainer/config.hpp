#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "kwscl/autodiff/sgd.hpp"
#include "kwscl/dsp/mfcc.hpp"
#include "kwscl/strategies/strategy.hpp"
#include "kwscl/taskstream/taskstream.hpp"

namespace kwscl::train {

/// Flat dotted-key view of a configuration.
using ConfigMap = std::map<std::string, std::string>;

/// Accepts either `key = value` lines (`#` comments, optional `[section]`
/// headers that prefix later keys) or a JSON object, whose nesting becomes
/// dotted keys. Errors name the source and line.
ConfigMap parse_config_text(const std::string& text, const std::string& source = "<config>");
ConfigMap parse_config_file(const std::filesystem::path& path);
ConfigMap flatten_json(const nlohmann::json& j, const std::string& source = "<config>");

/// Default output root: $KWSCL_OUTPUT_ROOT, else "./runs".
std::filesystem::path default_output_root();
inline constexpr const char* kOutputRootEnv = "KWSCL_OUTPUT_ROOT";

struct RunConfig {
  std::uint64_t seed = 0;

  data::SourceKind source = data::SourceKind::kSynthetic;
  std::filesystem::path corpus_dir;
  data::SynthConfig synth;
  data::StreamConfig stream;
  dsp::FrontendConfig frontend;

  cl::StrategyConfig strategy;
  ad::SgdConfig sgd;
  std::size_t pretrain_epochs = 30;
  std::size_t task_epochs = 15;
  std::size_t eval_batch = 64;

  std::string label;  // defaults to strategy.label()
  std::filesystem::path output_dir;  // empty: <output root>/<label>-seed<seed>
  bool save_checkpoints = true;

  void validate() const;
  /// Canonical flat form; from_map(to_map()) reproduces the config.
  ConfigMap to_map() const;
  static RunConfig from_map(const ConfigMap& map, const std::string& source = "<config>");
  std::string hash() const;
  std::string display_label() const;
  std::filesystem::path resolved_output_dir() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

/// Keys describing the task stream; every run of a comparison must agree on them.
bool is_stream_key(const std::string& key);

struct Manifest {
  std::filesystem::path output_dir;
  std::vector<RunConfig> runs;
};

/// JSON: {"output_dir", "seeds": [..], "base": {..}, "runs": [{"label", ..overrides}]}.
/// Flat: `output_dir`, `seeds = 0,1,2`, `base.<key>`, `runs.<label>.<key>`.
/// Each run is repeated once per seed.
Manifest parse_manifest_text(const std::string& text, const std::string& source = "<manifest>");
Manifest load_manifest(const std::filesystem::path& path);

}  // namespace kwscl::train
