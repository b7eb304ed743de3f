// Command-line harness: run, sweep, report, synth, describe.
#include <cstdlib>
#include <iostream>
#include <mutex>

#include "CLI11.hpp"
#include "kwscl/common.hpp"
#include "kwscl/metrics/metrics.hpp"
#include "kwscl/models/describe.hpp"
#include "kwscl/models/subnet.hpp"
#include "kwscl/models/tcresnet.hpp"
#include "kwscl/taskstream/taskstream.hpp"
#include "kwscl/trainer/trainer.hpp"

namespace {

using namespace kwscl;

void print_log(const std::string& msg) {
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::cerr << msg << '\n';
}

int cmd_run(const std::string& config_path, const std::string& out, bool quiet) {
  auto cfg = train::load_run_config(config_path);
  if (!out.empty()) cfg.output_dir = out;
  train::RunHooks hooks;
  if (!quiet) hooks.log = print_log;
  const auto report = train::run(cfg, hooks);
  std::cout << metrics::comparison_table(metrics::compare({report}));
  std::cout << "report written to " << cfg.resolved_output_dir().string() << '\n';
  return 0;
}

int cmd_sweep(const std::string& manifest_path, std::size_t jobs, const std::string& out, bool quiet) {
  auto manifest = train::load_manifest(manifest_path);
  if (!out.empty()) {
    const std::filesystem::path root(out);
    for (auto& cfg : manifest.runs) cfg.output_dir = root / cfg.output_dir.filename();
    manifest.output_dir = root;
  }
  const auto reports = train::sweep(manifest, jobs, quiet ? train::Logger{} : train::Logger(print_log));
  std::cout << metrics::comparison_table(metrics::compare(reports));
  std::cout << "comparison written to " << manifest.output_dir.string() << '\n';
  return 0;
}

int cmd_report(const std::string& dir, const std::string& format) {
  auto reports = train::collect_reports(dir);
  if (reports.empty()) throw IoError("no report.json found under '" + dir + "'");
  metrics::attach_acc_plus(reports);
  const auto rows = metrics::compare(reports);
  if (format == "csv") {
    std::cout << metrics::comparison_csv(rows);
  } else if (format == "json") {
    std::cout << metrics::comparison_json(rows).dump(2) << '\n';
  } else {
    std::cout << metrics::comparison_table(rows);
  }
  return 0;
}

int cmd_synth(const std::string& out, std::size_t keywords, std::size_t clips, std::uint64_t seed) {
  data::SynthConfig synth;
  synth.n_keywords = keywords;
  synth.clips_per_keyword = clips;
  data::write_synth_corpus(out, synth, seed);
  std::cout << "wrote " << keywords * clips << " clips for " << keywords << " keywords to " << out << '\n';
  return 0;
}

int cmd_describe(const std::string& model, std::size_t classes, double alpha, bool json) {
  std::unique_ptr<models::Network> net;
  if (model == "tcresnet8") {
    models::TcResNet8Spec spec;
    spec.n_classes = classes;
    net = std::make_unique<models::TcResNet8>(spec, 0);
  } else {
    models::SubNetSpec spec;
    spec.n_classes = classes;
    spec.alpha = alpha > 0.0 ? alpha : models::width_multiplier(classes, models::ScalingConfig{});
    net = std::make_unique<models::SubNet>(spec, 0);
  }
  if (json) {
    std::cout << models::describe_json(*net).dump(2) << '\n';
  } else {
    std::cout << models::describe_table(*net);
  }
  return 0;
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const IoError*>(&e)) return 3;
  if (dynamic_cast<const WavError*>(&e)) return 4;
  if (dynamic_cast<const NumericError*>(&e)) return 5;
  if (dynamic_cast<const ShapeError*>(&e)) return 6;
  return 1;
}

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config error";
  if (dynamic_cast<const IoError*>(&e)) return "io error";
  if (dynamic_cast<const WavError*>(&e)) return "wav error";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric error";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape error";
  return "error";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual-learning lab for keyword spotting"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");

  std::string config_path, run_out;
  auto* run = app.add_subcommand("run", "Train one configuration end to end");
  run->add_option("--config", config_path, "Run configuration (key = value or JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", run_out, "Output directory (overrides output.dir)");

  std::string manifest_path, sweep_out;
  std::size_t jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "Run every entry of a manifest and compare them");
  sweep->add_option("--manifest", manifest_path, "Experiment manifest")->required()->check(CLI::ExistingFile);
  sweep->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);
  sweep->add_option("--out", sweep_out, "Output directory (overrides output_dir)");

  std::string report_dir, format = "table";
  auto* report = app.add_subcommand("report", "Render a comparison from stored reports");
  report->add_option("--dir", report_dir, "Directory searched for report.json files")->required();
  report->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "json", "table"}));

  std::string synth_out;
  std::size_t synth_keywords = data::SynthConfig{}.n_keywords, synth_clips = data::SynthConfig{}.clips_per_keyword;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "Write the synthetic corpus as WAV files");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--keywords", synth_keywords, "Number of keywords")->check(CLI::PositiveNumber);
  synth->add_option("--clips", synth_clips, "Clips per keyword")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Seed");

  std::string model = "tcresnet8";
  std::size_t classes = 15;
  double alpha = 0.0;
  bool as_json = false;
  auto* describe = app.add_subcommand("describe", "Print the layer table of a model");
  describe->add_option("--model", model, "Model")->check(CLI::IsMember({"tcresnet8", "subnet"}));
  describe->add_option("--classes", classes, "Output classes")->check(CLI::PositiveNumber);
  describe->add_option("--alpha", alpha, "Width multiplier for the sub-network (default C/15)")->check(CLI::PositiveNumber);
  describe->add_flag("--json", as_json, "JSON output");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config_path, run_out, quiet);
    if (*sweep) return cmd_sweep(manifest_path, jobs, sweep_out, quiet);
    if (*report) return cmd_report(report_dir, format);
    if (*synth) return cmd_synth(synth_out, synth_keywords, synth_clips, synth_seed);
    if (*describe) return cmd_describe(model, classes, alpha, as_json);
  } catch (const std::exception& e) {
    std::cerr << error_kind(e) << ": " << e.what() << '\n';
    return exit_code(e);
  }
  return 0;
}
