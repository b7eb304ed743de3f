#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <string>

#include "kwscl/metrics/metrics.hpp"
#include "kwscl/strategies/strategy.hpp"
#include "kwscl/trainer/config.hpp"

namespace kwscl::train {

using Logger = std::function<void(const std::string&)>;

data::TaskStream make_stream(const RunConfig& cfg);
std::string stream_hash(const data::TaskStream& stream);

/// Shares materialized workloads between runs over the same stream.
class WorkloadCache {
 public:
  std::shared_ptr<const data::Workload> get(const RunConfig& cfg);

 private:
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<const data::Workload>> cache_;
};

struct RunHooks {
  Logger log;
  /// Called after every task with the live strategy (tests inspect state here).
  std::function<void(int task, cl::Strategy& strategy)> after_task;
};

/// Sequential protocol: pretrain on task 0, then for every task run the
/// strategy hooks, train, and fill row t of the accuracy matrix. Writes
/// checkpoints and the report files unless the output is disabled.
metrics::RunReport run(const RunConfig& cfg, const RunHooks& hooks = {}, WorkloadCache* cache = nullptr,
                       bool write_outputs = true);

/// Runs every manifest entry on `jobs` worker threads, writes per-run
/// reports plus comparison.{csv,json,txt} into the manifest output dir.
std::vector<metrics::RunReport> sweep(const Manifest& manifest, std::size_t jobs, const Logger& log = {});

/// Loads every report.json under `dir` (recursively), sorted by path.
std::vector<metrics::RunReport> collect_reports(const std::filesystem::path& dir);

}  // namespace kwscl::train
