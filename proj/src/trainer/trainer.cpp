#include "kwscl/trainer/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include "kwscl/autodiff/checkpoint.hpp"
#include "kwscl/common.hpp"

namespace kwscl::train {

data::TaskStream make_stream(const RunConfig& cfg) {
  if (cfg.source == data::SourceKind::kCorpus) return data::split_gsc(cfg.corpus_dir, cfg.seed, cfg.stream);
  return data::synth_stream(cfg.synth, cfg.seed, cfg.stream);
}

std::string stream_hash(const data::TaskStream& stream) { return hex64(fnv1a64(data::stream_to_json(stream).dump())); }

namespace {

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::string workload_key(const RunConfig& cfg) {
  const auto map = cfg.to_map();
  std::string key;
  for (const auto& [k, v] : map)
    if (is_stream_key(k)) key += k + "=" + v + ";";
  return key;
}

std::shared_ptr<const data::Workload> build_workload(const RunConfig& cfg) {
  return std::make_shared<const data::Workload>(data::materialize(make_stream(cfg), cfg.frontend));
}

std::string describe_stream(const data::TaskStream& stream) {
  std::string out;
  for (const auto& t : stream.tasks) {
    out += "task " + std::to_string(t.id) + ":";
    for (const auto& k : t.keywords) out += " " + k;
    out += " (" + std::to_string(t.train.size()) + " train, " + std::to_string(t.test.size()) + " test)\n";
  }
  return out;
}

}  // namespace

std::shared_ptr<const data::Workload> WorkloadCache::get(const RunConfig& cfg) {
  const auto key = workload_key(cfg);
  {
    std::lock_guard lock(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  auto built = build_workload(cfg);
  std::lock_guard lock(mu_);
  return cache_.emplace(key, std::move(built)).first->second;
}

metrics::RunReport run(const RunConfig& cfg, const RunHooks& hooks, WorkloadCache* cache, bool write_outputs) {
  cfg.validate();
  auto log = [&](const std::string& msg) {
    if (hooks.log) hooks.log(msg);
  };
  const auto stream = make_stream(cfg);
  const auto workload = cache ? cache->get(cfg) : std::make_shared<const data::Workload>(data::materialize(stream, cfg.frontend));
  const auto out_dir = cfg.resolved_output_dir();
  if (write_outputs) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
    std::ofstream(out_dir / "stream.json") << data::stream_to_json(stream).dump(2) << "\n";
  }
  log("stream:\n" + describe_stream(stream));

  cl::StrategyContext ctx;
  ctx.workload = workload.get();
  ctx.model.input_channels = workload->n_mfcc;
  ctx.model.input_length = workload->n_frames;
  ctx.pretrain_keywords = cfg.stream.pretrain_keywords;
  ctx.n_tasks = cfg.stream.n_tasks;
  ctx.seed = cfg.seed;
  auto strategy = cl::make_strategy(cfg.strategy, ctx);

  metrics::RunReport report;
  report.strategy = cfg.strategy.name;
  report.label = cfg.display_label();
  report.seed = cfg.seed;
  report.stream_hash = stream_hash(stream);
  report.config_hash = cfg.hash();
  report.config = cfg.to_map();
  const std::size_t n_tasks = workload->tasks.size();
  report.matrix = metrics::AccuracyMatrix(n_tasks);

  for (std::size_t t = 0; t < n_tasks; ++t) {
    const int task = static_cast<int>(t);
    strategy->before_task(task);
    const auto data = strategy->augment_data(task, workload->tasks[t].train);
    if (data.empty()) throw Error("task " + std::to_string(t) + " has no training data");
    auto params = strategy->trainable();
    ad::Sgd opt(cfg.sgd);
    const std::size_t epochs = t == 0 ? cfg.pretrain_epochs : cfg.task_epochs;
    std::vector<double> losses, seconds;

    for (std::size_t e = 0; e < epochs; ++e) {
      const auto start = std::chrono::steady_clock::now();
      auto order = data;
      Rng rng(derive_seed(cfg.seed, "epoch:" + std::to_string(t) + ":" + std::to_string(e)));
      rng.shuffle(order);
      double total = 0.0;
      for (std::size_t b = 0; b < order.size(); b += cfg.sgd.batch_size) {
        const std::size_t len = std::min(cfg.sgd.batch_size, order.size() - b);
        const std::span<const data::Example> batch(order.data() + b, len);
        try {
          params.zero_grads();
          const auto loss = strategy->batch_loss(batch, ad::Mode::train());
          const double kws = loss.item();
          ad::backward(loss);
          const double penalty = strategy->loss_penalty();
          if (!std::isfinite(kws + penalty)) throw NumericError("non-finite loss");
          strategy->post_batch();
          // ReLU maps NaN to zero, so a finite loss does not rule out NaN weights or gradients.
          if (!all_finite(params.flatten_grads())) throw NumericError("non-finite gradient");
          opt.step(params);
          if (!all_finite(params.flatten(false))) throw NumericError("non-finite parameter after update");
          strategy->after_step();
          total += (kws + penalty) * static_cast<double>(len);
        } catch (const NumericError& err) {
          std::string where = "task " + std::to_string(t) + ", epoch " + std::to_string(e) + ", batch " +
                              std::to_string(b / cfg.sgd.batch_size);
          if (write_outputs) {
            const auto path = out_dir / ("diagnostic_task" + std::to_string(t) + ".ckpt");
            ad::write_checkpoint(path, params);
            where += "; parameters saved to " + path.string();
          }
          throw NumericError("training diverged at " + where + ": " + err.what());
        }
      }
      losses.push_back(total / static_cast<double>(order.size()));
      seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
    strategy->after_task(task);

    for (std::size_t k = 0; k <= t; ++k) {
      const auto model = strategy->select_eval_model(static_cast<int>(k));
      report.matrix.set(t, k, cl::evaluate(model, *workload, workload->tasks[k], cfg.eval_batch));
    }
    report.train_loss.push_back(std::move(losses));
    report.epoch_seconds.push_back(std::move(seconds));
    report.extra_params_curve.push_back(strategy->extra_params());

    if (write_outputs && cfg.save_checkpoints) {
      const auto dir = out_dir / "checkpoints" / ("after_task" + std::to_string(t));
      std::filesystem::create_directories(dir);
      for (std::size_t k = 0; k <= t; ++k) {
        ad::write_checkpoint(dir / ("task" + std::to_string(k) + ".ckpt"), strategy->task_parameters(static_cast<int>(k)));
      }
    }
    std::string row = "after task " + std::to_string(t) + ":";
    for (std::size_t k = 0; k <= t; ++k) row += " " + metrics::format_double(std::round(report.matrix.at(t, k) * 1000) / 1000);
    row += "  (loss " + metrics::format_double(std::round(report.train_loss.back().back() * 1e4) / 1e4) + ")";
    log(row);
    if (hooks.after_task) hooks.after_task(task, *strategy);
  }

  report.extra_params = strategy->extra_params();
  report.buffer_bytes = strategy->buffer_bytes();
  report.diagnostics = strategy->diagnostics();
  report.finalize();
  if (write_outputs) metrics::emit_report(report, out_dir);
  return report;
}

std::vector<metrics::RunReport> sweep(const Manifest& manifest, std::size_t jobs, const Logger& log) {
  if (manifest.runs.empty()) throw ConfigError("manifest lists no runs");
  jobs = std::clamp<std::size_t>(jobs, 1, manifest.runs.size());
  std::vector<metrics::RunReport> reports(manifest.runs.size());
  std::vector<std::string> failures(manifest.runs.size());
  WorkloadCache cache;
  std::atomic<std::size_t> next{0};
  std::mutex log_mu;

  auto worker = [&] {
    for (std::size_t i = next++; i < manifest.runs.size(); i = next++) {
      const auto& cfg = manifest.runs[i];
      const std::string tag = "[" + cfg.display_label() + " seed " + std::to_string(cfg.seed) + "] ";
      RunHooks hooks;
      if (log) {
        hooks.log = [&, tag](const std::string& msg) {
          std::lock_guard lock(log_mu);
          log(tag + msg);
        };
      }
      try {
        reports[i] = run(cfg, hooks, &cache);
      } catch (const std::exception& e) {
        failures[i] = e.what();
        if (log) {
          std::lock_guard lock(log_mu);
          log(tag + "failed: " + e.what());
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  std::string failed;
  for (std::size_t i = 0; i < failures.size(); ++i) {
    if (!failures[i].empty()) failed += "\n  " + manifest.runs[i].display_label() + ": " + failures[i];
  }
  if (!failed.empty()) throw Error("sweep: some runs failed:" + failed);

  metrics::attach_acc_plus(reports);
  for (std::size_t i = 0; i < reports.size(); ++i) metrics::emit_report(reports[i], manifest.runs[i].resolved_output_dir());
  const auto rows = metrics::compare(reports);
  std::filesystem::create_directories(manifest.output_dir);
  std::ofstream(manifest.output_dir / "comparison.csv") << metrics::comparison_csv(rows);
  std::ofstream(manifest.output_dir / "comparison.json") << metrics::comparison_json(rows).dump(2) << "\n";
  std::ofstream(manifest.output_dir / "comparison.txt") << metrics::comparison_table(rows);
  return reports;
}

std::vector<metrics::RunReport> collect_reports(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "report.json") paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<metrics::RunReport> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(metrics::load_report(p));
  return out;
}

}  // namespace kwscl::train
