#include "kwscl/strategies/strategy.hpp"

#include <algorithm>
#include <sstream>

#include "kwscl/common.hpp"
#include "kwscl/strategies/methods.hpp"

namespace kwscl::cl {

const std::vector<std::string>& strategy_names() {
  static const std::vector<std::string> names{"finetune", "standalone", "ewc", "si", "nr", "gem", "pcl"};
  return names;
}

void StrategyConfig::validate() const {
  const auto& names = strategy_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    throw ConfigError("unknown strategy '" + name + "'");
  }
  if (!(ewc_lambda >= 0.0)) throw ConfigError("ewc.lambda must be >= 0");
  if (!(si_lambda >= 0.0)) throw ConfigError("si.lambda must be >= 0");
  if (!(si_epsilon > 0.0)) throw ConfigError("si.epsilon must be > 0");
  if (!(nr_xi > 0.0 && nr_xi <= 1.0)) throw ConfigError("nr.xi must be in (0, 1]");
  if (gem_buffer == 0) throw ConfigError("gem.buffer must be >= 1");
  if (!(pcl_mu > 0.0)) throw ConfigError("pcl.mu must be > 0");
  if (!(pcl_shared_lr_scale >= 0.0)) throw ConfigError("pcl.shared_lr_scale must be >= 0");
}

std::string StrategyConfig::label() const {
  std::ostringstream os;
  if (name == "gem") {
    os << "gem-" << gem_buffer;
  } else if (name == "nr") {
    os << "nr(xi=" << nr_xi << ")";
  } else if (name == "pcl") {
    os << "pcl";
    if (pcl_fixed) os << "-fixed";
    if (pcl_mu != 1.0) os << "(mu=" << pcl_mu << ")";
    if (pcl_freeze_shared) os << "-frozen-shared";
  } else {
    os << name;
  }
  return os.str();
}

std::unique_ptr<Strategy> make_strategy(const StrategyConfig& cfg, const StrategyContext& ctx) {
  cfg.validate();
  if (ctx.workload == nullptr) throw Error("make_strategy: no workload");
  if (cfg.name == "finetune") return std::make_unique<FineTune>(ctx);
  if (cfg.name == "standalone") return std::make_unique<StandAlone>(ctx);
  if (cfg.name == "ewc") return std::make_unique<Ewc>(ctx, cfg.ewc_lambda);
  if (cfg.name == "si") return std::make_unique<Si>(ctx, cfg.si_lambda, cfg.si_epsilon);
  if (cfg.name == "nr") return std::make_unique<Rehearsal>(ctx, cfg.nr_xi);
  if (cfg.name == "gem") return std::make_unique<Gem>(ctx, cfg.gem_buffer);
  PclOptions opts;
  opts.mu = cfg.pcl_mu;
  opts.fixed = cfg.pcl_fixed;
  opts.freeze_shared = cfg.pcl_freeze_shared;
  opts.shared_lr_scale = cfg.pcl_shared_lr_scale;
  opts.shared_bn_update = cfg.pcl_shared_bn_update;
  return std::make_unique<Pcl>(ctx, opts);
}

std::vector<int> argmax_rows(const ad::Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("argmax_rows: expected [N, C], got " + ad::shape_string(logits.shape()));
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  const auto z = logits.data();
  std::vector<int> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (z[i * c + j] > z[i * c + best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

double evaluate(const EvalModel& model, const data::Workload& workload, const data::TaskData& task,
                std::size_t batch_size) {
  if (task.test.empty()) throw Error("evaluate: task " + std::to_string(task.task) + " has no test data");
  if (batch_size == 0) batch_size = 64;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < task.test.size(); start += batch_size) {
    const std::size_t len = std::min(batch_size, task.test.size() - start);
    std::span<const data::Example> chunk(task.test.data() + start, len);
    const auto logits = model(workload.batch(chunk));
    if (logits.rank() != 2 || logits.dim(0) != len || logits.dim(1) != static_cast<std::size_t>(task.class_count)) {
      throw ShapeError("evaluate: model returned " + ad::shape_string(logits.shape()) + " for task " +
                       std::to_string(task.task));
    }
    const auto pred = argmax_rows(logits);
    for (std::size_t i = 0; i < len; ++i) {
      if (pred[i] == chunk[i].label - task.class_begin) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(task.test.size());
}

}  // namespace kwscl::cl
