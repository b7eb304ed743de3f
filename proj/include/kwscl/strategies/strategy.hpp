#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "kwscl/autodiff/parameters.hpp"
#include "kwscl/models/tcresnet.hpp"
#include "kwscl/taskstream/workload.hpp"

namespace kwscl::cl {

struct StrategyConfig {
  std::string name = "finetune";  // finetune | standalone | ewc | si | nr | gem | pcl
  double ewc_lambda = 100.0;
  double si_lambda = 1.0;
  double si_epsilon = 0.1;
  double nr_xi = 0.5;
  std::size_t gem_buffer = 128;  // total samples, split evenly over the tasks that get replayed
  double pcl_mu = 1.0;
  bool pcl_fixed = false;          // disable keyword-aware scaling
  bool pcl_freeze_shared = false;  // ablation: shared encoder frozen after pretraining
  double pcl_shared_lr_scale = 0.1;  // step-size factor for the shared encoder on new tasks
  bool pcl_shared_bn_update = false;  // new tasks update the encoder's running statistics

  void validate() const;
  /// Display name, e.g. "gem-128" or "nr(xi=0.75)".
  std::string label() const;
};

const std::vector<std::string>& strategy_names();

struct StrategyContext {
  const data::Workload* workload = nullptr;
  models::TcResNet8Spec model;  // n_classes is set per strategy
  std::size_t pretrain_keywords = 15;
  std::size_t n_tasks = 5;
  std::uint64_t seed = 0;
};

/// Task-local logits [N, C_task] for a batch of inputs, evaluated in eval mode.
using EvalModel = std::function<ad::Tensor(const ad::Tensor&)>;

/// Lifecycle seam between the trainer and every CL method. Per batch the
/// trainer runs: batch_loss -> backward -> loss_penalty -> post_batch ->
/// optimizer step -> after_step. Hooks a method does not need are identity.
class Strategy {
 public:
  virtual ~Strategy() = default;

  virtual std::string name() const = 0;

  virtual void before_task(int /*task*/) {}
  virtual std::vector<data::Example> augment_data(int /*task*/, const std::vector<data::Example>& incoming) {
    return incoming;
  }
  /// Parameters the optimizer updates while learning the current task.
  virtual ad::ParameterVector trainable() = 0;
  /// Task loss L_kws on one batch.
  virtual ad::Tensor batch_loss(std::span<const data::Example> batch, ad::Mode mode) = 0;
  /// Adds the regularizer's gradient to the current gradients and returns its value.
  virtual double loss_penalty() { return 0.0; }
  virtual void post_batch() {}
  virtual void after_step() {}
  virtual void after_task(int /*task*/) {}

  virtual EvalModel select_eval_model(int task) = 0;
  /// Everything needed to answer for `task`; used for per-task checkpoints.
  virtual ad::ParameterVector task_parameters(int task) const = 0;

  /// Extra parameters the method keeps beyond the base model.
  virtual std::size_t extra_params() const { return 0; }
  virtual std::size_t buffer_bytes() const { return 0; }
  virtual nlohmann::json diagnostics() const { return nlohmann::json::object(); }
};

std::unique_ptr<Strategy> make_strategy(const StrategyConfig& cfg, const StrategyContext& ctx);

/// Top-1 accuracy on the task's test split; ties go to the lowest class index.
double evaluate(const EvalModel& model, const data::Workload& workload, const data::TaskData& task,
                std::size_t batch_size = 64);

/// Argmax per row with lowest-index tie-break.
std::vector<int> argmax_rows(const ad::Tensor& logits);

}  // namespace kwscl::cl
