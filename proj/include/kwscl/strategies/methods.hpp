#pragma once

#include <map>
#include <memory>
#include <vector>

#include "kwscl/models/subnet.hpp"
#include "kwscl/strategies/primitives.hpp"
#include "kwscl/strategies/strategy.hpp"

namespace kwscl::cl {

/// One TC-ResNet-8 whose head spans every keyword of the stream. Each sample
/// is scored against its own task's columns only (task-incremental setting).
class SingleModelStrategy : public Strategy {
 public:
  explicit SingleModelStrategy(const StrategyContext& ctx);

  void before_task(int task) override { current_ = task; }
  ad::ParameterVector trainable() override { return params_; }
  ad::Tensor batch_loss(std::span<const data::Example> batch, ad::Mode mode) override;
  EvalModel select_eval_model(int task) override;
  ad::ParameterVector task_parameters(int /*task*/) const override { return model_->parameters(); }

  models::TcResNet8& model() { return *model_; }

 protected:
  /// Per-sample gradient second moments on `data`, eval-mode batch norm.
  ImportanceMap fisher(const std::vector<data::Example>& data);

  StrategyContext ctx_;
  const data::Workload& workload_;
  std::unique_ptr<models::TcResNet8> model_;
  ad::ParameterVector params_;
  int current_ = 0;
};

class FineTune final : public SingleModelStrategy {
 public:
  using SingleModelStrategy::SingleModelStrategy;
  std::string name() const override { return "finetune"; }
};

class Ewc final : public SingleModelStrategy {
 public:
  Ewc(const StrategyContext& ctx, double lambda);
  std::string name() const override { return "ewc"; }
  double loss_penalty() override;
  void after_task(int task) override;
  std::size_t extra_params() const override;
  const EwcState& state() const { return state_; }

 private:
  EwcState state_;
};

class Si final : public SingleModelStrategy {
 public:
  Si(const StrategyContext& ctx, double lambda, double epsilon);
  std::string name() const override { return "si"; }
  void before_task(int task) override;
  double loss_penalty() override;
  void after_step() override;
  void after_task(int task) override;
  std::size_t extra_params() const override;
  const SiState& state() const { return state_; }

 private:
  SiState state_;
  std::vector<double> step_grad_;
  std::vector<double> step_start_;
};

class Rehearsal final : public SingleModelStrategy {
 public:
  Rehearsal(const StrategyContext& ctx, double xi);
  std::string name() const override { return "nr"; }
  void before_task(int task) override;
  std::vector<data::Example> augment_data(int task, const std::vector<data::Example>& incoming) override;
  std::size_t buffer_bytes() const override;
  std::size_t stored_samples() const;

 private:
  double xi_;
  std::vector<std::vector<data::Example>> history_;
};

class Gem final : public SingleModelStrategy {
 public:
  Gem(const StrategyContext& ctx, std::size_t buffer);
  std::string name() const override { return "gem"; }
  void before_task(int task) override;
  void post_batch() override;
  std::size_t buffer_bytes() const override;
  nlohmann::json diagnostics() const override;
  std::size_t quota() const { return quota_; }
  const std::vector<std::vector<data::Example>>& memories() const { return memories_; }

 private:
  std::size_t quota_;
  std::vector<std::vector<data::Example>> memories_;
  std::size_t projections_ = 0;
  std::size_t fallbacks_ = 0;
  std::size_t steps_ = 0;
};

/// Independent TC-ResNet-8 per task, each fine-tuned from the pretrained
/// weights with its own head; earlier models are never touched again.
class StandAlone final : public Strategy {
 public:
  explicit StandAlone(const StrategyContext& ctx);
  std::string name() const override { return "standalone"; }
  void before_task(int task) override;
  ad::ParameterVector trainable() override { return models_.at(static_cast<std::size_t>(current_))->parameters(); }
  ad::Tensor batch_loss(std::span<const data::Example> batch, ad::Mode mode) override;
  EvalModel select_eval_model(int task) override;
  ad::ParameterVector task_parameters(int task) const override;
  std::size_t extra_params() const override;

 private:
  StrategyContext ctx_;
  const data::Workload& workload_;
  std::vector<std::unique_ptr<models::TcResNet8>> models_;
  int current_ = 0;
};

struct PclOptions {
  double mu = 1.0;
  bool fixed = false;
  bool freeze_shared = false;
  double shared_lr_scale = 0.1;
  bool shared_bn_update = false;
};

/// Progressive continual learning: the pretrained TC-ResNet-8 answers task 0
/// and its encoder (first conv + first block) is the shared memory; every
/// later task gets a new width-scaled sub-network that is frozen once its
/// task ends.
class Pcl final : public Strategy {
 public:
  Pcl(const StrategyContext& ctx, const PclOptions& opts);
  std::string name() const override { return "pcl"; }
  void before_task(int task) override;
  ad::ParameterVector trainable() override;
  ad::Tensor batch_loss(std::span<const data::Example> batch, ad::Mode mode) override;
  void post_batch() override;
  void after_task(int task) override;
  EvalModel select_eval_model(int task) override;
  ad::ParameterVector task_parameters(int task) const override;
  std::size_t extra_params() const override;
  nlohmann::json diagnostics() const override;

  std::size_t subnet_count() const { return subnets_.size(); }
  bool is_frozen(int task) const;
  const models::SubNet& subnet(int task) const;
  ad::ParameterVector shared_parameters() const { return base_->encoder_parameters(); }

 private:
  ad::Tensor encode(const ad::Tensor& x, ad::Mode mode);

  StrategyContext ctx_;
  const data::Workload& workload_;
  models::ScalingConfig scaling_;
  PclOptions opts_;
  std::unique_ptr<models::TcResNet8> base_;
  std::map<int, models::InstantiatedSubNet> subnets_;
  std::map<int, bool> frozen_;
  int current_ = 0;
};

}  // namespace kwscl::cl
