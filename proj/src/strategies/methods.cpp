#include "kwscl/strategies/methods.hpp"

#include <algorithm>

#include "kwscl/common.hpp"

namespace kwscl::cl {

namespace {

// Columns [begin, end) of eval-mode logits; no graph is recorded.
ad::Tensor take_columns(const ad::Tensor& logits, int begin, int end) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  const auto width = static_cast<std::size_t>(end - begin);
  std::vector<double> out(n * width);
  const auto z = logits.data();
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t c = 0; c < width; ++c) out[s * width + c] = z[s * k + static_cast<std::size_t>(begin) + c];
  return ad::Tensor({n, width}, std::move(out));
}

std::vector<int> local_labels(const data::Workload& w, std::span<const data::Example> batch) {
  std::vector<int> out;
  out.reserve(batch.size());
  for (const auto& e : batch) out.push_back(e.label - w.tasks.at(static_cast<std::size_t>(e.task)).class_begin);
  return out;
}

const data::TaskData& task_data(const data::Workload& w, int task) {
  if (task < 0 || static_cast<std::size_t>(task) >= w.tasks.size()) {
    throw Error("unknown task id " + std::to_string(task));
  }
  return w.tasks[static_cast<std::size_t>(task)];
}

}  // namespace

// ---------------------------------------------------------------------------
// Single shared model

SingleModelStrategy::SingleModelStrategy(const StrategyContext& ctx) : ctx_(ctx), workload_(*ctx.workload) {
  auto spec = ctx_.model;
  spec.n_classes = workload_.total_classes;
  model_ = std::make_unique<models::TcResNet8>(spec, derive_seed(ctx_.seed, "model-init"));
  params_ = model_->parameters();
}

ad::Tensor SingleModelStrategy::batch_loss(std::span<const data::Example> batch, ad::Mode mode) {
  const auto labels = workload_.labels(batch);
  const auto ranges = workload_.ranges(batch);
  return ad::softmax_cross_entropy(model_->forward(workload_.batch(batch), mode), labels, ranges);
}

EvalModel SingleModelStrategy::select_eval_model(int task) {
  const auto range = task_data(workload_, task).range();
  return [this, range](const ad::Tensor& x) {
    return take_columns(model_->forward(x, ad::Mode::eval()), range.begin, range.end);
  };
}

ImportanceMap SingleModelStrategy::fisher(const std::vector<data::Example>& data) {
  return ewc_fisher(params_, data.size(), [&](std::size_t i) {
    return batch_loss(std::span<const data::Example>(&data[i], 1), ad::Mode::eval());
  });
}

// ---------------------------------------------------------------------------
// EWC

Ewc::Ewc(const StrategyContext& ctx, double lambda) : SingleModelStrategy(ctx) {
  if (!(lambda >= 0.0)) throw ConfigError("ewc.lambda must be >= 0");
  state_.quad.lambda = lambda;
}

double Ewc::loss_penalty() {
  if (!state_.quad.active()) return 0.0;
  const auto theta = params_.flatten();
  auto grad = params_.flatten_grads();
  state_.quad.add_gradient(theta, grad);
  params_.set_grads(grad);
  return state_.quad.penalty(theta);
}

void Ewc::after_task(int task) {
  const auto fim = fisher(task_data(workload_, task).train);
  state_.consolidate(params_.flatten(), fim);
}

std::size_t Ewc::extra_params() const { return 2 * params_.trainable_count(); }

// ---------------------------------------------------------------------------
// SI

Si::Si(const StrategyContext& ctx, double lambda, double epsilon)
    : SingleModelStrategy(ctx), state_(lambda, epsilon) {}

void Si::before_task(int task) {
  SingleModelStrategy::before_task(task);
  if (task == 0) state_.begin(params_.flatten());
}

double Si::loss_penalty() {
  step_grad_ = params_.flatten_grads();
  step_start_ = params_.flatten();
  if (!state_.quad().active()) return 0.0;
  auto grad = step_grad_;
  state_.quad().add_gradient(step_start_, grad);
  params_.set_grads(grad);
  return state_.quad().penalty(step_start_);
}

void Si::after_step() {
  const auto now = params_.flatten();
  std::vector<double> delta(now.size());
  for (std::size_t i = 0; i < now.size(); ++i) delta[i] = now[i] - step_start_[i];
  state_.accumulate(step_grad_, delta);
}

void Si::after_task(int /*task*/) { state_.consolidate(params_.flatten()); }

std::size_t Si::extra_params() const { return 2 * params_.trainable_count(); }

// ---------------------------------------------------------------------------
// Naive rehearsal

Rehearsal::Rehearsal(const StrategyContext& ctx, double xi) : SingleModelStrategy(ctx), xi_(xi) {
  nr_keep_count(1, xi);  // validates xi
}

void Rehearsal::before_task(int task) {
  SingleModelStrategy::before_task(task);
  if (task >= 1) history_.push_back(task_data(workload_, task - 1).train);
}

std::vector<data::Example> Rehearsal::augment_data(int task, const std::vector<data::Example>& incoming) {
  if (task == 0) return incoming;
  return nr_mix(history_, incoming, xi_, ctx_.seed);
}

std::size_t Rehearsal::stored_samples() const {
  std::size_t n = 0;
  for (const auto& h : history_) n += nr_keep_count(h.size(), xi_);
  return n;
}

std::size_t Rehearsal::buffer_bytes() const { return stored_samples() * workload_.bytes_per_sample(); }

// ---------------------------------------------------------------------------
// GEM

Gem::Gem(const StrategyContext& ctx, std::size_t buffer) : SingleModelStrategy(ctx) {
  if (buffer == 0) throw ConfigError("gem.buffer must be >= 1");
  const std::size_t replayed_tasks = std::max<std::size_t>(1, ctx.n_tasks);
  quota_ = buffer / replayed_tasks;
  if (quota_ == 0) throw ConfigError("gem.buffer too small: fewer than one sample per task");
}

void Gem::before_task(int task) {
  SingleModelStrategy::before_task(task);
  if (task < 1) return;
  auto pool = task_data(workload_, task - 1).train;
  Rng rng(derive_seed(ctx_.seed, "gem-memory:" + std::to_string(task - 1)));
  rng.shuffle(pool);
  pool.resize(std::min(pool.size(), quota_));
  memories_.push_back(std::move(pool));
}

void Gem::post_batch() {
  ++steps_;
  if (memories_.empty()) return;
  const auto g = params_.flatten_grads();
  std::vector<std::vector<double>> refs;
  refs.reserve(memories_.size());
  for (const auto& mem : memories_) {
    params_.zero_grads();
    // Reference losses use the running statistics, as evaluation does, and leave them untouched.
    ad::backward(batch_loss(mem, ad::Mode::eval()));
    refs.push_back(params_.flatten_grads());
  }
  const auto res = gem_project(g, refs);
  if (!res.converged) {
    ++fallbacks_;
    warn("gem: projection did not converge; using the raw gradient");
  }
  if (res.projected) ++projections_;
  params_.set_grads(res.gradient);
}

std::size_t Gem::buffer_bytes() const {
  std::size_t n = 0;
  for (const auto& m : memories_) n += m.size();
  return n * workload_.bytes_per_sample();
}

nlohmann::json Gem::diagnostics() const {
  return {{"quota_per_task", quota_}, {"steps", steps_}, {"projections", projections_}, {"fallbacks", fallbacks_}};
}

// ---------------------------------------------------------------------------
// Stand-alone

StandAlone::StandAlone(const StrategyContext& ctx) : ctx_(ctx), workload_(*ctx.workload) {
  auto spec = ctx_.model;
  spec.n_classes = static_cast<std::size_t>(workload_.tasks.at(0).class_count);
  models_.push_back(std::make_unique<models::TcResNet8>(spec, derive_seed(ctx_.seed, "model-init")));
}

void StandAlone::before_task(int task) {
  current_ = task;
  if (task == 0) return;
  if (static_cast<std::size_t>(task) != models_.size()) throw Error("standalone: tasks must arrive in order");
  const auto classes = static_cast<std::size_t>(task_data(workload_, task).class_count);
  models_.push_back(models_[0]->with_new_head(classes, derive_seed(ctx_.seed, "standalone-head:" + std::to_string(task))));
}

ad::Tensor StandAlone::batch_loss(std::span<const data::Example> batch, ad::Mode mode) {
  auto& net = *models_.at(static_cast<std::size_t>(current_));
  return ad::softmax_cross_entropy(net.forward(workload_.batch(batch), mode), local_labels(workload_, batch));
}

EvalModel StandAlone::select_eval_model(int task) {
  if (task < 0 || static_cast<std::size_t>(task) >= models_.size()) {
    throw Error("standalone: no model for task " + std::to_string(task));
  }
  auto* net = models_[static_cast<std::size_t>(task)].get();
  return [net](const ad::Tensor& x) { return net->forward(x, ad::Mode::eval()); };
}

ad::ParameterVector StandAlone::task_parameters(int task) const {
  return models_.at(static_cast<std::size_t>(task))->parameters();
}

std::size_t StandAlone::extra_params() const {
  std::size_t n = 0;
  for (std::size_t t = 1; t < models_.size(); ++t) n += models::count_parameters(*models_[t]);
  return n;
}

// ---------------------------------------------------------------------------
// PCL

Pcl::Pcl(const StrategyContext& ctx, const PclOptions& opts) : ctx_(ctx), workload_(*ctx.workload), opts_(opts) {
  if (!(opts.shared_lr_scale >= 0.0)) throw ConfigError("pcl.shared_lr_scale must be >= 0");
  scaling_.mu = opts.mu;
  scaling_.pretrain_keywords = static_cast<std::size_t>(workload_.tasks.at(0).class_count);
  scaling_.validate();
  auto spec = ctx_.model;
  spec.n_classes = scaling_.pretrain_keywords;
  base_ = std::make_unique<models::TcResNet8>(spec, derive_seed(ctx_.seed, "model-init"));
}

void Pcl::before_task(int task) {
  current_ = task;
  if (task == 0) return;
  if (subnets_.count(task)) throw Error("pcl: task " + std::to_string(task) + " already has a sub-network");
  const auto keywords = static_cast<std::size_t>(task_data(workload_, task).class_count);
  subnets_.emplace(task, models::instantiate_subnet(keywords, scaling_, opts_.fixed, base_->encoder_channels(),
                                                    base_->encoder_length(),
                                                    derive_seed(ctx_.seed, "pcl-subnet:" + std::to_string(task))));
  frozen_[task] = false;
}

ad::ParameterVector Pcl::trainable() {
  if (current_ == 0) return base_->parameters();
  ad::ParameterVector p;
  if (!opts_.freeze_shared) p.append(base_->encoder_parameters(), "shared.");
  p.append(subnets_.at(current_).net->parameters(), "subnet" + std::to_string(current_) + ".");
  return p;
}

ad::Tensor Pcl::encode(const ad::Tensor& x, ad::Mode mode) {
  if (opts_.freeze_shared) return base_->encode(x, ad::Mode::eval()).detach();
  // Without stat updates the encoder normalizes with its stored statistics.
  if (!opts_.shared_bn_update && current_ >= 1) mode = ad::Mode::eval();
  return base_->encode(x, mode);
}

void Pcl::post_batch() {
  if (current_ == 0 || opts_.freeze_shared || opts_.shared_lr_scale == 1.0) return;
  for (auto& seg : base_->encoder_parameters().segments()) {
    if (!seg.trainable) continue;
    for (auto& g : seg.tensor.grad()) g *= opts_.shared_lr_scale;
  }
}

ad::Tensor Pcl::batch_loss(std::span<const data::Example> batch, ad::Mode mode) {
  const auto labels = local_labels(workload_, batch);
  const auto x = workload_.batch(batch);
  if (current_ == 0) return ad::softmax_cross_entropy(base_->forward(x, mode), labels);
  auto& sub = *subnets_.at(current_).net;
  return ad::softmax_cross_entropy(sub.forward(encode(x, mode), mode), labels);
}

void Pcl::after_task(int task) {
  if (task >= 1) frozen_.at(task) = true;
}

EvalModel Pcl::select_eval_model(int task) {
  if (task == 0) {
    return [this](const ad::Tensor& x) { return base_->forward(x, ad::Mode::eval()); };
  }
  auto it = subnets_.find(task);
  if (it == subnets_.end()) throw Error("pcl: no sub-network for task " + std::to_string(task));
  models::SubNet* sub = it->second.net.get();
  return [this, sub](const ad::Tensor& x) {
    return sub->forward(base_->encode(x, ad::Mode::eval()), ad::Mode::eval());
  };
}

ad::ParameterVector Pcl::task_parameters(int task) const {
  if (task == 0) return base_->parameters();
  return subnet(task).parameters();
}

bool Pcl::is_frozen(int task) const {
  auto it = frozen_.find(task);
  return it != frozen_.end() && it->second;
}

const models::SubNet& Pcl::subnet(int task) const {
  auto it = subnets_.find(task);
  if (it == subnets_.end()) throw Error("pcl: no sub-network for task " + std::to_string(task));
  return *it->second.net;
}

std::size_t Pcl::extra_params() const {
  std::size_t n = 0;
  for (const auto& [task, sub] : subnets_) n += models::count_parameters(*sub.net);
  return n;
}

nlohmann::json Pcl::diagnostics() const {
  nlohmann::json subs = nlohmann::json::array();
  for (const auto& [task, sub] : subnets_) {
    subs.push_back({{"task", task},
                    {"alpha", sub.spec.alpha},
                    {"channels", sub.net->channels()},
                    {"params", models::count_parameters(*sub.net)},
                    {"frozen", is_frozen(task)}});
  }
  return {{"subnets", subs},
          {"shared_params", base_->encoder_parameters().trainable_count()},
          {"shared_frozen", opts_.freeze_shared},
          {"shared_lr_scale", opts_.shared_lr_scale},
          {"shared_bn_update", opts_.shared_bn_update},
          {"fixed_width", opts_.fixed}};
}

}  // namespace kwscl::cl
