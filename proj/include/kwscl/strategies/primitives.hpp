#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "kwscl/autodiff/parameters.hpp"
#include "kwscl/taskstream/workload.hpp"

namespace kwscl::cl {

/// Per-parameter importance aligned with the trainable segments.
using ImportanceMap = std::vector<double>;

/// Diagonal Fisher: mean over samples of the squared per-sample gradient of
/// the trainable parameters. `sample_loss(i)` must build the loss of sample i.
ImportanceMap ewc_fisher(ad::ParameterVector& params, std::size_t n_samples,
                         const std::function<ad::Tensor(std::size_t)>& sample_loss);

/// Quadratic anchor penalty (lambda/2) * sum_i omega_i (theta_i - anchor_i)^2,
/// shared by EWC and SI. Inactive (zero) until the first consolidation.
struct QuadraticAnchor {
  std::vector<double> anchor;
  ImportanceMap omega;
  double lambda = 0.0;

  bool active() const { return !anchor.empty(); }
  double penalty(std::span<const double> theta) const;
  /// grad += lambda * omega * (theta - anchor)
  void add_gradient(std::span<const double> theta, std::span<double> grad) const;
};

/// EWC: importance maps from successive tasks are summed and the anchor moves
/// to the end-of-task parameters (single-anchor online form).
struct EwcState {
  QuadraticAnchor quad;

  void consolidate(std::span<const double> theta, const ImportanceMap& fisher);
};

/// SI path-integral importance. accumulate() runs once per optimizer step with
/// the task-loss gradient and the applied parameter change; consolidate() at
/// task end adds omega / ((theta - theta_prev)^2 + eps) to the importance.
class SiState {
 public:
  SiState(double lambda, double epsilon);

  /// Anchors the start-of-path parameters (before the first task).
  void begin(std::span<const double> theta);
  void accumulate(std::span<const double> grad, std::span<const double> delta);
  /// Returns false (importance unchanged) when nothing was accumulated.
  bool consolidate(std::span<const double> theta);

  const QuadraticAnchor& quad() const { return quad_; }
  const std::vector<double>& path() const { return path_; }
  double epsilon() const { return epsilon_; }

 private:
  QuadraticAnchor quad_;
  std::vector<double> path_;  // omega accumulator
  std::vector<double> start_;
  double epsilon_;
  bool touched_ = false;
};

/// Rehearsal mixing: for each previous task k include ceil(xi * |D_k|) of its
/// examples, chosen uniformly without replacement from a per-task seed (so
/// the same subset is reused at every later task), then shuffle the union.
std::vector<data::Example> nr_mix(const std::vector<std::vector<data::Example>>& history,
                                  const std::vector<data::Example>& incoming, double xi, std::uint64_t seed);

/// Number of history examples nr_mix keeps from a task of `size` examples.
std::size_t nr_keep_count(std::size_t size, double xi);

std::vector<data::Example> nr_select(const std::vector<data::Example>& task_data, std::size_t task_index, double xi,
                                     std::uint64_t seed);

struct GemResult {
  std::vector<double> gradient;
  bool projected = false;
  bool converged = true;
  std::size_t iterations = 0;
  double kkt_residual = 0.0;
};

/// Nearest gradient with <g~, g_k> >= 0 for every reference row, through the
/// dual  min_v 1/2 v'(G G')v + (G g)'v,  v >= 0,  g~ = G'v + g,  solved with
/// an active-set (Lawson-Hanson) iteration. Feasible inputs come back untouched.
GemResult gem_project(std::span<const double> g, const std::vector<std::vector<double>>& refs, double tol = 1e-8,
                      std::size_t max_iter = 500);

}  // namespace kwscl::cl
