#include "kwscl/strategies/primitives.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "kwscl/common.hpp"

namespace kwscl::cl {

ImportanceMap ewc_fisher(ad::ParameterVector& params, std::size_t n_samples,
                         const std::function<ad::Tensor(std::size_t)>& sample_loss) {
  if (n_samples == 0) throw Error("ewc_fisher: empty data");
  ImportanceMap fisher(params.trainable_count(), 0.0);
  for (std::size_t i = 0; i < n_samples; ++i) {
    params.zero_grads();
    ad::backward(sample_loss(i));
    const auto g = params.flatten_grads();
    for (std::size_t j = 0; j < g.size(); ++j) fisher[j] += g[j] * g[j];
  }
  for (auto& f : fisher) f /= static_cast<double>(n_samples);
  params.zero_grads();
  return fisher;
}

double QuadraticAnchor::penalty(std::span<const double> theta) const {
  if (!active()) return 0.0;
  if (theta.size() != anchor.size()) {
    throw ShapeError("penalty: parameter length " + std::to_string(theta.size()) + " does not match anchor length " +
                     std::to_string(anchor.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double d = theta[i] - anchor[i];
    acc += omega[i] * d * d;
  }
  return 0.5 * lambda * acc;
}

void QuadraticAnchor::add_gradient(std::span<const double> theta, std::span<double> grad) const {
  if (!active()) return;
  if (theta.size() != anchor.size() || grad.size() != anchor.size()) {
    throw ShapeError("penalty: gradient length does not match anchor");
  }
  for (std::size_t i = 0; i < theta.size(); ++i) grad[i] += lambda * omega[i] * (theta[i] - anchor[i]);
}

void EwcState::consolidate(std::span<const double> theta, const ImportanceMap& fisher) {
  if (fisher.size() != theta.size()) throw ShapeError("ewc: importance map does not match parameters");
  if (quad.omega.empty()) quad.omega.assign(theta.size(), 0.0);
  if (quad.omega.size() != theta.size()) throw ShapeError("ewc: parameter layout changed between tasks");
  for (std::size_t i = 0; i < theta.size(); ++i) quad.omega[i] += fisher[i];
  quad.anchor.assign(theta.begin(), theta.end());
}

SiState::SiState(double lambda, double epsilon) : epsilon_(epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("si.epsilon must be > 0");
  if (!(lambda >= 0.0)) throw ConfigError("si.lambda must be >= 0");
  quad_.lambda = lambda;
}

void SiState::begin(std::span<const double> theta) {
  start_.assign(theta.begin(), theta.end());
  path_.assign(theta.size(), 0.0);
  touched_ = false;
}

void SiState::accumulate(std::span<const double> grad, std::span<const double> delta) {
  if (grad.size() != path_.size() || delta.size() != path_.size()) {
    throw ShapeError("si: accumulate called with mismatched lengths (did begin() run?)");
  }
  for (std::size_t i = 0; i < path_.size(); ++i) path_[i] += -grad[i] * delta[i];
  touched_ = true;
}

bool SiState::consolidate(std::span<const double> theta) {
  if (theta.size() != start_.size()) throw ShapeError("si: consolidate with mismatched parameter length");
  if (!touched_) {
    warn("si: consolidate before any accumulate; importance unchanged");
    return false;
  }
  if (quad_.omega.empty()) quad_.omega.assign(theta.size(), 0.0);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double d = theta[i] - start_[i];
    quad_.omega[i] += path_[i] / (d * d + epsilon_);
  }
  quad_.anchor.assign(theta.begin(), theta.end());
  begin(theta);
  return true;
}

std::size_t nr_keep_count(std::size_t size, double xi) {
  if (!(xi > 0.0 && xi <= 1.0)) throw ConfigError("nr.xi must be in (0, 1], got " + std::to_string(xi));
  // ceil with a small guard so 0.75 * 100 stays 75 despite representation error.
  return std::min(size, static_cast<std::size_t>(std::ceil(xi * static_cast<double>(size) - 1e-9)));
}

std::vector<data::Example> nr_select(const std::vector<data::Example>& task_data, std::size_t task_index, double xi,
                                     std::uint64_t seed) {
  const std::size_t keep = nr_keep_count(task_data.size(), xi);
  std::vector<data::Example> pool = task_data;
  Rng rng(derive_seed(seed, "nr-select:" + std::to_string(task_index)));
  rng.shuffle(pool);
  pool.resize(keep);
  return pool;
}

std::vector<data::Example> nr_mix(const std::vector<std::vector<data::Example>>& history,
                                  const std::vector<data::Example>& incoming, double xi, std::uint64_t seed) {
  if (!(xi > 0.0 && xi <= 1.0)) throw ConfigError("nr.xi must be in (0, 1], got " + std::to_string(xi));
  std::vector<data::Example> out;
  for (std::size_t k = 0; k < history.size(); ++k) {
    auto picked = nr_select(history[k], k, xi, seed);
    out.insert(out.end(), picked.begin(), picked.end());
  }
  out.insert(out.end(), incoming.begin(), incoming.end());
  Rng rng(derive_seed(seed, "nr-mix:" + std::to_string(history.size())));
  rng.shuffle(out);
  return out;
}

GemResult gem_project(std::span<const double> g, const std::vector<std::vector<double>>& refs, double tol,
                      std::size_t max_iter) {
  GemResult result;
  result.gradient.assign(g.begin(), g.end());
  const std::size_t m = refs.size();
  if (m == 0) return result;
  for (const auto& r : refs) {
    if (r.size() != g.size()) throw ShapeError("gem_project: reference gradient length mismatch");
  }
  for (double v : g) {
    if (!std::isfinite(v)) throw NumericError("gem_project: non-finite gradient");
  }

  auto dot = [](std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
  };
  Eigen::VectorXd p(static_cast<Eigen::Index>(m));
  bool feasible = true;
  for (std::size_t k = 0; k < m; ++k) {
    p[static_cast<Eigen::Index>(k)] = dot(refs[k], g);
    if (p[static_cast<Eigen::Index>(k)] < 0.0) feasible = false;
  }
  if (feasible) return result;

  Eigen::MatrixXd q(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i; j < m; ++j) {
      const double v = dot(refs[i], refs[j]);
      q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      q(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }

  const Eigen::Index n = static_cast<Eigen::Index>(m);
  const double scale = std::max(1.0, p.cwiseAbs().maxCoeff());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(m, false);

  auto solve_passive = [&](Eigen::VectorXd& z) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < n; ++i)
      if (passive[static_cast<std::size_t>(i)]) idx.push_back(i);
    const auto k = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd qp(k, k);
    Eigen::VectorXd rhs(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      rhs[a] = -p[idx[static_cast<std::size_t>(a)]];
      for (Eigen::Index b = 0; b < k; ++b) qp(a, b) = q(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
    }
    const Eigen::VectorXd sol = qp.completeOrthogonalDecomposition().solve(rhs);
    z = Eigen::VectorXd::Zero(n);
    for (Eigen::Index a = 0; a < k; ++a) z[idx[static_cast<std::size_t>(a)]] = sol[a];
  };

  bool converged = false;
  std::size_t iter = 0;
  while (iter < max_iter) {
    ++iter;
    const Eigen::VectorXd w = -(q * v + p);
    Eigen::Index best = -1;
    double best_w = tol * scale;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!passive[static_cast<std::size_t>(i)] && w[i] > best_w) {
        best_w = w[i];
        best = i;
      }
    }
    if (best < 0) {
      converged = true;
      break;
    }
    passive[static_cast<std::size_t>(best)] = true;

    for (std::size_t inner = 0; inner < 4 * m + 4; ++inner) {
      Eigen::VectorXd z;
      solve_passive(z);
      bool positive = true;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (passive[static_cast<std::size_t>(i)] && z[i] <= 0.0) positive = false;
      }
      if (positive) {
        v = z;
        break;
      }
      double alpha = 1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (passive[static_cast<std::size_t>(i)] && z[i] <= 0.0) alpha = std::min(alpha, v[i] / (v[i] - z[i]));
      }
      v += alpha * (z - v);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (passive[static_cast<std::size_t>(i)] && v[i] <= 1e-15 * scale) {
          passive[static_cast<std::size_t>(i)] = false;
          v[i] = 0.0;
        }
      }
    }
  }

  const Eigen::VectorXd grad = q * v + p;
  double residual = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    residual = std::max(residual, std::max(0.0, -grad[i]));
    residual = std::max(residual, std::abs(v[i] * grad[i]));
    residual = std::max(residual, std::max(0.0, -v[i]));
  }
  result.iterations = iter;
  result.kkt_residual = residual;
  if (!converged || residual > tol * scale) {
    result.converged = false;
    return result;  // caller keeps g_t and records the fallback
  }
  result.projected = true;
  for (std::size_t k = 0; k < m; ++k) {
    const double vk = v[static_cast<Eigen::Index>(k)];
    if (vk == 0.0) continue;
    for (std::size_t i = 0; i < g.size(); ++i) result.gradient[i] += vk * refs[k][i];
  }
  return result;
}

}  // namespace kwscl::cl
