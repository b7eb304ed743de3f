#include "oracles.hpp"

#include <Eigen/Dense>
#include <limits>

namespace test {

std::vector<double> brute_force_qp(const std::vector<double>& g, const std::vector<std::vector<double>>& refs) {
  const std::size_t m = refs.size(), d = g.size();
  const Eigen::VectorXd gv = Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(d));
  std::vector<double> best = g;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t mask = 0; mask < (std::size_t{1} << m); ++mask) {
    std::vector<std::size_t> act;
    for (std::size_t k = 0; k < m; ++k)
      if (mask & (std::size_t{1} << k)) act.push_back(k);
    Eigen::MatrixXd a(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(act.size()));
    for (std::size_t j = 0; j < act.size(); ++j)
      for (std::size_t i = 0; i < d; ++i) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = refs[act[j]][i];
    Eigen::VectorXd cand = gv;
    if (!act.empty()) cand += a * (a.transpose() * a).ldlt().solve(-(a.transpose() * gv));
    bool feasible = true;
    for (const auto& r : refs) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += cand[static_cast<Eigen::Index>(i)] * r[i];
      feasible = feasible && s >= -1e-10;
    }
    const double dist = (cand - gv).squaredNorm();
    if (feasible && dist < best_dist) {
      best_dist = dist;
      best.assign(cand.data(), cand.data() + d);
    }
  }
  return best;
}

}  // namespace test
