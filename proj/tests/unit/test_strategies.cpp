#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "kwscl/autodiff/checkpoint.hpp"
#include "kwscl/strategies/methods.hpp"
#include "kwscl/strategies/primitives.hpp"
#include "kwscl/trainer/trainer.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace kwscl;
using namespace kwscl::cl;

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<data::Example> examples(std::size_t n, int task) {
  std::vector<data::Example> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {i + 1000 * static_cast<std::size_t>(task), 0, task};
  return out;
}

train::RunConfig tiny_config(const std::string& strategy) {
  train::RunConfig cfg;
  cfg.synth.clips_per_keyword = 5;
  cfg.pretrain_epochs = 2;
  cfg.task_epochs = 2;
  cfg.sgd.batch_size = 8;
  cfg.strategy.name = strategy;
  cfg.save_checkpoints = false;
  return cfg;
}

}  // namespace

TEST_CASE("GEM worked examples") {
  const std::vector<double> g{1.0, 0.0};
  const auto same = gem_project(g, {{0.0, 1.0}});
  CHECK_FALSE(same.projected);
  CHECK(same.gradient == g);

  const auto proj = gem_project(std::vector<double>{1.0, -1.0}, {{0.0, 1.0}});
  CHECK(proj.projected);
  CHECK(proj.gradient[0] == doctest::Approx(1.0));
  CHECK(std::abs(proj.gradient[1]) < 1e-12);

  CHECK(gem_project(g, {}).gradient == g);
  CHECK_THROWS_AS(gem_project(g, {{1.0}}), ShapeError);
  CHECK_THROWS_AS(gem_project(std::vector<double>{NAN, 0.0}, {{0.0, 1.0}}), NumericError);
}

TEST_CASE("GEM projection matches the active-set enumeration oracle") {
  Rng rng(2024);
  int projected = 0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t d = 2 + rng.below(7);
    const std::size_t m = 1 + rng.below(std::min<std::size_t>(4, d));
    std::vector<double> g(d);
    for (auto& v : g) v = rng.normal();
    std::vector<std::vector<double>> refs(m, std::vector<double>(d));
    for (auto& r : refs)
      for (auto& v : r) v = rng.normal();
    const auto res = gem_project(g, refs);
    REQUIRE(res.converged);
    const auto oracle = test::brute_force_qp(g, refs);
    for (std::size_t i = 0; i < d; ++i) CHECK(res.gradient[i] == doctest::Approx(oracle[i]).epsilon(1e-6).scale(1.0));
    for (const auto& r : refs) CHECK(dot(res.gradient, r) >= -1e-9);
    if (res.projected) {
      ++projected;
    } else {
      CHECK(res.gradient == g);
    }
  }
  CHECK(projected > 50);
}

TEST_CASE("NR mixing counts") {
  CHECK(nr_mix({examples(100, 1)}, examples(80, 2), 0.5, 0).size() == 130);
  CHECK(nr_mix({examples(100, 1), examples(60, 2)}, examples(80, 3), 0.75, 0).size() == 200);
  CHECK(nr_keep_count(7, 0.3) == 3);
  CHECK_THROWS_AS(nr_mix({}, examples(3, 0), 0.0, 0), ConfigError);
  CHECK_THROWS_AS(nr_mix({}, examples(3, 0), 1.5, 0), ConfigError);

  const auto all = nr_mix({examples(40, 1), examples(30, 2)}, examples(20, 3), 1.0, 5);
  std::multiset<std::size_t> ids;
  for (const auto& e : all) ids.insert(e.feature);
  CHECK(ids.size() == 90);
  CHECK(std::set<std::size_t>(ids.begin(), ids.end()).size() == 90);
}

TEST_CASE("NR composition follows the per-task ceiling for random sizes") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const double xi = 0.01 + 0.99 * rng.uniform();
    std::vector<std::vector<data::Example>> history;
    std::map<int, std::size_t> expected;
    for (int k = 0; k < 1 + static_cast<int>(rng.below(4)); ++k) {
      const std::size_t n = 1 + rng.below(120);
      history.push_back(examples(n, k));
      expected[k] = static_cast<std::size_t>(std::ceil(xi * static_cast<double>(n) - 1e-9));
    }
    const auto incoming = examples(1 + rng.below(50), 9);
    expected[9] = incoming.size();
    std::map<int, std::size_t> got;
    std::set<std::size_t> unique;
    const auto mixed = nr_mix(history, incoming, xi, 3);
    for (const auto& e : mixed) {
      ++got[e.task];
      unique.insert(e.feature);
    }
    CHECK(got == expected);
    CHECK(unique.size() == mixed.size());
  }
}

TEST_CASE("NR reuses the same subset of a task at every later step") {
  const auto h = examples(50, 1);
  const auto a = nr_select(h, 0, 0.4, 11);
  const auto b = nr_select(h, 0, 0.4, 11);
  REQUIRE(a.size() == 20);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].feature == b[i].feature);
}

TEST_CASE("EWC penalty examples") {
  QuadraticAnchor q;
  q.lambda = 2.0;
  q.omega = {1.0, 4.0};
  q.anchor = {0.0, 0.0};
  CHECK(q.penalty(std::vector<double>{0.5, -0.25}) == doctest::Approx(0.5));
  CHECK(q.penalty(std::vector<double>{0.0, 0.0}) == 0.0);
  std::vector<double> grad{1.0, 1.0};
  q.add_gradient(std::vector<double>{0.5, -0.25}, grad);
  CHECK(grad[0] == doctest::Approx(2.0));
  CHECK(grad[1] == doctest::Approx(-1.0));
  CHECK_THROWS_AS(q.penalty(std::vector<double>{1.0}), ShapeError);
  CHECK(QuadraticAnchor{}.penalty(std::vector<double>{3.0}) == 0.0);

  // Zero on the support of omega means zero penalty even away from the anchor.
  q.omega = {0.0, 4.0};
  CHECK(q.penalty(std::vector<double>{9.0, 0.0}) == 0.0);
}

TEST_CASE("Fisher is the mean squared per-sample gradient") {
  ad::Tensor w({1}, std::vector<double>{0.0}, true);
  ad::ParameterVector params;
  params.add("w", w);
  const std::vector<double> slopes{0.5, 0.3};
  const auto fisher = ewc_fisher(params, 2, [&](std::size_t i) {
    return ad::sum(ad::scale(w, slopes[i]));
  });
  CHECK(fisher[0] == doctest::Approx(0.17));
  CHECK_THROWS(ewc_fisher(params, 0, [&](std::size_t) { return ad::sum(w); }));
  const auto zero = ewc_fisher(params, 3, [&](std::size_t) { return ad::sum(ad::scale(w, 0.0)); });
  CHECK(zero[0] == 0.0);
}

TEST_CASE("Fisher on a toy logistic model matches finite differences") {
  Rng rng(3);
  auto weight = test::random_tensor(rng, {2, 3}, true);
  auto bias = test::random_tensor(rng, {2}, true);
  ad::ParameterVector params;
  params.add("w", weight);
  params.add("b", bias);
  std::vector<ad::Tensor> xs;
  std::vector<int> ys;
  for (int i = 0; i < 8; ++i) {
    xs.push_back(test::random_tensor(rng, {1, 3}, false));
    ys.push_back(i % 2);
  }
  auto loss_of = [&](std::size_t i) {
    const int y = ys[i];
    return ad::softmax_cross_entropy(ad::dense(xs[i], weight, bias), std::span<const int>(&y, 1));
  };
  const auto fisher = ewc_fisher(params, 8, loss_of);

  auto theta = params.flatten();
  std::vector<double> oracle(theta.size(), 0.0);
  const double h = 1e-6;
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < theta.size(); ++j) {
      auto p = theta;
      p[j] += h;
      params.unflatten(p);
      const double up = loss_of(i).item();
      p[j] -= 2 * h;
      params.unflatten(p);
      const double down = loss_of(i).item();
      const double gj = (up - down) / (2 * h);
      oracle[j] += gj * gj / 8.0;
    }
    params.unflatten(theta);
  }
  for (std::size_t j = 0; j < theta.size(); ++j) CHECK(fisher[j] == doctest::Approx(oracle[j]).epsilon(1e-3));
}

TEST_CASE("EWC sums importance and re-anchors") {
  EwcState s;
  s.consolidate(std::vector<double>{1.0, 2.0}, {0.5, 0.1});
  s.consolidate(std::vector<double>{3.0, 4.0}, {0.25, 0.0});
  CHECK(s.quad.omega == std::vector<double>{0.75, 0.1});
  CHECK(s.quad.anchor == std::vector<double>{3.0, 4.0});
  CHECK_THROWS_AS(s.consolidate(std::vector<double>{1.0}, {1.0}), ShapeError);
}

TEST_CASE("SI importance examples") {
  SiState s(1.0, 0.1);
  s.begin(std::vector<double>{0.0});
  s.accumulate(std::vector<double>{-4.0}, std::vector<double>{0.1});  // omega = 0.4
  CHECK(s.consolidate(std::vector<double>{0.1}));
  CHECK(s.quad().omega[0] == doctest::Approx(0.4 / 0.11));
  CHECK(s.quad().omega[0] == doctest::Approx(3.6364).epsilon(1e-4));

  SiState still(1.0, 0.1);
  still.begin(std::vector<double>{2.0});
  still.accumulate(std::vector<double>{-1.0}, std::vector<double>{0.3});
  CHECK(still.consolidate(std::vector<double>{2.0}));
  CHECK(still.quad().omega[0] == doctest::Approx(0.3 / 0.1));

  SiState idle(1.0, 0.1);
  idle.begin(std::vector<double>{0.0});
  CHECK_FALSE(idle.consolidate(std::vector<double>{0.0}));
  CHECK(idle.quad().omega.empty());
  CHECK_THROWS_AS(SiState(1.0, 0.0), ConfigError);
}

TEST_CASE("SI accumulation replays a 1-D quadratic descent") {
  // loss(theta) = 0.5 * a * (theta - c)^2 with plain gradient steps.
  const double a = 3.0, c = 2.0, lr = 0.1, eps = 0.1;
  SiState s(1.0, eps);
  double theta = -1.0;
  s.begin(std::vector<double>{theta});
  for (int step = 0; step < 5; ++step) {
    const double g = a * (theta - c);
    const double next = theta - lr * g;
    s.accumulate(std::vector<double>{g}, std::vector<double>{next - theta});
    theta = next;
  }
  s.consolidate(std::vector<double>{theta});

  double oracle_theta = -1.0, omega = 0.0;
  for (int step = 0; step < 5; ++step) {
    const double g = a * (oracle_theta - c);
    omega += lr * g * g;
    oracle_theta -= lr * g;
  }
  const double d = oracle_theta + 1.0;
  CHECK(s.quad().omega[0] == doctest::Approx(omega / (d * d + eps)).epsilon(1e-12));
  CHECK(s.quad().anchor[0] == doctest::Approx(oracle_theta));
}

TEST_CASE("strategy config validation and labels") {
  StrategyConfig cfg;
  cfg.name = "gem";
  CHECK(cfg.label() == "gem-128");
  cfg.name = "nr";
  cfg.nr_xi = 0.75;
  CHECK(cfg.label() == "nr(xi=0.75)");
  cfg.nr_xi = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.name = "nope";
  cfg.nr_xi = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(strategy_names().size() == 7);
}

TEST_CASE("argmax prefers the lowest index on ties") {
  ad::Tensor logits({3, 3}, std::vector<double>{1, 1, 0, 0, 2, 2, 5, 5, 5});
  CHECK(argmax_rows(logits) == std::vector<int>{0, 1, 0});
}

TEST_CASE("PCL freezes earlier sub-networks and routes by task") {
  auto cfg = tiny_config("pcl");
  std::map<int, std::vector<char>> snapshot;
  std::map<int, std::vector<char>> shared;
  bool checked = false;
  train::RunHooks hooks;
  hooks.after_task = [&](int task, Strategy& s) {
    auto& pcl = dynamic_cast<Pcl&>(s);
    CHECK(pcl.subnet_count() == static_cast<std::size_t>(task));
    for (int k = 1; k <= task; ++k) {
      CHECK(pcl.is_frozen(k));
      const auto bytes = ad::encode_checkpoint(pcl.subnet(k).parameters());
      if (snapshot.count(k)) {
        CHECK(bytes == snapshot[k]);
        checked = true;
      } else {
        snapshot[k] = bytes;
      }
      CHECK(pcl.subnet(k).num_outputs() == 3);
    }
    shared[task] = ad::encode_checkpoint(pcl.shared_parameters());
    if (task >= 1) {
      Rng rng(1);
      auto x = test::random_tensor(rng, {2, 40, 98}, false);
      CHECK(pcl.select_eval_model(task)(x).shape() == ad::Shape{2, 3});
      CHECK(pcl.select_eval_model(0)(x).shape() == ad::Shape{2, 15});
      CHECK_THROWS(pcl.select_eval_model(task + 1));
    }
  };
  const auto report = train::run(cfg, hooks, nullptr, false);
  CHECK(checked);
  CHECK(shared[1] != shared[2]);  // the shared encoder keeps learning
  CHECK(report.extra_params == 5 * 648);
}

TEST_CASE("PCL with a frozen shared encoder has zero backward transfer") {
  auto cfg = tiny_config("pcl");
  cfg.strategy.pcl_freeze_shared = true;
  const auto report = train::run(cfg, {}, nullptr, false);
  CHECK(report.bwt == 0.0);
  CHECK(report.bwt_excl_pretrain == 0.0);
}

TEST_CASE("GEM memory respects its quota and is reported in bytes") {
  auto cfg = tiny_config("gem");
  cfg.strategy.gem_buffer = 10;  // 2 per replayed task
  std::size_t seen_quota = 0;
  train::RunHooks hooks;
  hooks.after_task = [&](int task, Strategy& s) {
    auto& gem = dynamic_cast<Gem&>(s);
    seen_quota = gem.quota();
    CHECK(gem.memories().size() == static_cast<std::size_t>(task));
    for (const auto& m : gem.memories()) CHECK(m.size() <= gem.quota());
  };
  const auto report = train::run(cfg, hooks, nullptr, false);
  CHECK(seen_quota == 2);
  CHECK(report.buffer_bytes == 5 * 2 * 40 * 98 * 4);
  CHECK(report.extra_params == 0);
  CHECK(report.diagnostics.contains("projections"));
}
