// Acceptance runner: prints exactly one PASS/FAIL/SKIP line per criterion on
// stdout; supporting numbers go to stderr.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "gradient_suite.hpp"
#include "kwscl/autodiff/checkpoint.hpp"
#include "kwscl/metrics/metrics.hpp"
#include "kwscl/models/subnet.hpp"
#include "kwscl/models/tcresnet.hpp"
#include "kwscl/strategies/methods.hpp"
#include "kwscl/strategies/primitives.hpp"
#include "kwscl/trainer/trainer.hpp"
#include "oracles.hpp"

using namespace kwscl;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  enum Kind { kPass, kFail, kSkip } kind = kFail;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 3) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

std::string sci(double v) {
  std::ostringstream os;
  os.setf(std::ios::scientific);
  os.precision(2);
  os << v;
  return os.str();
}

/// Collects named boolean checks; the first failures are kept for the report.
struct Checks {
  std::size_t total = 0;
  std::vector<std::string> failed;
  void expect(bool ok, const std::string& what) {
    ++total;
    if (!ok) failed.push_back(what);
  }
  void exact(double got, double want, const std::string& what) { expect(got == want, what + " = " + fmt(got, 6)); }
  void close(double got, double want, double tol, const std::string& what) {
    expect(std::abs(got - want) <= tol, what + " = " + fmt(got, 6));
  }
  Outcome outcome(const std::string& summary) const {
    if (failed.empty()) return {Outcome::kPass, summary + " (" + std::to_string(total) + " checks)"};
    std::string msg = std::to_string(failed.size()) + "/" + std::to_string(total) + " checks failed: ";
    for (std::size_t i = 0; i < std::min<std::size_t>(3, failed.size()); ++i) msg += (i ? "; " : "") + failed[i];
    return {Outcome::kFail, msg};
  }
};

train::RunConfig base_config(std::uint64_t seed) {
  train::RunConfig cfg;
  cfg.seed = seed;
  cfg.save_checkpoints = false;
  return cfg;
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto results = test::run_gradient_suite(20, 20240501);
  const double secs = seconds_since(t0);
  Checks c;
  double worst = 0.0;
  for (const auto& r : results) {
    c.expect(r.fixtures >= 20 && r.passed == r.fixtures,
             r.op + " " + std::to_string(r.passed) + "/" + std::to_string(r.fixtures));
    worst = std::max(worst, r.worst_rel);
  }
  c.expect(secs < 120.0, "runtime " + fmt(secs, 1) + " s");
  return c.outcome(std::to_string(results.size()) + " ops x 20 fixtures, worst rel err " + sci(worst) + ", " +
                   fmt(secs, 1) + " s");
}

Outcome gem_oracle() {
  Rng rng(777);
  Checks c;
  double worst = 0.0;
  std::size_t projected = 0, noop = 0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t d = 2 + rng.below(7);
    const std::size_t m = 1 + rng.below(std::min<std::size_t>(4, d));
    std::vector<double> g(d);
    for (auto& v : g) v = rng.normal();
    std::vector<std::vector<double>> refs(m, std::vector<double>(d));
    for (auto& r : refs)
      for (auto& v : r) v = rng.normal();
    const auto res = cl::gem_project(g, refs);
    const auto oracle = test::brute_force_qp(g, refs);
    c.expect(res.converged, "instance " + std::to_string(inst) + " did not converge");
    for (std::size_t i = 0; i < d; ++i) worst = std::max(worst, std::abs(res.gradient[i] - oracle[i]));
    for (const auto& r : refs) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += res.gradient[i] * r[i];
      c.expect(s >= -1e-9, "instance " + std::to_string(inst) + " infeasible");
    }
    if (res.projected) {
      ++projected;
    } else {
      ++noop;
      c.expect(res.gradient == g, "instance " + std::to_string(inst) + " feasible input modified");
    }
    // The same instance made feasible by construction must come back bitwise.
    std::vector<std::vector<double>> aligned = refs;
    for (auto& r : aligned) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += r[i] * g[i];
      if (s < 0.0)
        for (auto& v : r) v = -v;
    }
    const auto same = cl::gem_project(g, aligned);
    c.expect(!same.projected && same.gradient == g, "instance " + std::to_string(inst) + " no-op path");
  }
  c.expect(worst <= 1e-6, "max deviation from oracle " + sci(worst));
  return c.outcome("200 instances (" + std::to_string(projected) + " projected, " + std::to_string(noop) +
                   " feasible), max |g~ - oracle| " + sci(worst));
}

Outcome formulas() {
  Checks c;
  models::ScalingConfig sc;
  c.close(models::width_multiplier(3, sc), 0.2, 1e-15, "alpha(3/15)");
  c.exact(models::width_multiplier(15, sc), 1.0, "alpha(15/15)");
  sc.mu = 2.5;
  c.close(models::width_multiplier(3, sc), 0.5, 1e-15, "alpha(mu=2.5)");

  auto ex = [](std::size_t n, int task) {
    std::vector<data::Example> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = {i + 1000 * static_cast<std::size_t>(task), 0, task};
    return v;
  };
  c.exact(static_cast<double>(cl::nr_mix({ex(100, 1)}, ex(80, 2), 0.5, 0).size()), 130, "nr_mix(0.5)");
  c.exact(static_cast<double>(cl::nr_mix({ex(100, 1), ex(60, 2)}, ex(80, 3), 0.75, 0).size()), 200, "nr_mix(0.75)");
  {
    const auto all = cl::nr_mix({ex(40, 1), ex(30, 2)}, ex(20, 3), 1.0, 0);
    std::set<std::size_t> ids;
    for (const auto& e : all) ids.insert(e.feature);
    c.expect(all.size() == 90 && ids.size() == 90, "nr_mix(1.0) takes every sample once");
  }

  const auto r2 = metrics::AccuracyMatrix::from_rows({{0.9}, {0.8, 0.95}});
  c.close(metrics::acc(r2), 0.875, 1e-12, "ACC 2-task");
  c.close(metrics::la(r2), 0.925, 1e-12, "LA 2-task");
  c.close(metrics::bwt(r2), -0.1, 1e-12, "BWT 2-task");
  const auto r3 = metrics::AccuracyMatrix::from_rows({{0.9}, {0.7, 0.8}, {0.6, 0.5, 1.0}});
  c.close(metrics::acc(r3), 0.7, 1e-12, "ACC 3-task");
  c.close(metrics::la(r3), 0.9, 1e-12, "LA 3-task");
  c.close(metrics::bwt(r3), -0.3, 1e-12, "BWT 3-task");
  c.exact(metrics::bwt(metrics::AccuracyMatrix::from_rows({{0.7}, {0.7, 0.7}})), 0.0, "BWT no drops");

  cl::QuadraticAnchor q;
  q.lambda = 2.0;
  q.omega = {1.0, 4.0};
  q.anchor = {0.0, 0.0};
  c.close(q.penalty(std::vector<double>{0.5, -0.25}), 0.5, 1e-15, "EWC penalty");
  cl::SiState si(1.0, 0.1);
  si.begin(std::vector<double>{0.0});
  si.accumulate(std::vector<double>{-4.0}, std::vector<double>{0.1});
  si.consolidate(std::vector<double>{0.1});
  c.close(si.quad().omega[0], 0.4 / 0.11, 1e-12, "SI importance");

  Rng rng(0);
  c.exact(static_cast<double>(models::Dense(10, 5, rng).param_count()), 55, "dense 10->5");
  c.exact(static_cast<double>(models::Conv1d(4, 8, 3, 1, 1, rng).param_count()), 104, "conv k3 4->8");
  const models::TcResNet8 net(models::TcResNet8Spec{}, 0);
  const auto n0 = models::count_parameters(net);
  c.exact(static_cast<double>(n0), static_cast<double>(test::tcresnet8_params(15)), "TC-ResNet-8 params");
  std::size_t from_ckpt = 0;
  for (const auto& s : ad::decode_checkpoint(ad::encode_checkpoint(net.parameters())))
    if (s.trainable) from_ckpt += s.values.size();
  c.exact(static_cast<double>(from_ckpt), static_cast<double>(n0), "checkpoint trainable size");

  auto half_up = [](double x) { return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(x + 0.5))); };
  const auto scaled = models::instantiate_subnet(3, models::ScalingConfig{}, false, 24, 49, 0);
  c.expect(scaled.net->channels() == std::vector<std::size_t>{half_up(0.2 * 16), half_up(0.2 * 48)}, "channels {3,10}");
  c.exact(static_cast<double>(models::count_parameters(*scaled.net)), static_cast<double>(test::subnet_params(3, 10, 3)),
          "scaled sub-net params");
  const auto fixed = models::instantiate_subnet(3, models::ScalingConfig{}, true, 24, 49, 0);
  c.expect(fixed.net->channels() == std::vector<std::size_t>{16, 48}, "fixed channels {16,48}");
  c.exact(static_cast<double>(models::count_parameters(*fixed.net)), static_cast<double>(test::subnet_params(16, 48, 3)),
          "fixed sub-net params");
  models::ScalingConfig wide;
  wide.pretrain_keywords = 48;
  c.expect(models::instantiate_subnet(1, wide, false, 24, 49, 0).net->channels() == std::vector<std::size_t>{1, 1},
           "clamped channels {1,1}");
  return c.outcome("TC-ResNet-8 = " + std::to_string(n0) + " params, sub-net(3) = " +
                   std::to_string(models::count_parameters(*scaled.net)));
}

Outcome freezing(const fs::path& out) {
  const auto t0 = Clock::now();
  Checks c;
  train::WorkloadCache cache;
  auto cfg = base_config(0);
  cfg.stream.n_tasks = 2;  // pretrain + 2 tasks

  std::map<int, std::vector<char>> first_seen;
  std::size_t compared = 0;
  train::RunHooks hooks;
  hooks.after_task = [&](int task, cl::Strategy& s) {
    auto& pcl = dynamic_cast<cl::Pcl&>(s);
    for (int k = 1; k <= task; ++k) {
      const auto bytes = ad::encode_checkpoint(pcl.subnet(k).parameters());
      auto [it, inserted] = first_seen.emplace(k, bytes);
      if (!inserted) {
        ++compared;
        c.expect(it->second == bytes, "sub-net " + std::to_string(k) + " changed after task " + std::to_string(task));
      }
    }
  };
  auto pcl_cfg = cfg;
  pcl_cfg.strategy.name = "pcl";
  pcl_cfg.output_dir = out / "pcl";
  const auto pcl = train::run(pcl_cfg, hooks, &cache);
  c.expect(compared >= 1, "no frozen sub-network was compared");

  auto frozen_cfg = cfg;
  frozen_cfg.strategy.name = "pcl";
  frozen_cfg.strategy.pcl_freeze_shared = true;
  frozen_cfg.output_dir = out / "pcl-frozen-shared";
  const auto frozen = train::run(frozen_cfg, {}, &cache);
  c.exact(frozen.bwt, 0.0, "BWT(pcl, frozen shared)");

  auto sa_cfg = cfg;
  sa_cfg.strategy.name = "standalone";
  sa_cfg.output_dir = out / "standalone";
  const auto sa = train::run(sa_cfg, {}, &cache);
  c.exact(sa.bwt, 0.0, "BWT(standalone)");

  const double secs = seconds_since(t0);
  c.expect(secs < 600.0, "runtime " + fmt(secs, 0) + " s");
  return c.outcome("BWT frozen-shared " + fmt(frozen.bwt, 6) + ", stand-alone " + fmt(sa.bwt, 6) + ", PCL " +
                   fmt(pcl.bwt) + ", " + fmt(secs, 0) + " s");
}

struct OrderingRuns {
  std::map<std::string, std::vector<metrics::RunReport>> by_method;  // seed order
  double seconds = 0.0;
};

const std::vector<std::pair<std::string, std::string>>& ordering_chain() {
  static const std::vector<std::pair<std::string, std::string>> chain{
      {"standalone", "standalone"}, {"pcl", "pcl"}, {"nr(xi=0.75)", "nr"},
      {"gem-128", "gem"},           {"si", "si"},   {"finetune", "finetune"}};
  return chain;
}

OrderingRuns ordering_runs(const fs::path& out, std::size_t jobs) {
  train::Manifest manifest;
  manifest.output_dir = out;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    for (const auto& [label, name] : ordering_chain()) {
      auto cfg = base_config(seed);
      cfg.strategy.name = name;
      if (name == "nr") cfg.strategy.nr_xi = 0.75;
      if (name == "gem") cfg.strategy.gem_buffer = 128;
      cfg.label = label;
      cfg.output_dir = out / (name + "-seed" + std::to_string(seed));
      manifest.runs.push_back(cfg);
    }
  }
  const auto t0 = Clock::now();
  const auto reports = train::sweep(manifest, jobs, [](const std::string& line) { std::cerr << line << '\n'; });
  OrderingRuns runs;
  runs.seconds = seconds_since(t0);
  for (const auto& r : reports) runs.by_method[r.label].push_back(r);
  for (auto& [label, v] : runs.by_method)
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.seed < b.seed; });
  std::cerr << metrics::comparison_table(metrics::compare(reports));
  return runs;
}

double mean_of(const std::vector<metrics::RunReport>& v, double metrics::RunReport::*field) {
  double s = 0.0;
  for (const auto& r : v) s += r.*field;
  return s / static_cast<double>(v.size());
}

Outcome ordering(const OrderingRuns& runs) {
  Checks c;
  const auto& chain = ordering_chain();
  std::string summary = "mean ACC";
  for (const auto& [label, name] : chain) summary += " " + name + "=" + fmt(mean_of(runs.by_method.at(label), &metrics::RunReport::acc));
  for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
    const auto& hi = runs.by_method.at(chain[i].first);
    const auto& lo = runs.by_method.at(chain[i + 1].first);
    std::size_t votes = 0;
    for (std::size_t s = 0; s < hi.size(); ++s) votes += hi[s].acc >= lo[s].acc;
    c.expect(2 * votes > hi.size(), "ACC(" + chain[i].second + ") >= ACC(" + chain[i + 1].second + ") in " +
                                        std::to_string(votes) + "/" + std::to_string(hi.size()) + " seeds");
  }
  const double ft_bwt = mean_of(runs.by_method.at("finetune"), &metrics::RunReport::bwt);
  const double pcl_bwt = mean_of(runs.by_method.at("pcl"), &metrics::RunReport::bwt);
  c.expect(ft_bwt < -0.1, "BWT(finetune) = " + fmt(ft_bwt));
  c.expect(pcl_bwt > -0.05, "BWT(pcl) = " + fmt(pcl_bwt));
  c.expect(runs.seconds < 3600.0, "runtime " + fmt(runs.seconds, 0) + " s");
  return c.outcome(summary + "; BWT finetune=" + fmt(ft_bwt) + " pcl=" + fmt(pcl_bwt) + "; " + fmt(runs.seconds, 0) + " s");
}

std::vector<double> mean_curve(const std::vector<metrics::RunReport>& v) {
  std::vector<double> out(v.front().acc_curve.size(), 0.0);
  for (const auto& r : v)
    for (std::size_t t = 0; t < out.size(); ++t) out[t] += r.acc_curve.at(t) / static_cast<double>(v.size());
  return out;
}

std::string curve_text(const std::vector<double>& c) {
  std::string s;
  for (double v : c) s += (s.empty() ? "" : " ") + fmt(v);
  return s;
}

Outcome acc_trend(const OrderingRuns& runs) {
  Checks c;
  const auto ft = mean_curve(runs.by_method.at("finetune"));
  const auto pcl = mean_curve(runs.by_method.at("pcl"));
  for (std::size_t t = 1; t + 1 < ft.size(); ++t)
    c.expect(ft[t + 1] <= ft[t], "fine-tune ACC rises from task " + std::to_string(t) + " to " + std::to_string(t + 1));
  for (std::size_t t = 2; t < pcl.size(); ++t)
    c.expect(std::abs(pcl[t] - pcl[1]) <= 0.05, "PCL ACC after task " + std::to_string(t) + " is " + fmt(pcl[t]) +
                                                    " vs " + fmt(pcl[1]) + " after task 1");
  return c.outcome("fine-tune [" + curve_text(ft) + "], PCL [" + curve_text(pcl) + "]");
}

Outcome param_growth(const OrderingRuns& runs, const fs::path& out) {
  Checks c;
  auto fixed_cfg = base_config(0);
  fixed_cfg.strategy.name = "pcl";
  fixed_cfg.strategy.pcl_fixed = true;
  fixed_cfg.pretrain_epochs = 1;
  fixed_cfg.task_epochs = 1;  // parameter counts do not depend on training length
  fixed_cfg.output_dir = out;
  const auto fixed = train::run(fixed_cfg);

  const std::size_t scaled_inc = test::subnet_params(3, 10, 3);
  const std::size_t fixed_inc = test::subnet_params(16, 48, 3);
  auto linear = [&](const std::vector<std::uint64_t>& curve, std::size_t inc, const std::string& what) {
    c.expect(curve.size() == 6, what + " curve has " + std::to_string(curve.size()) + " points");
    for (std::size_t t = 0; t < curve.size(); ++t)
      c.expect(curve[t] == t * inc, what + " extra params after task " + std::to_string(t) + " = " + std::to_string(curve[t]));
  };
  for (const auto& r : runs.by_method.at("pcl")) linear(r.extra_params_curve, scaled_inc, "scaled");
  linear(fixed.extra_params_curve, fixed_inc, "fixed");
  const double ratio = static_cast<double>(scaled_inc) / static_cast<double>(fixed_inc);
  c.expect(ratio < 0.2, "increment ratio " + fmt(ratio));
  return c.outcome("per-task increment scaled " + std::to_string(scaled_inc) + " vs fixed " + std::to_string(fixed_inc) +
                   " (ratio " + fmt(ratio) + ")");
}

Outcome determinism(const fs::path& out) {
  Checks c;
  for (const std::string name : {"pcl", "gem", "si", "nr"}) {
    auto cfg = base_config(11);
    cfg.strategy.name = name;
    cfg.pretrain_epochs = 3;
    cfg.task_epochs = 2;
    cfg.output_dir = out / (name + "-a");
    const auto a = train::run(cfg);
    cfg.output_dir = out / (name + "-b");
    const auto b = train::run(cfg);
    c.expect(a.same_results(b), name + " reports differ");
    c.expect(metrics::load_report(out / (name + "-a") / "report.json").same_results(b), name + " stored report differs");
  }
  return c.outcome("pcl, gem, si, nr each run twice with seed 11");
}

Outcome gsc_smoke(const fs::path& out, std::size_t jobs) {
  const char* dir = std::getenv("KWSCL_GSC_DIR");
  if (dir == nullptr || !fs::is_directory(dir)) return {Outcome::kSkip, "set KWSCL_GSC_DIR to a local Speech Commands copy"};
  train::Manifest manifest;
  manifest.output_dir = out;
  for (const auto& name : cl::strategy_names()) {
    auto cfg = base_config(0);
    cfg.source = data::SourceKind::kCorpus;
    cfg.corpus_dir = dir;
    cfg.strategy.name = name;
    cfg.task_epochs = 5;
    cfg.output_dir = out / (name + "-seed0");
    manifest.runs.push_back(cfg);
  }
  const auto reports = train::sweep(manifest, jobs, [](const std::string& line) { std::cerr << line << '\n'; });
  Checks c;
  double pcl = 0.0, ft = 0.0;
  for (const auto& r : reports) {
    if (r.strategy == "pcl") pcl = r.acc;
    if (r.strategy == "finetune") ft = r.acc;
  }
  c.expect(reports.size() == cl::strategy_names().size(), "incomplete sweep");
  c.expect(fs::exists(out / "comparison.csv"), "comparison table missing");
  c.expect(pcl - ft >= 0.15, "ACC(pcl) - ACC(finetune) = " + fmt(pcl - ft));
  return c.outcome("ACC pcl " + fmt(pcl) + ", finetune " + fmt(ft));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  fs::path out = "acceptance_runs";
  std::vector<int> only;
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  app.add_option("--out", out, "Directory for run artifacts");
  app.add_option("--only", only, "Criteria to run (default: all)");
  app.add_option("--jobs", jobs, "Parallel training runs")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  auto wanted = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };
  std::optional<OrderingRuns> ordering_cache;
  auto shared_runs = [&]() -> const OrderingRuns& {
    if (!ordering_cache) ordering_cache = ordering_runs(out / "ordering", jobs);
    return *ordering_cache;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"GEM oracle equivalence", gem_oracle},
      {"formula exactness", formulas},
      {"freezing invariants", [&] { return freezing(out / "freezing"); }},
      {"qualitative ordering", [&] { return ordering(shared_runs()); }},
      {"ACC vs learned tasks", [&] { return acc_trend(shared_runs()); }},
      {"extra-parameter growth", [&] { return param_growth(shared_runs(), out / "pcl-fixed"); }},
      {"determinism", [&] { return determinism(out / "determinism"); }},
      {"real-data smoke run", [&] { return gsc_smoke(out / "gsc", jobs); }},
  };

  bool ok = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!wanted(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {Outcome::kFail, std::string("error: ") + e.what()};
    }
    const char* tag = o.kind == Outcome::kPass ? "PASS" : o.kind == Outcome::kSkip ? "SKIP" : "FAIL";
    std::cout << "criterion " << n << " [" << tag << "] " << criteria[i].first << ": " << o.detail << std::endl;
    ok = ok && o.kind != Outcome::kFail;
  }
  return ok ? 0 : 1;
}
