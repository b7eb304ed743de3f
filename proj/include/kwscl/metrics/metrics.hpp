#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace kwscl::metrics {

/// R[t][k]: test accuracy on task k after finishing task t (task 0 = pretrain).
/// Only the lower triangle is meaningful and every cell is written once.
class AccuracyMatrix {
 public:
  AccuracyMatrix() = default;
  /// `n_tasks` counts the pretrain task, i.e. T + 1.
  explicit AccuracyMatrix(std::size_t n_tasks);
  static AccuracyMatrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t size() const { return n_; }
  void set(std::size_t t, std::size_t k, double value);
  double at(std::size_t t, std::size_t k) const;
  bool populated(std::size_t t, std::size_t k) const;
  /// Rows 0..t fully populated in their lower triangle.
  bool complete_through(std::size_t t) const;
  /// Number of rows whose lower-triangle cells are all written.
  std::size_t populated_rows() const;

  nlohmann::json to_json() const;
  static AccuracyMatrix from_json(const nlohmann::json& j);
  bool operator==(const AccuracyMatrix& other) const = default;

 private:
  std::size_t index(std::size_t t, std::size_t k) const;
  std::size_t n_ = 0;
  std::vector<double> cells_;
  std::vector<std::uint8_t> set_;
};

/// With `include_pretrain` false the pretrain row and column are dropped
/// and the formulas run over tasks 1..T.
double acc(const AccuracyMatrix& r, bool include_pretrain = true);
double la(const AccuracyMatrix& r, bool include_pretrain = true);
double bwt(const AccuracyMatrix& r, bool include_pretrain = true);

/// ACC after each learned task t: mean of R[t][0..t]. One entry per task.
std::vector<double> acc_curve(const AccuracyMatrix& r);

struct RunReport {
  static constexpr int kVersion = 1;

  std::string strategy;  // canonical name, e.g. "gem"
  std::string label;     // display name, e.g. "gem-128"
  std::uint64_t seed = 0;
  std::string stream_hash;  // identifies the task stream (sources, split, grouping)
  std::string config_hash;
  std::map<std::string, std::string> config;  // flattened run configuration

  AccuracyMatrix matrix;
  double acc = 0.0;
  double la = 0.0;
  double bwt = 0.0;
  double acc_excl_pretrain = 0.0;
  double la_excl_pretrain = 0.0;
  double bwt_excl_pretrain = 0.0;
  std::optional<double> acc_plus;  // against fine-tune on the same stream and seed

  std::uint64_t extra_params = 0;
  std::vector<std::uint64_t> extra_params_curve;  // index = task id
  std::uint64_t buffer_bytes = 0;
  std::vector<double> acc_curve;

  std::vector<std::vector<double>> train_loss;     // [task][epoch] mean of L_kws + penalty
  std::vector<std::vector<double>> epoch_seconds;  // [task][epoch]
  nlohmann::json diagnostics = nlohmann::json::object();

  /// Mean wall-clock seconds per training epoch over the incremental tasks.
  double mean_epoch_seconds() const;
  /// Recomputes every derived field from `matrix`.
  void finalize();

  nlohmann::json to_json(bool with_timings = true) const;
  static RunReport from_json(const nlohmann::json& j);
  /// Equality of everything except wall-clock timings.
  bool same_results(const RunReport& other) const;
};

/// Writes report.json, accuracy_matrix.csv, acc_curve.csv and extra_params.csv.
void emit_report(const RunReport& report, const std::filesystem::path& dir);
RunReport load_report(const std::filesystem::path& path);

std::string matrix_csv(const AccuracyMatrix& r);
std::string acc_curve_csv(const RunReport& report);
std::string extra_params_csv(const RunReport& report);

/// Fills acc_plus on each report from the fine-tune report with the same
/// stream and seed; reports without such a reference keep it empty.
void attach_acc_plus(std::vector<RunReport>& reports);

struct ComparisonRow {
  std::string label;
  std::size_t runs = 0;
  double acc = 0.0, la = 0.0, bwt = 0.0;
  std::optional<double> acc_plus;
  double tt = 0.0;
  double extra_params = 0.0;
  double buffer_bytes = 0.0;
};

/// One row per label (mean over seeds), in first-seen order.
std::vector<ComparisonRow> compare(const std::vector<RunReport>& reports);
std::string comparison_table(const std::vector<ComparisonRow>& rows);
std::string comparison_csv(const std::vector<ComparisonRow>& rows);
nlohmann::json comparison_json(const std::vector<ComparisonRow>& rows);

/// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace kwscl::metrics
