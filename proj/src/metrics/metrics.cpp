#include "kwscl/metrics/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "kwscl/common.hpp"

namespace kwscl::metrics {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// AccuracyMatrix

AccuracyMatrix::AccuracyMatrix(std::size_t n_tasks) : n_(n_tasks), cells_(n_tasks * n_tasks, 0.0), set_(n_tasks * n_tasks, 0) {
  if (n_tasks == 0) throw Error("accuracy matrix needs at least one task");
}

AccuracyMatrix AccuracyMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  AccuracyMatrix r(rows.size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t].size() < t + 1) throw Error("accuracy matrix row " + std::to_string(t) + " is too short");
    for (std::size_t k = 0; k <= t; ++k) r.set(t, k, rows[t][k]);
  }
  return r;
}

std::size_t AccuracyMatrix::index(std::size_t t, std::size_t k) const {
  if (t >= n_ || k > t) {
    throw Error("accuracy matrix cell (" + std::to_string(t) + ", " + std::to_string(k) + ") is outside the lower triangle of a " +
                std::to_string(n_) + "-task matrix");
  }
  return t * n_ + k;
}

void AccuracyMatrix::set(std::size_t t, std::size_t k, double value) {
  const auto i = index(t, k);
  if (!(value >= 0.0 && value <= 1.0)) throw Error("accuracy must be in [0, 1], got " + format_double(value));
  if (set_[i]) throw Error("accuracy matrix cell (" + std::to_string(t) + ", " + std::to_string(k) + ") already written");
  cells_[i] = value;
  set_[i] = 1;
}

double AccuracyMatrix::at(std::size_t t, std::size_t k) const {
  const auto i = index(t, k);
  if (!set_[i]) throw Error("accuracy matrix cell (" + std::to_string(t) + ", " + std::to_string(k) + ") is not populated");
  return cells_[i];
}

bool AccuracyMatrix::populated(std::size_t t, std::size_t k) const { return set_[index(t, k)] != 0; }

bool AccuracyMatrix::complete_through(std::size_t t) const {
  if (t >= n_) return false;
  for (std::size_t r = 0; r <= t; ++r)
    for (std::size_t k = 0; k <= r; ++k)
      if (!set_[r * n_ + k]) return false;
  return true;
}

std::size_t AccuracyMatrix::populated_rows() const {
  std::size_t rows = 0;
  for (std::size_t t = 0; t < n_; ++t) {
    bool full = true;
    for (std::size_t k = 0; k <= t; ++k) full = full && set_[t * n_ + k];
    if (full) ++rows;
  }
  return rows;
}

nlohmann::json AccuracyMatrix::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t t = 0; t < n_; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t k = 0; k <= t; ++k) row.push_back(set_[t * n_ + k] ? nlohmann::json(cells_[t * n_ + k]) : nlohmann::json());
    rows.push_back(row);
  }
  return rows;
}

AccuracyMatrix AccuracyMatrix::from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw Error("accuracy matrix: expected a non-empty array of rows");
  AccuracyMatrix r(j.size());
  for (std::size_t t = 0; t < j.size(); ++t) {
    const auto& row = j[t];
    if (!row.is_array() || row.size() != t + 1) throw Error("accuracy matrix: row " + std::to_string(t) + " has wrong length");
    for (std::size_t k = 0; k <= t; ++k)
      if (!row[k].is_null()) r.set(t, k, row[k].get<double>());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

std::size_t first_task(const AccuracyMatrix& r, bool include_pretrain) {
  if (r.size() == 0) throw Error("metrics: empty accuracy matrix");
  const std::size_t first = include_pretrain ? 0 : 1;
  if (first >= r.size()) throw Error("metrics: no incremental tasks to average");
  if (!r.complete_through(r.size() - 1)) throw Error("metrics: accuracy matrix is not fully populated");
  return first;
}

}  // namespace

double acc(const AccuracyMatrix& r, bool include_pretrain) {
  const auto first = first_task(r, include_pretrain);
  const auto last = r.size() - 1;
  double s = 0.0;
  for (std::size_t k = first; k <= last; ++k) s += r.at(last, k);
  return s / static_cast<double>(last + 1 - first);
}

double la(const AccuracyMatrix& r, bool include_pretrain) {
  const auto first = first_task(r, include_pretrain);
  double s = 0.0;
  for (std::size_t t = first; t < r.size(); ++t) s += r.at(t, t);
  return s / static_cast<double>(r.size() - first);
}

double bwt(const AccuracyMatrix& r, bool include_pretrain) {
  const auto first = first_task(r, include_pretrain);
  const auto last = r.size() - 1;
  if (last <= first) return 0.0;
  double s = 0.0;
  for (std::size_t k = first; k < last; ++k) s += r.at(last, k) - r.at(k, k);
  return s / static_cast<double>(last - first);
}

std::vector<double> acc_curve(const AccuracyMatrix& r) {
  std::vector<double> out;
  for (std::size_t t = 0; t < r.size() && r.complete_through(t); ++t) {
    double s = 0.0;
    for (std::size_t k = 0; k <= t; ++k) s += r.at(t, k);
    out.push_back(s / static_cast<double>(t + 1));
  }
  return out;
}

// ---------------------------------------------------------------------------
// RunReport

double RunReport::mean_epoch_seconds() const {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 1; t < epoch_seconds.size(); ++t)
    for (double e : epoch_seconds[t]) {
      s += e;
      ++n;
    }
  return n ? s / static_cast<double>(n) : 0.0;
}

void RunReport::finalize() {
  acc = metrics::acc(matrix);
  la = metrics::la(matrix);
  bwt = metrics::bwt(matrix);
  if (matrix.size() > 1) {
    acc_excl_pretrain = metrics::acc(matrix, false);
    la_excl_pretrain = metrics::la(matrix, false);
    bwt_excl_pretrain = metrics::bwt(matrix, false);
  }
  acc_curve = metrics::acc_curve(matrix);
}

nlohmann::json RunReport::to_json(bool with_timings) const {
  nlohmann::json j;
  j["version"] = kVersion;
  j["strategy"] = strategy;
  j["label"] = label;
  j["seed"] = seed;
  j["stream_hash"] = stream_hash;
  j["config_hash"] = config_hash;
  j["config"] = config;
  j["accuracy_matrix"] = matrix.to_json();
  j["acc"] = acc;
  j["la"] = la;
  j["bwt"] = bwt;
  j["acc_excl_pretrain"] = acc_excl_pretrain;
  j["la_excl_pretrain"] = la_excl_pretrain;
  j["bwt_excl_pretrain"] = bwt_excl_pretrain;
  j["acc_plus"] = acc_plus ? nlohmann::json(*acc_plus) : nlohmann::json();
  j["extra_params"] = extra_params;
  j["extra_params_curve"] = extra_params_curve;
  j["buffer_bytes"] = buffer_bytes;
  j["acc_curve"] = acc_curve;
  j["train_loss"] = train_loss;
  if (with_timings) {
    j["epoch_seconds"] = epoch_seconds;
    j["tt_seconds_per_epoch"] = mean_epoch_seconds();
  }
  j["diagnostics"] = diagnostics;
  return j;
}

RunReport RunReport::from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("version").get<int>();
    if (version != kVersion) throw Error("unsupported report version " + std::to_string(version));
    RunReport r;
    r.strategy = j.at("strategy").get<std::string>();
    r.label = j.at("label").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.stream_hash = j.at("stream_hash").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.config = j.at("config").get<std::map<std::string, std::string>>();
    r.matrix = AccuracyMatrix::from_json(j.at("accuracy_matrix"));
    r.acc = j.at("acc").get<double>();
    r.la = j.at("la").get<double>();
    r.bwt = j.at("bwt").get<double>();
    r.acc_excl_pretrain = j.at("acc_excl_pretrain").get<double>();
    r.la_excl_pretrain = j.at("la_excl_pretrain").get<double>();
    r.bwt_excl_pretrain = j.at("bwt_excl_pretrain").get<double>();
    if (!j.at("acc_plus").is_null()) r.acc_plus = j.at("acc_plus").get<double>();
    r.extra_params = j.at("extra_params").get<std::uint64_t>();
    r.extra_params_curve = j.at("extra_params_curve").get<std::vector<std::uint64_t>>();
    r.buffer_bytes = j.at("buffer_bytes").get<std::uint64_t>();
    r.acc_curve = j.at("acc_curve").get<std::vector<double>>();
    r.train_loss = j.at("train_loss").get<std::vector<std::vector<double>>>();
    if (j.contains("epoch_seconds")) r.epoch_seconds = j.at("epoch_seconds").get<std::vector<std::vector<double>>>();
    r.diagnostics = j.value("diagnostics", nlohmann::json::object());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed report: ") + e.what());
  }
}

bool RunReport::same_results(const RunReport& other) const { return to_json(false) == other.to_json(false); }

// ---------------------------------------------------------------------------
// Files

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace

std::string matrix_csv(const AccuracyMatrix& r) {
  std::ostringstream os;
  os << "after_task";
  for (std::size_t k = 0; k < r.size(); ++k) os << ",task" << k;
  os << '\n';
  for (std::size_t t = 0; t < r.size(); ++t) {
    os << t;
    for (std::size_t k = 0; k < r.size(); ++k) {
      os << ',';
      if (k <= t && r.populated(t, k)) os << format_double(r.at(t, k));
    }
    os << '\n';
  }
  return os.str();
}

std::string acc_curve_csv(const RunReport& report) {
  std::ostringstream os;
  os << "tasks_learned,acc\n";
  for (std::size_t t = 0; t < report.acc_curve.size(); ++t) os << t + 1 << ',' << format_double(report.acc_curve[t]) << '\n';
  return os.str();
}

std::string extra_params_csv(const RunReport& report) {
  std::ostringstream os;
  os << "tasks_learned,extra_params,acc\n";
  const auto n = std::min(report.extra_params_curve.size(), report.acc_curve.size());
  for (std::size_t t = 0; t < n; ++t) {
    os << t + 1 << ',' << report.extra_params_curve[t] << ',' << format_double(report.acc_curve[t]) << '\n';
  }
  return os.str();
}

void emit_report(const RunReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  write_text(dir / "report.json", report.to_json().dump(2) + "\n");
  write_text(dir / "accuracy_matrix.csv", matrix_csv(report.matrix));
  write_text(dir / "acc_curve.csv", acc_curve_csv(report));
  write_text(dir / "extra_params.csv", extra_params_csv(report));
}

RunReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("'" + path.string() + "' is not valid JSON: " + e.what());
  }
  return RunReport::from_json(j);
}

// ---------------------------------------------------------------------------
// Comparison

void attach_acc_plus(std::vector<RunReport>& reports) {
  for (auto& r : reports) {
    r.acc_plus.reset();
    for (const auto& ref : reports) {
      if (ref.strategy == "finetune" && ref.seed == r.seed && ref.stream_hash == r.stream_hash) {
        r.acc_plus = r.acc - ref.acc;
        break;
      }
    }
  }
}

std::vector<ComparisonRow> compare(const std::vector<RunReport>& reports) {
  std::vector<ComparisonRow> rows;
  std::vector<std::size_t> plus_count;
  for (const auto& r : reports) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const ComparisonRow& row) { return row.label == r.label; });
    if (it == rows.end()) {
      rows.push_back({});
      rows.back().label = r.label;
      plus_count.push_back(0);
      it = rows.end() - 1;
    }
    const auto i = static_cast<std::size_t>(it - rows.begin());
    auto& row = *it;
    ++row.runs;
    row.acc += r.acc;
    row.la += r.la;
    row.bwt += r.bwt;
    row.tt += r.mean_epoch_seconds();
    row.extra_params += static_cast<double>(r.extra_params);
    row.buffer_bytes += static_cast<double>(r.buffer_bytes);
    if (r.acc_plus) {
      row.acc_plus = row.acc_plus.value_or(0.0) + *r.acc_plus;
      ++plus_count[i];
    }
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& row = rows[i];
    const double n = static_cast<double>(row.runs);
    row.acc /= n;
    row.la /= n;
    row.bwt /= n;
    row.tt /= n;
    row.extra_params /= n;
    row.buffer_bytes /= n;
    if (row.acc_plus) *row.acc_plus /= static_cast<double>(plus_count[i]);
  }
  return rows;
}

std::string comparison_table(const std::vector<ComparisonRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(22) << "strategy" << std::right << std::setw(6) << "runs" << std::setw(9) << "ACC" << std::setw(9)
     << "LA" << std::setw(9) << "BWT" << std::setw(9) << "ACC+" << std::setw(10) << "TT(s)" << std::setw(13) << "ExtraParam"
     << std::setw(12) << "Buffer(B)" << '\n';
  os << std::fixed;
  for (const auto& r : rows) {
    os << std::left << std::setw(22) << r.label << std::right << std::setw(6) << r.runs << std::setprecision(3) << std::setw(9)
       << r.acc << std::setw(9) << r.la << std::setw(9) << r.bwt << std::setw(9);
    if (r.acc_plus) {
      os << *r.acc_plus;
    } else {
      os << "-";
    }
    os << std::setprecision(2) << std::setw(10) << r.tt << std::setprecision(0) << std::setw(13) << r.extra_params
       << std::setw(12) << r.buffer_bytes << '\n';
  }
  return os.str();
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream os;
  os << "strategy,runs,acc,la,bwt,acc_plus,tt_seconds,extra_params,buffer_bytes\n";
  for (const auto& r : rows) {
    os << r.label << ',' << r.runs << ',' << format_double(r.acc) << ',' << format_double(r.la) << ',' << format_double(r.bwt)
       << ',' << (r.acc_plus ? format_double(*r.acc_plus) : "") << ',' << format_double(r.tt) << ','
       << format_double(r.extra_params) << ',' << format_double(r.buffer_bytes) << '\n';
  }
  return os.str();
}

nlohmann::json comparison_json(const std::vector<ComparisonRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"strategy", r.label},
                   {"runs", r.runs},
                   {"acc", r.acc},
                   {"la", r.la},
                   {"bwt", r.bwt},
                   {"acc_plus", r.acc_plus ? nlohmann::json(*r.acc_plus) : nlohmann::json()},
                   {"tt_seconds", r.tt},
                   {"extra_params", r.extra_params},
                   {"buffer_bytes", r.buffer_bytes}});
  }
  return out;
}

}  // namespace kwscl::metrics
