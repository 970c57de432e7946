#include "fab/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

namespace fab {

using nlohmann::json;

PointEval from_outcome(const AttackOutcome& outcome) {
  PointEval pe;
  pe.clean_correct = !(outcome.success && outcome.norm == 0.0);
  if (outcome.success) pe.norm = outcome.norm;
  return pe;
}

double robust_accuracy(const std::vector<PointEval>& points, double eps) {
  if (points.empty()) throw ConfigError("robust_accuracy: no points");
  long robust = 0;
  for (const auto& p : points) {
    if (!p.clean_correct) continue;
    if (!p.norm || *p.norm > eps) ++robust;
  }
  return 100.0 * static_cast<double>(robust) /
         static_cast<double>(points.size());
}

std::vector<double> robustness_curve(const std::vector<PointEval>& points,
                                     const std::vector<double>& thresholds) {
  std::vector<double> curve;
  curve.reserve(thresholds.size());
  for (double eps : thresholds) curve.push_back(robust_accuracy(points, eps));
  return curve;
}

std::optional<double> mean_perturbation_norm(
    const std::vector<PointEval>& points) {
  double sum = 0.0;
  long n = 0;
  for (const auto& p : points) {
    if (p.clean_correct && p.norm) {
      sum += *p.norm;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::vector<AttackStats> attack_stats(const Matrix& robust_acc) {
  const Index attacks = robust_acc.rows();
  const Index cols = robust_acc.cols();
  if (attacks == 0 || cols == 0)
    throw ConfigError("attack_stats: empty matrix");
  const Vector best = robust_acc.colwise().minCoeff().transpose();
  std::vector<AttackStats> stats(static_cast<std::size_t>(attacks));
  for (Index a = 0; a < attacks; ++a) {
    auto& s = stats[static_cast<std::size_t>(a)];
    s.avg_robust_accuracy = robust_acc.row(a).mean();
    double gap_sum = 0.0;
    for (Index c = 0; c < cols; ++c) {
      const double gap = robust_acc(a, c) - best[c];
      gap_sum += gap;
      s.max_gap_to_best = std::max(s.max_gap_to_best, gap);
      if (gap == 0.0) ++s.times_best;
    }
    s.avg_gap_to_best = gap_sum / static_cast<double>(cols);
  }
  return stats;
}

std::vector<BudgetCurve> budget_curve(const std::vector<BudgetTrace>& runs,
                                      double eps, long max_passes) {
  std::vector<BudgetCurve> curves;
  for (const auto& run : runs) {
    if (run.traces.size() != run.clean_correct.size())
      throw ConfigError("budget_curve: trace/clean size mismatch");
    const auto n = run.traces.size();
    if (n == 0) throw ConfigError("budget_curve: no points");
    BudgetCurve curve;
    curve.attack = run.attack;
    for (int it = 1; it <= run.iterations; ++it) {
      const long mark = static_cast<long>(it) * run.passes_per_iteration;
      if (max_passes > 0 && mark > max_passes) break;
      long robust = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!run.clean_correct[i]) continue;
        bool broken = false;
        for (const auto& [pass, norm] : run.traces[i]) {
          if (pass <= mark && norm <= eps) {
            broken = true;
            break;
          }
        }
        if (!broken) ++robust;
      }
      curve.points.push_back(
          {mark, 100.0 * static_cast<double>(robust) /
                     static_cast<double>(n)});
    }
    curves.push_back(std::move(curve));
  }
  return curves;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

namespace {

json to_json(const CurveReport& r) {
  json j;
  j["schema_version"] = r.schema_version;
  j["dataset"] = r.dataset_id;
  j["model"] = r.model_id;
  j["model_hash"] = r.model_hash;
  j["attack"] = r.attack_id;
  j["seed"] = r.seed;
  j["config"] = r.config;
  j["thresholds"] = r.thresholds;
  j["robust_accuracy"] = r.robust_accuracy;
  if (r.mean_norm)
    j["mean_norm"] = *r.mean_norm;
  else
    j["mean_norm"] = nullptr;
  return j;
}

}  // namespace

void write_report_csv(const CurveReport& report, const std::string& path) {
  if (report.thresholds.size() != report.robust_accuracy.size())
    throw ConfigError("report: thresholds/accuracy size mismatch");
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << "epsilon,robust_accuracy\n";
  for (std::size_t i = 0; i < report.thresholds.size(); ++i)
    f << format_double(report.thresholds[i]) << ','
      << format_double(report.robust_accuracy[i]) << '\n';
  if (!f) throw IoError("short write to '" + path + "'");
}

void write_report_json(const CurveReport& report, const std::string& path) {
  if (report.thresholds.size() != report.robust_accuracy.size())
    throw ConfigError("report: thresholds/accuracy size mismatch");
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << to_json(report).dump(2) << '\n';
  if (!f) throw IoError("short write to '" + path + "'");
}

CurveReport read_report_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open report '" + path + "'");
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw IoError("bad JSON in '" + path + "': " + e.what());
  }
  CurveReport r;
  try {
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != 1)
      throw IoError("report schema version " +
                    std::to_string(r.schema_version) + " not supported");
    r.dataset_id = j.at("dataset").get<std::string>();
    r.model_id = j.at("model").get<std::string>();
    r.model_hash = j.at("model_hash").get<std::string>();
    r.attack_id = j.at("attack").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config = j.at("config").get<std::map<std::string, std::string>>();
    r.thresholds = j.at("thresholds").get<std::vector<double>>();
    r.robust_accuracy = j.at("robust_accuracy").get<std::vector<double>>();
    if (!j.at("mean_norm").is_null())
      r.mean_norm = j.at("mean_norm").get<double>();
  } catch (const json::exception& e) {
    throw IoError("malformed report '" + path + "': " + e.what());
  }
  return r;
}

}  // namespace fab
