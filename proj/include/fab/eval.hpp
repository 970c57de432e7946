#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fab/attack.hpp"
#include "fab/types.hpp"

namespace fab {

/// What evaluation needs to know about one attacked point. Minimum-distortion
/// attacks report norms, so one run is enough to evaluate every threshold.
struct PointEval {
  bool clean_correct = false;
  std::optional<double> norm;  // perturbation norm of the found adversarial → nothing found
};

/// Attacks report clean misclassification as success with norm 0, so the
/// clean verdict can be read back off the outcome.
PointEval from_outcome(const AttackOutcome& outcome);

/// Percentage of points that are correctly classified and either survived
/// the attack or only fall to perturbations larger than eps. Clean mistakes
/// count as robustness failures at every eps; at eps = 0 this is clean
/// accuracy.
double robust_accuracy(const std::vector<PointEval>& points, double eps);

/// robust_accuracy evaluated at each threshold (non-increasing when the
/// thresholds ascend).
std::vector<double> robustness_curve(const std::vector<PointEval>& points,
                                     const std::vector<double>& thresholds);

/// Mean perturbation norm over successful attacks on correctly classified
/// points; empty when there are none.
std::optional<double> mean_perturbation_norm(
    const std::vector<PointEval>& points);

struct AttackStats {
  double avg_robust_accuracy = 0.0;
  int times_best = 0;          // columns where this attack matches the minimum
  double avg_gap_to_best = 0.0;
  double max_gap_to_best = 0.0;
};

/// Summarizes a matrix of robust accuracies, one row per attack and one
/// column per evaluation setting. "Best" is the column minimum; ties credit
/// every attack that attains it.
std::vector<AttackStats> attack_stats(const Matrix& robust_acc);

/// One attack's raw material for compute-budget comparisons.
struct BudgetTrace {
  std::string attack;
  int passes_per_iteration = 1;  // nominal rate: FAB 3, PGD and DeepFool 2
  int iterations = 0;
  std::vector<std::vector<std::pair<long, double>>> traces;  // per point
  std::vector<std::uint8_t> clean_correct;
};

struct BudgetPoint {
  long passes = 0;
  double robust_accuracy = 0.0;
};

struct BudgetCurve {
  std::string attack;
  std::vector<BudgetPoint> points;
};

/// Robust accuracy at eps as a function of forward+backward passes spent,
/// sampled at each attack's own iteration marks. max_passes > 0 truncates
/// all curves at the same budget for a fair comparison.
std::vector<BudgetCurve> budget_curve(const std::vector<BudgetTrace>& runs,
                                      double eps, long max_passes = 0);

/// Threshold sweep report with enough provenance to reproduce it.
struct CurveReport {
  int schema_version = 1;
  std::string dataset_id;
  std::string model_id;
  std::string model_hash;
  std::string attack_id;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config;
  std::vector<double> thresholds;
  std::vector<double> robust_accuracy;
  std::optional<double> mean_norm;
};

/// CSV: "epsilon,robust_accuracy" rows. JSON: the full report; doubles
/// survive a write/read round trip exactly.
void write_report_csv(const CurveReport& report, const std::string& path);
void write_report_json(const CurveReport& report, const std::string& path);
CurveReport read_report_json(const std::string& path);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

}  // namespace fab
