#pragma once

#include <cstdint>
#include <vector>

#include "fab/attack.hpp"
#include "fab/geometry.hpp"
#include "fab/models.hpp"
#include "fab/types.hpp"

namespace fab {

struct DeepfoolConfig {
  Norm p = Norm::L2;
  int max_iter = 50;
  double overshoot = 1.02;

  void validate() const;
};

/// Greedy boundary walk: per iteration add the unconstrained projection
/// onto the closest linearized boundary to an accumulated perturbation;
/// the iterate is the accumulated perturbation stretched by `overshoot`
/// and clipped to the box, and the walk stops at the first iterate that
/// misclassifies. 1 forward + 1 backward per iteration, plus the initial
/// classification check.
AttackOutcome deepfool_attack(const Classifier& model,
                              const Eigen::Ref<const Vector>& x_orig,
                              int label, const DeepfoolConfig& cfg,
                              const BoxedRegion& box);

struct PgdConfig {
  Norm p = Norm::LInf;
  double eps = 0.1;       // radius of the lp ball around the original
  int steps = 150;
  double step_size = 0.0; // 0 picks eps/10 (linf), eps/4 (l2), eps/2 (l1)
  int restarts = 1;
  /// l1 only: fraction of coordinates the sparse gradient step touches.
  double sparsity = 0.10;
  std::uint64_t seed = 0;
  /// Run the loss gradient chain in float32. Exposes gradient masking:
  /// saturated softmax kills the gradient exactly at that precision.
  bool float32_grad = false;

  double resolved_step_size() const;
  void validate() const;
};

/// Projected gradient ascent on cross-entropy inside ball ∩ box. A point
/// counts as attacked as soon as any iterate misclassifies; the first hit is
/// returned. 1 forward + 1 backward per iteration; iterations after a hit
/// are skipped. Restart r of point i draws from stream (seed, i, r).
AttackOutcome pgd_attack(const Classifier& model,
                         const Eigen::Ref<const Vector>& x_orig, int label,
                         const PgdConfig& cfg, const BoxedRegion& box,
                         Index point_index = 0);

/// Exact projection of v onto {z : ||z - center||_1 <= radius} ∩ box
/// (Euclidean projection, computed by a sorted-threshold sweep on the
/// box-capped soft shrinkage).
Vector project_l1_ball_box(const Eigen::Ref<const Vector>& v,
                           const Eigen::Ref<const Vector>& center,
                           double radius, const BoxedRegion& box);

/// Fixed-step PGD ascent on cross-entropy without stopping checks, staying
/// inside ball ∩ box throughout. The inner loop of adversarial training.
Vector pgd_maximize_loss(const Classifier& model,
                         const Eigen::Ref<const Vector>& x_orig, int label,
                         Norm p, double eps, double step_size, int steps,
                         const BoxedRegion& box);

struct GridRow {
  double eps = 0.0;
  int divisor = 1;
  int iteration = 0;        // 1-based
  double robust_accuracy = 0.0;  // percent
};

/// PGD step-size sweep: for every (eps, divisor) pair runs PGD with step
/// size eps/divisor and reports robust accuracy after each iteration
/// (non-increasing down each run). Output has exactly
/// |eps_list| * |divisors| * steps rows, ordered by (eps, divisor,
/// iteration).
std::vector<GridRow> stepsize_grid(const Classifier& model,
                                   const Matrix& points,
                                   const std::vector<int>& labels,
                                   const BoxedRegion& box, Norm p,
                                   const std::vector<double>& eps_list,
                                   const std::vector<int>& divisors,
                                   int steps, std::uint64_t seed,
                                   int threads = 1);

/// The divisor grid used by default: {1, 2, 4, 10, 25, 75}.
const std::vector<int>& default_divisors();

}  // namespace fab
