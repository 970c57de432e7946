#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "fab/geometry.hpp"
#include "fab/linearize.hpp"
#include "fab/models.hpp"
#include "fab/rng.hpp"
#include "fab/types.hpp"

namespace fab {

struct Ablation {
  bool disable_backward = false;      // skip the beta pull towards the original
  bool disable_bias = false;          // force alpha = 0 in the combined step
  bool disable_final_search = false;  // skip the closing boundary search
};

struct AttackConfig {
  Norm p = Norm::LInf;
  int n_iter = 100;
  int n_restarts = 1;
  double alpha_max = 0.1;
  double beta = 0.9;
  double eta = 1.05;
  /// Cap on the restart sampling radius; restarts start on the p-sphere of
  /// radius min(best norm so far, eps_sampling)/2 around the original.
  /// 0 picks a per-norm default (0.15 linf, 2.0 l2, 40.0 l1).
  double eps_sampling = 0.0;
  int final_search_steps = 3;
  std::uint64_t seed = 0;
  Ablation ablation;

  double sampling_radius() const;
  void validate() const;  // throws ConfigError
};

struct AttackOutcome {
  std::optional<Vector> adversarial;
  std::optional<double> norm;
  bool success = false;
  std::optional<int> adversarial_class;
  long forward_passes = 0;
  long backward_passes = 0;
  /// (total passes so far, best norm so far), appended on every improvement.
  std::vector<std::pair<long, double>> trace;
};

/// min(||d|| / (||d|| + ||d_orig||), alpha_max); 0 when both norms vanish.
double alpha_combination(double delta_norm, double delta_orig_norm,
                         double alpha_max);

/// One outer step: project the iterate and the original onto the candidate
/// boundary, overshoot both by eta, combine with the alpha bias towards the
/// original, clip to the box. When the plane misses the box entirely both
/// projections fall back to the same closest corner.
Vector biased_step(const Eigen::Ref<const Vector>& x_iter,
                   const Eigen::Ref<const Vector>& x_orig,
                   const Hyperplane& plane, const BoxedRegion& box,
                   const AttackConfig& cfg);

/// (1-beta) x_orig + beta x_adv.
Vector backward_step(const Eigen::Ref<const Vector>& x_orig,
                     const Eigen::Ref<const Vector>& x_adv, double beta);

/// Secant search on the margin max_{l != base} f_l - f_base along the
/// segment [x_orig, x_out]. x_out must be misclassified, x_orig must not
/// be. Returns a misclassified point no farther from x_orig than x_out.
Vector final_search(const Classifier& model,
                    const Eigen::Ref<const Vector>& x_orig,
                    const Eigen::Ref<const Vector>& x_out, int base,
                    int steps);

/// A point at lp distance `radius` from x_orig (before box clipping).
Vector sample_restart(const Eigen::Ref<const Vector>& x_orig, double radius,
                      Norm p, Rng& rng, const BoxedRegion& box);

/// Minimum-distortion attack: per iteration, linearize the decision
/// boundary of the closest rival class, step onto it, and pull back towards
/// the original once misclassification is found. Restarts are seeded by
/// (cfg.seed, point_index, restart), so results do not depend on how points
/// are scheduled across threads.
///
/// Pass ledger: 2 forward + 1 backward per iteration, plus
/// final_search_steps forwards once at the end when an adversarial example
/// was found. A clean point that is already misclassified returns success
/// with norm 0 after a single forward pass.
AttackOutcome fab_attack(const Classifier& model,
                         const Eigen::Ref<const Vector>& x_orig, int label,
                         const AttackConfig& cfg, const BoxedRegion& box,
                         Index point_index = 0);

/// Targeted variant: one restart per entry of `targets`, each using the
/// fixed target-class boundary (grad_margin, so still one backward per
/// iteration). Any misclassification still counts as a hit.
AttackOutcome fab_attack_targeted(const Classifier& model,
                                  const Eigen::Ref<const Vector>& x_orig,
                                  int label, const AttackConfig& cfg,
                                  const std::vector<int>& targets,
                                  const BoxedRegion& box,
                                  Index point_index = 0);

}  // namespace fab
