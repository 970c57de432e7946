#pragma once

#include <vector>

#include "fab/geometry.hpp"
#include "fab/models.hpp"
#include "fab/types.hpp"

namespace fab {

/// A linearized decision boundary between the base class and a rival class,
/// with the lp distance of x to it.
struct BoundaryCandidate {
  int class_index = -1;
  Hyperplane plane;
  double distance = 0.0;
};

/// First-order model of the boundary f_other = f_base around x:
/// normal = grad f_other - grad f_base, offset chosen so the plane value at
/// x equals f_other(x) - f_base(x). Points with plane value > 0 are (to
/// first order) classified as `other`. The normal may come out degenerate
/// (identical gradients); callers must check and skip.
Hyperplane decision_hyperplane(const Classifier& model,
                               const Eigen::Ref<const Vector>& x, int base,
                               int other);
/// Same, built from already-evaluated logits and jacobian.
Hyperplane decision_hyperplane(const Eigen::Ref<const Vector>& logits,
                               const Matrix& jacobian,
                               const Eigen::Ref<const Vector>& x, int base,
                               int other);

/// |<w,x>+b| / ||w||_q with q dual to p. Throws on a degenerate plane.
double hyperplane_distance(const Eigen::Ref<const Vector>& x,
                           const Hyperplane& plane, Norm p);

/// The rival class whose linearized boundary is lp-closest to x, skipping
/// degenerate candidates; ties pick the smallest class index. Throws
/// NumericError when every candidate is degenerate.
BoundaryCandidate closest_class(const Classifier& model,
                                const Eigen::Ref<const Vector>& x, int base,
                                Norm p);
BoundaryCandidate closest_class(const Eigen::Ref<const Vector>& logits,
                                const Matrix& jacobian,
                                const Eigen::Ref<const Vector>& x, int base,
                                Norm p);

/// Boundary towards one fixed target class, via grad_margin (a single
/// gradient instead of the full jacobian).
Hyperplane target_hyperplane(const Classifier& model,
                             const Eigen::Ref<const Vector>& x, int base,
                             int target);

/// Rival classes ordered by decreasing logit at x (the most promising
/// targets first), truncated to k.
std::vector<int> rank_target_classes(const Classifier& model,
                                     const Eigen::Ref<const Vector>& x,
                                     int base, int k);

}  // namespace fab
