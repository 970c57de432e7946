#pragma once

#include "fab/types.hpp"

namespace fab {

/// Affine decision boundary {z : <normal, z> + offset = 0}.
struct Hyperplane {
  Vector normal;
  double offset = 0.0;

  double value_at(const Eigen::Ref<const Vector>& x) const {
    return normal.dot(x) + offset;
  }
  /// A zero normal describes no plane at all; callers must skip these.
  bool degenerate() const { return normal.isZero(0.0); }
};

/// Axis-aligned box {z : lower <= z <= upper} (componentwise).
struct BoxedRegion {
  Vector lower;
  Vector upper;

  static BoxedRegion unit(Index d) { return cube(d, 0.0, 1.0); }
  static BoxedRegion cube(Index d, double lo, double hi) {
    return {Vector::Constant(d, lo), Vector::Constant(d, hi)};
  }
  Index dim() const { return lower.size(); }
  bool contains(const Eigen::Ref<const Vector>& x, double tol = 0.0) const {
    return (x.array() >= lower.array() - tol).all() &&
           (x.array() <= upper.array() + tol).all();
  }
};

struct ProjectionResult {
  Vector point;
  /// True when the plane intersects the box and `point` minimizes
  /// ||z - x||_p over that intersection. False when the intersection is
  /// empty; `point` is then the best-effort box corner of
  /// closest_box_corner().
  bool feasible = true;
};

Vector clip_to_box(const Eigen::Ref<const Vector>& x, const BoxedRegion& box);

/// The box corner pushed as far as possible towards the (unreachable) plane:
/// with rho = sign(<w,x>+b), z_i = lower_i if rho*w_i > 0, upper_i if
/// rho*w_i < 0, and x_i where w_i = 0.
Vector closest_box_corner(const Eigen::Ref<const Vector>& x,
                          const Hyperplane& plane, const BoxedRegion& box);

/// Exact projections of x onto plane ∩ box, minimizing ||z - x||_p.
///
/// All three run in O(d log d): the l2 and linf cases sweep the sorted
/// breakpoints of a scalar monotone piecewise-linear function and pick its
/// root closest to zero (so x is moved as little as possible); the l1 case
/// spends perturbation budget greedily on coordinates with the largest
/// |w_i|. Coordinates with w_i = 0 are never moved, and in the linf case
/// coordinates keep their slack (z_i need not sit at x_i +- t when a smaller
/// move already suffices... the tie is broken towards z_i = x_i).
///
/// Preconditions (checked): x inside the box, a non-degenerate plane, and
/// box bounds with lower <= upper. Violations throw std::invalid_argument.
ProjectionResult project_l1(const Eigen::Ref<const Vector>& x,
                            const Hyperplane& plane, const BoxedRegion& box);
ProjectionResult project_l2(const Eigen::Ref<const Vector>& x,
                            const Hyperplane& plane, const BoxedRegion& box);
ProjectionResult project_linf(const Eigen::Ref<const Vector>& x,
                              const Hyperplane& plane, const BoxedRegion& box);

/// Dispatches on p.
ProjectionResult proj_p(const Eigen::Ref<const Vector>& x,
                        const Hyperplane& plane, const BoxedRegion& box,
                        Norm p);

}  // namespace fab
