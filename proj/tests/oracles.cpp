#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace fab::oracle {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr Index kMaxEnumDim = 12;

void check_enum_dim(Index d) {
  if (d > kMaxEnumDim)
    throw std::invalid_argument("oracle: enumeration limited to d <= 12");
}

bool plane_meets_box(const Hyperplane& plane, const BoxedRegion& box) {
  double gmin = plane.offset, gmax = plane.offset;
  for (Index i = 0; i < box.dim(); ++i) {
    const double a = plane.normal[i] * box.lower[i];
    const double b = plane.normal[i] * box.upper[i];
    gmin += std::min(a, b);
    gmax += std::max(a, b);
  }
  return gmin <= 0.0 && gmax >= 0.0;
}

double residual_tol(const Hyperplane& plane) {
  return 1e-6 * (1.0 + std::abs(plane.offset) + plane.normal.norm());
}

double min_l1(const Eigen::Ref<const Vector>& x, const Hyperplane& plane,
              const BoxedRegion& box) {
  const Index d = x.size();
  double best = kInf;
  // A vertex of plane ∩ box within one linearity cell of the objective has
  // at most one coordinate away from {l_i, x_i, u_i}; enumerate which one.
  std::vector<Index> others;
  for (Index j = 0; j < d; ++j) {
    if (plane.normal[j] == 0.0) continue;
    others.clear();
    for (Index i = 0; i < d; ++i)
      if (i != j) others.push_back(i);
    long patterns = 1;
    for (std::size_t k = 0; k < others.size(); ++k) patterns *= 3;
    for (long pat = 0; pat < patterns; ++pat) {
      double c = -plane.offset;
      double dist = 0.0;
      long code = pat;
      for (Index i : others) {
        const int digit = static_cast<int>(code % 3);
        code /= 3;
        const double zi =
            digit == 0 ? box.lower[i] : (digit == 1 ? x[i] : box.upper[i]);
        c -= plane.normal[i] * zi;
        dist += std::abs(zi - x[i]);
      }
      const double zj = c / plane.normal[j];
      if (zj < box.lower[j] - 1e-9 || zj > box.upper[j] + 1e-9) continue;
      dist += std::abs(std::clamp(zj, box.lower[j], box.upper[j]) - x[j]);
      best = std::min(best, dist);
    }
  }
  return best;
}

double min_linf(const Eigen::Ref<const Vector>& x, const Hyperplane& plane,
                const BoxedRegion& box) {
  const Index d = x.size();
  const auto reachable = [&](double t) {
    double gmin = plane.offset, gmax = plane.offset;
    for (Index i = 0; i < d; ++i) {
      const double lo = std::max(box.lower[i], x[i] - t);
      const double hi = std::min(box.upper[i], x[i] + t);
      const double a = plane.normal[i] * lo;
      const double b = plane.normal[i] * hi;
      gmin += std::min(a, b);
      gmax += std::max(a, b);
    }
    return gmin <= 0.0 && gmax >= 0.0;
  };
  if (reachable(0.0)) return 0.0;
  double lo = 0.0;
  double hi = 0.0;
  for (Index i = 0; i < d; ++i)
    hi = std::max(hi, std::max(x[i] - box.lower[i], box.upper[i] - x[i]));
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (reachable(mid))
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

}  // namespace

Vector qp_enum_point(const Eigen::Ref<const Vector>& target,
                     const Hyperplane& plane, const BoxedRegion& box) {
  const Index d = target.size();
  check_enum_dim(d);
  long patterns = 1;
  for (Index i = 0; i < d; ++i) patterns *= 3;

  Vector best;
  double best_d2 = kInf;
  const double tol = residual_tol(plane);
  std::vector<Index> free_idx;
  Vector z(d);
  for (long pat = 0; pat < patterns; ++pat) {
    free_idx.clear();
    double c = -plane.offset;
    long code = pat;
    for (Index i = 0; i < d; ++i) {
      const int digit = static_cast<int>(code % 3);
      code /= 3;
      if (digit == 0) {
        free_idx.push_back(i);
      } else {
        z[i] = digit == 1 ? box.lower[i] : box.upper[i];
        c -= plane.normal[i] * z[i];
      }
    }
    double sw2 = 0.0;
    double swt = 0.0;
    for (Index i : free_idx) {
      sw2 += plane.normal[i] * plane.normal[i];
      swt += plane.normal[i] * target[i];
    }
    bool ok = true;
    if (sw2 == 0.0) {
      if (std::abs(c) > tol) ok = false;
      for (Index i : free_idx) z[i] = std::clamp(target[i], box.lower[i], box.upper[i]);
    } else {
      const double lambda = (swt - c) / sw2;
      for (Index i : free_idx) {
        const double zi = target[i] - lambda * plane.normal[i];
        if (zi < box.lower[i] - 1e-9 || zi > box.upper[i] + 1e-9) {
          ok = false;
          break;
        }
        z[i] = std::clamp(zi, box.lower[i], box.upper[i]);
      }
    }
    if (!ok) continue;
    if (std::abs(plane.value_at(z)) > tol) continue;
    const double d2 = (z - target).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = z;
    }
  }
  return best;
}

Projection brute_force_project(const Eigen::Ref<const Vector>& x,
                               const Hyperplane& plane,
                               const BoxedRegion& box, Norm p) {
  check_enum_dim(x.size());
  if (!plane_meets_box(plane, box)) return {false, 0.0};
  switch (p) {
    case Norm::L1:
      return {true, min_l1(x, plane, box)};
    case Norm::L2: {
      const Vector z = qp_enum_point(x, plane, box);
      return {true, (z - x).norm()};
    }
    case Norm::LInf:
      return {true, min_linf(x, plane, box)};
  }
  return {false, 0.0};
}

Vector brute_force_l1_ball_box(const Eigen::Ref<const Vector>& v,
                               const Eigen::Ref<const Vector>& center,
                               double radius, const BoxedRegion& box) {
  const Vector clipped = clip_to_box(v, box);
  if ((clipped - center).lpNorm<1>() <= radius) return clipped;

  // The ball constraint is active and the solution keeps the sign pattern
  // of v - center, so it solves an equality-constrained QP over a tightened
  // box: sum_i s_i (z_i - c_i) = radius with z_i between c_i and the box
  // face in the direction of v.
  const Index d = v.size();
  const Vector y = v - center;
  Hyperplane plane;
  plane.normal.resize(d);
  BoxedRegion tight;
  tight.lower.resize(d);
  tight.upper.resize(d);
  double offset = -radius;
  for (Index i = 0; i < d; ++i) {
    const double s = y[i] >= 0.0 ? 1.0 : -1.0;
    plane.normal[i] = s;
    offset -= s * center[i];
    tight.lower[i] = y[i] >= 0.0 ? center[i] : box.lower[i];
    tight.upper[i] = y[i] >= 0.0 ? box.upper[i] : center[i];
  }
  plane.offset = offset;
  return qp_enum_point(v, plane, tight);
}

}  // namespace fab::oracle
