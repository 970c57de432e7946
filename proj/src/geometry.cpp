#include "fab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace fab {
namespace {

void check_inputs(const Eigen::Ref<const Vector>& x, const Hyperplane& plane,
                  const BoxedRegion& box) {
  const Index d = x.size();
  if (plane.normal.size() != d || box.lower.size() != d ||
      box.upper.size() != d) {
    throw std::invalid_argument("projection: dimension mismatch");
  }
  if ((box.lower.array() > box.upper.array()).any()) {
    throw std::invalid_argument("projection: box has lower > upper");
  }
  if (plane.degenerate()) {
    throw std::invalid_argument("projection: degenerate hyperplane");
  }
  if (!box.contains(x)) {
    throw std::invalid_argument("projection: point outside box");
  }
}

ProjectionResult infeasible(const Eigen::Ref<const Vector>& x,
                            const Hyperplane& plane, const BoxedRegion& box) {
  return {closest_box_corner(x, plane, box), false};
}

double median3(double a, double b, double c) {
  return std::max(std::min(a, b), std::min(std::max(a, b), c));
}

// Scratch buffers reused across calls. The attack loop projects thousands of
// times at a fixed dimension, so growing these once and keeping them warm
// beats a fresh allocation (and its page faults) per call.
std::vector<std::pair<double, double>>& reach_scratch() {
  thread_local std::vector<std::pair<double, double>> buf;
  return buf;
}

struct SpendEntry {
  double weight;  // |w_i|
  double spend;   // |w_i| * cap_i, plane-value decrease from filling i
  Index idx;
};

std::vector<SpendEntry>& spend_scratch() {
  thread_local std::vector<SpendEntry> buf;
  return buf;
}

// Smallest t >= 0 with sum_i c_i * min(t, b_i) >= v0 for entries (c_i, b_i),
// c_i > 0, b_i > 0, v0 > 0. The reach sum is concave piecewise linear in t,
// so the root sits between two breakpoints; quickselect partitions the
// entries around a pivot breakpoint and running aggregates decide which side
// holds the crossing, for expected linear total work. Falls back to a sorted
// sweep of the remaining window if the pivots degenerate. Reorders entries.
// If even the full reach falls short of v0 (possible only through rounding,
// the caller checks capacity first) the largest breakpoint is returned.
double reach_root(std::vector<std::pair<double, double>>& e, double v0) {
  std::size_t lo = 0, hi = e.size();
  double cb_below = 0.0;  // sum c*b over breakpoints left of the window
  double c_above = 0.0;   // sum c over breakpoints right of the window
  double b_max = 0.0;
  for (const auto& [c, b] : e) b_max = std::max(b_max, b);

  int rounds = 0;
  while (lo < hi) {
    if (++rounds > 64) {
      std::sort(e.begin() + static_cast<std::ptrdiff_t>(lo),
                e.begin() + static_cast<std::ptrdiff_t>(hi),
                [](const auto& u, const auto& v) { return u.second < v.second; });
      double cum_cb = 0.0;
      double c_rem = c_above;
      for (std::size_t k = lo; k < hi; ++k) c_rem += e[k].first;
      for (std::size_t k = lo; k < hi; ++k) {
        const double t = (v0 - cb_below - cum_cb) / c_rem;
        if (t <= e[k].second) return t;
        cum_cb += e[k].first * e[k].second;
        c_rem -= e[k].first;
      }
      if (c_rem > 0.0) return (v0 - cb_below - cum_cb) / c_rem;
      return b_max;
    }

    const double p = median3(e[lo].second, e[(lo + hi) / 2].second,
                             e[hi - 1].second);
    // Three-way partition of the window by breakpoint: [lo,lt) < p,
    // [lt,gt) == p, [gt,hi) > p.
    std::size_t lt = lo, gt = hi, i = lo;
    while (i < gt) {
      if (e[i].second < p)
        std::swap(e[i++], e[lt++]);
      else if (e[i].second > p)
        std::swap(e[i], e[--gt]);
      else
        ++i;
    }
    double cb_le = 0.0, c_ge = 0.0;
    for (std::size_t k = lo; k < gt; ++k) cb_le += e[k].first * e[k].second;
    for (std::size_t k = lt; k < hi; ++k) c_ge += e[k].first;
    double c_gt = c_ge;
    for (std::size_t k = lt; k < gt; ++k) c_gt -= e[k].first;

    const double reach_p = cb_below + cb_le + p * (c_gt + c_above);
    if (reach_p >= v0) {  // crossing at or before p
      hi = lt;
      c_above += c_ge;
    } else {  // crossing strictly after p, everything <= p saturates
      lo = gt;
      cb_below += cb_le;
    }
  }
  if (c_above > 0.0) return (v0 - cb_below) / c_above;
  return b_max;
}

}  // namespace

Vector clip_to_box(const Eigen::Ref<const Vector>& x, const BoxedRegion& box) {
  return x.cwiseMax(box.lower).cwiseMin(box.upper);
}

Vector closest_box_corner(const Eigen::Ref<const Vector>& x,
                          const Hyperplane& plane, const BoxedRegion& box) {
  const double rho = plane.value_at(x);
  if (rho == 0.0) return x;
  Vector z = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double rw = rho * plane.normal[i];
    if (rw > 0)
      z[i] = box.lower[i];
    else if (rw < 0)
      z[i] = box.upper[i];
  }
  return z;
}

// All three projectors share the same setup: flip the plane's sign so its
// value at x is positive (s below), so moving "towards" the plane always
// means decreasing <w,z>+b, and cap_i = how far z_i may travel in that
// direction before hitting the box. A single pass builds the per-coordinate
// entries and the total capacity sum_i |w_i|*cap_i; if even spending every
// cap cannot cancel the plane value the box side is unreachable and the
// closest corner is returned with feasible=false.

ProjectionResult project_l2(const Eigen::Ref<const Vector>& x,
                            const Hyperplane& plane, const BoxedRegion& box) {
  check_inputs(x, plane, box);
  const double v0 = plane.value_at(x);
  if (v0 == 0.0) return {x, true};
  const double s = v0 > 0 ? 1.0 : -1.0;
  const double value = std::abs(v0);

  // Walking x - lambda*w decreases the plane value with slope w_i^2 per
  // coordinate until that coordinate saturates at lambda = cap_i/|w_i|.
  auto& events = reach_scratch();
  events.clear();
  double capacity = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double wi = s * plane.normal[i];
    if (wi == 0.0) continue;
    const double cap = wi > 0 ? x[i] - box.lower[i] : box.upper[i] - x[i];
    if (cap <= 0.0) continue;
    const double aw = std::abs(wi);
    capacity += aw * cap;
    events.emplace_back(wi * wi, cap / aw);
  }
  if (capacity < value) return infeasible(x, plane, box);

  const double lam_star = reach_root(events, value);
  Vector z = clip_to_box(x - (lam_star * s) * plane.normal, box);
  return {std::move(z), true};
}

ProjectionResult project_linf(const Eigen::Ref<const Vector>& x,
                              const Hyperplane& plane, const BoxedRegion& box) {
  check_inputs(x, plane, box);
  const double v0 = plane.value_at(x);
  if (v0 == 0.0) return {x, true};
  const double s = v0 > 0 ? 1.0 : -1.0;
  const double value = std::abs(v0);

  // With ||z-x||_inf <= t every coordinate moves at most t against its
  // weight, buying |w_i| * min(t, cap_i) of decrease.
  auto& events = reach_scratch();
  events.clear();
  double capacity = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double wi = s * plane.normal[i];
    if (wi == 0.0) continue;
    const double cap = wi > 0 ? x[i] - box.lower[i] : box.upper[i] - x[i];
    if (cap <= 0.0) continue;
    const double aw = std::abs(wi);
    capacity += aw * cap;
    events.emplace_back(aw, cap);
  }
  if (capacity < value) return infeasible(x, plane, box);

  const double t_star = reach_root(events, value);
  // At t* the budget is consumed exactly: every coordinate with w_i != 0
  // moves by min(t*, cap_i) against its weight; w_i = 0 coordinates stay.
  Vector z = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double wi = s * plane.normal[i];
    if (wi > 0)
      z[i] = x[i] - std::min(t_star, x[i] - box.lower[i]);
    else if (wi < 0)
      z[i] = x[i] + std::min(t_star, box.upper[i] - x[i]);
  }
  return {std::move(z), true};
}

ProjectionResult project_l1(const Eigen::Ref<const Vector>& x,
                            const Hyperplane& plane, const BoxedRegion& box) {
  check_inputs(x, plane, box);
  const double v0 = plane.value_at(x);
  if (v0 == 0.0) return {x, true};
  const double s = v0 > 0 ? 1.0 : -1.0;
  const double value = std::abs(v0);

  auto& ent = spend_scratch();
  ent.clear();
  double capacity = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double wi = s * plane.normal[i];
    if (wi == 0.0) continue;
    const double cap = wi > 0 ? x[i] - box.lower[i] : box.upper[i] - x[i];
    if (cap <= 0.0) continue;
    const double aw = std::abs(wi);
    capacity += aw * cap;
    ent.push_back({aw, aw * cap, i});
  }
  if (capacity < value) return infeasible(x, plane, box);

  // Each unit of l1 budget spent on coordinate i buys a decrease of |w_i|,
  // so coordinates are filled to their box face in decreasing-weight order
  // (ties to the smaller index) until the plane value is cancelled, with one
  // partial fill at the boundary weight. Quickselect finds the boundary
  // without sorting: the window [lo,hi) narrows around it and everything
  // partitioned left of the window is known to fill completely.
  Vector z = x;
  auto fill_face = [&](const SpendEntry& se) {
    z[se.idx] = s * plane.normal[se.idx] > 0 ? box.lower[se.idx]
                                             : box.upper[se.idx];
  };
  auto fill_partial = [&](const SpendEntry& se, double rem) {
    const double sign = s * plane.normal[se.idx] > 0 ? 1.0 : -1.0;
    z[se.idx] = x[se.idx] - sign * (rem / se.weight);
  };
  auto by_index = [](const SpendEntry& a, const SpendEntry& b) {
    return a.idx < b.idx;
  };
  auto greedy_order = [](const SpendEntry& a, const SpendEntry& b) {
    return a.weight > b.weight || (a.weight == b.weight && a.idx < b.idx);
  };

  std::size_t lo = 0, hi = ent.size();
  double spent = 0.0;  // spend of entries in [0, lo), all filled completely
  int rounds = 0;
  while (lo < hi) {
    if (++rounds > 64) {
      // Pathological pivots: sort the window and finish greedily.
      std::sort(ent.begin() + static_cast<std::ptrdiff_t>(lo),
                ent.begin() + static_cast<std::ptrdiff_t>(hi), greedy_order);
      for (std::size_t k = lo; k < hi; ++k) {
        if (spent + ent[k].spend >= value) {
          for (std::size_t j = 0; j < k; ++j) fill_face(ent[j]);
          fill_partial(ent[k], value - spent);
          return {std::move(z), true};
        }
        spent += ent[k].spend;
      }
      lo = hi;
      break;
    }

    const double p = median3(ent[lo].weight, ent[(lo + hi) / 2].weight,
                             ent[hi - 1].weight);
    // Three-way partition by weight, heaviest first: [lo,lt) > p,
    // [lt,gt) == p, [gt,hi) < p.
    std::size_t lt = lo, gt = hi, i = lo;
    while (i < gt) {
      if (ent[i].weight > p)
        std::swap(ent[i++], ent[lt++]);
      else if (ent[i].weight < p)
        std::swap(ent[i], ent[--gt]);
      else
        ++i;
    }
    double spend_gt = 0.0, spend_eq = 0.0;
    for (std::size_t k = lo; k < lt; ++k) spend_gt += ent[k].spend;
    for (std::size_t k = lt; k < gt; ++k) spend_eq += ent[k].spend;

    if (spent + spend_gt >= value) {
      hi = lt;  // boundary weight is above p
    } else if (spent + spend_gt + spend_eq >= value) {
      // Boundary falls inside the equal-weight class: fill it in index
      // order so ties keep going to the smaller index.
      std::sort(ent.begin() + static_cast<std::ptrdiff_t>(lt),
                ent.begin() + static_cast<std::ptrdiff_t>(gt), by_index);
      for (std::size_t j = 0; j < lt; ++j) fill_face(ent[j]);
      double rem = value - (spent + spend_gt);
      for (std::size_t k = lt; k < gt; ++k) {
        if (ent[k].spend >= rem) {
          fill_partial(ent[k], rem);
          return {std::move(z), true};
        }
        fill_face(ent[k]);
        rem -= ent[k].spend;
      }
      return {std::move(z), true};  // consumed by rounding inside the class
    } else {
      spent += spend_gt + spend_eq;
      lo = gt;  // boundary weight is below p
    }
  }
  // Capacity check passed, so running out of entries can only be rounding
  // noise at the far corner: fill everything decided so far.
  for (std::size_t j = 0; j < lo; ++j) fill_face(ent[j]);
  return {std::move(z), true};
}

ProjectionResult proj_p(const Eigen::Ref<const Vector>& x,
                        const Hyperplane& plane, const BoxedRegion& box,
                        Norm p) {
  switch (p) {
    case Norm::L1: return project_l1(x, plane, box);
    case Norm::L2: return project_l2(x, plane, box);
    case Norm::LInf: return project_linf(x, plane, box);
  }
  throw std::invalid_argument("proj_p: bad norm");
}

}  // namespace fab
