#include "fab/linearize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace fab {

Hyperplane decision_hyperplane(const Eigen::Ref<const Vector>& logits,
                               const Matrix& jacobian,
                               const Eigen::Ref<const Vector>& x, int base,
                               int other) {
  Hyperplane pi;
  pi.normal = (jacobian.row(other) - jacobian.row(base)).transpose();
  pi.offset = logits[other] - logits[base] - pi.normal.dot(x);
  return pi;
}

Hyperplane decision_hyperplane(const Classifier& model,
                               const Eigen::Ref<const Vector>& x, int base,
                               int other) {
  return decision_hyperplane(model.logits(x), model.jacobian(x), x, base,
                             other);
}

double hyperplane_distance(const Eigen::Ref<const Vector>& x,
                           const Hyperplane& plane, Norm p) {
  if (plane.degenerate())
    throw std::invalid_argument("hyperplane_distance: degenerate plane");
  return std::abs(plane.value_at(x)) / lp_dual_norm(plane.normal, p);
}

BoundaryCandidate closest_class(const Eigen::Ref<const Vector>& logits,
                                const Matrix& jacobian,
                                const Eigen::Ref<const Vector>& x, int base,
                                Norm p) {
  BoundaryCandidate best;
  best.distance = std::numeric_limits<double>::infinity();
  for (int l = 0; l < logits.size(); ++l) {
    if (l == base) continue;
    Hyperplane pi = decision_hyperplane(logits, jacobian, x, base, l);
    if (pi.degenerate()) continue;
    const double dist =
        std::abs(pi.value_at(x)) / lp_dual_norm(pi.normal, p);
    if (dist < best.distance) {
      best = {l, std::move(pi), dist};
    }
  }
  if (best.class_index < 0)
    throw NumericError("closest_class: all boundary candidates degenerate");
  return best;
}

BoundaryCandidate closest_class(const Classifier& model,
                                const Eigen::Ref<const Vector>& x, int base,
                                Norm p) {
  return closest_class(model.logits(x), model.jacobian(x), x, base, p);
}

Hyperplane target_hyperplane(const Classifier& model,
                             const Eigen::Ref<const Vector>& x, int base,
                             int target) {
  const Vector logits = model.logits(x);
  Hyperplane pi;
  pi.normal = model.grad_margin(x, target, base);
  pi.offset = logits[target] - logits[base] - pi.normal.dot(x);
  return pi;
}

std::vector<int> rank_target_classes(const Classifier& model,
                                     const Eigen::Ref<const Vector>& x,
                                     int base, int k) {
  const Vector logits = model.logits(x);
  std::vector<int> order;
  for (int l = 0; l < logits.size(); ++l)
    if (l != base) order.push_back(l);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return logits[a] > logits[b]; });
  if (k > 0 && static_cast<std::size_t>(k) < order.size()) order.resize(k);
  return order;
}

}  // namespace fab
