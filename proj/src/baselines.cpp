#include "fab/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fab/parallel.hpp"
#include "fab/rng.hpp"

namespace fab {
namespace {

void check_inputs(const Classifier& model, const Eigen::Ref<const Vector>& x,
                  int label, const BoxedRegion& box) {
  if (x.size() != model.input_dim())
    throw std::invalid_argument("attack: input dimension mismatch");
  if (label < 0 || label >= model.num_classes())
    throw std::invalid_argument("attack: label out of range");
  if (box.dim() != x.size() || !box.contains(x))
    throw std::invalid_argument("attack: point outside box");
}

// Unconstrained minimum-lp step of x onto the plane.
Vector plane_step(const Eigen::Ref<const Vector>& x, const Hyperplane& plane,
                  Norm p) {
  const double v = plane.value_at(x);
  const Vector& w = plane.normal;
  switch (p) {
    case Norm::L2:
      return x - (v / w.squaredNorm()) * w;
    case Norm::LInf:
      return x - (v / w.lpNorm<1>()) * w.cwiseSign();
    case Norm::L1: {
      Index j = 0;
      w.cwiseAbs().maxCoeff(&j);
      Vector z = x;
      z[j] -= v / w[j];
      return z;
    }
  }
  return x;
}

}  // namespace

void DeepfoolConfig::validate() const {
  if (max_iter < 1) throw ConfigError("deepfool: max_iter must be >= 1");
  if (!(overshoot >= 1.0) || !std::isfinite(overshoot))
    throw ConfigError("deepfool: overshoot must be >= 1");
}

AttackOutcome deepfool_attack(const Classifier& model,
                              const Eigen::Ref<const Vector>& x_orig,
                              int label, const DeepfoolConfig& cfg,
                              const BoxedRegion& box) {
  cfg.validate();
  check_inputs(model, x_orig, label, box);
  AttackOutcome out;

  Vector x = x_orig;
  Vector logits = model.logits(x);
  ++out.forward_passes;
  if (predicted_class(logits) != label) {
    out.success = true;
    out.adversarial = x_orig;
    out.norm = 0.0;
    out.adversarial_class = predicted_class(logits);
    out.trace.emplace_back(out.forward_passes + out.backward_passes, 0.0);
    return out;
  }

  // Accumulate unconstrained linearized steps; every candidate output is
  // the accumulated perturbation stretched by the overshoot factor and
  // clipped to the box, and the next linearization happens there.
  Vector r_total = Vector::Zero(x_orig.size());
  for (int it = 0; it < cfg.max_iter; ++it) {
    const Matrix jac = model.jacobian(x);
    ++out.backward_passes;
    const BoundaryCandidate cand = closest_class(logits, jac, x, label, cfg.p);
    r_total += plane_step(x, cand.plane, cfg.p) - x;
    x = clip_to_box(x_orig + cfg.overshoot * r_total, box);
    logits = model.logits(x);
    ++out.forward_passes;
    if (predicted_class(logits) != label) break;
  }
  if (predicted_class(logits) == label) return out;  // budget exhausted

  out.success = true;
  out.adversarial = x;
  out.norm = lp_norm(x - x_orig, cfg.p);
  out.adversarial_class = predicted_class(logits);
  out.trace.emplace_back(out.forward_passes + out.backward_passes, *out.norm);
  return out;
}

double PgdConfig::resolved_step_size() const {
  if (step_size > 0.0) return step_size;
  switch (p) {
    case Norm::L1: return eps / 2.0;
    case Norm::L2: return eps / 4.0;
    case Norm::LInf: return eps / 10.0;
  }
  return eps / 10.0;
}

void PgdConfig::validate() const {
  if (!(eps >= 0.0) || !std::isfinite(eps))
    throw ConfigError("pgd: eps must be finite and >= 0");
  if (steps < 1) throw ConfigError("pgd: steps must be >= 1");
  if (step_size < 0.0 || !std::isfinite(step_size))
    throw ConfigError("pgd: step_size must be finite and >= 0");
  if (restarts < 1) throw ConfigError("pgd: restarts must be >= 1");
  if (!(sparsity > 0.0 && sparsity <= 1.0))
    throw ConfigError("pgd: sparsity must lie in (0,1]");
}

Vector project_l1_ball_box(const Eigen::Ref<const Vector>& v,
                           const Eigen::Ref<const Vector>& center,
                           double radius, const BoxedRegion& box) {
  const Index d = v.size();
  if (center.size() != d || box.dim() != d)
    throw std::invalid_argument("project_l1_ball_box: dimension mismatch");
  if (!(radius >= 0.0) || !std::isfinite(radius))
    throw std::invalid_argument("project_l1_ball_box: bad radius");
  if (!box.contains(center))
    throw std::invalid_argument("project_l1_ball_box: center outside box");

  // Work relative to the center; every coordinate keeps the sign of y_i, so
  // the problem reduces to capped soft shrinkage of a = |y| with caps c.
  const Vector y = v - center;
  Vector a(d), c(d);
  double clipped_sum = 0.0;
  for (Index i = 0; i < d; ++i) {
    a[i] = std::abs(y[i]);
    c[i] = y[i] >= 0.0 ? box.upper[i] - center[i] : center[i] - box.lower[i];
    clipped_sum += std::min(a[i], c[i]);
  }
  double lambda = 0.0;
  if (clipped_sum > radius) {
    // phi(lambda) = sum_i clamp(a_i - lambda, 0, c_i) decreases from
    // clipped_sum to 0; find phi = radius by sweeping its breakpoints.
    std::vector<std::pair<double, double>> events;  // (lambda, slope delta)
    double slope = 0.0;
    for (Index i = 0; i < d; ++i) {
      if (a[i] <= 0.0) continue;
      const double uncap = a[i] - c[i];
      if (uncap <= 0.0)
        slope -= 1.0;  // active from lambda = 0
      else
        events.emplace_back(uncap, -1.0);
      events.emplace_back(a[i], 1.0);
    }
    std::sort(events.begin(), events.end());
    double lam = 0.0, phi = clipped_sum;
    bool found = false;
    for (const auto& [le, ds] : events) {
      const double phi_next = phi + slope * (le - lam);
      if (phi_next <= radius && slope < 0.0) {
        lambda = lam + (phi - radius) / -slope;
        found = true;
        break;
      }
      phi = phi_next;
      lam = le;
      slope += ds;
    }
    if (!found) lambda = lam;  // radius ~ 0: shrink everything away
  }
  Vector z(d);
  for (Index i = 0; i < d; ++i) {
    const double t = std::clamp(a[i] - lambda, 0.0, c[i]);
    z[i] = center[i] + (y[i] >= 0.0 ? t : -t);
  }
  return z;
}

namespace {

Vector sample_in_ball(const Eigen::Ref<const Vector>& x_orig, double eps,
                      Norm p, Rng& rng, const BoxedRegion& box) {
  const Index d = x_orig.size();
  Vector dir = Vector::Zero(d);
  switch (p) {
    case Norm::LInf:
      for (Index i = 0; i < d; ++i) dir[i] = rng.uniform(-eps, eps);
      break;
    case Norm::L2: {
      Vector v = gaussian_vector(rng, d);
      const double n = v.norm();
      const double r =
          eps * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
      if (n > 0.0) dir = v * (r / n);
      break;
    }
    case Norm::L1: {
      Vector mag(d);
      for (Index i = 0; i < d; ++i) mag[i] = rng.exponential();
      const double s = mag.sum();
      const double r =
          eps * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
      if (s > 0.0)
        for (Index i = 0; i < d; ++i)
          dir[i] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * mag[i] * (r / s);
      break;
    }
  }
  return clip_to_box(x_orig + dir, box);
}

Vector pgd_step(const Eigen::Ref<const Vector>& x,
                const Eigen::Ref<const Vector>& grad, Norm p, double step,
                double sparsity) {
  switch (p) {
    case Norm::LInf:
      return x + step * grad.cwiseSign();
    case Norm::L2: {
      const double n = grad.norm();
      if (n == 0.0) return x;
      return x + (step / n) * grad;
    }
    case Norm::L1: {
      // Sparse ascent: spend the l1 budget on the strongest coordinates.
      const Index d = x.size();
      const Index k = std::max<Index>(
          1, static_cast<Index>(
                 std::ceil(sparsity * static_cast<double>(d))));
      std::vector<Index> order(static_cast<std::size_t>(d));
      std::iota(order.begin(), order.end(), Index{0});
      std::nth_element(order.begin(), order.begin() + (k - 1), order.end(),
                       [&](Index i, Index j) {
                         return std::abs(grad[i]) > std::abs(grad[j]);
                       });
      Vector z = x;
      const double per_coord = step / static_cast<double>(k);
      for (Index r = 0; r < k; ++r) {
        const Index i = order[static_cast<std::size_t>(r)];
        if (grad[i] > 0.0)
          z[i] += per_coord;
        else if (grad[i] < 0.0)
          z[i] -= per_coord;
      }
      return z;
    }
  }
  return x;
}

Vector project_ball_box(const Eigen::Ref<const Vector>& z,
                        const Eigen::Ref<const Vector>& x_orig, double eps,
                        Norm p, const BoxedRegion& box) {
  switch (p) {
    case Norm::LInf: {
      Vector w = z.array()
                     .max(x_orig.array() - eps)
                     .min(x_orig.array() + eps)
                     .matrix();
      return clip_to_box(w, box);
    }
    case Norm::L2: {
      Vector delta = z - x_orig;
      const double n = delta.norm();
      if (n > eps && n > 0.0) delta *= eps / n;
      // x_orig lies in the box, so clipping only shrinks each coordinate
      // of delta and the point stays inside the ball.
      return clip_to_box(x_orig + delta, box);
    }
    case Norm::L1:
      return project_l1_ball_box(z, x_orig, eps, box);
  }
  return z;
}

struct PgdRun {
  int first_break = -1;  // gradient steps taken before the hit; -1 = none
  Vector hit;
  int hit_class = -1;
};

PgdRun pgd_single(const Classifier& model, Vector x,
                  const Eigen::Ref<const Vector>& x_orig, int label,
                  const PgdConfig& cfg, const BoxedRegion& box, long& fwd,
                  long& bwd) {
  const double step = cfg.resolved_step_size();
  for (int it = 0;; ++it) {
    const Vector logits = model.logits(x);
    ++fwd;
    if (predicted_class(logits) != label)
      return {it, std::move(x), predicted_class(logits)};
    if (it == cfg.steps) return {};
    const Vector grad = cfg.float32_grad
                            ? cross_entropy_grad_f32(model, x, label)
                            : cross_entropy_grad(model, x, label);
    ++bwd;
    x = project_ball_box(pgd_step(x, grad, cfg.p, step, cfg.sparsity), x_orig,
                         cfg.eps, cfg.p, box);
  }
}

}  // namespace

Vector pgd_maximize_loss(const Classifier& model,
                         const Eigen::Ref<const Vector>& x_orig, int label,
                         Norm p, double eps, double step_size, int steps,
                         const BoxedRegion& box) {
  check_inputs(model, x_orig, label, box);
  Vector x = x_orig;
  for (int it = 0; it < steps; ++it) {
    const Vector grad = cross_entropy_grad(model, x, label);
    x = project_ball_box(pgd_step(x, grad, p, step_size, 0.10), x_orig, eps,
                         p, box);
  }
  return x;
}

AttackOutcome pgd_attack(const Classifier& model,
                         const Eigen::Ref<const Vector>& x_orig, int label,
                         const PgdConfig& cfg, const BoxedRegion& box,
                         Index point_index) {
  cfg.validate();
  check_inputs(model, x_orig, label, box);
  AttackOutcome out;
  for (int r = 0; r < cfg.restarts; ++r) {
    Vector x0;
    if (r == 0) {
      x0 = x_orig;
    } else {
      Rng rng(stream_key(cfg.seed, static_cast<std::uint64_t>(point_index),
                         static_cast<std::uint64_t>(r)));
      x0 = sample_in_ball(x_orig, cfg.eps, cfg.p, rng, box);
    }
    const PgdRun run = pgd_single(model, std::move(x0), x_orig, label, cfg,
                                  box, out.forward_passes,
                                  out.backward_passes);
    if (run.first_break >= 0) {
      out.success = true;
      out.adversarial = run.hit;
      out.norm = lp_norm(run.hit - x_orig, cfg.p);
      out.adversarial_class = run.hit_class;
      out.trace.emplace_back(out.forward_passes + out.backward_passes,
                             *out.norm);
      return out;
    }
  }
  return out;
}

const std::vector<int>& default_divisors() {
  static const std::vector<int> grid = {1, 2, 4, 10, 25, 75};
  return grid;
}

std::vector<GridRow> stepsize_grid(const Classifier& model,
                                   const Matrix& points,
                                   const std::vector<int>& labels,
                                   const BoxedRegion& box, Norm p,
                                   const std::vector<double>& eps_list,
                                   const std::vector<int>& divisors,
                                   int steps, std::uint64_t seed,
                                   int threads) {
  if (eps_list.empty() || divisors.empty())
    throw ConfigError("stepsize_grid: need at least one eps and one divisor");
  for (double e : eps_list)
    if (!(e > 0.0) || !std::isfinite(e))
      throw ConfigError("stepsize_grid: eps values must be positive");
  for (int dv : divisors)
    if (dv < 1) throw ConfigError("stepsize_grid: divisors must be >= 1");
  if (steps < 1) throw ConfigError("stepsize_grid: steps must be >= 1");
  const auto n = static_cast<std::size_t>(points.rows());
  if (labels.size() != n)
    throw ConfigError("stepsize_grid: points/labels size mismatch");
  if (n == 0) throw ConfigError("stepsize_grid: empty point set");

  // first_break[(e, dv)][i]: gradient steps before point i is hit (steps+1
  // if never).
  const std::size_t cells = eps_list.size() * divisors.size();
  std::vector<std::vector<int>> first_break(
      cells, std::vector<int>(n, steps + 1));
  parallel_for(n, threads, [&](std::size_t i) {
    const Vector x = points.row(static_cast<Index>(i)).transpose();
    const int y = labels[i];
    for (std::size_t e = 0; e < eps_list.size(); ++e) {
      for (std::size_t dv = 0; dv < divisors.size(); ++dv) {
        PgdConfig cfg;
        cfg.p = p;
        cfg.eps = eps_list[e];
        cfg.steps = steps;
        cfg.step_size = eps_list[e] / static_cast<double>(divisors[dv]);
        cfg.seed = seed;
        long f = 0, b = 0;
        const PgdRun run =
            pgd_single(model, x, x, y, cfg, box, f, b);
        if (run.first_break >= 0)
          first_break[e * divisors.size() + dv][i] = run.first_break;
      }
    }
  });

  std::vector<GridRow> rows;
  rows.reserve(cells * static_cast<std::size_t>(steps));
  for (std::size_t e = 0; e < eps_list.size(); ++e) {
    for (std::size_t dv = 0; dv < divisors.size(); ++dv) {
      const auto& fb = first_break[e * divisors.size() + dv];
      for (int k = 1; k <= steps; ++k) {
        long surviving = 0;
        for (std::size_t i = 0; i < n; ++i)
          if (fb[i] > k) ++surviving;
        rows.push_back({eps_list[e], divisors[dv], k,
                        100.0 * static_cast<double>(surviving) /
                            static_cast<double>(n)});
      }
    }
  }
  return rows;
}

}  // namespace fab
