#include "fab/attack.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fab {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// max_{l != base} f_l - f_base: >= 0 iff some rival logit ties or wins.
double margin(const Eigen::Ref<const Vector>& logits, int base) {
  double best = -kInf;
  for (Index l = 0; l < logits.size(); ++l)
    if (static_cast<int>(l) != base) best = std::max(best, logits[l]);
  return best - logits[base];
}

void check_attack_inputs(const Classifier& model,
                         const Eigen::Ref<const Vector>& x, int label,
                         const BoxedRegion& box) {
  if (x.size() != model.input_dim())
    throw std::invalid_argument("attack: input dimension mismatch");
  if (label < 0 || label >= model.num_classes())
    throw std::invalid_argument("attack: label out of range");
  if (box.dim() != x.size())
    throw std::invalid_argument("attack: box dimension mismatch");
  if (!box.contains(x))
    throw std::invalid_argument("attack: point outside box");
}

struct AdvPoint {
  Vector x;
  double g = 0.0;  // margin at x, >= 0
  int cls = -1;
};

// Regula falsi between a correctly classified and a misclassified end of
// the segment. Every accepted update moves the adversarial end towards
// x_clean, so distance to the original can only shrink.
AdvPoint secant_search(const Classifier& model, Vector x_clean,
                       double g_clean, AdvPoint adv, int base, int steps,
                       double margin_floor, long& forwards) {
  for (int s = 0; s < steps; ++s) {
    const double denom = adv.g - g_clean;
    // Nudge the interpolated root towards the misclassified side; with an
    // exactly affine margin the unbiased probe lands on the tie point,
    // which does not count as adversarial, and the search would stall one
    // overshoot short of the boundary. The nudge is sized so the probe's
    // expected margin (xi * adv.g for an affine margin) stays above the
    // evaluation noise of the logits; once the bracket has closed onto the
    // boundary it saturates at 1/2 and further probes re-test points next
    // to the adversarial end. The step budget is spent in full either way,
    // which keeps the reported pass counts a function of the configuration
    // alone.
    const double xi = std::min(0.5, std::max(1e-12, margin_floor / adv.g));
    const double t = denom > 0.0 ? (adv.g / denom) * (1.0 - xi) : 0.0;
    Vector x_new = adv.x - t * (adv.x - x_clean);
    const Vector logits = model.logits(x_new);
    ++forwards;
    const double g_new = margin(logits, base);
    if (predicted_class(logits) != base)
      adv = {std::move(x_new), g_new, predicted_class(logits)};
    else {
      x_clean = std::move(x_new);
      g_clean = g_new;
    }
  }
  return adv;
}

}  // namespace

double AttackConfig::sampling_radius() const {
  if (eps_sampling > 0.0) return eps_sampling;
  switch (p) {
    case Norm::L1: return 40.0;
    case Norm::L2: return 2.0;
    case Norm::LInf: return 0.15;
  }
  return 0.15;
}

void AttackConfig::validate() const {
  if (n_iter < 1) throw ConfigError("attack: n_iter must be >= 1");
  if (n_restarts < 1) throw ConfigError("attack: n_restarts must be >= 1");
  if (!(alpha_max >= 0.0 && alpha_max <= 1.0))
    throw ConfigError("attack: alpha_max must lie in [0,1]");
  if (!(beta > 0.0 && beta < 1.0))
    throw ConfigError("attack: beta must lie in (0,1)");
  if (!(eta >= 1.0) || !std::isfinite(eta))
    throw ConfigError("attack: eta must be >= 1");
  if (eps_sampling < 0.0 || !std::isfinite(eps_sampling))
    throw ConfigError("attack: eps_sampling must be finite and >= 0");
  if (final_search_steps < 0)
    throw ConfigError("attack: final_search_steps must be >= 0");
}

double alpha_combination(double delta_norm, double delta_orig_norm,
                         double alpha_max) {
  const double total = delta_norm + delta_orig_norm;
  if (!(total > 0.0)) return 0.0;
  return std::min(delta_norm / total, alpha_max);
}

Vector biased_step(const Eigen::Ref<const Vector>& x_iter,
                   const Eigen::Ref<const Vector>& x_orig,
                   const Hyperplane& plane, const BoxedRegion& box,
                   const AttackConfig& cfg) {
  const ProjectionResult pi = proj_p(x_iter, plane, box, cfg.p);
  const Vector delta_iter = pi.point - x_iter;
  Vector delta_orig;
  if (pi.feasible)
    delta_orig = proj_p(x_orig, plane, box, cfg.p).point - x_orig;
  else
    delta_orig = pi.point - x_orig;

  const double alpha =
      cfg.ablation.disable_bias
          ? 0.0
          : alpha_combination(lp_norm(delta_iter, cfg.p),
                              lp_norm(delta_orig, cfg.p), cfg.alpha_max);
  const Vector stepped = (1.0 - alpha) * (x_iter + cfg.eta * delta_iter) +
                         alpha * (x_orig + cfg.eta * delta_orig);
  return clip_to_box(stepped, box);
}

Vector backward_step(const Eigen::Ref<const Vector>& x_orig,
                     const Eigen::Ref<const Vector>& x_adv, double beta) {
  return x_orig + beta * (x_adv - x_orig);
}

Vector final_search(const Classifier& model,
                    const Eigen::Ref<const Vector>& x_orig,
                    const Eigen::Ref<const Vector>& x_out, int base,
                    int steps) {
  const Vector logits_out = model.logits(x_out);
  if (predicted_class(logits_out) == base)
    throw std::invalid_argument("final_search: x_out is not misclassified");
  const Vector logits_orig = model.logits(x_orig);
  if (predicted_class(logits_orig) != base) return x_orig;
  long forwards = 0;
  AdvPoint adv{x_out, margin(logits_out, base), predicted_class(logits_out)};
  const double floor =
      2.5e-13 * (1.0 + std::max(logits_out.cwiseAbs().maxCoeff(),
                                logits_orig.cwiseAbs().maxCoeff()));
  return secant_search(model, x_orig, margin(logits_orig, base),
                       std::move(adv), base, steps, floor, forwards)
      .x;
}

Vector sample_restart(const Eigen::Ref<const Vector>& x_orig, double radius,
                      Norm p, Rng& rng, const BoxedRegion& box) {
  if (!(radius >= 0.0) || !std::isfinite(radius))
    throw std::invalid_argument("sample_restart: bad radius");
  const Index d = x_orig.size();
  Vector dir = Vector::Zero(d);
  switch (p) {
    case Norm::L2: {
      Vector v = gaussian_vector(rng, d);
      const double n = v.norm();
      if (n > 0.0) dir = v * (radius / n);
      break;
    }
    case Norm::LInf: {
      Vector v(d);
      for (Index i = 0; i < d; ++i) v[i] = rng.uniform(-1.0, 1.0);
      const double m = v.lpNorm<Eigen::Infinity>();
      if (m > 0.0) dir = v * (radius / m);
      break;
    }
    case Norm::L1: {
      Vector mag(d);
      for (Index i = 0; i < d; ++i) mag[i] = rng.exponential();
      const double s = mag.sum();
      if (s > 0.0)
        for (Index i = 0; i < d; ++i)
          dir[i] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * mag[i] * (radius / s);
      break;
    }
  }
  return clip_to_box(x_orig + dir, box);
}

namespace {

// Shared outer loop of the untargeted and targeted attacks. plane_fn(r, x,
// logits, backward_passes) returns the boundary to step onto for restart r,
// counting its own backward passes; a degenerate plane ends the restart.
template <typename PlaneFn>
AttackOutcome fab_attack_loop(const Classifier& model,
                              const Eigen::Ref<const Vector>& x_orig,
                              int label, const AttackConfig& cfg,
                              const BoxedRegion& box, Index point_index,
                              int n_restarts, PlaneFn&& plane_fn) {
  AttackOutcome out;
  double u = kInf;
  AdvPoint best;
  Vector logits_orig;
  double g_orig = 0.0;

  for (int r = 0; r < n_restarts; ++r) {
    Vector x;
    if (r == 0) {
      x = x_orig;
    } else {
      Rng rng(stream_key(cfg.seed, static_cast<std::uint64_t>(point_index),
                         static_cast<std::uint64_t>(r)));
      const double radius = 0.5 * std::min(u, cfg.sampling_radius());
      x = sample_restart(x_orig, radius, cfg.p, rng, box);
    }
    for (int it = 0; it < cfg.n_iter; ++it) {
      const Vector logits = model.logits(x);
      ++out.forward_passes;
      if (r == 0 && it == 0) {
        logits_orig = logits;
        g_orig = margin(logits, label);
        if (predicted_class(logits) != label) {
          out.success = true;
          out.adversarial = x_orig;
          out.norm = 0.0;
          out.adversarial_class = predicted_class(logits);
          out.trace.emplace_back(out.forward_passes + out.backward_passes,
                                 0.0);
          return out;
        }
      }
      const Hyperplane plane = plane_fn(r, x, logits, out.backward_passes);
      if (plane.degenerate()) break;
      Vector x_next = biased_step(x, x_orig, plane, box, cfg);
      const Vector logits_next = model.logits(x_next);
      ++out.forward_passes;
      if (predicted_class(logits_next) != label) {
        const double norm = lp_norm(x_next - x_orig, cfg.p);
        if (norm < u) {
          u = norm;
          best = {x_next, margin(logits_next, label),
                  predicted_class(logits_next)};
          out.trace.emplace_back(out.forward_passes + out.backward_passes, u);
        }
        x = cfg.ablation.disable_backward
                ? std::move(x_next)
                : backward_step(x_orig, x_next, cfg.beta);
      } else {
        x = std::move(x_next);
      }
    }
  }

  if (!std::isfinite(u)) return out;

  if (!cfg.ablation.disable_final_search && cfg.final_search_steps > 0) {
    const double floor =
        2.5e-13 * (1.0 + logits_orig.cwiseAbs().maxCoeff());
    best = secant_search(model, x_orig, g_orig, std::move(best), label,
                         cfg.final_search_steps, floor, out.forward_passes);
    const double norm = lp_norm(best.x - x_orig, cfg.p);
    if (norm < u) {
      u = norm;
      out.trace.emplace_back(out.forward_passes + out.backward_passes, u);
    }
  }
  out.success = true;
  out.adversarial = best.x;
  out.norm = u;
  out.adversarial_class = best.cls;
  return out;
}

}  // namespace

AttackOutcome fab_attack(const Classifier& model,
                         const Eigen::Ref<const Vector>& x_orig, int label,
                         const AttackConfig& cfg, const BoxedRegion& box,
                         Index point_index) {
  cfg.validate();
  check_attack_inputs(model, x_orig, label, box);
  return fab_attack_loop(
      model, x_orig, label, cfg, box, point_index, cfg.n_restarts,
      [&](int, const Vector& x, const Vector& logits, long& backward) {
        const Matrix jac = model.jacobian(x);
        ++backward;
        return closest_class(logits, jac, x, label, cfg.p).plane;
      });
}

AttackOutcome fab_attack_targeted(const Classifier& model,
                                  const Eigen::Ref<const Vector>& x_orig,
                                  int label, const AttackConfig& cfg,
                                  const std::vector<int>& targets,
                                  const BoxedRegion& box, Index point_index) {
  cfg.validate();
  check_attack_inputs(model, x_orig, label, box);
  if (targets.empty())
    throw ConfigError("fab_attack_targeted: empty target list");
  for (int t : targets)
    if (t < 0 || t >= model.num_classes() || t == label)
      throw ConfigError("fab_attack_targeted: bad target class " +
                        std::to_string(t));
  return fab_attack_loop(
      model, x_orig, label, cfg, box, point_index,
      static_cast<int>(targets.size()),
      [&](int r, const Vector& x, const Vector& logits, long& backward) {
        const int t = targets[static_cast<std::size_t>(r)];
        Hyperplane plane;
        plane.normal = model.grad_margin(x, t, label);
        ++backward;
        plane.offset = logits[t] - logits[label] - plane.normal.dot(x);
        return plane;
      });
}

}  // namespace fab
