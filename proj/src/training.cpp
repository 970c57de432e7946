#include <cmath>
#include <functional>
#include <limits>

#include "fab/baselines.hpp"
#include "fab/datasets.hpp"
#include "fab/models.hpp"
#include "fab/rng.hpp"

namespace fab {
namespace {

Vector softmax(const Eigen::Ref<const Vector>& logits) {
  Vector e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

// Accumulates the cross-entropy weight gradients of one sample.
void backprop_sample(const Mlp& m, const Eigen::Ref<const Vector>& x,
                     int label, std::vector<Matrix>& gw,
                     std::vector<Vector>& gb) {
  const std::size_t layers = m.weights.size();
  std::vector<Vector> acts;  // post-activation, acts[0] = x
  std::vector<Vector> pre;
  acts.reserve(layers + 1);
  pre.reserve(layers);
  acts.push_back(x);
  for (std::size_t k = 0; k < layers; ++k) {
    Vector z = m.weights[k] * acts.back() + m.biases[k];
    pre.push_back(z);
    acts.push_back(k + 1 < layers ? z.cwiseMax(0.0).eval() : z);
  }
  Vector delta = softmax(pre.back());
  delta[label] -= 1.0;
  for (std::size_t k = layers; k-- > 0;) {
    gw[k] += delta * acts[k].transpose();
    gb[k] += delta;
    if (k > 0)
      delta = (m.weights[k].transpose() * delta).array() *
              (pre[k - 1].array() > 0.0).cast<double>();
  }
}

void check_train_config(const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(cfg.learning_rate > 0.0))
    throw ConfigError("train: learning_rate must be positive");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
    throw ConfigError("train: momentum must lie in [0,1)");
  for (Index h : cfg.hidden)
    if (h < 1) throw ConfigError("train: hidden widths must be positive");
}

using AdvFn = std::function<Vector(const Mlp&, const Vector&, int)>;

TrainResult train_loop(const Dataset& data, const TrainConfig& cfg,
                       const AdvFn& adv) {
  check_train_config(cfg);
  const auto train_idx = data.train_indices();
  if (train_idx.empty()) throw ConfigError("train: empty training split");
  if (data.num_classes < 2) throw ConfigError("train: need >= 2 classes");

  std::vector<Index> widths;
  widths.push_back(data.dim());
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(data.num_classes);
  Mlp model = Mlp::random(widths, cfg.seed);

  std::vector<Matrix> vel_w, grad_w;
  std::vector<Vector> vel_b, grad_b;
  for (std::size_t k = 0; k < model.weights.size(); ++k) {
    vel_w.push_back(Matrix::Zero(model.weights[k].rows(),
                                 model.weights[k].cols()));
    grad_w.push_back(vel_w.back());
    vel_b.push_back(Vector::Zero(model.biases[k].size()));
    grad_b.push_back(vel_b.back());
  }

  Rng rng(mix64(cfg.seed ^ 0x7e5e5eULL));
  std::vector<Index> order = train_idx;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<std::size_t>(rng.uniform_int(
                    static_cast<int>(i)))]);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      for (std::size_t k = 0; k < grad_w.size(); ++k) {
        grad_w[k].setZero();
        grad_b[k].setZero();
      }
      for (std::size_t i = start; i < stop; ++i) {
        const Index idx = order[i];
        Vector x = data.point(idx);
        const int y = data.labels[static_cast<std::size_t>(idx)];
        if (adv) x = adv(model, x, y);
        backprop_sample(model, x, y, grad_w, grad_b);
      }
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (std::size_t k = 0; k < grad_w.size(); ++k) {
        vel_w[k] = cfg.momentum * vel_w[k] -
                   cfg.learning_rate * scale * grad_w[k];
        vel_b[k] = cfg.momentum * vel_b[k] -
                   cfg.learning_rate * scale * grad_b[k];
        model.weights[k] += vel_w[k];
        model.biases[k] += vel_b[k];
      }
    }
  }

  TrainResult result;
  result.train_accuracy = accuracy(model, data, false);
  result.test_accuracy = accuracy(model, data, true);
  result.model = std::move(model);
  return result;
}

}  // namespace

TrainResult train_sgd(const Dataset& data, const TrainConfig& cfg) {
  return train_loop(data, cfg, nullptr);
}

TrainResult adversarial_train(const Dataset& data, const TrainConfig& cfg,
                              Norm p, double eps, int pgd_steps) {
  if (!(eps >= 0.0) || !std::isfinite(eps))
    throw ConfigError("adversarial_train: eps must be >= 0");
  if (pgd_steps < 1)
    throw ConfigError("adversarial_train: pgd_steps must be >= 1");
  if (eps == 0.0) return train_loop(data, cfg, nullptr);
  const BoxedRegion box = data.box();
  const double step = 2.0 * eps / static_cast<double>(pgd_steps);
  return train_loop(data, cfg,
                    [&, p, eps, pgd_steps, step](const Mlp& m,
                                                 const Vector& x, int y) {
                      return pgd_maximize_loss(m, x, y, p, eps, step,
                                               pgd_steps, box);
                    });
}

double accuracy(const Classifier& model, const Dataset& data,
                bool test_split) {
  const auto idx = test_split ? data.test_indices() : data.train_indices();
  if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
  long hits = 0;
  for (Index i : idx)
    if (predicted_class(model, data.point(i)) ==
        data.labels[static_cast<std::size_t>(i)])
      ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(idx.size());
}

}  // namespace fab
