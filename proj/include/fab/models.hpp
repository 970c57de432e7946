#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fab/types.hpp"

namespace fab {

/// A differentiable K-class classifier on R^d. Decisions are
/// argmax_k logits(x)[k]. Implementations must make jacobian() and
/// grad_margin() consistent with logits() (grad_margin(x,t,c) is the
/// gradient of logits[t] - logits[c], equal to the difference of the
/// corresponding jacobian rows).
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual Index input_dim() const = 0;
  virtual Index num_classes() const = 0;

  virtual Vector logits(const Eigen::Ref<const Vector>& x) const = 0;
  /// K x d matrix of logit gradients.
  virtual Matrix jacobian(const Eigen::Ref<const Vector>& x) const = 0;
  virtual Vector grad_margin(const Eigen::Ref<const Vector>& x, int target,
                             int base) const = 0;

  /// Single-precision evaluation path, for experiments on gradient masking
  /// where float32 saturation matters.
  virtual VectorF logits_f32(const Eigen::Ref<const VectorF>& x) const = 0;
  virtual MatrixF jacobian_f32(const Eigen::Ref<const VectorF>& x) const = 0;
};

int predicted_class(const Eigen::Ref<const Vector>& logits);
int predicted_class(const Classifier& model, const Eigen::Ref<const Vector>& x);

/// Gradient of the cross-entropy loss -log softmax(logits)[label] w.r.t. x,
/// i.e. J^T (softmax(logits) - e_label). The f32 variant runs the whole
/// chain (forward, softmax, backward) in single precision before widening,
/// so saturated softmax probabilities zero the gradient exactly as they
/// would in a float32 framework.
Vector cross_entropy_grad(const Classifier& model,
                          const Eigen::Ref<const Vector>& x, int label);
Vector cross_entropy_grad_f32(const Classifier& model,
                              const Eigen::Ref<const Vector>& x, int label);

/// Fully connected ReLU network: affine layers with ReLU on all hidden
/// layers and identity on the output. The ReLU derivative at exactly 0 is
/// taken as 0.
class Mlp : public Classifier {
 public:
  Mlp() = default;
  /// widths = {d_in, h_1, ..., h_k, K}; weights start at zero.
  explicit Mlp(std::vector<Index> widths);
  /// Uniform init on [-a, a] with a = 1/sqrt(fan_in), reproducible by seed.
  static Mlp random(std::vector<Index> widths, std::uint64_t seed);

  Index input_dim() const override { return widths_.front(); }
  Index num_classes() const override { return widths_.back(); }
  const std::vector<Index>& widths() const { return widths_; }

  Vector logits(const Eigen::Ref<const Vector>& x) const override;
  Matrix jacobian(const Eigen::Ref<const Vector>& x) const override;
  Vector grad_margin(const Eigen::Ref<const Vector>& x, int target,
                     int base) const override;
  VectorF logits_f32(const Eigen::Ref<const VectorF>& x) const override;
  MatrixF jacobian_f32(const Eigen::Ref<const VectorF>& x) const override;

  std::vector<Matrix> weights;  // layer k maps widths[k] -> widths[k+1]
  std::vector<Vector> biases;

 private:
  std::vector<Index> widths_;
};

/// Exact reparametrization scale * f(x) + shift of another classifier.
/// Decision regions are unchanged for scale > 0; useful for checking which
/// attacks are invariant under it. Holds a reference: the wrapped model must
/// outlive the wrapper.
class ScaledShifted : public Classifier {
 public:
  ScaledShifted(const Classifier& inner, double scale, double shift)
      : inner_(inner), scale_(scale), shift_(shift) {}

  Index input_dim() const override { return inner_.input_dim(); }
  Index num_classes() const override { return inner_.num_classes(); }
  Vector logits(const Eigen::Ref<const Vector>& x) const override {
    return (scale_ * logits_inner(x).array() + shift_).matrix();
  }
  Matrix jacobian(const Eigen::Ref<const Vector>& x) const override {
    return scale_ * inner_.jacobian(x);
  }
  Vector grad_margin(const Eigen::Ref<const Vector>& x, int target,
                     int base) const override {
    return scale_ * inner_.grad_margin(x, target, base);
  }
  VectorF logits_f32(const Eigen::Ref<const VectorF>& x) const override {
    return (static_cast<float>(scale_) * inner_.logits_f32(x).array() +
            static_cast<float>(shift_))
        .matrix();
  }
  MatrixF jacobian_f32(const Eigen::Ref<const VectorF>& x) const override {
    return static_cast<float>(scale_) * inner_.jacobian_f32(x);
  }

 private:
  Vector logits_inner(const Eigen::Ref<const Vector>& x) const {
    return inner_.logits(x);
  }
  const Classifier& inner_;
  double scale_;
  double shift_;
};

inline ScaledShifted scale_model(const Classifier& m, double scale) {
  return {m, scale, 0.0};
}
inline ScaledShifted shift_model(const Classifier& m, double shift) {
  return {m, 1.0, shift};
}

/// Binary model file: magic, format version, widths, then row-major float64
/// weight and bias blocks per layer, all little-endian.
void save_model(const Mlp& model, const std::string& path);
Mlp load_model(const std::string& path);
/// FNV-1a over the serialized bytes; recorded in reports for provenance.
std::string model_hash(const Mlp& model);

struct Dataset;  // datasets.hpp

struct TrainConfig {
  std::vector<Index> hidden = {32, 32};
  int epochs = 40;
  int batch_size = 32;
  double learning_rate = 0.1;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct TrainResult {
  Mlp model;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

/// Minibatch SGD with momentum on the cross-entropy loss. Deterministic for
/// a fixed seed (init and batch shuffling share it).
TrainResult train_sgd(const Dataset& data, const TrainConfig& cfg);

/// Same loop, but each batch is replaced by PGD adversarial examples within
/// an lp ball of radius eps intersected with the data box.
TrainResult adversarial_train(const Dataset& data, const TrainConfig& cfg,
                              Norm p, double eps, int pgd_steps);

/// Percentage of correctly classified points in the chosen split; NaN when
/// the split is empty.
double accuracy(const Classifier& model, const Dataset& data, bool test_split);

}  // namespace fab
