#include "fab/models.hpp"

#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "fab/rng.hpp"

namespace fab {
namespace {

template <typename Scalar>
using VecT = Eigen::Vector<Scalar, Eigen::Dynamic>;
template <typename Scalar>
using MatT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
VecT<Scalar> forward_impl(const std::vector<Matrix>& weights,
                          const std::vector<Vector>& biases,
                          const VecT<Scalar>& x) {
  VecT<Scalar> a = x;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    VecT<Scalar> z =
        weights[k].cast<Scalar>() * a + biases[k].cast<Scalar>();
    if (k + 1 < weights.size())
      a = z.cwiseMax(Scalar(0));
    else
      a = std::move(z);
  }
  return a;
}

// Reverse accumulation: start from the output layer's weight matrix and pull
// it back through ReLU masks. The mask is strict (z > 0), so the kink at 0
// contributes a zero subgradient.
template <typename Scalar>
MatT<Scalar> jacobian_impl(const std::vector<Matrix>& weights,
                           const std::vector<Vector>& biases,
                           const VecT<Scalar>& x) {
  const std::size_t layers = weights.size();
  std::vector<VecT<Scalar>> pre;  // hidden pre-activations
  pre.reserve(layers - 1);
  VecT<Scalar> a = x;
  for (std::size_t k = 0; k + 1 < layers; ++k) {
    VecT<Scalar> z =
        weights[k].cast<Scalar>() * a + biases[k].cast<Scalar>();
    pre.push_back(z);
    a = z.cwiseMax(Scalar(0));
  }
  MatT<Scalar> g = weights.back().cast<Scalar>();
  for (std::size_t k = layers - 1; k-- > 0;) {
    VecT<Scalar> mask =
        (pre[k].array() > Scalar(0)).template cast<Scalar>().matrix();
    g = (g.array().rowwise() * mask.transpose().array()).matrix() *
        weights[k].cast<Scalar>();
  }
  return g;
}

Vector softmax(const Eigen::Ref<const Vector>& logits) {
  Vector e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

VectorF softmax_f32(const VectorF& logits) {
  VectorF e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

void check_point(const Classifier& m, Index got) {
  if (got != m.input_dim())
    throw std::invalid_argument("classifier: input dimension mismatch");
}

void check_classes(const Classifier& m, int target, int base) {
  if (target < 0 || base < 0 || target >= m.num_classes() ||
      base >= m.num_classes())
    throw std::invalid_argument("classifier: class index out of range");
}

constexpr char kMagic[8] = {'F', 'A', 'B', 'M', 'L', 'P', '0', '0'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put(std::string& out, const T& v) {
  const char* p = reinterpret_cast<const char*>(&v);
  out.append(p, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size())
    throw IoError("model file truncated at byte " + std::to_string(pos));
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::string serialize(const Mlp& m) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put(out, kFormatVersion);
  put(out, static_cast<std::uint32_t>(m.widths().size()));
  for (Index w : m.widths()) put(out, static_cast<std::uint64_t>(w));
  for (std::size_t k = 0; k < m.weights.size(); ++k) {
    const Matrix& w = m.weights[k];
    for (Index r = 0; r < w.rows(); ++r)
      for (Index c = 0; c < w.cols(); ++c) put(out, w(r, c));
    for (Index r = 0; r < m.biases[k].size(); ++r) put(out, m.biases[k][r]);
  }
  return out;
}

}  // namespace

int predicted_class(const Eigen::Ref<const Vector>& logits) {
  int best = 0;
  for (Index k = 1; k < logits.size(); ++k)
    if (logits[k] > logits[best]) best = static_cast<int>(k);
  return best;
}

int predicted_class(const Classifier& model,
                    const Eigen::Ref<const Vector>& x) {
  return predicted_class(model.logits(x));
}

Vector cross_entropy_grad(const Classifier& model,
                          const Eigen::Ref<const Vector>& x, int label) {
  check_classes(model, label, label);
  Vector coeff = softmax(model.logits(x));
  coeff[label] -= 1.0;
  return model.jacobian(x).transpose() * coeff;
}

Vector cross_entropy_grad_f32(const Classifier& model,
                              const Eigen::Ref<const Vector>& x, int label) {
  check_classes(model, label, label);
  const VectorF xf = x.cast<float>();
  VectorF coeff = softmax_f32(model.logits_f32(xf));
  coeff[label] -= 1.0f;
  VectorF g = model.jacobian_f32(xf).transpose() * coeff;
  return g.cast<double>();
}

Mlp::Mlp(std::vector<Index> widths) : widths_(std::move(widths)) {
  if (widths_.size() < 2)
    throw std::invalid_argument("Mlp: need at least input and output widths");
  for (Index w : widths_)
    if (w <= 0) throw std::invalid_argument("Mlp: widths must be positive");
  for (std::size_t k = 0; k + 1 < widths_.size(); ++k) {
    weights.emplace_back(Matrix::Zero(widths_[k + 1], widths_[k]));
    biases.emplace_back(Vector::Zero(widths_[k + 1]));
  }
}

Mlp Mlp::random(std::vector<Index> widths, std::uint64_t seed) {
  Mlp m(std::move(widths));
  Rng rng(mix64(seed));
  for (std::size_t k = 0; k < m.weights.size(); ++k) {
    const double a = 1.0 / std::sqrt(static_cast<double>(m.weights[k].cols()));
    for (Index r = 0; r < m.weights[k].rows(); ++r)
      for (Index c = 0; c < m.weights[k].cols(); ++c)
        m.weights[k](r, c) = rng.uniform(-a, a);
    for (Index r = 0; r < m.biases[k].size(); ++r)
      m.biases[k][r] = rng.uniform(-a, a);
  }
  return m;
}

Vector Mlp::logits(const Eigen::Ref<const Vector>& x) const {
  check_point(*this, x.size());
  return forward_impl<double>(weights, biases, x);
}

Matrix Mlp::jacobian(const Eigen::Ref<const Vector>& x) const {
  check_point(*this, x.size());
  return jacobian_impl<double>(weights, biases, x);
}

Vector Mlp::grad_margin(const Eigen::Ref<const Vector>& x, int target,
                        int base) const {
  check_point(*this, x.size());
  check_classes(*this, target, base);
  // Same pullback as jacobian_impl but seeded with the single row
  // e_target - e_base, one matrix-vector chain instead of K.
  const std::size_t layers = weights.size();
  std::vector<Vector> pre;
  pre.reserve(layers - 1);
  Vector a = x;
  for (std::size_t k = 0; k + 1 < layers; ++k) {
    Vector z = weights[k] * a + biases[k];
    pre.push_back(z);
    a = z.cwiseMax(0.0);
  }
  Eigen::RowVectorXd g =
      weights.back().row(target) - weights.back().row(base);
  for (std::size_t k = layers - 1; k-- > 0;) {
    Eigen::RowVectorXd masked =
        (g.array() * (pre[k].array() > 0.0).cast<double>().transpose())
            .matrix();
    g = masked * weights[k];
  }
  return g.transpose();
}

VectorF Mlp::logits_f32(const Eigen::Ref<const VectorF>& x) const {
  check_point(*this, x.size());
  return forward_impl<float>(weights, biases, x);
}

MatrixF Mlp::jacobian_f32(const Eigen::Ref<const VectorF>& x) const {
  check_point(*this, x.size());
  return jacobian_impl<float>(weights, biases, x);
}

void save_model(const Mlp& model, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  const std::string bytes = serialize(model);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("short write to '" + path + "'");
}

Mlp load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open model file '" + path + "'");
  std::stringstream buf;
  buf << f.rdbuf();
  const std::string in = buf.str();

  std::size_t pos = 0;
  if (in.size() < sizeof(kMagic) ||
      std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0)
    throw IoError("'" + path + "' is not a model file (bad magic)");
  pos = sizeof(kMagic);
  const auto version = take<std::uint32_t>(in, pos);
  if (version != kFormatVersion)
    throw IoError("model format version " + std::to_string(version) +
                  " not supported (expected " +
                  std::to_string(kFormatVersion) + ")");
  const auto n = take<std::uint32_t>(in, pos);
  if (n < 2 || n > 64) throw IoError("model file has implausible layer count");
  std::vector<Index> widths(n);
  for (auto& w : widths) {
    w = static_cast<Index>(take<std::uint64_t>(in, pos));
    if (w <= 0 || w > (Index{1} << 24))
      throw IoError("model file has implausible layer width");
  }
  Mlp m(widths);
  for (std::size_t k = 0; k < m.weights.size(); ++k) {
    Matrix& w = m.weights[k];
    for (Index r = 0; r < w.rows(); ++r)
      for (Index c = 0; c < w.cols(); ++c) w(r, c) = take<double>(in, pos);
    for (Index r = 0; r < m.biases[k].size(); ++r)
      m.biases[k][r] = take<double>(in, pos);
  }
  if (pos != in.size())
    throw IoError("model file has " + std::to_string(in.size() - pos) +
                  " trailing bytes");
  return m;
}

std::string model_hash(const Mlp& model) {
  const std::string bytes = serialize(model);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx",
                static_cast<unsigned long long>(h));
  return out;
}

}  // namespace fab
