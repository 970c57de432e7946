#include "fab/datasets.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "fab/rng.hpp"

namespace fab {
namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::stringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

std::uint32_t be32(const std::string& bytes, std::size_t pos,
                   const std::string& path) {
  if (pos + 4 > bytes.size())
    throw IoError("'" + path + "' truncated at byte " + std::to_string(pos));
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

// Affine map of every column into [0,1]; constant columns collapse to 0.5.
void rescale_unit(Matrix& inputs) {
  for (Index j = 0; j < inputs.cols(); ++j) {
    const double lo = inputs.col(j).minCoeff();
    const double hi = inputs.col(j).maxCoeff();
    if (hi > lo)
      inputs.col(j) = (inputs.col(j).array() - lo) / (hi - lo);
    else
      inputs.col(j).setConstant(0.5);
  }
}

}  // namespace

std::vector<Index> Dataset::train_indices() const {
  std::vector<Index> idx;
  for (Index i = 0; i < size(); ++i)
    if (!test_mask[static_cast<std::size_t>(i)]) idx.push_back(i);
  return idx;
}

std::vector<Index> Dataset::test_indices() const {
  std::vector<Index> idx;
  for (Index i = 0; i < size(); ++i)
    if (test_mask[static_cast<std::size_t>(i)]) idx.push_back(i);
  return idx;
}

void split_holdout(Dataset& data, Index n_test) {
  if (n_test < 0 || n_test > data.size())
    throw ConfigError("split_holdout: n_test out of range");
  data.test_mask.assign(static_cast<std::size_t>(data.size()), 0);
  for (Index i = data.size() - n_test; i < data.size(); ++i)
    data.test_mask[static_cast<std::size_t>(i)] = 1;
}

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path, Index limit) {
  const std::string img = read_file(images_path);
  const std::string lab = read_file(labels_path);

  if (be32(img, 0, images_path) != 2051)
    throw IoError("'" + images_path +
                  "' has bad image magic at byte 0 (want 2051)");
  const std::uint32_t n_img = be32(img, 4, images_path);
  const std::uint32_t rows = be32(img, 8, images_path);
  const std::uint32_t cols = be32(img, 12, images_path);
  const std::size_t need_img = 16 + std::size_t(n_img) * rows * cols;
  if (img.size() < need_img)
    throw IoError("'" + images_path + "' truncated at byte " +
                  std::to_string(img.size()) + " (want " +
                  std::to_string(need_img) + ")");
  if (img.size() > need_img)
    throw IoError("'" + images_path + "' has trailing bytes after byte " +
                  std::to_string(need_img));

  if (be32(lab, 0, labels_path) != 2049)
    throw IoError("'" + labels_path +
                  "' has bad label magic at byte 0 (want 2049)");
  const std::uint32_t n_lab = be32(lab, 4, labels_path);
  const std::size_t need_lab = 8 + std::size_t(n_lab);
  if (lab.size() < need_lab)
    throw IoError("'" + labels_path + "' truncated at byte " +
                  std::to_string(lab.size()) + " (want " +
                  std::to_string(need_lab) + ")");
  if (lab.size() > need_lab)
    throw IoError("'" + labels_path + "' has trailing bytes after byte " +
                  std::to_string(need_lab));
  if (n_img != n_lab)
    throw IoError("image count " + std::to_string(n_img) +
                  " != label count " + std::to_string(n_lab));

  Index n = static_cast<Index>(n_img);
  if (limit > 0 && limit < n) n = limit;
  const Index d = static_cast<Index>(rows) * static_cast<Index>(cols);

  Dataset ds;
  ds.inputs.resize(n, d);
  ds.labels.resize(static_cast<std::size_t>(n));
  ds.test_mask.assign(static_cast<std::size_t>(n), 0);
  int max_label = 0;
  for (Index i = 0; i < n; ++i) {
    const auto* px =
        reinterpret_cast<const unsigned char*>(img.data() + 16) + i * d;
    for (Index j = 0; j < d; ++j)
      ds.inputs(i, j) = static_cast<double>(px[j]) / 255.0;
    const int y = static_cast<unsigned char>(lab[8 + static_cast<std::size_t>(i)]);
    ds.labels[static_cast<std::size_t>(i)] = y;
    max_label = std::max(max_label, y);
  }
  ds.num_classes = max_label + 1;
  return ds;
}

Dataset synth_blobs(Index n, Index d, int classes, double separation,
                    std::uint64_t seed) {
  if (n <= 0 || d <= 0 || classes < 2)
    throw ConfigError("synth_blobs: need n > 0, d > 0, classes >= 2");
  Rng rng(mix64(seed ^ 0xb10b5ULL));

  // Centers are standard Gaussians rescaled so the closest pair sits
  // `separation` apart; each blob then has unit component noise.
  Matrix centers(classes, d);
  for (int k = 0; k < classes; ++k)
    centers.row(k) = gaussian_vector(rng, d).transpose();
  double min_gap = std::numeric_limits<double>::infinity();
  for (int a = 0; a < classes; ++a)
    for (int b = a + 1; b < classes; ++b)
      min_gap = std::min(min_gap, (centers.row(a) - centers.row(b)).norm());
  if (min_gap > 0) centers *= separation / min_gap;

  Dataset ds;
  ds.inputs.resize(n, d);
  ds.labels.resize(static_cast<std::size_t>(n));
  ds.test_mask.assign(static_cast<std::size_t>(n), 0);
  ds.num_classes = classes;
  for (Index i = 0; i < n; ++i) {
    const int k = static_cast<int>(i % classes);
    ds.inputs.row(i) =
        centers.row(k) + gaussian_vector(rng, d).transpose();
    ds.labels[static_cast<std::size_t>(i)] = k;
  }
  rescale_unit(ds.inputs);
  return ds;
}

Dataset synth_moons(Index n, double noise, std::uint64_t seed) {
  if (n <= 0) throw ConfigError("synth_moons: need n > 0");
  Rng rng(mix64(seed ^ 0x300135ULL));

  Dataset ds;
  ds.inputs.resize(n, 2);
  ds.labels.resize(static_cast<std::size_t>(n));
  ds.test_mask.assign(static_cast<std::size_t>(n), 0);
  ds.num_classes = 2;
  for (Index i = 0; i < n; ++i) {
    const int k = static_cast<int>(i % 2);
    const double t = M_PI * rng.uniform();
    double px, py;
    if (k == 0) {
      px = std::cos(t);
      py = std::sin(t);
    } else {
      px = 1.0 - std::cos(t);
      py = 0.5 - std::sin(t);
    }
    ds.inputs(i, 0) = px + noise * rng.gaussian();
    ds.inputs(i, 1) = py + noise * rng.gaussian();
    ds.labels[static_cast<std::size_t>(i)] = k;
  }
  rescale_unit(ds.inputs);
  return ds;
}

}  // namespace fab
