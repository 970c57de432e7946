#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fab/geometry.hpp"
#include "fab/types.hpp"

namespace fab {

/// Classification data with inputs scaled into the unit box.
struct Dataset {
  Matrix inputs;            // N x d, one point per row, entries in [0,1]
  std::vector<int> labels;  // N class indices in [0, num_classes)
  std::vector<std::uint8_t> test_mask;  // 1 = test split, 0 = train
  int num_classes = 0;

  Index size() const { return inputs.rows(); }
  Index dim() const { return inputs.cols(); }
  BoxedRegion box() const { return BoxedRegion::unit(dim()); }
  Vector point(Index i) const { return inputs.row(i).transpose(); }

  std::vector<Index> train_indices() const;
  std::vector<Index> test_indices() const;
};

/// Marks the last n_test points as the test split (order untouched).
void split_holdout(Dataset& data, Index n_test);

/// Loads an IDX image/label file pair (the MNIST container format:
/// big-endian magic and dims, then unsigned bytes). Pixels are scaled by
/// 1/255 into [0,1] and images flattened row-major. limit > 0 keeps only
/// the first `limit` points. Malformed input throws IoError with the byte
/// offset of the problem.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 Index limit = 0);

/// Gaussian class blobs with centers spread by `separation`, rescaled into
/// the unit box. Deterministic in the seed.
Dataset synth_blobs(Index n, Index d, int classes, double separation,
                    std::uint64_t seed);

/// Two interleaved half circles ("two moons") with Gaussian noise, 2-d,
/// rescaled into the unit box. Deterministic in the seed.
Dataset synth_moons(Index n, double noise, std::uint64_t seed);

}  // namespace fab
