#pragma once

// Shared fixtures for the attack-level test suites.

#include <initializer_list>

#include "fab/datasets.hpp"
#include "fab/models.hpp"
#include "fab/rng.hpp"
#include "fab/types.hpp"

namespace fab::testutil {

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

inline Vector random_point(Rng& rng, Index d) {
  Vector x(d);
  for (Index i = 0; i < d; ++i) x[i] = rng.uniform();
  return x;
}

/// Two-moons dataset with a 60-point holdout, shared across suites.
inline const Dataset& moons_data() {
  static const Dataset data = [] {
    Dataset d = synth_moons(260, 0.14, 71);
    split_holdout(d, 60);
    return d;
  }();
  return data;
}

/// Small trained net on moons_data(); built once per test binary.
inline const Mlp& moons_net() {
  static const Mlp model = [] {
    TrainConfig cfg;
    cfg.hidden = {20};
    cfg.epochs = 25;
    cfg.seed = 19;
    return train_sgd(moons_data(), cfg).model;
  }();
  return model;
}

}  // namespace fab::testutil
