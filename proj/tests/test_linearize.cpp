#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "fab/linearize.hpp"
#include "fab/models.hpp"
#include "fab/rng.hpp"

using namespace fab;

namespace {

Vector vec2(double a, double b) {
  Vector x(2);
  x << a, b;
  return x;
}

Vector random_point(Rng& rng, Index d) {
  Vector x(d);
  for (Index i = 0; i < d; ++i) x[i] = rng.uniform();
  return x;
}

}  // namespace

TEST_CASE("hyperplane distance uses the dual norm") {
  // Plane value 3 with normal (3,4): the l2 point-plane distance is
  // 3/||w||_2 = 3/5; the l1 distance divides by ||w||_inf instead.
  const Vector x = vec2(1.0, 0.0);
  const Hyperplane plane{vec2(3.0, 4.0), 0.0};
  CHECK(plane.value_at(x) == 3.0);
  CHECK(hyperplane_distance(x, plane, Norm::L2) == doctest::Approx(0.6));
  CHECK(hyperplane_distance(x, plane, Norm::L1) == doctest::Approx(0.75));

  // l-inf distance divides by ||w||_1: value 1, normal (1,1) -> 0.5.
  const Hyperplane diag{vec2(1.0, 1.0), -1.0};
  const Vector origin = vec2(0.0, 0.0);
  CHECK(hyperplane_distance(origin, diag, Norm::LInf) == doctest::Approx(0.5));

  CHECK_THROWS_AS(hyperplane_distance(x, Hyperplane{vec2(0, 0), 1.0},
                                      Norm::L2),
                  std::invalid_argument);
}

TEST_CASE("decision hyperplane reproduces the logit margin at x") {
  Rng rng(3);
  const Mlp m = Mlp::random({4, 12, 6, 5}, 17);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector x = random_point(rng, 4);
    const Vector z = m.logits(x);
    const Matrix j = m.jacobian(x);
    const int c = predicted_class(z);
    for (int l = 0; l < 5; ++l) {
      if (l == c) continue;
      const Hyperplane h = decision_hyperplane(m, x, c, l);
      CHECK(std::abs(h.value_at(x) - (z[l] - z[c])) <= 1e-12);
      CHECK((h.normal - (j.row(l) - j.row(c)).transpose()).cwiseAbs()
                .maxCoeff() <= 1e-12);
      const Hyperplane h2 = decision_hyperplane(z, j, x, c, l);
      CHECK((h2.normal - h.normal).cwiseAbs().maxCoeff() == 0.0);
      CHECK(h2.offset == h.offset);
    }
  }
}

TEST_CASE("for a linear model the linearization is globally exact") {
  Rng rng(5);
  const Mlp m = Mlp::random({3, 4}, 11);
  const Vector x = random_point(rng, 3);
  const int c = predicted_class(m, x);
  const int l = (c + 1) % 4;
  const Hyperplane h = decision_hyperplane(m, x, c, l);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector z = random_point(rng, 3);
    const Vector f = m.logits(z);
    CHECK(std::abs(h.value_at(z) - (f[l] - f[c])) <= 1e-12);
  }
}

TEST_CASE("closest_class picks the minimal-distance rival") {
  // Linear 3-class model around x = (0,0): boundaries to classes 1 and 2
  // sit at l2 distances 0.5 and 0.25.
  Mlp m({2, 3});
  m.weights[0].setZero();
  m.weights[0](1, 0) = 2.0;   // f_1 = 2 x_0 - 1
  m.weights[0](2, 1) = 4.0;   // f_2 = 4 x_1 - 1
  m.biases[0] << 0.0, -1.0, -1.0;
  const Vector x = vec2(0.0, 0.0);
  REQUIRE(predicted_class(m, x) == 0);

  const BoundaryCandidate best = closest_class(m, x, 0, Norm::L2);
  CHECK(best.class_index == 2);
  CHECK(best.distance == doctest::Approx(0.25));

  // In l1 the distances divide by max|w_i| and tie at 0.5 for *both*
  // rivals after doubling f_2's bias; weights make class 1 win the tie.
  Mlp tie = m;
  tie.biases[0][2] = -2.0;
  const BoundaryCandidate t = closest_class(tie, x, 0, Norm::L1);
  CHECK(t.class_index == 1);
  CHECK(t.distance == doctest::Approx(0.5));
}

TEST_CASE("closest_class skips degenerate rivals and can fail") {
  // Classes 0 and 1 share identical logits everywhere, so their boundary
  // has a zero normal; class 2 is the only usable rival.
  Mlp m({2, 3});
  m.weights[0].setZero();
  m.weights[0](2, 0) = 1.0;
  m.biases[0] << 0.5, 0.5, 0.0;
  const Vector x = vec2(0.25, 0.5);
  const BoundaryCandidate best = closest_class(m, x, 0, Norm::L2);
  CHECK(best.class_index == 2);

  Mlp flat({2, 2});
  flat.biases[0] << 1.0, 0.0;
  CHECK_THROWS_AS(closest_class(flat, vec2(0.1, 0.2), 0, Norm::L2),
                  NumericError);
}

TEST_CASE("closest_class agrees with its precomputed-logits overload") {
  Rng rng(7);
  const Mlp m = Mlp::random({3, 10, 4}, 23);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector x = random_point(rng, 3);
    const int c = predicted_class(m, x);
    const auto a = closest_class(m, x, c, Norm::LInf);
    const auto b = closest_class(m.logits(x), m.jacobian(x), x, c, Norm::LInf);
    CHECK(a.class_index == b.class_index);
    CHECK(a.distance == b.distance);
  }
}

TEST_CASE("boundary distances are invariant under logit scaling") {
  Rng rng(9);
  const Mlp m = Mlp::random({3, 8, 4}, 31);
  const ScaledShifted g = scale_model(m, 10.0);
  const ScaledShifted h = shift_model(m, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector x = random_point(rng, 3);
    const int c = predicted_class(m, x);
    for (Norm p : {Norm::L1, Norm::L2, Norm::LInf}) {
      const auto base = closest_class(m, x, c, p);
      const auto scaled = closest_class(g, x, c, p);
      const auto shifted = closest_class(h, x, c, p);
      CHECK(scaled.class_index == base.class_index);
      CHECK(shifted.class_index == base.class_index);
      CHECK(scaled.distance ==
            doctest::Approx(base.distance).epsilon(1e-12));
      CHECK(shifted.distance ==
            doctest::Approx(base.distance).epsilon(1e-12));
    }
  }
}

TEST_CASE("target_hyperplane matches the jacobian construction") {
  Rng rng(13);
  const Mlp m = Mlp::random({4, 9, 5}, 41);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector x = random_point(rng, 4);
    const int c = predicted_class(m, x);
    for (int t = 0; t < 5; ++t) {
      if (t == c) continue;
      const Hyperplane a = target_hyperplane(m, x, c, t);
      const Hyperplane b = decision_hyperplane(m, x, c, t);
      CHECK((a.normal - b.normal).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK(std::abs(a.offset - b.offset) <= 1e-12);
    }
  }
}

TEST_CASE("rank_target_classes orders rivals by logit") {
  // Logits (0.2, 0.9, 0.5) with base class 1: rivals sorted by logit are
  // class 2 then class 0.
  Mlp m({2, 3});
  m.biases[0] << 0.2, 0.9, 0.5;
  const Vector x = vec2(0.5, 0.5);
  const auto full = rank_target_classes(m, x, 1, 3);
  REQUIRE(full.size() == 2);
  CHECK(full[0] == 2);
  CHECK(full[1] == 0);

  const auto one = rank_target_classes(m, x, 1, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == 2);
}
