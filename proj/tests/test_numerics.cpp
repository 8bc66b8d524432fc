// Copyright 2026 The clipdiv Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "clipdiv/numerics.hpp"
#include "fixtures.hpp"

using namespace clipdiv;

namespace {

Vector vec(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

}  // namespace

TEST_CASE("softmax reference values") {
  CHECK(softmax(vec({0, 0}), 1.0).isApprox(vec({0.5, 0.5})));
  const Vector p = softmax(vec({std::log(3.0), 0.0}), 1.0);
  CHECK(p(0) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(p(1) == doctest::Approx(0.25).epsilon(1e-15));

  // 1 / (1 + e^20)
  const Vector sharp = softmax(vec({0.3, 0.1}), 0.01);
  const double tail = 1.0 / (1.0 + std::exp(20.0));
  CHECK(sharp(1) == doctest::Approx(tail).epsilon(1e-9));
  CHECK(sharp(1) == doctest::Approx(2.0611536e-9).epsilon(1e-6));
  CHECK(sharp(0) == doctest::Approx(1.0 - tail).epsilon(1e-15));
}

TEST_CASE("softmax rejects bad input") {
  CHECK_THROWS_AS(softmax(Vector(0), 1.0), InvalidArgument);
  CHECK_THROWS_AS(softmax(vec({1, 2}), 0.0), InvalidArgument);
  CHECK_THROWS_AS(softmax(vec({1, 2}), -1.0), InvalidArgument);
  CHECK_THROWS_AS(softmax(vec({1, NAN}), 1.0), InvalidArgument);
}

TEST_CASE("softmax is a distribution and keeps the argmax") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng.below(8));
    const Vector z = rng.normal_matrix(k, 1, 20.0).col(0);
    for (double tau : {0.005, 0.01, 0.05, 1.0, 7.0}) {
      const Vector p = softmax(z, tau);
      CHECK(p.minCoeff() >= 0.0);
      CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(argmax(p) == argmax(z));
    }
    const Vector shifted = (z.array() + 123.0).matrix();
    CHECK(argmax(softmax(shifted, 1.0)) == argmax(z));
    CHECK(softmax(shifted, 1.0).isApprox(softmax(z, 1.0), 1e-9));
  }
}

TEST_CASE("argmax breaks ties toward the lowest index") {
  CHECK(argmax(vec({1, 1, 1})) == 0);
  CHECK(argmax(vec({0.1, 0.9, 0.3})) == 1);
  CHECK(argmax(vec({0, 2, 2})) == 1);
  CHECK_THROWS_AS(argmax(Vector(0)), InvalidArgument);
}

TEST_CASE("kl_div reference values") {
  CHECK(kl_div(vec({0.3, 0.7}), vec({0.3, 0.7})) == 0.0);
  CHECK(kl_div(vec({1, 0}), vec({0.5, 0.5})) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(kl_div(vec({0.5, 0.5}), vec({0.75, 0.25})) == doctest::Approx(0.143841036).epsilon(1e-8));
  CHECK_THROWS_AS(kl_div(vec({1, 0}), vec({1, 0, 0})), DimensionError);
}

TEST_CASE("kl_div clamps zero entries of the second argument") {
  const double v = kl_div(vec({0.5, 0.5}), vec({1.0, 0.0}));
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(0.5 * std::log(0.5) + 0.5 * (std::log(0.5) - std::log(1e-12))));
}

TEST_CASE("kl_div is non-negative and vanishes only on equal inputs") {
  Rng rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    const Eigen::Index k = 2 + static_cast<Eigen::Index>(rng.below(6));
    const Matrix pq = fixtures::random_probs(rng, 2, k);
    const double d = kl_div(pq.row(0), pq.row(1));
    CHECK(d >= -1e-9);
    CHECK(std::abs(kl_div(pq.row(0), pq.row(0))) <= 1e-9);
    // Pinsker: KL >= |p - q|_1^2 / 2
    const double l1 = (pq.row(0) - pq.row(1)).cwiseAbs().sum();
    CHECK(d >= 0.5 * l1 * l1 - 1e-12);
  }
}

TEST_CASE("cosine_sim reference values and properties") {
  CHECK(cosine_sim(vec({3, 4}), vec({3, 4})) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine_sim(vec({1, 0}), vec({0, 1})) == 0.0);
  CHECK(cosine_sim(vec({1, 1}), vec({1, 0})) == doctest::Approx(0.707106781).epsilon(1e-8));
  CHECK_THROWS_AS(cosine_sim(vec({0, 0}), vec({0, 0})), DegenerateError);
  CHECK(cosine_sim(vec({0, 0}), vec({1, 0})) == 0.0);
  CHECK_THROWS_AS(cosine_sim(vec({1, 0}), vec({1, 0, 0})), DimensionError);

  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector a = rng.normal_matrix(5, 1).col(0);
    const Vector b = rng.normal_matrix(5, 1).col(0);
    const double s = rng.uniform(0.1, 10.0);
    CHECK(cosine_sim(a, b) == doctest::Approx(cosine_sim(b, a)).epsilon(1e-15));
    CHECK(cosine_sim(Vector(s * a), b) == doctest::Approx(cosine_sim(a, b)).epsilon(1e-9));
    CHECK(cosine_sim(a, Vector(s * a)) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(cosine_sim(a, Vector(-s * a)) == doctest::Approx(-1.0).epsilon(1e-9));
  }
}

TEST_CASE("Rng streams are reproducible") {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng d(5), e(5);
  CHECK(d.normal_matrix(4, 4) == e.normal_matrix(4, 4));
  Rng f(6);
  CHECK(Rng(5).next_u64() != f.next_u64());
}

TEST_CASE("Rng distributions stay in range") {
  Rng rng(9);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(rng.below(7) < 7u);
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
  CHECK_THROWS_AS(rng.below(0), InvalidArgument);

  auto perm = rng.permutation(50);
  std::sort(perm.begin(), perm.end());
  for (int i = 0; i < 50; ++i) CHECK(perm[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("hash_values sees every bit and the shape") {
  Matrix m = Matrix::Zero(2, 3);
  const auto h0 = hash_values(m);
  CHECK(hash_values(m) == h0);
  m(1, 2) = 1e-300;
  CHECK(hash_values(m) != h0);
  CHECK(hash_values(Matrix::Zero(3, 2)) != h0);
}
