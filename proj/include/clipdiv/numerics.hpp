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

#pragma once

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "clipdiv/errors.hpp"

namespace clipdiv {

// Rows are samples throughout, so matrices are stored row-major.
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using Labels = std::vector<int>;

/// Lower clamp applied to the second argument of the KL divergence before the log.
inline constexpr double kKlEpsilon = 1e-12;
/// Added to each norm inside cosine similarity; also the "zero vector" threshold.
inline constexpr double kNormEpsilon = 1e-12;

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

/// Index of the largest entry; ties go to the lowest index.
template <typename Derived>
int argmax(const Eigen::MatrixBase<Derived>& v) {
  if (v.size() == 0) throw InvalidArgument("argmax: empty input");
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < v.size(); ++k) {
    if (v(k) > v(best)) best = k;
  }
  return static_cast<int>(best);
}

/// Temperature-scaled softmax of a vector expression, stabilized by max subtraction.
template <typename Derived>
VectorX<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits,
                                          typename Derived::Scalar tau) {
  using Scalar = typename Derived::Scalar;
  if (logits.size() == 0) throw InvalidArgument("softmax: empty logits");
  if (!(tau > Scalar(0)) || !std::isfinite(tau)) {
    throw InvalidArgument("softmax: temperature must be positive, got " + std::to_string(tau));
  }
  if (!logits.allFinite()) throw InvalidArgument("softmax: non-finite logits");
  VectorX<Scalar> z = logits.derived().reshaped() / tau;
  z.array() -= z.maxCoeff();
  z = z.array().exp();
  return z / z.sum();
}

/// Row-wise softmax of an N x K block.
template <typename Derived>
MatrixX<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits,
                                               typename Derived::Scalar tau) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    out.row(i) = softmax(logits.row(i), tau).transpose();
  }
  return out;
}

/// KL(p || q) = sum_k p_k ln(p_k / q_k), with 0 ln 0 = 0 and q clamped below by `eps`.
template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar kl_div(const Eigen::MatrixBase<DerivedP>& p,
                                 const Eigen::MatrixBase<DerivedQ>& q,
                                 typename DerivedP::Scalar eps = kKlEpsilon) {
  using Scalar = typename DerivedP::Scalar;
  if (p.size() != q.size()) {
    throw DimensionError("kl_div: length mismatch " + std::to_string(p.size()) + " vs " +
                         std::to_string(q.size()));
  }
  const auto pv = p.derived().reshaped();
  const auto qv = q.derived().reshaped();
  Scalar sum = 0;
  for (Eigen::Index k = 0; k < pv.size(); ++k) {
    const Scalar pk = pv(k);
    if (pk <= Scalar(0)) continue;
    sum += pk * (std::log(pk) - std::log(std::max(Scalar(qv(k)), eps)));
  }
  return sum;
}

/// a.b / ((|a| + eps)(|b| + eps)). Throws DegenerateError when both vectors are (near-)zero.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_sim(const Eigen::MatrixBase<DerivedA>& a,
                                     const Eigen::MatrixBase<DerivedB>& b,
                                     typename DerivedA::Scalar eps = kNormEpsilon) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine_sim: length mismatch " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  const auto na = a.norm();
  const auto nb = b.norm();
  if (na <= eps && nb <= eps) throw DegenerateError("cosine_sim: both vectors are zero");
  return a.derived().reshaped().dot(b.derived().reshaped()) / ((na + eps) * (nb + eps));
}

/// FNV-1a over the bit patterns of every entry, visited row by row.
template <typename Derived>
std::uint64_t hash_values(const Eigen::MatrixBase<Derived>& m,
                          std::uint64_t h = 0xcbf29ce484222325ULL) {
  auto mix = [&h](std::uint64_t word) {
    for (int byte = 0; byte < 8; ++byte) {
      h ^= (word >> (8 * byte)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  mix(static_cast<std::uint64_t>(m.rows()));
  mix(static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      mix(std::bit_cast<std::uint64_t>(static_cast<double>(m(i, j))));
    }
  }
  return h;
}

/// Seeded generator. Only the engine comes from the standard library; every
/// distribution is computed here so streams match across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
  }

  /// Uniform integer in [0, n) by rejection, n >= 1.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw InvalidArgument("Rng::below: empty range");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::vector<int> permutation(int n) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    shuffle(idx);
    return idx;
  }

  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * normal();
    return m;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace clipdiv
