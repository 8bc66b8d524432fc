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

// Straight-line reference implementations used by the tests. They share no code
// with the library beyond the Matrix alias, and use plain loops throughout.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "clipdiv/numerics.hpp"
#include "clipdiv/uda_model.hpp"

namespace oracle {

using clipdiv::Labels;
using clipdiv::Matrix;
using clipdiv::Vector;

inline std::vector<double> softmax(const std::vector<double>& z, double tau) {
  double top = z[0];
  for (double v : z) top = std::max(top, v);
  std::vector<double> out(z.size());
  double sum = 0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    out[k] = std::exp((z[k] - top) / tau);
    sum += out[k];
  }
  for (double& v : out) v /= sum;
  return out;
}

inline Matrix softmax_rows(const Matrix& logits, double tau = 1.0) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    std::vector<double> z(static_cast<std::size_t>(logits.cols()));
    for (Eigen::Index k = 0; k < logits.cols(); ++k) z[static_cast<std::size_t>(k)] = logits(i, k);
    const auto p = softmax(z, tau);
    for (Eigen::Index k = 0; k < logits.cols(); ++k) out(i, k) = p[static_cast<std::size_t>(k)];
  }
  return out;
}

inline double kl(const Matrix& p, const Matrix& q, Eigen::Index row) {
  double s = 0;
  for (Eigen::Index k = 0; k < p.cols(); ++k) {
    if (p(row, k) > 0) s += p(row, k) * std::log(p(row, k) / std::max(q(row, k), 1e-12));
  }
  return s;
}

inline double mean_cross_entropy(const Matrix& p, const Labels& y) {
  double s = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) s -= std::log(p(i, y[static_cast<std::size_t>(i)]));
  return s / static_cast<double>(p.rows());
}

/// Mean over rows of KL(g || p) (or KL(p || g) when model_first).
inline double mean_kl(const Matrix& p, const Matrix& g, bool model_first) {
  double s = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) s += model_first ? kl(p, g, i) : kl(g, p, i);
  return s / static_cast<double>(p.rows());
}

inline double mean_relative(const Matrix& ps, const Matrix& pt, const Matrix& gs, const Matrix& gt) {
  double s = 0;
  int used = 0;
  for (Eigen::Index i = 0; i < ps.rows(); ++i) {
    double dot = 0, n1 = 0, n2 = 0;
    for (Eigen::Index k = 0; k < ps.cols(); ++k) {
      const double a = gs(i, k) - gt(i, k);
      const double b = ps(i, k) - pt(i, k);
      dot += a * b;
      n1 += a * a;
      n2 += b * b;
    }
    n1 = std::sqrt(n1);
    n2 = std::sqrt(n2);
    if (n1 < 1e-12 || n2 < 1e-12) continue;
    s += 1.0 - dot / (n1 * n2);
    ++used;
  }
  return s / used;
}

/// Central differences of f at x, entry by entry.
inline Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x,
                               double h = 1e-5) {
  Matrix grad(x.rows(), x.cols());
  Matrix probe = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      probe(i, j) = x(i, j) + h;
      const double up = f(probe);
      probe(i, j) = x(i, j) - h;
      const double down = f(probe);
      probe(i, j) = x(i, j);
      grad(i, j) = (up - down) / (2 * h);
    }
  }
  return grad;
}

/// |a - b| / max(|a|, |b|, floor), over the whole array.
inline double relative_error(const Matrix& analytic, const Matrix& numeric, double floor = 1e-8) {
  const double scale = std::max({analytic.norm(), numeric.norm(), floor});
  return (analytic - numeric).norm() / scale;
}

/// Logits of the model recomputed with explicit dot products.
inline Matrix model_logits(const clipdiv::UdaModel& model, const Matrix& x) {
  const auto& params = model.params();
  Matrix a = x;
  auto dense = [](const Matrix& in, const clipdiv::DenseLayer& layer) {
    Matrix out(in.rows(), layer.weight.cols());
    for (Eigen::Index i = 0; i < in.rows(); ++i) {
      for (Eigen::Index o = 0; o < layer.weight.cols(); ++o) {
        double s = layer.bias(o);
        for (Eigen::Index j = 0; j < in.cols(); ++j) s += in(i, j) * layer.weight(j, o);
        out(i, o) = s;
      }
    }
    return out;
  };
  for (const auto& layer : params.extractor) {
    a = dense(a, layer);
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = std::tanh(a(i, j));
  }
  return dense(a, params.classifier);
}

struct PseudoLabels {
  Matrix centroids;
  Labels initial;
  Matrix refined;
  Labels labels;
};

inline Labels nearest(const Matrix& f, const Matrix& c) {
  Labels out;
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    std::vector<double> dist;
    for (Eigen::Index k = 0; k < c.rows(); ++k) {
      double dot = 0, nf = 0, nc = 0;
      for (Eigen::Index j = 0; j < f.cols(); ++j) {
        dot += f(i, j) * c(k, j);
        nf += f(i, j) * f(i, j);
        nc += c(k, j) * c(k, j);
      }
      dist.push_back(1.0 - dot / ((std::sqrt(nf) + 1e-12) * (std::sqrt(nc) + 1e-12)));
    }
    // lowest class among those within 1e-12 of the minimum
    const double lo = *std::min_element(dist.begin(), dist.end());
    int best = 0;
    for (int k = static_cast<int>(dist.size()) - 1; k >= 0; --k)
      if (dist[static_cast<std::size_t>(k)] <= lo + 1e-12) best = k;
    out.push_back(best);
  }
  return out;
}

/// Calibrated centroids, nearest assignment, one refinement round.
inline PseudoLabels pseudo_label(const Matrix& f, const Matrix& model_probs, const Matrix& clip_probs) {
  const Eigen::Index n = f.rows(), k = model_probs.cols(), d = f.cols();
  PseudoLabels out;
  out.centroids = Matrix::Zero(k, d);
  for (Eigen::Index c = 0; c < k; ++c) {
    double mass = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = model_probs(i, c) + clip_probs(i, c);
      mass += w;
      for (Eigen::Index j = 0; j < d; ++j) out.centroids(c, j) += w * f(i, j);
    }
    for (Eigen::Index j = 0; j < d; ++j) out.centroids(c, j) /= std::max(mass, 1e-12);
  }
  out.initial = nearest(f, out.centroids);
  out.refined = out.centroids;
  for (Eigen::Index c = 0; c < k; ++c) {
    int count = 0;
    std::vector<double> sum(static_cast<std::size_t>(d), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (out.initial[static_cast<std::size_t>(i)] != c) continue;
      ++count;
      for (Eigen::Index j = 0; j < d; ++j) sum[static_cast<std::size_t>(j)] += f(i, j);
    }
    if (count == 0) continue;
    for (Eigen::Index j = 0; j < d; ++j) out.refined(c, j) = sum[static_cast<std::size_t>(j)] / count;
  }
  out.labels = nearest(f, out.refined);
  return out;
}

}  // namespace oracle
