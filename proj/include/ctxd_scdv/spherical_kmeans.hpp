#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "error.hpp"
#include "random.hpp"
#include "vector_math.hpp"

namespace ctxd {

struct KMeansResult {
  Matrix centroids;              // k x d, unit rows
  std::vector<int> assignments;  // 0-based cluster per input row
  std::vector<double> objective; // sum of cosines after each assignment step
  int iterations = 0;
};

inline constexpr int kKMeansMaxIters = 100;

/// Normalizes rows to unit length; a zero row is an error naming its index.
inline Matrix normalize_rows(const Matrix& x) {
  Matrix out = x;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (!(n > 0.0) || !std::isfinite(n))
      throw DataError("occurrence " + std::to_string(i) + " has zero or non-finite norm");
    out.row(i) /= n;
  }
  return out;
}

namespace detail {

// Max-cosine centroid per row; ties go to the lowest index.
inline double assign_to_centroids(const Matrix& x, const Matrix& c, std::vector<int>& out) {
  const Matrix sims = x * c.transpose();
  double total = 0.0;
  out.resize(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < c.rows(); ++j)
      if (sims(i, j) > sims(i, best)) best = j;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    total += sims(i, best);
  }
  return total;
}

// k-means++ seeding using squared chordal distance 2 - 2cos.
inline Matrix plus_plus_seed(const Matrix& x, int k, Rng& rng) {
  const auto n = static_cast<std::size_t>(x.rows());
  Matrix c(k, x.cols());
  std::size_t first = uniform_index(rng, n);
  c.row(0) = x.row(static_cast<Eigen::Index>(first));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i)
    d2[i] = std::max(0.0, 2.0 - 2.0 * x.row(static_cast<Eigen::Index>(i)).dot(c.row(0)));
  for (int j = 1; j < k; ++j) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = uniform_index(rng, n);
    }
    c.row(j) = x.row(static_cast<Eigen::Index>(pick));
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], std::max(0.0, 2.0 - 2.0 * x.row(static_cast<Eigen::Index>(i)).dot(c.row(j))));
  }
  return c;
}

}  // namespace detail

/// Lloyd iterations on the unit sphere. Rows of `vectors` are normalized
/// first. Stops when assignments are stable or after 100 iterations; on return
/// every row is assigned to its max-cosine centroid.
inline KMeansResult spherical_kmeans(const Matrix& vectors, int k, std::uint64_t seed) {
  if (k < 1) throw ConfigError("spherical_kmeans: k must be >= 1");
  if (static_cast<Eigen::Index>(k) > vectors.rows())
    throw DataError("spherical_kmeans: k=" + std::to_string(k) + " exceeds " +
                    std::to_string(vectors.rows()) + " vectors");
  const Matrix x = normalize_rows(vectors);
  Rng rng(seed);

  KMeansResult r;
  r.centroids = detail::plus_plus_seed(x, k, rng);
  r.objective.push_back(detail::assign_to_centroids(x, r.centroids, r.assignments));

  std::vector<int> next;
  for (int iter = 1; iter <= kKMeansMaxIters; ++iter) {
    Matrix sums = Matrix::Zero(k, x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      sums.row(r.assignments[static_cast<std::size_t>(i)]) += x.row(i);
    for (int j = 0; j < k; ++j) {
      const double n = sums.row(j).norm();
      if (n > 0.0) r.centroids.row(j) = sums.row(j) / n;  // empty clusters keep their centroid
    }
    r.objective.push_back(detail::assign_to_centroids(x, r.centroids, next));
    r.iterations = iter;
    const bool stable = next == r.assignments;
    r.assignments.swap(next);
    if (stable) break;
  }
  return r;
}

}  // namespace ctxd
