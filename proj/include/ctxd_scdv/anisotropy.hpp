#pragma once

// Anisotropy reduction: mean-centering plus removal of the top principal
// directions, and the mean pairwise cosine used to measure it.
//
// ATB1 layout, little-endian: "ATB1" | u32 dim | u32 k | dim f64 mean
//   | k*dim f64 components (row-major)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "binary_io.hpp"
#include "error.hpp"
#include "log.hpp"
#include "random.hpp"
#include "vector_math.hpp"

namespace ctxd {

struct AnisotropyTransform {
  Vector mean;        // d'
  Matrix components;  // k x d', orthonormal rows

  int k() const { return static_cast<int>(components.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

namespace detail {

// Flip so that the largest-magnitude coordinate is positive (first one wins on
// ties).
inline void fix_sign(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> u) {
  Eigen::Index arg = 0;
  double best = -1.0;
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    if (std::abs(u[j]) > best) {
      best = std::abs(u[j]);
      arg = j;
    }
  }
  if (u[arg] < 0.0) u = -u;
}

}  // namespace detail

/// Mean and top-k principal directions of the centered rows. Uses the d'xd'
/// scatter matrix when d' <= n and the nxn Gram matrix otherwise.
inline AnisotropyTransform fit_anisotropy(const Matrix& rows, int k) {
  const Eigen::Index n = rows.rows();
  const Eigen::Index dim = rows.cols();
  if (k < 0) throw ConfigError("anisotropy: k must be >= 0");
  if (k >= dim || k >= n)
    throw ConfigError("anisotropy: k=" + std::to_string(k) + " must be smaller than the dimension (" +
                      std::to_string(dim) + ") and the number of vectors (" + std::to_string(n) + ")");
  if (!rows.allFinite()) throw NumericError("anisotropy: input contains non-finite values");

  AnisotropyTransform t;
  t.mean = rows.colwise().mean().transpose();
  t.components.resize(k, dim);
  if (k == 0) return t;

  const Matrix centered = rows.rowwise() - t.mean.transpose();
  if (dim <= n) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(centered.transpose() * centered);
    if (eig.info() != Eigen::Success) throw NumericError("anisotropy: eigendecomposition failed");
    for (int i = 0; i < k; ++i) t.components.row(i) = eig.eigenvectors().col(dim - 1 - i).transpose();
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(centered * centered.transpose());
    if (eig.info() != Eigen::Success) throw NumericError("anisotropy: eigendecomposition failed");
    const double top = eig.eigenvalues()[n - 1];
    for (int i = 0; i < k; ++i) {
      const double lambda = eig.eigenvalues()[n - 1 - i];
      if (!(lambda > top * 1e-12))
        throw NumericError("anisotropy: centered data has rank < " + std::to_string(k));
      t.components.row(i) = (centered.transpose() * eig.eigenvectors().col(n - 1 - i)).transpose() / std::sqrt(lambda);
    }
    // One Gram-Schmidt pass removes the rounding left by the back-projection.
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < i; ++j)
        t.components.row(i) -= t.components.row(i).dot(t.components.row(j)) * t.components.row(j);
      t.components.row(i).normalize();
    }
  }
  for (int i = 0; i < k; ++i) detail::fix_sign(t.components.row(i));
  return t;
}

/// x' = (x - mean) - sum_i <x - mean, u_i> u_i
inline Vector apply_anisotropy(const AnisotropyTransform& t, std::span<const double> x) {
  if (x.size() != t.dim())
    throw DataError("anisotropy: vector dimension " + std::to_string(x.size()) +
                    " does not match transform dimension " + std::to_string(t.dim()));
  Vector v(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) v[static_cast<Eigen::Index>(i)] = x[i];
  v -= t.mean;
  if (t.k() > 0) v -= t.components.transpose() * (t.components * v);
  return v;
}

inline Matrix apply_anisotropy_rows(const AnisotropyTransform& t, const Matrix& rows) {
  if (static_cast<std::size_t>(rows.cols()) != t.dim())
    throw DataError("anisotropy: matrix has " + std::to_string(rows.cols()) +
                    " columns, transform dimension is " + std::to_string(t.dim()));
  Matrix out = rows.rowwise() - t.mean.transpose();
  if (t.k() > 0) out -= (out * t.components.transpose()) * t.components;
  return out;
}

inline constexpr double kExhaustivePairLimit = 1e6;

/// Mean cosine over unordered pairs of rows. Exhaustive when there are at
/// most 1e6 pairs, otherwise `sample_size` pairs drawn with `seed`. Zero rows
/// are skipped with a warning.
inline double mean_pairwise_cosine(const Matrix& rows, std::size_t sample_size, std::uint64_t seed) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    if (rows.row(i).norm() > 0.0) keep.push_back(i);
  }
  if (keep.size() != static_cast<std::size_t>(rows.rows()))
    log_warning("mean_pairwise_cosine: skipped " + std::to_string(rows.rows() - static_cast<Eigen::Index>(keep.size())) +
                " zero vectors");
  if (keep.size() < 2) throw DataError("mean_pairwise_cosine: need at least 2 nonzero vectors");
  Matrix unit(static_cast<Eigen::Index>(keep.size()), rows.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) unit.row(static_cast<Eigen::Index>(i)) = rows.row(keep[i]).normalized();

  const double m = static_cast<double>(keep.size());
  const double pairs = m * (m - 1.0) / 2.0;
  if (pairs <= kExhaustivePairLimit) {
    // sum_{i<j} <y_i, y_j> = (|sum y|^2 - sum |y|^2) / 2
    const double total = unit.colwise().sum().squaredNorm() - unit.rowwise().squaredNorm().sum();
    return total / 2.0 / pairs;
  }
  if (sample_size == 0) throw ConfigError("mean_pairwise_cosine: sample_size must be > 0");
  Rng rng(seed);
  double total = 0.0;
  for (std::size_t s = 0; s < sample_size; ++s) {
    const auto i = uniform_index(rng, keep.size());
    auto j = uniform_index(rng, keep.size() - 1);
    if (j >= i) ++j;
    total += unit.row(static_cast<Eigen::Index>(i)).dot(unit.row(static_cast<Eigen::Index>(j)));
  }
  return total / static_cast<double>(sample_size);
}

inline constexpr std::string_view kAnisotropyMagic = "ATB1";

inline void save_anisotropy(const AnisotropyTransform& t, const std::string& path) {
  binio::Writer w;
  w.bytes(kAnisotropyMagic);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(t.dim()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(t.k()));
  for (Eigen::Index j = 0; j < t.mean.size(); ++j) w.put<double>(t.mean[j]);
  for (Eigen::Index i = 0; i < t.components.rows(); ++i)
    for (Eigen::Index j = 0; j < t.components.cols(); ++j) w.put<double>(t.components(i, j));
  w.save(path);
}

inline AnisotropyTransform load_anisotropy(const std::string& path) {
  auto in = binio::Reader::from_file(path);
  if (in.size() < kAnisotropyMagic.size() || in.bytes(kAnisotropyMagic.size(), "magic") != kAnisotropyMagic)
    throw FormatError(path + ": bad magic (expected \"ATB1\")");
  const auto dim = in.get<std::uint32_t>("header dim");
  const auto k = in.get<std::uint32_t>("header k");
  AnisotropyTransform t;
  t.mean.resize(dim);
  for (std::uint32_t j = 0; j < dim; ++j) t.mean[j] = in.get<double>("mean");
  t.components.resize(k, dim);
  for (std::uint32_t i = 0; i < k; ++i)
    for (std::uint32_t j = 0; j < dim; ++j) t.components(i, j) = in.get<double>("components");
  if (!in.at_end()) throw FormatError(path + ": trailing bytes after ATB1 payload");
  return t;
}

}  // namespace ctxd
