#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace ctxd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Cosine similarity; 0 when either vector has zero norm.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

inline std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

inline std::span<const double> as_span(const std::vector<double>& v) {
  return {v.data(), v.size()};
}

/// Row-major copy of a list of equally sized vectors into an Eigen matrix
/// (one row per vector).
inline Matrix stack_rows(const std::vector<std::vector<double>>& rows) {
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index d = rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size());
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

}  // namespace ctxd
