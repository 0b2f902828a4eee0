#pragma once

// Gaussian mixture with one covariance matrix shared by all components,
// fitted by EM.
//
// GMB1 blob, little-endian: "GMB1" | u32 K | u32 d | K*d f64 means (row-major)
// | d(d+1)/2 f64 lower Cholesky factor of the covariance (row-major packed)
// | K f64 weights.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "binary_io.hpp"
#include "error.hpp"
#include "random.hpp"
#include "vector_math.hpp"

namespace ctxd {

struct GmmConfig {
  int max_iters = 200;
  double tol = 1e-5;   // on the mean log-likelihood
  double eps = 1e-6;   // added to the covariance diagonal
  bool diagonal = false;
};

struct GmmModel {
  Matrix means;     // K x d
  Matrix chol;      // d x d lower Cholesky factor of the covariance
  Vector weights;   // K

  int num_components() const { return static_cast<int>(means.rows()); }
  int dim() const { return static_cast<int>(means.cols()); }
  Matrix covariance() const { return chol * chol.transpose(); }
};

struct GmmFit {
  GmmModel model;
  std::vector<double> log_likelihood;  // mean log-likelihood at each E-step
  int iterations = 0;                  // M-steps performed
  bool converged = false;
};

namespace detail {

inline double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

// Rows of `x` (N x d) -> N x K matrix of log(pi_o) + log N(x; mu_o, Sigma).
inline Matrix joint_log_density(const Matrix& x, const Matrix& means, const Matrix& chol,
                                const Vector& weights) {
  const auto d = static_cast<double>(x.cols());
  const auto lower = chol.triangularView<Eigen::Lower>();
  const Matrix w = lower.solve(x.transpose());       // d x N
  const Matrix m = lower.solve(means.transpose());   // d x K
  const double log_det = 2.0 * chol.diagonal().array().log().sum();
  const double norm = -0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det);
  Matrix out(x.rows(), means.rows());
  for (Eigen::Index o = 0; o < means.rows(); ++o) {
    const double lw = weights[o] > 0.0 ? std::log(weights[o]) : -std::numeric_limits<double>::infinity();
    out.col(o) = ((w.colwise() - m.col(o)).colwise().squaredNorm().transpose().array() * -0.5 + norm + lw).matrix();
  }
  return out;
}

inline Matrix plus_plus_means(const Matrix& x, int k, Rng& rng) {
  const auto n = static_cast<std::size_t>(x.rows());
  Matrix c(k, x.cols());
  c.row(0) = x.row(static_cast<Eigen::Index>(uniform_index(rng, n)));
  Vector d2 = (x.rowwise() - c.row(0)).rowwise().squaredNorm();
  for (int j = 1; j < k; ++j) {
    const double total = d2.sum();
    std::size_t pick = uniform_index(rng, n);
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[static_cast<Eigen::Index>(i)];
        if (acc > target && d2[static_cast<Eigen::Index>(i)] > 0.0) {
          pick = i;
          break;
        }
      }
    }
    c.row(j) = x.row(static_cast<Eigen::Index>(pick));
    d2 = d2.cwiseMin((x.rowwise() - c.row(j)).rowwise().squaredNorm());
  }
  return c;
}

inline Matrix cholesky_or_throw(const Matrix& cov, double eps) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success || !llt.matrixL().toDenseMatrix().allFinite())
    throw NumericError("tied covariance is numerically singular (eps=" + std::to_string(eps) +
                       "); increase the covariance regularizer eps");
  Matrix l = llt.matrixL();
  if ((l.diagonal().array() <= 0.0).any())
    throw NumericError("tied covariance is numerically singular (eps=" + std::to_string(eps) +
                       "); increase the covariance regularizer eps");
  return l;
}

}  // namespace detail

/// EM with a tied covariance. Means start from k-means++ seeding, weights
/// uniform, covariance at the global covariance + eps*I. Stops when the mean
/// log-likelihood improves by less than tol, or after max_iters M-steps.
inline GmmFit fit_gmm(const Matrix& data, int k, std::uint64_t seed, const GmmConfig& cfg = {}) {
  if (k < 1) throw ConfigError("fit_gmm: K must be >= 1");
  if (data.rows() < k)
    throw DataError("fit_gmm: K=" + std::to_string(k) + " exceeds " + std::to_string(data.rows()) + " vectors");
  if (!data.allFinite()) throw NumericError("fit_gmm: input contains non-finite values");
  if (!(cfg.eps >= 0.0)) throw ConfigError("fit_gmm: eps must be >= 0");

  const auto n = static_cast<double>(data.rows());
  const Eigen::Index d = data.cols();
  // Work on centered data; the model is translated back at the end.
  const Eigen::RowVectorXd center = data.colwise().mean();
  const Matrix x = data.rowwise() - center;
  const Matrix scatter = x.transpose() * x;
  const Matrix reg = cfg.eps * Matrix::Identity(d, d);

  Rng rng(seed);
  Matrix means = detail::plus_plus_means(x, k, rng);
  Vector weights = Vector::Constant(k, 1.0 / k);
  Matrix cov = scatter / n + reg;
  if (cfg.diagonal) cov = Matrix(cov.diagonal().asDiagonal());

  GmmFit fit;
  Matrix chol;
  for (int it = 0;; ++it) {
    chol = detail::cholesky_or_throw(cov, cfg.eps);
    Matrix logp = detail::joint_log_density(x, means, chol, weights);
    double total = 0.0;
    for (Eigen::Index i = 0; i < logp.rows(); ++i) {
      const double lse = detail::log_sum_exp(logp.row(i));
      logp.row(i) = (logp.row(i).array() - lse).exp();
      total += lse;
    }
    const double mean_ll = total / n;
    if (!std::isfinite(mean_ll)) throw NumericError("fit_gmm: log-likelihood is not finite");
    fit.log_likelihood.push_back(mean_ll);
    if (it > 0 && mean_ll - fit.log_likelihood[fit.log_likelihood.size() - 2] < cfg.tol) {
      fit.converged = true;
      break;
    }
    if (it == cfg.max_iters) break;

    // M-step. logp now holds responsibilities.
    const Vector nk = logp.colwise().sum().transpose();
    Matrix second = scatter;
    for (Eigen::Index o = 0; o < k; ++o) {
      if (nk[o] > 0.0) {
        means.row(o) = (logp.col(o).transpose() * x) / nk[o];
        second.noalias() -= nk[o] * means.row(o).transpose() * means.row(o);
      }
      weights[o] = nk[o] / n;
    }
    weights /= weights.sum();
    cov = (second + second.transpose()) / (2.0 * n) + reg;
    if (cfg.diagonal) cov = Matrix(cov.diagonal().asDiagonal());
    fit.iterations = it + 1;
  }

  fit.model.means = means.rowwise() + center;
  fit.model.chol = chol;
  fit.model.weights = weights;
  return fit;
}

/// P(component | x) for each row of `x`, computed in log space.
inline Matrix posteriors(const GmmModel& model, const Matrix& x) {
  if (x.cols() != model.dim())
    throw DataError("posterior: vector dimension " + std::to_string(x.cols()) +
                    " does not match model dimension " + std::to_string(model.dim()));
  Matrix logp = detail::joint_log_density(x, model.means, model.chol, model.weights);
  for (Eigen::Index i = 0; i < logp.rows(); ++i) {
    const double lse = detail::log_sum_exp(logp.row(i));
    logp.row(i) = (logp.row(i).array() - lse).exp();
  }
  return logp;
}

inline Vector posterior(const GmmModel& model, std::span<const double> x) {
  Matrix row(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) row(0, static_cast<Eigen::Index>(i)) = x[i];
  return posteriors(model, row).row(0).transpose();
}

inline double mean_log_likelihood(const GmmModel& model, const Matrix& x) {
  const Matrix logp = detail::joint_log_density(x, model.means, model.chol, model.weights);
  double total = 0.0;
  for (Eigen::Index i = 0; i < logp.rows(); ++i) total += detail::log_sum_exp(logp.row(i));
  return total / static_cast<double>(x.rows());
}

inline constexpr std::string_view kGmmMagic = "GMB1";

inline std::string encode_gmm(const GmmModel& m) {
  binio::Writer w;
  w.bytes(kGmmMagic);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.num_components()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.dim()));
  for (Eigen::Index o = 0; o < m.means.rows(); ++o)
    for (Eigen::Index j = 0; j < m.means.cols(); ++j) w.put<double>(m.means(o, j));
  for (Eigen::Index r = 0; r < m.chol.rows(); ++r)
    for (Eigen::Index c = 0; c <= r; ++c) w.put<double>(m.chol(r, c));
  for (Eigen::Index o = 0; o < m.weights.size(); ++o) w.put<double>(m.weights[o]);
  return w.data();
}

inline void save_gmm(const GmmModel& m, const std::string& path) {
  binio::Writer w;
  w.bytes(encode_gmm(m));
  w.save(path);
}

inline GmmModel load_gmm(const std::string& path) {
  auto in = binio::Reader::from_file(path);
  if (in.size() < kGmmMagic.size() || in.bytes(kGmmMagic.size(), "magic") != kGmmMagic)
    throw FormatError(path + ": bad magic (expected \"GMB1\")");
  const auto k = in.get<std::uint32_t>("header K");
  const auto d = in.get<std::uint32_t>("header d");
  GmmModel m;
  m.means.resize(k, d);
  for (std::uint32_t o = 0; o < k; ++o)
    for (std::uint32_t j = 0; j < d; ++j) m.means(o, j) = in.get<double>("means");
  m.chol = Matrix::Zero(d, d);
  for (std::uint32_t r = 0; r < d; ++r)
    for (std::uint32_t c = 0; c <= r; ++c) m.chol(r, c) = in.get<double>("cholesky factor");
  m.weights.resize(k);
  for (std::uint32_t o = 0; o < k; ++o) m.weights[o] = in.get<double>("weights");
  if (!in.at_end()) throw FormatError(path + ": trailing bytes after GMB1 payload");
  return m;
}

}  // namespace ctxd
