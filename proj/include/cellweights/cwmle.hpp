#ifndef CELLWEIGHTS_CWMLE_HPP
#define CELLWEIGHTS_CWMLE_HPP

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "cellweights/estimators.hpp"
#include "cellweights/unpack.hpp"

namespace cellweights {

constexpr double kLog2Pi = 1.8378770664093454836;

enum class EmInit { CwCovWarmStart, MeanIdentity };

struct EmConfig {
  int max_iter = 500;
  double tol = 1e-8;  // relative change of the observed loglikelihood
  EmInit init = EmInit::CwCovWarmStart;
  double ridge = 1e-10;  // scaled by the mean diagonal, added to observed blocks
};

/// EM sufficient statistics accumulated over the unpacked rows: total weight,
/// weighted sum of completed rows, and weighted sum of completed second
/// moments (including the conditional covariance of the missing block).
struct SufficientStats {
  double t0 = 0.0;
  Eigen::VectorXd t1;
  Eigen::MatrixXd t2;
};

/// Conditional mean of a row given its observed cells, and the conditional
/// covariance contribution (zero outside the missing-by-missing block).
struct ConditionalMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

namespace detail {

struct ObservedPattern {
  std::vector<Eigen::Index> obs;
  std::vector<Eigen::Index> mis;
  std::vector<std::size_t> row_ids;  // indexes into UnpackedDataset::rows
  std::string mask;                  // '1' observed, '0' missing
};

// Rows sharing an observed-column set reuse one factorization per iteration.
inline std::vector<ObservedPattern> group_by_pattern(const UnpackedDataset& u) {
  std::vector<ObservedPattern> patterns;
  std::unordered_map<std::string, std::size_t> index;
  std::string mask(static_cast<std::size_t>(u.dim), '0');
  for (std::size_t r = 0; r < u.rows.size(); ++r) {
    const auto& row = u.rows[r];
    if (row.values.size() != u.dim) throw Error("unpacked row has wrong dimension");
    for (Eigen::Index j = 0; j < u.dim; ++j) mask[static_cast<std::size_t>(j)] = row.observed(j) ? '1' : '0';
    auto [it, inserted] = index.try_emplace(mask, patterns.size());
    if (inserted) {
      ObservedPattern p;
      p.mask = mask;
      for (Eigen::Index j = 0; j < u.dim; ++j) {
        if (mask[static_cast<std::size_t>(j)] == '1') p.obs.push_back(j);
        else p.mis.push_back(j);
      }
      if (p.obs.empty()) throw Error("unpacked row has no observed cells");
      patterns.push_back(std::move(p));
    }
    patterns[it->second].row_ids.push_back(r);
  }
  return patterns;
}

template <typename Src>
Eigen::MatrixXd submatrix(const Src& m, const std::vector<Eigen::Index>& rows,
                          const std::vector<Eigen::Index>& cols) {
  Eigen::MatrixXd out(rows.size(), cols.size());
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t b = 0; b < cols.size(); ++b) out(a, b) = m(rows[a], cols[b]);
  return out;
}

template <typename Src>
Eigen::VectorXd subvector(const Src& v, const std::vector<Eigen::Index>& idx) {
  Eigen::VectorXd out(idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a) out[a] = v[idx[a]];
  return out;
}

// Per-pattern factorization of the observed block of sigma.
struct PatternSolve {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double logdet = 0.0;
  Eigen::MatrixXd gain;  // sigma_mo * sigma_oo^-1, empty when nothing is missing
  Eigen::MatrixXd cond;  // sigma_mm - gain * sigma_om, empty when nothing is missing
};

inline PatternSolve factor_pattern(const ObservedPattern& p, const GaussianParams& theta,
                                   double ridge_abs) {
  PatternSolve s;
  Eigen::MatrixXd soo = submatrix(theta.sigma, p.obs, p.obs);
  soo.diagonal().array() += ridge_abs;
  s.llt.compute(soo);
  if (s.llt.info() != Eigen::Success) {
    throw Error("singular observed block for pattern " + p.mask);
  }
  s.logdet = 2.0 * s.llt.matrixLLT().diagonal().array().log().sum();
  if (!p.mis.empty()) {
    const Eigen::MatrixXd som = submatrix(theta.sigma, p.obs, p.mis);
    const Eigen::MatrixXd k = s.llt.solve(som);  // sigma_oo^-1 sigma_om
    s.gain = k.transpose();
    Eigen::MatrixXd cond = submatrix(theta.sigma, p.mis, p.mis) - som.transpose() * k;
    s.cond = (cond + cond.transpose()) * 0.5;
  }
  return s;
}

inline void check_params(const UnpackedDataset& u, const GaussianParams& theta,
                         const char* where) {
  if (theta.mu.size() != u.dim || theta.sigma.rows() != u.dim || theta.sigma.cols() != u.dim) {
    throw Error(std::string(where) + ": parameter dimension does not match the data");
  }
  require_symmetric(theta.sigma, where);
}

}  // namespace detail

/// Observed loglikelihood of the unpacked dataset: the row-weighted sum of
/// marginal Gaussian log-densities over the observed cells of each row
/// (base-e). `ridge`, scaled by the mean diagonal of sigma, is added to each
/// observed block before factorizing; the default 0 evaluates the exact value.
inline double observed_loglik(const UnpackedDataset& u, const GaussianParams& theta,
                              double ridge = 0.0) {
  detail::check_params(u, theta, "observed_loglik");
  const double ridge_abs = ridge * std::max(0.0, theta.sigma.diagonal().mean());
  double loglik = 0.0;
  for (const auto& p : detail::group_by_pattern(u)) {
    const auto s = detail::factor_pattern(p, theta, ridge_abs);
    const auto k = static_cast<double>(p.obs.size());
    const Eigen::VectorXd mu_o = detail::subvector(theta.mu, p.obs);
    for (std::size_t r : p.row_ids) {
      const auto& row = u.rows[r];
      const Eigen::VectorXd resid = detail::subvector(row.values, p.obs) - mu_o;
      const double quad = resid.dot(s.llt.solve(resid));
      loglik += row.row_weight * (-0.5) * (k * kLog2Pi + s.logdet + quad);
    }
  }
  return loglik;
}

/// E-step for a single row: fills the missing cells with their conditional
/// mean and returns the conditional covariance contribution.
inline ConditionalMoments e_step_row(const IncompleteRow& row, const GaussianParams& theta,
                                     double ridge = 0.0) {
  const Eigen::Index d = row.values.size();
  if (theta.mu.size() != d) throw Error("e_step_row: parameter dimension does not match the row");
  require_symmetric(theta.sigma, "e_step_row");
  std::vector<Eigen::Index> obs, mis;
  for (Eigen::Index j = 0; j < d; ++j) (row.observed(j) ? obs : mis).push_back(j);
  if (obs.empty()) throw Error("e_step_row: row has no observed cells");

  ConditionalMoments out;
  out.mean = row.values;
  out.cov = Eigen::MatrixXd::Zero(d, d);
  if (mis.empty()) return out;

  Eigen::MatrixXd soo = detail::submatrix(theta.sigma, obs, obs);
  soo.diagonal().array() += ridge * std::max(0.0, theta.sigma.diagonal().mean());
  Eigen::LLT<Eigen::MatrixXd> llt(soo);
  if (llt.info() != Eigen::Success) throw Error("e_step_row: singular observed block");
  const Eigen::VectorXd resid = detail::subvector(row.values, obs) - detail::subvector(theta.mu, obs);
  const Eigen::MatrixXd som = detail::submatrix(theta.sigma, obs, mis);
  const Eigen::VectorXd fill =
      detail::subvector(theta.mu, mis) + som.transpose() * llt.solve(resid);
  const Eigen::MatrixXd cond = detail::submatrix(theta.sigma, mis, mis) - som.transpose() * llt.solve(som);
  for (std::size_t a = 0; a < mis.size(); ++a) {
    out.mean[mis[a]] = fill[static_cast<Eigen::Index>(a)];
    for (std::size_t b = 0; b < mis.size(); ++b) {
      out.cov(mis[a], mis[b]) = cond(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }
  }
  return out;
}

namespace detail {

// One pass over the data: observed loglikelihood at theta plus the expected
// sufficient statistics given theta.
inline double e_step_pass(const UnpackedDataset& u, const std::vector<ObservedPattern>& patterns,
                          const GaussianParams& theta, double ridge, SufficientStats& stats) {
  const Eigen::Index d = u.dim;
  const double ridge_abs = ridge * std::max(0.0, theta.sigma.diagonal().mean());
  stats.t0 = 0.0;
  stats.t1 = Eigen::VectorXd::Zero(d);
  stats.t2 = Eigen::MatrixXd::Zero(d, d);
  double loglik = 0.0;
  Eigen::VectorXd xhat(d);
  for (const auto& p : patterns) {
    const auto s = factor_pattern(p, theta, ridge_abs);
    const auto k = static_cast<double>(p.obs.size());
    const Eigen::VectorXd mu_o = subvector(theta.mu, p.obs);
    const Eigen::VectorXd mu_m = subvector(theta.mu, p.mis);
    for (std::size_t r : p.row_ids) {
      const auto& row = u.rows[r];
      const double v = row.row_weight;
      const Eigen::VectorXd x_o = subvector(row.values, p.obs);
      const Eigen::VectorXd resid = x_o - mu_o;
      loglik += v * (-0.5) * (k * kLog2Pi + s.logdet + resid.dot(s.llt.solve(resid)));

      for (std::size_t a = 0; a < p.obs.size(); ++a) xhat[p.obs[a]] = x_o[static_cast<Eigen::Index>(a)];
      if (!p.mis.empty()) {
        const Eigen::VectorXd fill = mu_m + s.gain * resid;
        for (std::size_t a = 0; a < p.mis.size(); ++a) xhat[p.mis[a]] = fill[static_cast<Eigen::Index>(a)];
      }
      stats.t0 += v;
      stats.t1 += v * xhat;
      stats.t2 += v * xhat * xhat.transpose();
      for (std::size_t a = 0; a < p.mis.size(); ++a)
        for (std::size_t b = 0; b < p.mis.size(); ++b)
          stats.t2(p.mis[a], p.mis[b]) +=
              v * s.cond(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }
  }
  return loglik;
}

}  // namespace detail

/// Cellwise weighted maximum likelihood for the Gaussian model: unpacks the
/// dataset and runs the rowwise-weighted EM algorithm. The M-step is the
/// weighted mean and covariance of the completed rows with divisor t0 (no
/// degree-of-freedom correction). Non-convergence at max_iter is reported in
/// the diagnostics, not thrown.
inline EstimateReport fit_cwmle(const WeightedDataset& ds, const EmConfig& cfg = {}) {
  if (cfg.max_iter < 1) throw Error("fit_cwmle: max_iter must be at least 1");
  if (!(cfg.tol > 0.0)) throw Error("fit_cwmle: tol must be positive");
  if (cfg.ridge < 0.0) throw Error("fit_cwmle: ridge must be nonnegative");

  const UnpackedDataset u = unpack_dataset(ds);
  const auto patterns = detail::group_by_pattern(u);
  const Eigen::Index d = ds.cols();

  EstimateReport report;
  report.method = Method::CwMle;

  GaussianParams theta;
  theta.mu = cw_mean(ds);  // also checks every column has positive total weight
  if (cfg.init == EmInit::CwCovWarmStart) {
    theta.sigma = cw_cov(ds, PairWeightRule::Min);
    if (Eigen::LLT<Eigen::MatrixXd>(theta.sigma).info() != Eigen::Success) {
      theta.sigma = regularize_psd(theta.sigma, default_psd_floor(theta.sigma));
      report.regularized = true;
      report.warnings.emplace_back("initial covariance regularized to be positive definite");
    }
  } else {
    // Identity scaled by the mean per-column weighted variance.
    double scale = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double total = ds.w.col(j).sum();
      scale += ds.w.col(j).dot((ds.x.col(j).array() - theta.mu[j]).square().matrix()) / total;
    }
    scale /= static_cast<double>(d);
    theta.sigma = Eigen::MatrixXd::Identity(d, d) * (scale > 0.0 ? scale : 1.0);
  }

  SufficientStats stats;
  double prev_loglik = 0.0;
  report.converged = false;
  bool mstep_regularized = false;
  int pass = 0;
  while (true) {
    const double loglik = detail::e_step_pass(u, patterns, theta, cfg.ridge, stats);
    report.loglik_trace.push_back(loglik);
    if (pass >= 1 && std::abs(loglik - prev_loglik) / (1.0 + std::abs(loglik)) < cfg.tol) {
      report.converged = true;
      break;
    }
    if (pass == cfg.max_iter) break;
    prev_loglik = loglik;

    theta.mu = stats.t1 / stats.t0;
    Eigen::MatrixXd sigma = stats.t2 / stats.t0 - theta.mu * theta.mu.transpose();
    sigma = (sigma + sigma.transpose()) * 0.5;
    if (Eigen::LLT<Eigen::MatrixXd>(sigma).info() != Eigen::Success) {
      sigma = regularize_psd(sigma, default_psd_floor(sigma));
      mstep_regularized = true;
    }
    theta.sigma = std::move(sigma);
    ++pass;
  }
  if (mstep_regularized) {
    report.regularized = true;
    report.warnings.emplace_back("singular M-step covariance regularized");
  }
  if (!report.converged) {
    report.warnings.emplace_back("EM did not converge within max_iter=" +
                                 std::to_string(cfg.max_iter));
  }
  report.iterations = static_cast<int>(report.loglik_trace.size()) - 1;
  report.params = std::move(theta);
  report.psd = is_psd(report.params.sigma, 1e-10);
  return report;
}

}  // namespace cellweights

#endif
