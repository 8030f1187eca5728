#ifndef CELLWEIGHTS_ESTIMATORS_HPP
#define CELLWEIGHTS_ESTIMATORS_HPP

#include <string>

#include <Eigen/Dense>

#include "cellweights/dataset.hpp"

namespace cellweights {

/// How the weight of a cell pair (j,k) is formed from the two cell weights.
/// Min matches the level at which both cells are jointly present in the
/// unpacked matrix; Sqrt is the geometric-mean alternative. The two rules
/// coincide on 0/1 weights, and on the diagonal both reduce to the cell
/// weight itself.
enum class PairWeightRule { Min, Sqrt };

inline const char* pair_weight_rule_name(PairWeightRule r) {
  return r == PairWeightRule::Min ? "min" : "sqrt";
}

/// Coordinatewise weighted mean: each column uses its own cell weights.
inline Eigen::VectorXd cw_mean(const WeightedDataset& ds) {
  const Eigen::Index d = ds.cols();
  Eigen::VectorXd mu(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double total = ds.w.col(j).sum();
    if (!(total > 0.0)) {
      throw Error("cw_mean: column " + std::to_string(j + 1) + " has zero total weight");
    }
    mu[j] = ds.w.col(j).cwiseProduct(ds.x.col(j)).sum() / total;
  }
  return mu;
}

/// Cellwise weighted covariance, centered at cw_mean. Entry (j,k) averages
/// the cross-products with pair weight min(w_ij, w_ik) or sqrt(w_ij w_ik);
/// the denominator is the total pair weight, with no degree-of-freedom
/// correction. The result is symmetric by construction but need not be PSD.
inline Eigen::MatrixXd cw_cov(const WeightedDataset& ds,
                              PairWeightRule rule = PairWeightRule::Min) {
  const Eigen::Index n = ds.rows();
  const Eigen::Index d = ds.cols();
  const Eigen::VectorXd mu = cw_mean(ds);
  Eigen::MatrixXd sigma(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index k = j; k < d; ++k) {
      double num = 0.0, den = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        // Diagonal pair weight is the cell weight itself under both rules.
        double pw;
        if (j == k) pw = ds.w(i, j);
        else if (rule == PairWeightRule::Min) pw = std::min(ds.w(i, j), ds.w(i, k));
        else pw = std::sqrt(ds.w(i, j) * ds.w(i, k));
        num += pw * (ds.x(i, j) - mu[j]) * (ds.x(i, k) - mu[k]);
        den += pw;
      }
      if (!(den > 0.0)) {
        throw Error("cw_cov: pair (" + std::to_string(j + 1) + "," + std::to_string(k + 1) +
                    ") has zero total pair weight");
      }
      sigma(j, k) = num / den;
      sigma(k, j) = sigma(j, k);
    }
  }
  return sigma;
}

/// True iff the smallest eigenvalue is at least -tol * max(1, largest eigenvalue).
inline bool is_psd(const Eigen::MatrixXd& m, double tol = 1e-12) {
  require_symmetric(m, "is_psd");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw Error("is_psd: eigendecomposition failed");
  const auto& ev = solver.eigenvalues();
  return ev[0] >= -tol * std::max(1.0, ev[ev.size() - 1]);
}

/// Default eigenvalue floor for regularize_psd: 1e-6 times the mean diagonal,
/// which keeps the choice unit-free.
inline double default_psd_floor(const Eigen::MatrixXd& m) {
  const double scale = m.diagonal().mean();
  return scale > 0.0 ? 1e-6 * scale : 1e-6;
}

/// Spectral decomposition with every eigenvalue below `floor` raised to it.
/// Returns the input unchanged when nothing is below the floor.
inline Eigen::MatrixXd regularize_psd(const Eigen::MatrixXd& m, double floor) {
  require_symmetric(m, "regularize_psd");
  if (!(floor > 0.0) || !std::isfinite(floor)) {
    throw Error("regularize_psd: floor must be a positive real");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) throw Error("regularize_psd: eigendecomposition failed");
  Eigen::VectorXd ev = solver.eigenvalues();
  if ((ev.array() >= floor).all()) return m;
  for (Eigen::Index i = 0; i < ev.size(); ++i) ev[i] = std::max(ev[i], floor);
  Eigen::MatrixXd out = solver.eigenvectors() * ev.asDiagonal() * solver.eigenvectors().transpose();
  return ((out + out.transpose()) * 0.5).eval();
}

/// Classical MLE ignoring the weights: sample mean and covariance with divisor n.
inline GaussianParams unweighted_mle(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  if (n < 1) throw Error("unweighted_mle: empty data");
  GaussianParams p;
  p.mu = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - p.mu.transpose();
  p.sigma = centered.transpose() * centered / static_cast<double>(n);
  return p;
}

/// Report wrapper for the explicit estimators. When `regularize` is set and
/// the covariance fails the PSD check, the eigenvalue floor is applied.
inline EstimateReport estimate_explicit(const WeightedDataset& ds, PairWeightRule rule,
                                        bool regularize = false) {
  EstimateReport report;
  report.method = rule == PairWeightRule::Min ? Method::CwMeanCwCov : Method::CwMeanSqrtCov;
  report.params.mu = cw_mean(ds);
  report.params.sigma = cw_cov(ds, rule);
  report.psd = is_psd(report.params.sigma);
  if (!report.psd && regularize) {
    report.params.sigma = regularize_psd(report.params.sigma, default_psd_floor(report.params.sigma));
    report.regularized = true;
    report.psd = true;
  }
  return report;
}

inline EstimateReport estimate_unweighted(const WeightedDataset& ds) {
  EstimateReport report;
  report.method = Method::UnweightedMle;
  report.params = unweighted_mle(ds.x);
  report.psd = is_psd(report.params.sigma);
  return report;
}

}  // namespace cellweights

#endif
