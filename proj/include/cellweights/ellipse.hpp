#ifndef CELLWEIGHTS_ELLIPSE_HPP
#define CELLWEIGHTS_ELLIPSE_HPP

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "cellweights/dataset.hpp"

namespace cellweights {

/// Chi-squared quantile with 2 degrees of freedom (closed form).
inline double chi_squared_quantile_df2(double coverage) {
  if (!(coverage > 0.0 && coverage < 1.0)) throw Error("coverage must lie in (0,1)");
  return -2.0 * std::log1p(-coverage);
}

/// Tolerance-ellipse boundary for a bivariate Gaussian: the set of points x
/// with (x-mu)' Sigma^-1 (x-mu) equal to the chi-squared(2) quantile at the
/// coverage level.
struct EllipseSpec {
  Eigen::Vector2d center;
  Eigen::Matrix2d shape;
  double coverage = 0.95;
  std::vector<Eigen::Vector2d> boundary;
};

inline EllipseSpec tolerance_ellipse(const GaussianParams& params, double coverage = 0.95,
                                     int points = 360) {
  if (params.dim() != 2 || params.sigma.rows() != 2 || params.sigma.cols() != 2) {
    throw Error("tolerance_ellipse: parameters must be bivariate");
  }
  require_symmetric(params.sigma, "tolerance_ellipse");
  if (points < 3) throw Error("tolerance_ellipse: need at least 3 boundary points");
  const double q = chi_squared_quantile_df2(coverage);

  Eigen::LLT<Eigen::Matrix2d> llt(params.sigma);
  if (llt.info() != Eigen::Success) throw Error("tolerance_ellipse: singular covariance");
  const Eigen::Matrix2d root = llt.matrixL();

  EllipseSpec spec;
  spec.center = params.mu;
  spec.shape = params.sigma;
  spec.coverage = coverage;
  spec.boundary.reserve(static_cast<std::size_t>(points));
  const double scale = std::sqrt(q);
  for (int t = 0; t < points; ++t) {
    const double angle = 2.0 * M_PI * static_cast<double>(t) / static_cast<double>(points);
    const Eigen::Vector2d unit(std::cos(angle), std::sin(angle));
    spec.boundary.push_back(spec.center + scale * (root * unit));
  }
  return spec;
}

}  // namespace cellweights

#endif
