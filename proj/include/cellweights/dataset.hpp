#ifndef CELLWEIGHTS_DATASET_HPP
#define CELLWEIGHTS_DATASET_HPP

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace cellweights {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double missing_value() { return std::numeric_limits<double>::quiet_NaN(); }
inline bool is_missing(double v) { return std::isnan(v); }

/// A data matrix paired with a same-shape matrix of nonnegative cell weights.
/// Weight zero marks the cell as missing; the stored value is then ignored.
struct WeightedDataset {
  Eigen::MatrixXd x;
  Eigen::MatrixXd w;
  std::vector<std::string> row_labels;  // empty, or one label per row

  Eigen::Index rows() const { return x.rows(); }
  Eigen::Index cols() const { return x.cols(); }
};

/// One row of an unpacked dataset: a possibly incomplete observation with a
/// positive row weight, tagged with the source row it came from.
struct IncompleteRow {
  Eigen::VectorXd values;         // NaN marks a missing cell
  double row_weight = 0.0;        // > 0
  Eigen::Index source_index = 0;  // row of the original matrix, 0-based
  int level_index = 1;            // position within the source row's unpacking, 1-based

  bool observed(Eigen::Index j) const { return !is_missing(values[j]); }

  Eigen::Index observed_count() const {
    Eigen::Index n = 0;
    for (Eigen::Index j = 0; j < values.size(); ++j) n += observed(j) ? 1 : 0;
    return n;
  }
};

struct UnpackedDataset {
  std::vector<IncompleteRow> rows;
  Eigen::Index dim = 0;

  Eigen::Index size() const { return static_cast<Eigen::Index>(rows.size()); }
};

struct GaussianParams {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;

  Eigen::Index dim() const { return mu.size(); }
};

enum class Method { CwMle, CwMeanCwCov, CwMeanSqrtCov, UnweightedMle };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::CwMle: return "cwMLE";
    case Method::CwMeanCwCov: return "cwMean+cwCov";
    case Method::CwMeanSqrtCov: return "cwMean+sqrtCov";
    case Method::UnweightedMle: return "unweightedMLE";
  }
  return "?";
}

/// Parameter estimate plus fitting diagnostics. loglik_trace is empty for the
/// non-iterative methods; for cwMLE it holds the observed loglikelihood at the
/// initial parameters followed by one entry per EM update, and is nondecreasing.
struct EstimateReport {
  GaussianParams params;
  Method method = Method::CwMle;
  int iterations = 0;
  std::vector<double> loglik_trace;
  bool psd = true;
  bool regularized = false;
  bool converged = true;
  std::vector<std::string> warnings;
};

inline bool is_symmetric(const Eigen::MatrixXd& m, double rel_tol = 1e-12) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

inline void require_symmetric(const Eigen::MatrixXd& m, const char* where) {
  if (!is_symmetric(m)) throw Error(std::string(where) + ": matrix is not symmetric");
}

/// Validates and assembles a WeightedDataset. A non-finite data cell is
/// accepted only under weight zero, in which case its value is coerced to 0.
inline WeightedDataset make_weighted_dataset(Eigen::MatrixXd x, Eigen::MatrixXd w,
                                             std::vector<std::string> row_labels = {}) {
  if (x.rows() < 1 || x.cols() < 1) throw Error("dataset is empty");
  if (x.rows() != w.rows() || x.cols() != w.cols()) {
    throw Error("shape mismatch: data is " + std::to_string(x.rows()) + "x" +
                std::to_string(x.cols()) + ", weights is " + std::to_string(w.rows()) + "x" +
                std::to_string(w.cols()));
  }
  if (!row_labels.empty() && static_cast<Eigen::Index>(row_labels.size()) != x.rows()) {
    throw Error("row label count does not match the number of rows");
  }
  bool any_positive = false;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double wij = w(i, j);
      if (!(wij >= 0.0) || !std::isfinite(wij)) {
        throw Error("negative or non-finite weight at row " + std::to_string(i + 1) +
                    ", column " + std::to_string(j + 1));
      }
      if (!std::isfinite(x(i, j))) {
        if (wij > 0.0) {
          throw Error("non-finite data cell with positive weight at row " +
                      std::to_string(i + 1) + ", column " + std::to_string(j + 1));
        }
        x(i, j) = 0.0;  // value is irrelevant under zero weight
      }
      any_positive = any_positive || wij > 0.0;
    }
  }
  if (!any_positive) throw Error("dataset carries no information");
  return WeightedDataset{std::move(x), std::move(w), std::move(row_labels)};
}

}  // namespace cellweights

#endif
