#ifndef CELLWEIGHTS_UNPACK_HPP
#define CELLWEIGHTS_UNPACK_HPP

#include <algorithm>
#include <numeric>
#include <vector>

#include "cellweights/dataset.hpp"

namespace cellweights {

/// The unique positive weights of one row, sorted descending, with the column
/// index set attached to each weight level. Columns of weight zero belong to
/// no level.
struct LevelDecomposition {
  std::vector<double> unique_weights;                 // w^(1) > ... > w^(q) > 0
  std::vector<std::vector<Eigen::Index>> index_sets;  // I^(s), pairwise disjoint

  std::size_t levels() const { return unique_weights.size(); }
};

/// Groups the columns of a weight vector by their exact weight value.
/// Ties are detected by floating-point equality, not by an epsilon.
inline LevelDecomposition decompose_row(const Eigen::Ref<const Eigen::VectorXd>& weights) {
  std::vector<Eigen::Index> order;
  order.reserve(static_cast<std::size_t>(weights.size()));
  for (Eigen::Index j = 0; j < weights.size(); ++j) {
    if (weights[j] > 0.0) order.push_back(j);
  }
  if (order.empty()) throw Error("row carries no information");
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (weights[a] != weights[b]) return weights[a] > weights[b];
    return a < b;
  });
  LevelDecomposition dec;
  for (Eigen::Index j : order) {
    if (dec.unique_weights.empty() || weights[j] != dec.unique_weights.back()) {
      dec.unique_weights.push_back(weights[j]);
      dec.index_sets.emplace_back();
    }
    dec.index_sets.back().push_back(j);
  }
  return dec;
}

/// Unpacks one row into q incomplete rows. Row s observes the columns whose
/// weight is at least w^(s) and carries row weight w^(s) - w^(s+1), with
/// w^(q+1) = 0; the row weights sum to the largest cell weight of the row.
inline std::vector<IncompleteRow> unpack_row(const Eigen::Ref<const Eigen::VectorXd>& x,
                                             const Eigen::Ref<const Eigen::VectorXd>& weights,
                                             Eigen::Index source_index) {
  const LevelDecomposition dec = decompose_row(weights);
  const Eigen::Index d = x.size();
  std::vector<IncompleteRow> out;
  out.reserve(dec.levels());
  Eigen::VectorXd current = Eigen::VectorXd::Constant(d, missing_value());
  for (std::size_t s = 0; s < dec.levels(); ++s) {
    for (Eigen::Index j : dec.index_sets[s]) current[j] = x[j];
    const double next = s + 1 < dec.levels() ? dec.unique_weights[s + 1] : 0.0;
    IncompleteRow row;
    row.values = current;
    row.row_weight = dec.unique_weights[s] - next;
    row.source_index = source_index;
    row.level_index = static_cast<int>(s) + 1;
    out.push_back(std::move(row));
  }
  return out;
}

/// The unpacking transform: replaces each source row by its level rows, in
/// source order. Rows whose weights are all zero are dropped.
inline UnpackedDataset unpack_dataset(const WeightedDataset& ds) {
  UnpackedDataset u;
  u.dim = ds.cols();
  for (Eigen::Index i = 0; i < ds.rows(); ++i) {
    if ((ds.w.row(i).array() > 0.0).any()) {
      auto rows = unpack_row(ds.x.row(i), ds.w.row(i), i);
      for (auto& r : rows) u.rows.push_back(std::move(r));
    }
  }
  if (u.rows.empty()) throw Error("dataset carries no information");
  return u;
}

}  // namespace cellweights

#endif
