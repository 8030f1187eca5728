#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "cellweights/cwmle.hpp"
#include "cellweights/unpack.hpp"
#include "support/oracles.hpp"

namespace cw = cellweights;

using Catch::Matchers::ContainsSubstring;

namespace {

// The worked 3x4 example: rows A, B, C.
Eigen::MatrixXd toy_x() {
  Eigen::MatrixXd x(3, 4);
  x << 2.8, 5.3, 4.9, 7.4,
       2.3, 5.7, 4.3, 7.2,
       2.5, 5.1, 4.4, 7.6;
  return x;
}

Eigen::MatrixXd toy_w() {
  Eigen::MatrixXd w(3, 4);
  w << 0.8, 1.0, 0.3, 0.4,
       0.3, 0.5, 0.9, 0.5,
       1.0, 0.6, 0.0, 0.7;
  return w;
}

std::vector<Eigen::Index> set_of(const cw::LevelDecomposition& dec, std::size_t s) {
  return dec.index_sets[s];
}

}  // namespace

TEST_CASE("decompose_row sorts unique weights and groups ties") {
  SECTION("four distinct weights") {
    Eigen::Vector4d w(0.8, 1.0, 0.3, 0.4);
    const auto dec = cw::decompose_row(w);
    CHECK(dec.unique_weights == std::vector<double>{1.0, 0.8, 0.4, 0.3});
    CHECK(set_of(dec, 0) == std::vector<Eigen::Index>{1});
    CHECK(set_of(dec, 1) == std::vector<Eigen::Index>{0});
    CHECK(set_of(dec, 2) == std::vector<Eigen::Index>{3});
    CHECK(set_of(dec, 3) == std::vector<Eigen::Index>{2});
  }
  SECTION("tied weights share a level") {
    Eigen::Vector4d w(0.3, 0.5, 0.9, 0.5);
    const auto dec = cw::decompose_row(w);
    CHECK(dec.unique_weights == std::vector<double>{0.9, 0.5, 0.3});
    CHECK(set_of(dec, 0) == std::vector<Eigen::Index>{2});
    CHECK(set_of(dec, 1) == std::vector<Eigen::Index>{1, 3});
    CHECK(set_of(dec, 2) == std::vector<Eigen::Index>{0});
  }
  SECTION("zero weights belong to no level") {
    Eigen::Vector4d w(1.0, 0.6, 0.0, 0.7);
    const auto dec = cw::decompose_row(w);
    CHECK(dec.unique_weights == std::vector<double>{1.0, 0.7, 0.6});
    CHECK(set_of(dec, 0) == std::vector<Eigen::Index>{0});
    CHECK(set_of(dec, 1) == std::vector<Eigen::Index>{3});
    CHECK(set_of(dec, 2) == std::vector<Eigen::Index>{1});
  }
  SECTION("all-zero row is an error") {
    Eigen::Vector3d w(0.0, 0.0, 0.0);
    CHECK_THROWS_WITH(cw::decompose_row(w), ContainsSubstring("row carries no information"));
  }
}

TEST_CASE("unpack_row produces nested rows with difference weights") {
  SECTION("row A") {
    Eigen::Vector4d x(2.8, 5.3, 4.9, 7.4), w(0.8, 1.0, 0.3, 0.4);
    const auto rows = cw::unpack_row(x, w, 0);
    REQUIRE(rows.size() == 4);
    const double expected[4] = {1.0 - 0.8, 0.8 - 0.4, 0.4 - 0.3, 0.3};
    for (int s = 0; s < 4; ++s) {
      CHECK(rows[s].row_weight == expected[s]);
      CHECK(rows[s].level_index == s + 1);
      CHECK(rows[s].source_index == 0);
    }
    CHECK_FALSE(rows[0].observed(0));
    CHECK(rows[0].values[1] == 5.3);
    CHECK_FALSE(rows[0].observed(2));
    CHECK_FALSE(rows[0].observed(3));
    CHECK(rows[3].observed_count() == 4);
  }
  SECTION("row B: tied cells join at the same level") {
    Eigen::Vector4d x(2.3, 5.7, 4.3, 7.2), w(0.3, 0.5, 0.9, 0.5);
    const auto rows = cw::unpack_row(x, w, 1);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].row_weight == 0.9 - 0.5);
    CHECK(rows[1].row_weight == 0.5 - 0.3);
    CHECK(rows[2].row_weight == 0.3);
    CHECK_FALSE(rows[1].observed(0));
    CHECK(rows[1].values[1] == 5.7);
    CHECK(rows[1].values[2] == 4.3);
    CHECK(rows[1].values[3] == 7.2);
  }
  SECTION("constant weights give a single complete row") {
    Eigen::Vector3d x(1.0, 2.0, 3.0), w(0.7, 0.7, 0.7);
    const auto rows = cw::unpack_row(x, w, 5);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].row_weight == 0.7);
    CHECK(rows[0].observed_count() == 3);
    CHECK(oracles::bitwise_equal(rows[0].values, x));
  }
}

TEST_CASE("unpack_dataset reproduces the worked example") {
  const auto ds = cw::make_weighted_dataset(toy_x(), toy_w());
  const auto u = cw::unpack_dataset(ds);
  REQUIRE(u.rows.size() == 10);

  const double expected_v[10] = {0.2, 0.4, 0.1, 0.3, 0.4, 0.2, 0.3, 0.3, 0.1, 0.6};
  const Eigen::Index expected_source[10] = {0, 0, 0, 0, 1, 1, 1, 2, 2, 2};
  // Observed masks, matching the printed unpacked matrix row by row.
  const char* expected_mask[10] = {"0100", "1100", "1101", "1111", "0010",
                                   "0111", "1111", "1000", "1001", "1101"};
  for (int r = 0; r < 10; ++r) {
    CAPTURE(r);
    CHECK_THAT(u.rows[r].row_weight, Catch::Matchers::WithinAbs(expected_v[r], 1e-12));
    CHECK(u.rows[r].source_index == expected_source[r]);
    for (Eigen::Index j = 0; j < 4; ++j) {
      CHECK(u.rows[r].observed(j) == (expected_mask[r][j] == '1'));
      if (u.rows[r].observed(j)) CHECK(u.rows[r].values[j] == ds.x(u.rows[r].source_index, j));
    }
  }
}

TEST_CASE("all-ones weights unpack to the dataset itself") {
  const auto x = toy_x();
  const auto ds = cw::make_weighted_dataset(x, Eigen::MatrixXd::Ones(3, 4));
  const auto u = cw::unpack_dataset(ds);
  REQUIRE(u.rows.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(u.rows[i].row_weight == 1.0);
    CHECK(u.rows[i].observed_count() == 4);
    CHECK(oracles::bitwise_equal(u.rows[i].values.transpose(), x.row(i)));
  }
}

TEST_CASE("zero-one weights recover the incomplete dataset") {
  Eigen::MatrixXd w(3, 4);
  w << 1, 0, 1, 1,
       1, 1, 1, 1,
       0, 1, 0, 1;
  const auto ds = cw::make_weighted_dataset(toy_x(), w);
  const auto u = cw::unpack_dataset(ds);
  REQUIRE(u.rows.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(u.rows[i].row_weight == 1.0);
    CHECK(u.rows[i].source_index == i);
    for (Eigen::Index j = 0; j < 4; ++j) CHECK(u.rows[i].observed(j) == (w(i, j) == 1.0));
  }
}

TEST_CASE("rows with all-zero weights are dropped silently") {
  Eigen::MatrixXd x = toy_x();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(3, 4);
  w.row(1).setConstant(0.5);
  // Bypasses make_weighted_dataset validation on purpose: unpack must still
  // drop the uninformative rows when handed such a struct directly.
  const cw::WeightedDataset ds{x, w, {}};
  const auto u = cw::unpack_dataset(ds);
  REQUIRE(u.rows.size() == 1);
  CHECK(u.rows[0].source_index == 1);

  const cw::WeightedDataset vacuous{x, Eigen::MatrixXd::Zero(3, 4), {}};
  CHECK_THROWS_WITH(cw::unpack_dataset(vacuous), ContainsSubstring("dataset carries no information"));
}

TEST_CASE("unpack properties: weight conservation, nesting, row bound") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> n_dist(1, 10), d_dist(1, 6);
  for (int trial = 0; trial < 150; ++trial) {
    const Eigen::Index n = n_dist(rng), d = d_dist(rng);
    const auto x = oracles::random_gaussian_matrix(rng, n, d);
    const auto w = oracles::random_weight_matrix(rng, n, d, oracles::WeightStyle::TiedLevels);
    const auto ds = cw::make_weighted_dataset(x, w);
    const auto u = cw::unpack_dataset(ds);

    CHECK(u.size() <= n * d);
    for (Eigen::Index i = 0; i < n; ++i) {
      double weight_sum = 0.0;
      std::vector<const cw::IncompleteRow*> rows;
      for (const auto& r : u.rows) {
        if (r.source_index == i) {
          rows.push_back(&r);
          weight_sum += r.row_weight;
        }
      }
      const double max_w = ds.w.row(i).maxCoeff();
      if (max_w == 0.0) {
        CHECK(rows.empty());
        continue;
      }
      CHECK_THAT(weight_sum, Catch::Matchers::WithinAbs(max_w, 1e-12));
      // Nesting: observed sets strictly grow with the level.
      for (std::size_t s = 1; s < rows.size(); ++s) {
        CHECK(rows[s]->level_index == rows[s - 1]->level_index + 1);
        bool strict = false;
        for (Eigen::Index j = 0; j < d; ++j) {
          if (rows[s - 1]->observed(j)) CHECK(rows[s]->observed(j));
          if (rows[s]->observed(j) && !rows[s - 1]->observed(j)) strict = true;
        }
        CHECK(strict);
      }
      // Levels observe exactly the cells at or above their weight.
      for (const auto* r : rows) CHECK(r->row_weight > 0.0);
    }
  }
}

TEST_CASE("unpacked loglikelihood equals the direct cellwise evaluation") {
  std::mt19937_64 rng(99);
  for (Eigen::Index d : {2, 3}) {
    for (int trial = 0; trial < 25; ++trial) {
      const auto x = oracles::random_gaussian_matrix(rng, 1, d);
      Eigen::MatrixXd w = oracles::random_weight_matrix(rng, 1, d, oracles::WeightStyle::Uniform);
      const auto ds = cw::make_weighted_dataset(x, w);
      cw::GaussianParams theta;
      theta.mu = oracles::random_gaussian_matrix(rng, d, 1).col(0);
      theta.sigma = oracles::random_pd_matrix(rng, d);

      const double via_unpack = cw::observed_loglik(cw::unpack_dataset(ds), theta);
      const double direct = oracles::direct_cellwise_loglik(ds.x, ds.w, theta.mu, theta.sigma);
      CHECK_THAT(via_unpack, Catch::Matchers::WithinAbs(direct, 1e-10));
    }
  }
}
