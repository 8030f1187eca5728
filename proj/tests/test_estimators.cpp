#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "cellweights/estimators.hpp"
#include "support/oracles.hpp"

namespace cw = cellweights;

using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

TEST_CASE("cw_mean basics") {
  SECTION("all weights one gives the sample mean") {
    Eigen::MatrixXd x(3, 2);
    x << 1, 4, 2, 5, 3, 9;
    const auto ds = cw::make_weighted_dataset(x, Eigen::MatrixXd::Ones(3, 2));
    const Eigen::VectorXd mu = cw::cw_mean(ds);
    CHECK_THAT(mu[0], WithinAbs(2.0, 1e-15));
    CHECK_THAT(mu[1], WithinAbs(6.0, 1e-15));
  }
  SECTION("hand-evaluated weighted column") {
    Eigen::MatrixXd x(2, 1), w(2, 1);
    x << 1, 3;
    w << 1, 3;
    CHECK_THAT(cw::cw_mean(cw::make_weighted_dataset(x, w))[0], WithinAbs(2.5, 1e-15));
  }
  SECTION("column with zero total weight is an error naming the column") {
    Eigen::MatrixXd x(2, 2), w(2, 2);
    x.setOnes();
    w << 1, 0, 1, 0;
    CHECK_THROWS_WITH(cw::cw_mean(cw::WeightedDataset{x, w, {}}),
                      ContainsSubstring("column 2"));
  }
}

TEST_CASE("cw_cov basics") {
  SECTION("all weights one matches the divisor-n covariance") {
    std::mt19937_64 rng(1);
    const auto x = oracles::random_gaussian_matrix(rng, 20, 3);
    const auto ds = cw::make_weighted_dataset(x, Eigen::MatrixXd::Ones(20, 3));
    const auto mle = cw::unweighted_mle(x);
    CHECK((cw::cw_cov(ds, cw::PairWeightRule::Min) - mle.sigma).cwiseAbs().maxCoeff() < 1e-13);
  }
  SECTION("zero-one weights average over jointly observed pairs, rules agree exactly") {
    std::mt19937_64 rng(2);
    const auto x = oracles::random_gaussian_matrix(rng, 40, 3);
    const auto w = oracles::random_weight_matrix(rng, 40, 3, oracles::WeightStyle::ZeroOne);
    const auto ds = cw::make_weighted_dataset(x, w);
    const auto min_cov = cw::cw_cov(ds, cw::PairWeightRule::Min);
    const auto sqrt_cov = cw::cw_cov(ds, cw::PairWeightRule::Sqrt);
    CHECK(oracles::bitwise_equal(min_cov, sqrt_cov));  // bitwise: identical pair weights on 0/1

    const Eigen::VectorXd mu = cw::cw_mean(ds);
    for (Eigen::Index j = 0; j < 3; ++j) {
      for (Eigen::Index k = 0; k < 3; ++k) {
        double sum = 0.0;
        int count = 0;
        for (Eigen::Index i = 0; i < 40; ++i) {
          if (w(i, j) == 1.0 && w(i, k) == 1.0) {
            sum += (x(i, j) - mu[j]) * (x(i, k) - mu[k]);
            ++count;
          }
        }
        REQUIRE(count > 0);
        CHECK_THAT(min_cov(j, k), WithinAbs(sum / count, 1e-12));
      }
    }
  }
  SECTION("pair with zero total pair weight is an error naming the pair") {
    Eigen::MatrixXd x(2, 2), w(2, 2);
    x << 1, 2, 3, 4;
    w << 1, 0, 0, 1;  // columns fine, pair (1,2) never jointly weighted
    CHECK_THROWS_WITH(cw::cw_cov(cw::make_weighted_dataset(x, w)), ContainsSubstring("pair (1,2)"));
  }
}

TEST_CASE("cw estimators are invariant to a common weight scale") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 120; ++trial) {
    std::uniform_int_distribution<int> n_dist(3, 12), d_dist(1, 4);
    std::uniform_real_distribution<double> scale_dist(0.1, 25.0);
    const Eigen::Index n = n_dist(rng), d = d_dist(rng);
    const auto x = oracles::random_gaussian_matrix(rng, n, d);
    const auto w = oracles::random_weight_matrix(rng, n, d, oracles::WeightStyle::Uniform);
    const double c = scale_dist(rng);
    const auto ds = cw::make_weighted_dataset(x, w);
    const auto scaled = cw::make_weighted_dataset(x, c * w);

    CHECK((cw::cw_mean(ds) - cw::cw_mean(scaled)).cwiseAbs().maxCoeff() < 1e-12);
    for (auto rule : {cw::PairWeightRule::Min, cw::PairWeightRule::Sqrt}) {
      const auto a = cw::cw_cov(ds, rule);
      const auto b = cw::cw_cov(scaled, rule);
      CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(oracles::bitwise_equal(a, a.transpose().eval()));  // exact symmetry by construction
    }
  }
}

TEST_CASE("diagonals of the two pair-weight rules coincide for any weights") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = oracles::random_gaussian_matrix(rng, 10, 3);
    const auto w = oracles::random_weight_matrix(rng, 10, 3, oracles::WeightStyle::Uniform);
    const auto ds = cw::make_weighted_dataset(x, w);
    const auto a = cw::cw_cov(ds, cw::PairWeightRule::Min);
    const auto b = cw::cw_cov(ds, cw::PairWeightRule::Sqrt);
    CHECK(oracles::bitwise_equal(a.diagonal(), b.diagonal()));
  }
}

TEST_CASE("is_psd") {
  CHECK(cw::is_psd(Eigen::MatrixXd::Identity(3, 3)));
  Eigen::MatrixXd neg(2, 2);
  neg << 1, 0, 0, -0.5;
  CHECK_FALSE(cw::is_psd(neg));
  Eigen::MatrixXd indef(2, 2);
  indef << 1, 2, 2, 1;  // eigenvalues 3 and -1
  CHECK_FALSE(cw::is_psd(indef));
  Eigen::MatrixXd asym(2, 2);
  asym << 1, 2, 0, 1;
  CHECK_THROWS_WITH(cw::is_psd(asym), ContainsSubstring("not symmetric"));
}

TEST_CASE("regularize_psd") {
  SECTION("already-PSD input is returned unchanged") {
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(3, 3);
    CHECK(oracles::bitwise_equal(cw::regularize_psd(id, 1e-6), id));
  }
  SECTION("axis-aligned clip") {
    Eigen::MatrixXd m(2, 2);
    m << 2, 0, 0, -1;
    const auto out = cw::regularize_psd(m, 1e-6);
    CHECK_THAT(out(0, 0), WithinAbs(2.0, 1e-12));
    CHECK_THAT(out(1, 1), WithinAbs(1e-6, 1e-12));
    CHECK_THAT(out(0, 1), WithinAbs(0.0, 1e-12));
  }
  SECTION("matches an independent eigen-clip recomputation") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
      Eigen::MatrixXd m(3, 3);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j <= i; ++j) m(i, j) = m(j, i) = gauss(rng);
      const double floor = 1e-6;
      const auto fast = cw::regularize_psd(m, floor);
      const auto slow = oracles::clip_eigenvalues(m, floor);
      CHECK((fast - slow).cwiseAbs().maxCoeff() < 1e-10);
      CHECK(oracles::min_eigenvalue(fast) >= floor - 1e-10);
      // Idempotence.
      CHECK((cw::regularize_psd(fast, floor) - fast).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SECTION("invalid floor") {
    CHECK_THROWS_WITH(cw::regularize_psd(Eigen::MatrixXd::Identity(2, 2), 0.0),
                      ContainsSubstring("floor"));
  }
}

TEST_CASE("default_psd_floor scales with the diagonal") {
  Eigen::MatrixXd m = 4.0 * Eigen::MatrixXd::Identity(3, 3);
  CHECK_THAT(cw::default_psd_floor(m), WithinAbs(4e-6, 1e-18));
}
