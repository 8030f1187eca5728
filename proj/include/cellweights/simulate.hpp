#ifndef CELLWEIGHTS_SIMULATE_HPP
#define CELLWEIGHTS_SIMULATE_HPP

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <optional>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "cellweights/cwmle.hpp"
#include "cellweights/estimators.hpp"
#include "cellweights/rng.hpp"

namespace cellweights {

enum class Scenario { Jitter, UniformWeights, Mcar };

inline const char* scenario_name(Scenario s) {
  switch (s) {
    case Scenario::Jitter: return "jitter";
    case Scenario::UniformWeights: return "uniform";
    case Scenario::Mcar: return "mcar";
  }
  return "?";
}

/// Declarative Monte Carlo scenario. Data are standard Gaussian; the weight
/// mechanism depends on the scenario:
///   Jitter         - a fixed fraction of cells gets extra Gaussian noise and
///                    weight 1/v^2 where v is the cell's total variance.
///   UniformWeights - precise data, weights i.i.d. Uniform[0,1].
///   Mcar           - precise data, weights i.i.d. Bernoulli(p).
struct ScenarioConfig {
  Scenario scenario = Scenario::UniformWeights;
  Eigen::Index n = 100;
  Eigen::Index d = 2;
  int replications = 500;
  std::uint64_t seed = 0;
  double contamination = 0.2;  // Jitter: fraction of jittered cells
  double noise_sd = 3.0;       // Jitter: sd of the added noise
  double bernoulli_p = 0.9;    // Mcar: success probability
};

inline void validate(const ScenarioConfig& cfg) {
  if (cfg.n < 1 || cfg.d < 1) throw Error("scenario: n and d must be at least 1");
  if (cfg.replications < 1) throw Error("scenario: replications must be at least 1");
  if (!(cfg.contamination >= 0.0 && cfg.contamination <= 1.0)) {
    throw Error("scenario: contamination must lie in [0,1]");
  }
  if (!(cfg.bernoulli_p > 0.0 && cfg.bernoulli_p <= 1.0)) {
    throw Error("scenario: Bernoulli probability must lie in (0,1]");
  }
  if (!(cfg.noise_sd >= 0.0)) throw Error("scenario: noise sd must be nonnegative");
}

namespace detail {
constexpr std::uint64_t kDataStream = 0;
constexpr std::uint64_t kWeightStream = 1;
}  // namespace detail

/// Generates one replication of the scenario. Deterministic in (cfg.seed,
/// replication); replications use independent streams.
inline WeightedDataset generate_scenario(const ScenarioConfig& cfg, int replication) {
  validate(cfg);
  const Eigen::Index n = cfg.n, d = cfg.d;
  auto data_rng = stream_rng(cfg.seed, static_cast<std::uint64_t>(replication), detail::kDataStream);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = gauss(data_rng);

  auto weight_rng = stream_rng(cfg.seed, static_cast<std::uint64_t>(replication), detail::kWeightStream);
  Eigen::MatrixXd w(n, d);
  switch (cfg.scenario) {
    case Scenario::Jitter: {
      w.setOnes();
      const auto cells = n * d;
      const auto k = static_cast<Eigen::Index>(std::llround(cfg.contamination * static_cast<double>(cells)));
      // Exact without-replacement draw of k cells via partial Fisher-Yates.
      std::vector<Eigen::Index> perm(static_cast<std::size_t>(cells));
      for (Eigen::Index c = 0; c < cells; ++c) perm[static_cast<std::size_t>(c)] = c;
      for (Eigen::Index t = 0; t < k; ++t) {
        std::uniform_int_distribution<Eigen::Index> pick(t, cells - 1);
        std::swap(perm[static_cast<std::size_t>(t)], perm[static_cast<std::size_t>(pick(weight_rng))]);
      }
      const double var = cfg.noise_sd * cfg.noise_sd + 1.0;
      std::normal_distribution<double> noise(0.0, cfg.noise_sd);
      for (Eigen::Index t = 0; t < k; ++t) {
        const Eigen::Index c = perm[static_cast<std::size_t>(t)];
        const Eigen::Index i = c / d, j = c % d;
        x(i, j) += noise(weight_rng);
        w(i, j) = 1.0 / (var * var);
      }
      break;
    }
    case Scenario::UniformWeights: {
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) w(i, j) = unif(weight_rng);
      break;
    }
    case Scenario::Mcar: {
      std::bernoulli_distribution keep(cfg.bernoulli_p);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) w(i, j) = keep(weight_rng) ? 1.0 : 0.0;
      break;
    }
  }
  return make_weighted_dataset(std::move(x), std::move(w));
}

/// Variance inflation caused by random weights: V(W) = E[W^2]/E[W]^2 for the
/// mean and diagonal entries, and the analogous factors for the pair weights
/// min(W1,W2) and sqrt(W1 W2) governing the off-diagonal entries.
struct VarianceFactor {
  double v_w = 1.0;     // V(W)
  double v_min = 1.0;   // V(min(W1,W2))
  double v_sqrt = 1.0;  // V(sqrt(W1 W2))

  double cv_squared() const { return v_w - 1.0; }  // V(W) = cv(W)^2 + 1
};

inline VarianceFactor uniform_variance_factors() {
  return VarianceFactor{4.0 / 3.0, 3.0 / 2.0, 81.0 / 64.0};
}

inline VarianceFactor bernoulli_variance_factors(double p) {
  if (!(p > 0.0 && p <= 1.0)) throw Error("variance factor: p must lie in (0,1]");
  // min and sqrt of two independent Bernoulli(p) are both Bernoulli(p^2).
  return VarianceFactor{1.0 / p, 1.0 / (p * p), 1.0 / (p * p)};
}

inline VarianceFactor degenerate_variance_factors() { return VarianceFactor{1.0, 1.0, 1.0}; }

/// Sample-moment estimate from two independent columns of weight draws.
inline VarianceFactor sampled_variance_factors(std::span<const double> w1,
                                               std::span<const double> w2) {
  if (w1.size() != w2.size() || w1.empty()) {
    throw Error("variance factor: need two equal-length nonempty sample columns");
  }
  const auto m = static_cast<double>(w1.size());
  double s1 = 0, sq = 0, mn1 = 0, mn2 = 0, sr1 = 0, sr2 = 0;
  for (std::size_t i = 0; i < w1.size(); ++i) {
    s1 += w1[i] + w2[i];
    sq += w1[i] * w1[i] + w2[i] * w2[i];
    const double lo = std::min(w1[i], w2[i]);
    mn1 += lo;
    mn2 += lo * lo;
    const double rt = std::sqrt(w1[i] * w2[i]);
    sr1 += rt;
    sr2 += rt * rt;
  }
  const double ew = s1 / (2.0 * m), ew2 = sq / (2.0 * m);
  if (!(ew > 0.0)) throw Error("variance factor: E[W] is zero");
  const double emn = mn1 / m, emn2 = mn2 / m;
  const double esr = sr1 / m, esr2 = sr2 / m;
  if (!(emn > 0.0) || !(esr > 0.0)) throw Error("variance factor: pair weight mean is zero");
  return VarianceFactor{ew2 / (ew * ew), emn2 / (emn * emn), esr2 / (esr * esr)};
}

enum class EstimatorKind : int { Unweighted = 0, CwMle = 1, CwMeanCwCov = 2, CwMeanSqrtCov = 3 };
constexpr int kEstimatorCount = 4;

inline const char* estimator_name(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::Unweighted: return "unweighted";
    case EstimatorKind::CwMle: return "cwmle";
    case EstimatorKind::CwMeanCwCov: return "cwmean_cwcov";
    case EstimatorKind::CwMeanSqrtCov: return "cwmean_sqrtcov";
  }
  return "?";
}

/// Per-estimator aggregates over the replications. Averages, n*variance and
/// n*MSE are per component; the MSE multiplication factors divide n*MSE by the
/// complete-data asymptotic variance under the truth mu=0, Sigma=I (1 for the
/// mean and off-diagonal entries, 2 for diagonal entries) and average over the
/// components of each group.
struct EstimatorSummary {
  EstimatorKind kind = EstimatorKind::Unweighted;
  Eigen::VectorXd mu_avg;
  Eigen::MatrixXd sigma_avg;
  Eigen::VectorXd mu_nvar;
  Eigen::MatrixXd sigma_nvar;
  Eigen::VectorXd mu_nmse;
  Eigen::MatrixXd sigma_nmse;
  double mse_factor_mu = 0.0;
  double mse_factor_diag = 0.0;
  double mse_factor_offdiag = 0.0;
  int failures = 0;
};

struct SimulationSummary {
  ScenarioConfig config;
  std::vector<EstimatorSummary> estimators;
  // Asymptotic-equivalence statistics between cwMLE and its explicit
  // approximations: n * mean over (replications, components) of the squared
  // estimate difference. NaN when the required estimator pair was not run.
  double eq_mu_cwmean = std::numeric_limits<double>::quiet_NaN();
  double eq_diag_cwcov = std::numeric_limits<double>::quiet_NaN();
  double eq_offdiag_cwcov = std::numeric_limits<double>::quiet_NaN();
  double eq_offdiag_sqrtcov = std::numeric_limits<double>::quiet_NaN();
  double psd_fraction_cwcov = std::numeric_limits<double>::quiet_NaN();
  double psd_fraction_sqrtcov = std::numeric_limits<double>::quiet_NaN();
};

/// One replication's estimates, for optional per-replication dumps.
struct RepRecord {
  int replication = 0;
  EstimatorKind kind = EstimatorKind::Unweighted;
  bool ok = false;
  GaussianParams params;
};

/// n * mean over (replications, components) of the squared difference between
/// two estimate sequences. Zero when the sequences coincide.
inline double equivalence_statistic(Eigen::Index n, const std::vector<Eigen::VectorXd>& a,
                                    const std::vector<Eigen::VectorXd>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw Error("equivalence_statistic: need equal-length nonempty sequences");
  }
  double sum = 0.0;
  Eigen::Index components = 0;
  for (std::size_t m = 0; m < a.size(); ++m) {
    if (a[m].size() != b[m].size()) throw Error("equivalence_statistic: component mismatch");
    sum += (a[m] - b[m]).squaredNorm();
    components = a[m].size();
  }
  if (components == 0) throw Error("equivalence_statistic: empty components");
  return static_cast<double>(n) * sum /
         (static_cast<double>(a.size()) * static_cast<double>(components));
}

namespace detail {

struct RepResult {
  std::array<std::optional<GaussianParams>, kEstimatorCount> fits;
  bool cwcov_psd = false;
  bool sqrtcov_psd = false;
};

inline RepResult run_one(const ScenarioConfig& cfg, int replication,
                         const std::array<bool, kEstimatorCount>& wanted) {
  RepResult out;
  const WeightedDataset ds = generate_scenario(cfg, replication);
  std::optional<Eigen::VectorXd> mean_cache;
  auto cwmean = [&]() -> const Eigen::VectorXd& {
    if (!mean_cache) mean_cache = cw_mean(ds);
    return *mean_cache;
  };
  if (wanted[static_cast<int>(EstimatorKind::Unweighted)]) {
    out.fits[static_cast<int>(EstimatorKind::Unweighted)] = unweighted_mle(ds.x);
  }
  if (wanted[static_cast<int>(EstimatorKind::CwMle)]) {
    try {
      out.fits[static_cast<int>(EstimatorKind::CwMle)] = fit_cwmle(ds).params;
    } catch (const Error&) {
    }
  }
  if (wanted[static_cast<int>(EstimatorKind::CwMeanCwCov)]) {
    try {
      GaussianParams p{cwmean(), cw_cov(ds, PairWeightRule::Min)};
      out.cwcov_psd = is_psd(p.sigma);
      out.fits[static_cast<int>(EstimatorKind::CwMeanCwCov)] = std::move(p);
    } catch (const Error&) {
    }
  }
  if (wanted[static_cast<int>(EstimatorKind::CwMeanSqrtCov)]) {
    try {
      GaussianParams p{cwmean(), cw_cov(ds, PairWeightRule::Sqrt)};
      out.sqrtcov_psd = is_psd(p.sigma);
      out.fits[static_cast<int>(EstimatorKind::CwMeanSqrtCov)] = std::move(p);
    } catch (const Error&) {
    }
  }
  return out;
}

}  // namespace detail

/// Runs the Monte Carlo scenario for the requested estimators. Replications
/// run on `threads` workers with per-replication random streams and are
/// aggregated in replication order, so the summary is identical for any
/// thread count.
inline SimulationSummary run_simulation(const ScenarioConfig& cfg,
                                        std::vector<EstimatorKind> estimators,
                                        int threads = 1,
                                        std::vector<RepRecord>* records = nullptr) {
  validate(cfg);
  if (estimators.empty()) throw Error("run_simulation: empty estimator set");
  std::array<bool, kEstimatorCount> wanted{};
  for (auto k : estimators) wanted[static_cast<int>(k)] = true;

  const int reps = cfg.replications;
  std::vector<detail::RepResult> results(static_cast<std::size_t>(reps));
  threads = std::max(1, threads);
  if (threads == 1) {
    for (int m = 0; m < reps; ++m) results[static_cast<std::size_t>(m)] = detail::run_one(cfg, m, wanted);
  } else {
    std::atomic<int> next{0};
    auto worker = [&]() {
      while (true) {
        const int m = next.fetch_add(1);
        if (m >= reps) return;
        results[static_cast<std::size_t>(m)] = detail::run_one(cfg, m, wanted);
      }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  const Eigen::Index d = cfg.d;
  const auto nd = static_cast<double>(cfg.n);
  SimulationSummary summary;
  summary.config = cfg;

  for (int e = 0; e < kEstimatorCount; ++e) {
    if (!wanted[e]) continue;
    EstimatorSummary es;
    es.kind = static_cast<EstimatorKind>(e);
    Eigen::VectorXd mu_sum = Eigen::VectorXd::Zero(d), mu_sq = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd sg_sum = Eigen::MatrixXd::Zero(d, d), sg_sq = Eigen::MatrixXd::Zero(d, d);
    const Eigen::MatrixXd truth = Eigen::MatrixXd::Identity(d, d);
    Eigen::VectorXd mu_se = Eigen::VectorXd::Zero(d);       // squared error about mu = 0
    Eigen::MatrixXd sg_se = Eigen::MatrixXd::Zero(d, d);    // squared error about Sigma = I
    int ok = 0;
    for (int m = 0; m < reps; ++m) {
      const auto& fit = results[static_cast<std::size_t>(m)].fits[static_cast<std::size_t>(e)];
      if (records) {
        RepRecord rec;
        rec.replication = m;
        rec.kind = es.kind;
        rec.ok = fit.has_value();
        if (fit) rec.params = *fit;
        records->push_back(std::move(rec));
      }
      if (!fit) {
        ++es.failures;
        continue;
      }
      ++ok;
      mu_sum += fit->mu;
      mu_sq += fit->mu.cwiseAbs2();
      mu_se += fit->mu.cwiseAbs2();
      sg_sum += fit->sigma;
      sg_sq += fit->sigma.cwiseAbs2();
      sg_se += (fit->sigma - truth).cwiseAbs2();
    }
    if (ok == 0) throw Error(std::string("run_simulation: estimator ") + estimator_name(es.kind) +
                             " failed in every replication");
    const auto md = static_cast<double>(ok);
    es.mu_avg = mu_sum / md;
    es.sigma_avg = sg_sum / md;
    es.mu_nvar = nd * (mu_sq / md - es.mu_avg.cwiseAbs2());
    es.sigma_nvar = nd * (sg_sq / md - es.sigma_avg.cwiseAbs2());
    es.mu_nmse = nd * mu_se / md;
    es.sigma_nmse = nd * sg_se / md;
    es.mse_factor_mu = es.mu_nmse.mean();
    es.mse_factor_diag = es.sigma_nmse.diagonal().mean() / 2.0;
    double off = 0.0;
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index k = j + 1; k < d; ++k) off += es.sigma_nmse(j, k);
    es.mse_factor_offdiag = d > 1 ? off / (static_cast<double>(d) * (static_cast<double>(d) - 1.0) / 2.0)
                                  : std::numeric_limits<double>::quiet_NaN();
    summary.estimators.push_back(std::move(es));
  }

  // Equivalence statistics between cwMLE and the explicit approximations.
  auto pair_stat = [&](EstimatorKind other, auto&& extract) -> double {
    double sum = 0.0;
    Eigen::Index components = 0;
    int m_ok = 0;
    for (int m = 0; m < reps; ++m) {
      const auto& r = results[static_cast<std::size_t>(m)];
      const auto& a = r.fits[static_cast<int>(EstimatorKind::CwMle)];
      const auto& b = r.fits[static_cast<int>(other)];
      if (!a || !b) continue;
      const Eigen::VectorXd va = extract(*a), vb = extract(*b);
      sum += (va - vb).squaredNorm();
      components = va.size();
      ++m_ok;
    }
    if (m_ok == 0 || components == 0) return std::numeric_limits<double>::quiet_NaN();
    return nd * sum / (static_cast<double>(m_ok) * static_cast<double>(components));
  };
  auto get_mu = [](const GaussianParams& p) { return p.mu; };
  auto get_diag = [](const GaussianParams& p) { return Eigen::VectorXd(p.sigma.diagonal()); };
  auto get_offdiag = [d](const GaussianParams& p) {
    Eigen::VectorXd v(d * (d - 1) / 2);
    Eigen::Index t = 0;
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index k = j + 1; k < d; ++k) v[t++] = p.sigma(j, k);
    return v;
  };
  const bool have_mle = wanted[static_cast<int>(EstimatorKind::CwMle)];
  if (have_mle && wanted[static_cast<int>(EstimatorKind::CwMeanCwCov)]) {
    summary.eq_mu_cwmean = pair_stat(EstimatorKind::CwMeanCwCov, get_mu);
    summary.eq_diag_cwcov = pair_stat(EstimatorKind::CwMeanCwCov, get_diag);
    if (d > 1) summary.eq_offdiag_cwcov = pair_stat(EstimatorKind::CwMeanCwCov, get_offdiag);
  }
  if (have_mle && wanted[static_cast<int>(EstimatorKind::CwMeanSqrtCov)]) {
    if (d > 1) summary.eq_offdiag_sqrtcov = pair_stat(EstimatorKind::CwMeanSqrtCov, get_offdiag);
  }

  if (wanted[static_cast<int>(EstimatorKind::CwMeanCwCov)]) {
    int psd = 0, tot = 0;
    for (const auto& r : results) {
      if (r.fits[static_cast<int>(EstimatorKind::CwMeanCwCov)]) {
        ++tot;
        psd += r.cwcov_psd ? 1 : 0;
      }
    }
    if (tot > 0) summary.psd_fraction_cwcov = static_cast<double>(psd) / tot;
  }
  if (wanted[static_cast<int>(EstimatorKind::CwMeanSqrtCov)]) {
    int psd = 0, tot = 0;
    for (const auto& r : results) {
      if (r.fits[static_cast<int>(EstimatorKind::CwMeanSqrtCov)]) {
        ++tot;
        psd += r.sqrtcov_psd ? 1 : 0;
      }
    }
    if (tot > 0) summary.psd_fraction_sqrtcov = static_cast<double>(psd) / tot;
  }
  return summary;
}

enum class EquivalencePair { MuCwMean, DiagCwCov, OffdiagCwCov, OffdiagSqrtCov };

inline const char* equivalence_pair_name(EquivalencePair p) {
  switch (p) {
    case EquivalencePair::MuCwMean: return "mu-cwmean";
    case EquivalencePair::DiagCwCov: return "diag-cwcov";
    case EquivalencePair::OffdiagCwCov: return "offdiag-cwcov";
    case EquivalencePair::OffdiagSqrtCov: return "offdiag-sqrtcov";
  }
  return "?";
}

/// Equivalence statistic between cwMLE and one approximation over a grid of
/// sample sizes, for plotting its decay (or lack of it) with n.
inline std::vector<std::pair<Eigen::Index, double>> equivalence_curve(
    ScenarioConfig cfg, std::span<const Eigen::Index> n_grid, EquivalencePair pair,
    int threads = 1) {
  if (n_grid.empty()) throw Error("equivalence_curve: empty n grid");
  for (std::size_t i = 1; i < n_grid.size(); ++i) {
    if (n_grid[i] <= n_grid[i - 1]) throw Error("equivalence_curve: n grid must be strictly increasing");
  }
  const EstimatorKind approx = pair == EquivalencePair::OffdiagSqrtCov
                                   ? EstimatorKind::CwMeanSqrtCov
                                   : EstimatorKind::CwMeanCwCov;
  std::vector<std::pair<Eigen::Index, double>> curve;
  for (const Eigen::Index n : n_grid) {
    cfg.n = n;
    const auto summary = run_simulation(cfg, {EstimatorKind::CwMle, approx}, threads);
    double value = 0.0;
    switch (pair) {
      case EquivalencePair::MuCwMean: value = summary.eq_mu_cwmean; break;
      case EquivalencePair::DiagCwCov: value = summary.eq_diag_cwcov; break;
      case EquivalencePair::OffdiagCwCov: value = summary.eq_offdiag_cwcov; break;
      case EquivalencePair::OffdiagSqrtCov: value = summary.eq_offdiag_sqrtcov; break;
    }
    curve.emplace_back(n, value);
  }
  return curve;
}

}  // namespace cellweights

#endif
