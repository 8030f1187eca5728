// Command-line front end: unpack, estimate, simulate, and tolerance-ellipse
// computation on cellwise weighted CSV data.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cellweights/cellweights.hpp"

namespace cw = cellweights;
using nlohmann::json;

namespace {

json params_to_json(const cw::GaussianParams& p) {
  json j;
  j["mu"] = std::vector<double>(p.mu.data(), p.mu.data() + p.mu.size());
  json sigma = json::array();
  for (Eigen::Index r = 0; r < p.sigma.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < p.sigma.cols(); ++c) row.push_back(p.sigma(r, c));
    sigma.push_back(std::move(row));
  }
  j["sigma"] = std::move(sigma);
  return j;
}

json report_to_json(const cw::EstimateReport& report) {
  json j = params_to_json(report.params);
  j["method"] = cw::method_name(report.method);
  j["iterations"] = report.iterations;
  j["converged"] = report.converged;
  j["loglik_trace"] = report.loglik_trace;
  j["psd"] = report.psd;
  j["regularized"] = report.regularized;
  j["warnings"] = report.warnings;
  return j;
}

json vector_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json summary_to_json(const cw::SimulationSummary& s) {
  json j;
  j["scenario"] = cw::scenario_name(s.config.scenario);
  j["n"] = s.config.n;
  j["d"] = s.config.d;
  j["replications"] = s.config.replications;
  j["seed"] = s.config.seed;
  switch (s.config.scenario) {
    case cw::Scenario::Jitter:
      j["contamination"] = s.config.contamination;
      j["noise_sd"] = s.config.noise_sd;
      break;
    case cw::Scenario::Mcar:
      j["bernoulli_p"] = s.config.bernoulli_p;
      break;
    case cw::Scenario::UniformWeights:
      break;
  }
  json ests;
  for (const auto& e : s.estimators) {
    json je;
    je["mu_avg"] = vector_to_json(e.mu_avg);
    je["sigma_avg"] = matrix_to_json(e.sigma_avg);
    je["mu_nvar"] = vector_to_json(e.mu_nvar);
    je["sigma_nvar"] = matrix_to_json(e.sigma_nvar);
    je["mu_nmse"] = vector_to_json(e.mu_nmse);
    je["sigma_nmse"] = matrix_to_json(e.sigma_nmse);
    je["mse_factor_mu"] = e.mse_factor_mu;
    je["mse_factor_diag"] = e.mse_factor_diag;
    if (std::isfinite(e.mse_factor_offdiag)) je["mse_factor_offdiag"] = e.mse_factor_offdiag;
    je["failures"] = e.failures;
    ests[cw::estimator_name(e.kind)] = std::move(je);
  }
  j["estimators"] = std::move(ests);
  json eq;
  if (std::isfinite(s.eq_mu_cwmean)) eq["mu_cwmean"] = s.eq_mu_cwmean;
  if (std::isfinite(s.eq_diag_cwcov)) eq["diag_cwcov"] = s.eq_diag_cwcov;
  if (std::isfinite(s.eq_offdiag_cwcov)) eq["offdiag_cwcov"] = s.eq_offdiag_cwcov;
  if (std::isfinite(s.eq_offdiag_sqrtcov)) eq["offdiag_sqrtcov"] = s.eq_offdiag_sqrtcov;
  if (!eq.empty()) j["equivalence"] = std::move(eq);
  json psd;
  if (std::isfinite(s.psd_fraction_cwcov)) psd["cwcov"] = s.psd_fraction_cwcov;
  if (std::isfinite(s.psd_fraction_sqrtcov)) psd["sqrtcov"] = s.psd_fraction_sqrtcov;
  if (!psd.empty()) j["psd_fraction"] = std::move(psd);
  return j;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw cw::Error("cannot open '" + out_path + "' for writing");
  out << text;
  if (!out) throw cw::Error("write failed for '" + out_path + "'");
}

void dump_records(const std::vector<cw::RepRecord>& records, Eigen::Index d,
                  const std::string& path) {
  std::ofstream out(path);
  if (!out) throw cw::Error("cannot open '" + path + "' for writing");
  out << "replication,estimator,ok";
  for (Eigen::Index j = 0; j < d; ++j) out << ",mu" << (j + 1);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index k = 0; k < d; ++k) out << ",sigma" << (j + 1) << "_" << (k + 1);
  out << '\n';
  for (const auto& rec : records) {
    out << rec.replication << ',' << cw::estimator_name(rec.kind) << ',' << (rec.ok ? 1 : 0);
    for (Eigen::Index j = 0; j < d; ++j)
      out << ',' << (rec.ok ? cw::format_double(rec.params.mu[j]) : std::string("NA"));
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index k = 0; k < d; ++k)
        out << ',' << (rec.ok ? cw::format_double(rec.params.sigma(j, k)) : std::string("NA"));
    out << '\n';
  }
}

cw::EstimateReport run_method(const cw::WeightedDataset& ds, const std::string& method,
                              const cw::EmConfig& cfg, bool regularize) {
  if (method == "cwmle") return cw::fit_cwmle(ds, cfg);
  if (method == "cwmean-cwcov") return cw::estimate_explicit(ds, cw::PairWeightRule::Min, regularize);
  if (method == "cwmean-sqrtcov") return cw::estimate_explicit(ds, cw::PairWeightRule::Sqrt, regularize);
  if (method == "unweighted") return cw::estimate_unweighted(ds);
  throw cw::Error("unknown method '" + method + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cellwise weighted Gaussian estimation"};
  app.require_subcommand(1);

  std::string out_path;
  std::uint64_t seed = 0;
  int threads = 1;
  app.add_option("--out", out_path, "output file (default: stdout)");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--threads", threads, "worker threads for simulation");

  std::string data_path, weight_path;
  auto add_data_options = [&](CLI::App* cmd) {
    cmd->add_option("--data", data_path, "data CSV")->required();
    cmd->add_option("--weights", weight_path, "cell-weight CSV of identical shape")->required();
  };

  app.fallthrough();
  auto* cmd_unpack = app.add_subcommand("unpack", "unpack a cellwise weighted dataset into a row-weighted incomplete one");
  add_data_options(cmd_unpack);

  auto* cmd_estimate = app.add_subcommand("estimate", "estimate Gaussian location and covariance");
  add_data_options(cmd_estimate);
  std::string method = "cwmle";
  std::string init = "warm";
  bool regularize = false;
  cw::EmConfig em_cfg;
  cmd_estimate->add_option("--method", method, "cwmle | cwmean-cwcov | cwmean-sqrtcov | unweighted")
      ->check(CLI::IsMember({"cwmle", "cwmean-cwcov", "cwmean-sqrtcov", "unweighted"}));
  cmd_estimate->add_option("--max-iter", em_cfg.max_iter, "EM iteration cap");
  cmd_estimate->add_option("--tol", em_cfg.tol, "relative loglikelihood tolerance");
  cmd_estimate->add_option("--init", init, "warm | identity")->check(CLI::IsMember({"warm", "identity"}));
  cmd_estimate->add_flag("--regularize", regularize, "apply the PSD eigenvalue floor to a non-PSD explicit estimate");

  auto* cmd_simulate = app.add_subcommand("simulate", "Monte Carlo scenario runs");
  std::string scenario = "uniform";
  cw::ScenarioConfig sim_cfg;
  std::string estimators_arg = "all";
  std::string dump_path;
  cmd_simulate->add_option("--scenario", scenario, "jitter | uniform | mcar")
      ->check(CLI::IsMember({"jitter", "uniform", "mcar"}));
  cmd_simulate->add_option("--n", sim_cfg.n, "sample size");
  cmd_simulate->add_option("--reps", sim_cfg.replications, "number of replications");
  cmd_simulate->add_option("--d", sim_cfg.d, "dimension");
  cmd_simulate->add_option("--eps", sim_cfg.contamination, "jitter: contaminated cell fraction");
  cmd_simulate->add_option("--noise-sd", sim_cfg.noise_sd, "jitter: noise standard deviation");
  cmd_simulate->add_option("--p", sim_cfg.bernoulli_p, "mcar: Bernoulli success probability");
  cmd_simulate->add_option("--estimators", estimators_arg,
                           "all, or comma list of unweighted,cwmle,cwmean-cwcov,cwmean-sqrtcov");
  cmd_simulate->add_option("--dump-reps", dump_path, "CSV of per-replication estimates");

  auto* cmd_curve = cmd_simulate->add_subcommand("curve", "equivalence statistic over a grid of n");
  std::vector<std::int64_t> n_grid;
  std::string pair_arg = "mu-cwmean";
  cmd_curve->add_option("--n-grid", n_grid, "strictly increasing sample sizes")
      ->required()
      ->delimiter(',');
  cmd_curve->add_option("--pair", pair_arg, "mu-cwmean | diag-cwcov | offdiag-cwcov | offdiag-sqrtcov")
      ->check(CLI::IsMember({"mu-cwmean", "diag-cwcov", "offdiag-cwcov", "offdiag-sqrtcov"}));
  cmd_simulate->require_subcommand(0, 1);

  auto* cmd_ellipse = app.add_subcommand("ellipse", "tolerance ellipse for a pair of variables");
  add_data_options(cmd_ellipse);
  std::vector<int> vars{1, 2};
  double coverage = 0.95;
  int points = 360;
  std::string boundary_csv;
  std::string ellipse_method = "cwmle";
  cmd_ellipse->add_option("--vars", vars, "two 1-based column indices")->delimiter(',')->expected(2);
  cmd_ellipse->add_option("--coverage", coverage, "probability mass inside the ellipse");
  cmd_ellipse->add_option("--points", points, "boundary resolution");
  cmd_ellipse->add_option("--method", ellipse_method, "cwmle | cwmean-cwcov | cwmean-sqrtcov | unweighted")
      ->check(CLI::IsMember({"cwmle", "cwmean-cwcov", "cwmean-sqrtcov", "unweighted"}));
  cmd_ellipse->add_option("--boundary-csv", boundary_csv, "also write the boundary points as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*cmd_unpack) {
      const auto ds = cw::load_weighted_csv(data_path, weight_path);
      const auto u = cw::unpack_dataset(ds);
      std::ostringstream text;
      cw::write_incomplete_csv(u, text);
      emit(text.str(), out_path);
    } else if (*cmd_estimate) {
      em_cfg.init = init == "warm" ? cw::EmInit::CwCovWarmStart : cw::EmInit::MeanIdentity;
      const auto ds = cw::load_weighted_csv(data_path, weight_path);
      const auto report = run_method(ds, method, em_cfg, regularize);
      emit(report_to_json(report).dump(2) + "\n", out_path);
    } else if (*cmd_simulate) {
      sim_cfg.seed = seed;
      sim_cfg.scenario = scenario == "jitter" ? cw::Scenario::Jitter
                         : scenario == "mcar" ? cw::Scenario::Mcar
                                              : cw::Scenario::UniformWeights;
      if (*cmd_curve) {
        std::vector<Eigen::Index> grid(n_grid.begin(), n_grid.end());
        cw::EquivalencePair pair = pair_arg == "mu-cwmean"      ? cw::EquivalencePair::MuCwMean
                                   : pair_arg == "diag-cwcov"   ? cw::EquivalencePair::DiagCwCov
                                   : pair_arg == "offdiag-cwcov" ? cw::EquivalencePair::OffdiagCwCov
                                                                 : cw::EquivalencePair::OffdiagSqrtCov;
        const auto curve = cw::equivalence_curve(sim_cfg, grid, pair, threads);
        std::ostringstream text;
        text << "n," << pair_arg << '\n';
        for (const auto& [n, value] : curve) text << n << ',' << cw::format_double(value) << '\n';
        emit(text.str(), out_path);
      } else {
        std::vector<cw::EstimatorKind> kinds;
        if (estimators_arg == "all") {
          kinds = {cw::EstimatorKind::Unweighted, cw::EstimatorKind::CwMle,
                   cw::EstimatorKind::CwMeanCwCov, cw::EstimatorKind::CwMeanSqrtCov};
        } else {
          std::istringstream in(estimators_arg);
          std::string tok;
          while (std::getline(in, tok, ',')) {
            if (tok == "unweighted") kinds.push_back(cw::EstimatorKind::Unweighted);
            else if (tok == "cwmle") kinds.push_back(cw::EstimatorKind::CwMle);
            else if (tok == "cwmean-cwcov") kinds.push_back(cw::EstimatorKind::CwMeanCwCov);
            else if (tok == "cwmean-sqrtcov") kinds.push_back(cw::EstimatorKind::CwMeanSqrtCov);
            else throw cw::Error("unknown estimator '" + tok + "'");
          }
        }
        std::vector<cw::RepRecord> records;
        const auto summary = cw::run_simulation(sim_cfg, kinds, threads,
                                                dump_path.empty() ? nullptr : &records);
        if (!dump_path.empty()) dump_records(records, sim_cfg.d, dump_path);
        emit(summary_to_json(summary).dump(2) + "\n", out_path);
      }
    } else if (*cmd_ellipse) {
      const auto ds = cw::load_weighted_csv(data_path, weight_path);
      const auto report = run_method(ds, ellipse_method, cw::EmConfig{}, true);
      const Eigen::Index j = vars[0] - 1, k = vars[1] - 1;
      if (j < 0 || k < 0 || j >= ds.cols() || k >= ds.cols() || j == k) {
        throw cw::Error("--vars must name two distinct columns between 1 and " +
                        std::to_string(ds.cols()));
      }
      cw::GaussianParams sub;
      sub.mu = Eigen::Vector2d(report.params.mu[j], report.params.mu[k]);
      sub.sigma = Eigen::Matrix2d{{report.params.sigma(j, j), report.params.sigma(j, k)},
                                  {report.params.sigma(k, j), report.params.sigma(k, k)}};
      const auto spec = cw::tolerance_ellipse(sub, coverage, points);
      json out;
      out["method"] = cw::method_name(report.method);
      out["vars"] = vars;
      out["coverage"] = spec.coverage;
      out["quantile"] = cw::chi_squared_quantile_df2(spec.coverage);
      out["center"] = {spec.center[0], spec.center[1]};
      out["shape"] = matrix_to_json(spec.shape);
      json boundary = json::array();
      for (const auto& pt : spec.boundary) boundary.push_back({pt[0], pt[1]});
      out["boundary"] = std::move(boundary);
      emit(out.dump(2) + "\n", out_path);
      if (!boundary_csv.empty()) {
        std::ofstream bc(boundary_csv);
        if (!bc) throw cw::Error("cannot open '" + boundary_csv + "' for writing");
        bc << "x,y\n";
        for (const auto& pt : spec.boundary)
          bc << cw::format_double(pt[0]) << ',' << cw::format_double(pt[1]) << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
