#include <cmath>

#include <json.hpp>

#include "henkf/experiments/runners.hpp"
#include "henkf/likelihood.hpp"

namespace henkf::experiments {

namespace {

struct Fit {
  double slope = 0.0, intercept = 0.0, r2 = 0.0;
  int points = 0;
};

Fit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  Fit fit;
  fit.points = static_cast<int>(x.size());
  if (x.size() < 2) return fit;
  const double n = double(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double mean_y = sy / n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double pred = fit.intercept + fit.slope * x[i];
    ss_res += (y[i] - pred) * (y[i] - pred);
    ss_tot += (y[i] - mean_y) * (y[i] - mean_y);
  }
  fit.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

// Pseudo-marginal random-walk chain on the noise variance of the
// independent toy model, holding the current likelihood estimate.
std::vector<double> pseudo_marginal_chain(const Example1& ex, const Vector& y,
                                          bool particle, Index n_members, int iters,
                                          double proposal_sd, std::uint64_t seed) {
  auto estimate = [&](double theta, int iter) {
    Example1 at = ex;
    at.theta = theta;
    Rng rng = stream(seed, RngPhase::study, particle ? 1 : 2, iter);
    const Matrix members = at.sample_forecast(n_members, rng);
    return particle ? at.particle_loglik_fast(members, y)
                    : at.enkf_loglik_fast(members, y);
  };
  double theta = 1.0;
  double current_ll = estimate(theta, 0);
  std::vector<double> chain;
  chain.reserve(iters);
  for (int it = 1; it <= iters; ++it) {
    Rng rng = stream(seed, RngPhase::proposal, particle ? 1 : 2, it);
    const double proposal = theta + proposal_sd * rng.normal();
    if (proposal > 0.0) {  // uniform prior on the positive half line
      const double prop_ll = estimate(proposal, it);
      if (std::log(std::max(rng.uniform(), 1e-300)) < prop_ll - current_ll) {
        theta = proposal;
        current_ll = prop_ll;
      }
    }
    chain.push_back(theta);
  }
  return chain;
}

}  // namespace

RunOutputs run_fig2(const RunConfig& config) {
  RunOutputs out;
  out.scores = make_scores_table();
  const double kappa = config.num("kappa", 4.0);
  const double theta_true = config.num("theta", 1.0);

  // Panels (a, b): estimator / true-likelihood ratio distributions.
  const int panel_reps = config.scaled(static_cast<int>(config.num("panel_reps", 200)));
  for (int n : {1, 6}) {
    const Example1 ex{n, kappa, theta_true};
    Rng yrng = stream(config.seed, RngPhase::data, n);
    const Vector y = ex.sample_data(yrng);
    const double truth = ex.true_loglik(y);

    CsvTable panel;
    panel.header = {"estimator", "replicate", "ratio", "loglik"};
    double sum_ratio_pf = 0.0;
    std::vector<double> lp, le;
    for (int rep = 0; rep < panel_reps; ++rep) {
      Rng erng = stream(config.seed, RngPhase::study, n, rep);
      const Matrix members = ex.sample_forecast(50, erng);
      const double llp = ex.particle_loglik_fast(members, y);
      const double lle = ex.enkf_loglik_fast(members, y);
      lp.push_back(llp);
      le.push_back(lle);
      sum_ratio_pf += std::exp(llp - truth);
      panel.add_row({"particle", std::to_string(rep),
                     CsvTable::cell(std::exp(llp - truth)), CsvTable::cell(llp)});
      panel.add_row({"enkf", std::to_string(rep),
                     CsvTable::cell(std::exp(lle - truth)), CsvTable::cell(lle)});
    }
    out.plotdata[n == 1 ? "fig2_panel_a" : "fig2_panel_b"] = panel;

    auto variance = [](const std::vector<double>& v) {
      double mean = 0.0;
      for (double u : v) mean += u;
      mean /= v.size();
      double acc = 0.0;
      for (double u : v) acc += (u - mean) * (u - mean);
      return acc / (v.size() - 1);
    };
    auto iqr = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      return v[v.size() * 3 / 4] - v[v.size() / 4];
    };
    const std::string scen = "ratio_n" + std::to_string(n);
    out.add_score("particle", scen, "mean_ratio", sum_ratio_pf / panel_reps,
                  panel_reps);
    out.add_score("particle", scen, "var_loglik", variance(lp), panel_reps);
    out.add_score("enkf", scen, "var_loglik", variance(le), panel_reps);
    std::vector<double> rp, re;
    for (int rep = 0; rep < panel_reps; ++rep) {
      rp.push_back(std::exp(lp[rep] - truth));
      re.push_back(std::exp(le[rep] - truth));
    }
    out.add_score("particle", scen, "iqr_ratio", iqr(rp), panel_reps);
    out.add_score("enkf", scen, "iqr_ratio", iqr(re), panel_reps);
  }

  // Panel (c): pseudo-marginal chains at n = N = 50, thinned by 5.
  {
    const int n = 50;
    const Example1 ex{n, kappa, theta_true};
    Rng yrng = stream(config.seed, RngPhase::data, n);
    const Vector y = ex.sample_data(yrng);
    const int iters = config.scaled(static_cast<int>(config.num("mh_iters", 5000)));
    const double prop_sd = config.num("mh_proposal_sd", 0.8);
    const std::vector<double> pf =
        pseudo_marginal_chain(ex, y, true, 50, iters, prop_sd, config.seed);
    const std::vector<double> ef =
        pseudo_marginal_chain(ex, y, false, 50, iters, prop_sd, config.seed);
    CsvTable panel;
    panel.header = {"iteration", "theta_particle", "theta_enkf"};
    int longest_stuck = 0, current_stuck = 0;
    double prev = -1.0;
    for (int it = 0; it < iters; it += 5) {
      panel.add_row({std::to_string(it), CsvTable::cell(pf[it]),
                     CsvTable::cell(ef[it])});
      if (pf[it] == prev) {
        ++current_stuck;
        longest_stuck = std::max(longest_stuck, current_stuck);
      } else {
        current_stuck = 0;
      }
      prev = pf[it];
    }
    out.plotdata["fig2_panel_c"] = panel;
    out.add_score("particle", "mh_trace", "longest_stuck_thinned", longest_stuck,
                  iters);
    auto accept_rate = [&](const std::vector<double>& chain) {
      int moves = 0;
      for (std::size_t i = 1; i < chain.size(); ++i)
        if (chain[i] != chain[i - 1]) ++moves;
      return double(moves) / double(chain.size() - 1);
    };
    out.add_score("particle", "mh_trace", "acceptance", accept_rate(pf), iters);
    out.add_score("enkf", "mh_trace", "acceptance", accept_rate(ef), iters);
  }

  // Panel (d): minimal ensemble size for loglik variance below 2.
  {
    VarianceStudyConfig study;
    study.kappa = kappa;
    study.theta = theta_true;
    study.seed = config.seed;
    study.ensemble_replications =
        std::max(50, config.scaled(static_cast<int>(config.num("study_reps", 200))));
    study.data_realizations =
        config.scaled(static_cast<int>(config.num("study_data_reals", 100)));
    study.n_max = static_cast<long>(config.num("study_n_max", double(1L << 20)));
    study.dims.clear();
    for (int n = 1; n <= static_cast<int>(config.num("study_max_dim", 32)); n *= 2)
      study.dims.push_back(n);
    const std::vector<VarianceStudyRow> rows = loglik_variance_study(study);

    CsvTable panel;
    panel.header = {"n", "estimator", "minimal_N", "censored_flag",
                    "variance_at_minimal_N"};
    std::vector<double> enkf_n, enkf_min, pf_n, pf_logmin;
    double enkf_at_max = 0.0, pf_at_max = 0.0;
    for (const VarianceStudyRow& row : rows) {
      const std::string name = row.estimator == LikEstimator::particle ? "particle"
                                                                       : "enkf";
      panel.add_row({std::to_string(row.n), name, std::to_string(row.minimal_n),
                     row.censored ? "1" : "0",
                     CsvTable::cell(row.variance_at_minimal_n)});
      if (row.estimator == LikEstimator::enkf) {
        if (!row.censored) {
          enkf_n.push_back(row.n);
          enkf_min.push_back(double(row.minimal_n));
        }
        if (row.n == study.dims.back()) enkf_at_max = double(row.minimal_n);
      } else {
        if (!row.censored) {
          pf_n.push_back(row.n);
          pf_logmin.push_back(std::log(double(row.minimal_n)));
        }
        if (row.n == study.dims.back()) pf_at_max = double(row.minimal_n);
      }
    }
    out.plotdata["fig2_panel_d"] = panel;

    const Fit enkf_fit = least_squares(enkf_n, enkf_min);
    const Fit pf_fit = least_squares(pf_n, pf_logmin);
    out.add_score("enkf", "minimal_n", "fit_r2_original", enkf_fit.r2,
                  enkf_fit.points);
    out.add_score("enkf", "minimal_n", "fit_slope_original", enkf_fit.slope,
                  enkf_fit.points);
    out.add_score("particle", "minimal_n", "fit_r2_log", pf_fit.r2, pf_fit.points);
    out.add_score("particle", "minimal_n", "fit_slope_log", pf_fit.slope,
                  pf_fit.points);
    out.add_score("particle", "minimal_n", "ratio_at_max_dim",
                  enkf_at_max > 0 ? pf_at_max / enkf_at_max : 0.0, 1);

    nlohmann::json diag;
    diag["study_reps"] = study.ensemble_replications;
    diag["study_data_reals"] = study.data_realizations;
    diag["n_max"] = study.n_max;
    out.diagnostics.push_back(diag.dump());
  }
  return out;
}

}  // namespace henkf::experiments
