#include <cmath>
#include <iostream>

#include <json.hpp>

#include "henkf/builtin_models.hpp"
#include "henkf/experiments/parallel.hpp"
#include "henkf/experiments/runners.hpp"
#include "henkf/genks.hpp"
#include "henkf/particle_gibbs.hpp"
#include "henkf/scoring.hpp"
#include "henkf/stats.hpp"

namespace henkf::experiments {

namespace {

struct LorenzData {
  double theta_true = 0.0;
  std::vector<Vector> x_true;
  std::vector<Vector> z;
};

LorenzData simulate_lorenz(const PaperModel& pm, std::uint64_t seed, int rep,
                           int attempt) {
  const HssmModel& model = pm.model;
  const int horizon = pm.default_horizon;
  LorenzData data;
  Rng rng = stream(seed, RngPhase::data, 4000 + rep, attempt);
  data.theta_true = pm.constants.at("theta_prior_mean") +
                    pm.constants.at("theta_prior_sd") * rng.normal();
  const ParamVector theta(Vector::Constant(1, data.theta_true), {"theta"});
  const Matrix init_chol = psd_cholesky(model.init_cov, "Sigma_L");
  const Matrix q_chol = psd_cholesky(model.innovation(theta, 2), "Q");
  Vector x = mvn_sample(model.init_mean, init_chol, rng);
  for (int t = 1; t <= horizon; ++t) {
    x = model.evolve(x, theta, t);
    if (t >= 2) x = mvn_sample(x, q_chol, rng);
    data.x_true.push_back(x);
    Vector z = x;
    for (Index i = 0; i < z.size(); ++i) z(i) += rng.normal();
    data.z.push_back(z);
  }
  return data;
}

struct MethodScores {
  double theta_mspe = 0.0, theta_crps = 0.0;
  double state_mspe = std::numeric_limits<double>::quiet_NaN();
  double state_crps = std::numeric_limits<double>::quiet_NaN();
  bool has_state = false;
};

MethodScores score_draws(const std::vector<double>& theta_samples,
                         const std::vector<std::vector<Vector>>& x_samples,
                         const LorenzData& data) {
  MethodScores out;
  out.theta_mspe = mspe(theta_samples, data.theta_true);
  out.theta_crps = crps_ensemble(theta_samples, data.theta_true);
  if (!x_samples.empty()) {
    ScoreAccumulator acc;
    const int horizon = static_cast<int>(data.x_true.size());
    const Index n = data.x_true[0].size();
    std::vector<double> cell(x_samples.size());
    for (int t = 0; t < horizon; ++t) {
      for (Index i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < x_samples.size(); ++k)
          cell[k] = x_samples[k][t](i);
        acc.add(cell, data.x_true[t](i));
      }
    }
    const ScoreReport rep = acc.report();
    out.state_mspe = rep.mspe;
    out.state_crps = rep.crps;
    out.has_state = true;
  }
  return out;
}

MethodScores run_genks_method(const PaperModel& pm, const LorenzData& data,
                              std::uint64_t seed, int rep,
                              std::vector<double>* trace) {
  GenksOptions opt;
  opt.n_members = 50;
  opt.iterations = 100;
  opt.burn_in = 20;
  opt.lag = static_cast<int>(pm.constants.at("taper_lag"));
  opt.taper_space = pm.default_taper;
  opt.seed = mix_keys(seed, 0x74346731ULL, rep);
  opt.theta_init = ParamVector(Vector::Constant(1, 0.5), {"theta"});
  const SmootherDraws draws = genks_run(pm.model, data.z, opt);

  std::vector<double> theta_samples;
  std::vector<std::vector<Vector>> x_samples;
  for (int it = 0; it < opt.iterations; ++it) {
    if (trace != nullptr) trace->push_back(draws.draws[it].theta[0][0]);
    if (it >= opt.burn_in) {
      theta_samples.push_back(draws.draws[it].theta[0][0]);
      x_samples.push_back(draws.draws[it].x);
    }
  }
  return score_draws(theta_samples, x_samples, data);
}

MethodScores run_enks_sa(const PaperModel& pm, const LorenzData& data,
                         std::uint64_t seed, int rep) {
  AugmentedParam aug;
  aug.name = "theta";
  aug.artificial_sd = 0.1;
  aug.init_draw = [](Rng& rng) { return 0.5 + 0.2 * rng.normal(); };
  const HssmModel model = augment_state(pm.model, {aug}, 2);

  EnksOptions opt;
  opt.n_members = 1000;
  opt.lag = static_cast<int>(pm.constants.at("taper_lag"));
  opt.taper_space = augment_taper(pm.default_taper, pm.model.state_dim);
  opt.seed = mix_keys(seed, 0x74347361ULL, rep);
  const std::vector<ParamVector> thetas(
      data.z.size(), ParamVector(Vector::Constant(1, 0.5), {"theta"}));
  const EnksResult enks = enks_run(model, data.z, thetas, opt);

  const Index n = pm.model.state_dim;
  MethodScores out;
  // Parameter: the final-time smoothed marginal of the augmented coordinate.
  const Matrix& last = enks.smoothed.back().members;
  std::vector<double> theta_samples(last.cols());
  for (Index j = 0; j < last.cols(); ++j) theta_samples[j] = last(n, j);
  out.theta_mspe = mspe(theta_samples, data.theta_true);
  out.theta_crps = crps_ensemble(theta_samples, data.theta_true);

  ScoreAccumulator acc;
  std::vector<double> cell(last.cols());
  for (std::size_t t = 0; t < enks.smoothed.size(); ++t) {
    const Matrix& slice = enks.smoothed[t].members;
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < slice.cols(); ++j) cell[j] = slice(i, j);
      acc.add(cell, data.x_true[t](i));
    }
  }
  const ScoreReport rep_score = acc.report();
  out.state_mspe = rep_score.mspe;
  out.state_crps = rep_score.crps;
  out.has_state = true;
  return out;
}

MethodScores run_pg(const PaperModel& pm, const LorenzData& data, std::uint64_t seed,
                    int rep, std::vector<double>* trace) {
  ParticleGibbsOptions opt;
  opt.n_particles = 50;
  opt.iterations = 100;
  opt.burn_in = 20;
  opt.seed = mix_keys(seed, 0x74347067ULL, rep);
  opt.theta_init = ParamVector(Vector::Constant(1, 0.5), {"theta"});
  const ParticleGibbsResult result = particle_gibbs_run(pm.model, data.z, opt);

  std::vector<double> theta_samples;
  std::vector<std::vector<Vector>> x_samples;
  for (int it = 0; it < opt.iterations; ++it) {
    if (trace != nullptr) trace->push_back(result.draws.draws[it].theta[0][0]);
    if (it >= opt.burn_in) {
      theta_samples.push_back(result.draws.draws[it].theta[0][0]);
      x_samples.push_back(result.draws.draws[it].x);
    }
  }
  return score_draws(theta_samples, x_samples, data);
}

MethodScores run_prior(const PaperModel& pm, const LorenzData& data,
                       std::uint64_t seed, int rep) {
  Rng rng = stream(seed, RngPhase::study, 4000 + rep);
  std::vector<double> draws(1000);
  for (double& d : draws)
    d = pm.constants.at("theta_prior_mean") +
        pm.constants.at("theta_prior_sd") * rng.normal();
  MethodScores out;
  out.theta_mspe = mspe(draws, data.theta_true);
  out.theta_crps = crps_ensemble(draws, data.theta_true);
  return out;
}

const std::vector<std::string> kMethods{"genks", "enks_sa", "particle_gibbs", "prior"};

}  // namespace

RunOutputs run_table4(const RunConfig& config) {
  std::map<std::string, double> model_overrides;
  if (config.overrides.count("climatology_samples"))
    model_overrides["climatology_samples"] = config.num("climatology_samples", 50000);
  const PaperModel pm = build_paper_model(PaperModelName::lorenz96, model_overrides);
  const int reps = config.scaled(static_cast<int>(config.num("replications", 100)));

  std::vector<std::map<std::string, MethodScores>> cell(reps);
  std::vector<int> redraws(reps, 0);
  std::vector<double> genks_trace, pg_trace;

  parallel_for(reps, config.workers, [&](int r) {
    for (int attempt = 0; attempt < 10; ++attempt) {
      const LorenzData data = simulate_lorenz(pm, config.seed, r, attempt);
      try {
        std::map<std::string, MethodScores> scores;
        scores["genks"] =
            run_genks_method(pm, data, config.seed, r, r == 0 ? &genks_trace : nullptr);
        scores["enks_sa"] = run_enks_sa(pm, data, config.seed, r);
        scores["particle_gibbs"] =
            run_pg(pm, data, config.seed, r, r == 0 ? &pg_trace : nullptr);
        scores["prior"] = run_prior(pm, data, config.seed, r);
        cell[r] = std::move(scores);
        redraws[r] = attempt;
        return;
      } catch (const DivergenceError& err) {
        std::cerr << "table4 replication " << r << " diverged (" << err.what()
                  << "), redrawing\n";
        if (r == 0) {
          genks_trace.clear();
          pg_trace.clear();
        }
      } catch (const SingularMatrixError& err) {
        std::cerr << "table4 replication " << r << " singular (" << err.what()
                  << "), redrawing\n";
        if (r == 0) {
          genks_trace.clear();
          pg_trace.clear();
        }
      }
    }
    throw NumericalError("table4 replication kept diverging after 10 redraws");
  });

  RunOutputs out;
  out.scores = make_scores_table();
  for (const std::string& method : kMethods) {
    double tm = 0, tc = 0, sm = 0, sc = 0;
    int state_count = 0;
    for (int r = 0; r < reps; ++r) {
      tm += cell[r][method].theta_mspe;
      tc += cell[r][method].theta_crps;
      if (cell[r][method].has_state) {
        sm += cell[r][method].state_mspe;
        sc += cell[r][method].state_crps;
        ++state_count;
      }
    }
    out.add_score(method, "theta", "mspe", tm / reps, reps);
    out.add_score(method, "theta", "crps", tc / reps, reps);
    if (state_count > 0) {
      out.add_score(method, "state", "mspe", sm / state_count, state_count);
      out.add_score(method, "state", "crps", sc / state_count, state_count);
    }
  }

  CsvTable trace;
  trace.header = {"iteration", "genks_theta", "pg_theta"};
  for (std::size_t it = 0; it < genks_trace.size() && it < pg_trace.size(); ++it)
    trace.add_row({std::to_string(it), CsvTable::cell(genks_trace[it]),
                   CsvTable::cell(pg_trace[it])});
  out.plotdata["table4_theta_traces"] = trace;

  int total_redraws = 0;
  for (int r : redraws) total_redraws += r;
  nlohmann::json diag;
  diag["replications"] = reps;
  diag["redraws"] = total_redraws;
  out.diagnostics.push_back(diag.dump());
  return out;
}

}  // namespace henkf::experiments
