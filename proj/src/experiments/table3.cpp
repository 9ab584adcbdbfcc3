#include <cmath>

#include <json.hpp>

#include "henkf/builtin_models.hpp"
#include "henkf/experiments/parallel.hpp"
#include "henkf/experiments/runners.hpp"
#include "henkf/penkf.hpp"
#include "henkf/scoring.hpp"
#include "henkf/stats.hpp"

namespace henkf::experiments {

namespace {

// Cloud model with the dataset's per-time observation selection.
HssmModel masked_cloud_model(const PaperModel& pm, const CloudDataset& data) {
  HssmModel model = pm.model;
  const Index n = model.state_dim;
  std::vector<std::vector<Index>> observed(data.horizon());
  for (int t = 1; t <= data.horizon(); ++t) observed[t - 1] = data.observed_at(t);
  auto base_noise = model.obs_noise;
  model.obs_dim = [observed](int t) {
    return static_cast<Index>(observed[t - 1].size());
  };
  model.obs_matrix = [observed, n](const ParamVector&, int t) {
    const auto& sites = observed[t - 1];
    Matrix h = Matrix::Zero(sites.size(), n);
    for (std::size_t l = 0; l < sites.size(); ++l) h(l, sites[l]) = 1.0;
    return h;
  };
  model.obs_noise = [base_noise, observed](const ParamVector& theta, int t) {
    const Matrix full = base_noise(theta, t);
    const auto m = static_cast<Index>(observed[t - 1].size());
    return Matrix(full(0, 0) * Matrix::Identity(m, m));
  };
  return model;
}

Vector observed_counts(const CloudDataset& data, int t) {
  const std::vector<Index> sites = data.observed_at(t);
  Vector z(sites.size());
  for (std::size_t l = 0; l < sites.size(); ++l)
    z(l) = double(data.counts(t - 1, sites[l]));
  return z;
}

struct FilterOutput {
  std::vector<Matrix> theta_particles;  // per t: p x M
  std::vector<Vector> theta_weights;    // per t
  ScoreReport predictions;
  std::vector<StepDiagnostics> diagnostics;
};

// Score the held-out cells of time t from the weighted particle ensembles:
// squared error of the predictive count mean, CRPS of one predictive count
// draw per member.
void score_heldout(const CloudDataset& data, int t, const ParticleSystem& system,
                   std::uint64_t seed, ScoreAccumulator& acc) {
  const Index n = data.n_sites();
  Rng rng = stream(seed, RngPhase::study, t, 909090);
  for (Index l = 0; l < n; ++l) {
    if (!data.heldout[t - 1][l]) continue;
    std::vector<double> draws;
    std::vector<double> weights;
    for (const Particle& p : system.particles) {
      const double sigma = std::exp(p.theta().get("log_sigma"));
      const Matrix& members = p.ens->members;
      for (Index j = 0; j < members.cols(); ++j) {
        const double y = members(l, j) + sigma * rng.normal();
        draws.push_back(double(rng.poisson(std::exp(std::clamp(y, -25.0, 25.0)))));
        weights.push_back(p.weight / double(members.cols()));
      }
    }
    acc.add(draws, double(data.counts(t - 1, l)), weights);
  }
}

FilterOutput run_cloud_filter(const HssmModel& model, const CloudDataset& data,
                              bool rao_blackwell_baseline, Index n_particles,
                              Index n_members, std::uint64_t seed) {
  PenkfOptions opt;
  opt.taper = TaperSpec::grid(8.0);
  opt.strategy = IntegrationStrategy::laplace;
  opt.scheme = ResampleScheme::systematic;
  opt.resample_threshold = 0.5;
  opt.seed = seed;

  FilterOutput out;
  ScoreAccumulator acc;
  ParticleSystem system = penkf_init(model, n_particles, n_members, seed);
  for (int t = 1; t <= data.horizon(); ++t) {
    const Vector z = observed_counts(data, t);
    StepDiagnostics diag;
    system = rao_blackwell_baseline
                 ? earbpf_step(model, system, z, t, nullptr, opt, &diag)
                 : penkf_step(model, system, z, t, nullptr, opt, &diag);
    out.diagnostics.push_back(diag);

    Matrix thetas(system.particles[0].theta().size(), system.size());
    Vector weights(system.size());
    for (Index i = 0; i < system.size(); ++i) {
      thetas.col(i) = system.particles[i].theta().values();
      weights(i) = system.particles[i].weight;
    }
    out.theta_particles.push_back(std::move(thetas));
    out.theta_weights.push_back(std::move(weights));
    score_heldout(data, t, system, mix_keys(seed, 0x7072ULL, t), acc);
  }
  out.predictions = acc.report();
  return out;
}

double weighted_quantile(const Vector& values, const Vector& weights, double p) {
  std::vector<Index> order(values.size());
  std::iota(order.begin(), order.end(), Index(0));
  std::sort(order.begin(), order.end(),
            [&](Index a, Index b) { return values(a) < values(b); });
  double acc = 0.0;
  for (Index idx : order) {
    acc += weights(idx);
    if (acc >= p) return values(idx);
  }
  return values(order.back());
}

double weighted_mean(const Vector& values, const Vector& weights) {
  return values.dot(weights);
}

}  // namespace

RunOutputs run_table3(const RunConfig& config, const CloudDataset& data) {
  const PaperModel pm = build_paper_model(PaperModelName::cloud);
  const HssmModel model = masked_cloud_model(pm, data);
  const int n_seeds = static_cast<int>(config.num("init_seeds", 10));
  const auto m_particles = static_cast<Index>(config.num("particles", 50));
  const auto n_members = static_cast<Index>(config.num("members", 30));
  const auto ref_particles = static_cast<Index>(config.num("reference_particles", 200));
  const auto ref_members = static_cast<Index>(config.num("reference_members", 2000));

  RunOutputs out;
  out.scores = make_scores_table();

  // Reference filtering law: one heavier Rao-Blackwellized run per dataset.
  const FilterOutput reference =
      run_cloud_filter(model, data, true, ref_particles, ref_members,
                       mix_keys(config.seed, 0x726566ULL));
  out.add_score("reference", "predictions", "mspe", reference.predictions.mspe, 1);
  out.add_score("reference", "predictions", "crps", reference.predictions.crps, 1);

  const std::vector<std::string> components{"gamma1", "gamma2",  "gamma3",
                                            "log_sigma", "log_tau", "log_lambda"};

  std::vector<FilterOutput> penkf_runs(n_seeds), earbpf_runs(n_seeds);
  parallel_for(n_seeds, config.workers, [&](int s) {
    penkf_runs[s] = run_cloud_filter(model, data, false, m_particles, n_members,
                                     mix_keys(config.seed, 0x7065ULL, s));
    earbpf_runs[s] = run_cloud_filter(model, data, true, m_particles, n_members,
                                      mix_keys(config.seed, 0x6561ULL, s));
  });

  // Prediction scores, seed-averaged, plus the matched-compute comparison.
  double pe_mspe = 0, pe_crps = 0, ea_mspe = 0, ea_crps = 0;
  int pe_wins = 0;
  CsvTable per_seed;
  per_seed.header = {"seed", "penkf_mspe", "earbpf_mspe", "penkf_crps",
                     "earbpf_crps"};
  for (int s = 0; s < n_seeds; ++s) {
    pe_mspe += penkf_runs[s].predictions.mspe;
    pe_crps += penkf_runs[s].predictions.crps;
    ea_mspe += earbpf_runs[s].predictions.mspe;
    ea_crps += earbpf_runs[s].predictions.crps;
    if (penkf_runs[s].predictions.mspe <= earbpf_runs[s].predictions.mspe) ++pe_wins;
    per_seed.add_row({std::to_string(s),
                      CsvTable::cell(penkf_runs[s].predictions.mspe),
                      CsvTable::cell(earbpf_runs[s].predictions.mspe),
                      CsvTable::cell(penkf_runs[s].predictions.crps),
                      CsvTable::cell(earbpf_runs[s].predictions.crps)});
  }
  out.plotdata["table3_per_seed"] = per_seed;
  out.add_score("penkf", "predictions", "mspe", pe_mspe / n_seeds, n_seeds);
  out.add_score("penkf", "predictions", "crps", pe_crps / n_seeds, n_seeds);
  out.add_score("earbpf", "predictions", "mspe", ea_mspe / n_seeds, n_seeds);
  out.add_score("earbpf", "predictions", "crps", ea_crps / n_seeds, n_seeds);
  out.add_score("penkf", "predictions", "win_fraction", double(pe_wins) / n_seeds,
                n_seeds);
  out.add_score("data", "mask", "heldout_cells", double(data.heldout_count()), 1);

  // Earth-mover's distance of the parameter filtering laws to the reference,
  // averaged over time and seeds.
  const int horizon = data.horizon();
  for (std::size_t c = 0; c < components.size(); ++c) {
    double pe_emd = 0.0, ea_emd = 0.0;
    for (int s = 0; s < n_seeds; ++s) {
      for (int t = 0; t < horizon; ++t) {
        const Vector ref_vals = reference.theta_particles[t].row(c).transpose();
        const Vector ref_w = reference.theta_weights[t];
        std::vector<double> rv(ref_vals.data(), ref_vals.data() + ref_vals.size());
        std::vector<double> rw(ref_w.data(), ref_w.data() + ref_w.size());
        auto emd_of = [&](const FilterOutput& run) {
          const Vector vals = run.theta_particles[t].row(c).transpose();
          const Vector w = run.theta_weights[t];
          std::vector<double> v(vals.data(), vals.data() + vals.size());
          std::vector<double> vw(w.data(), w.data() + w.size());
          return emd_1d(v, vw, rv, rw);
        };
        pe_emd += emd_of(penkf_runs[s]);
        ea_emd += emd_of(earbpf_runs[s]);
      }
    }
    const double norm = double(n_seeds) * horizon;
    out.add_score("penkf", "param_emd", components[c], pe_emd / norm, n_seeds);
    out.add_score("earbpf", "param_emd", components[c], ea_emd / norm, n_seeds);
  }

  // Filtering mean and 95% band for every component over time (seed 0), with
  // the reference mean alongside.
  CsvTable series;
  series.header = {"t", "component", "penkf_mean", "penkf_lo95", "penkf_hi95",
                   "earbpf_mean", "reference_mean"};
  for (int t = 0; t < horizon; ++t) {
    for (std::size_t c = 0; c < components.size(); ++c) {
      const Vector pv = penkf_runs[0].theta_particles[t].row(c).transpose();
      const Vector pw = penkf_runs[0].theta_weights[t];
      const Vector ev = earbpf_runs[0].theta_particles[t].row(c).transpose();
      const Vector ew = earbpf_runs[0].theta_weights[t];
      const Vector rv = reference.theta_particles[t].row(c).transpose();
      const Vector rw = reference.theta_weights[t];
      series.add_row({std::to_string(t + 1), components[c],
                      CsvTable::cell(weighted_mean(pv, pw)),
                      CsvTable::cell(weighted_quantile(pv, pw, 0.025)),
                      CsvTable::cell(weighted_quantile(pv, pw, 0.975)),
                      CsvTable::cell(weighted_mean(ev, ew)),
                      CsvTable::cell(weighted_mean(rv, rw))});
    }
  }
  out.plotdata["table3_gamma_series"] = series;

  // Seed-averaged gamma3 filtering mean over the last quarter of the run.
  {
    double tail_mean = 0.0;
    const int tail = std::max(1, horizon / 4);
    for (int s = 0; s < n_seeds; ++s) {
      double acc = 0.0;
      for (int t = horizon - tail; t < horizon; ++t)
        acc += weighted_mean(penkf_runs[s].theta_particles[t].row(2).transpose(),
                             penkf_runs[s].theta_weights[t]);
      tail_mean += acc / tail;
    }
    out.add_score("penkf", "gamma3", "tail_mean", tail_mean / n_seeds, n_seeds);
  }

  for (int s = 0; s < n_seeds; ++s) {
    for (const StepDiagnostics& d : penkf_runs[s].diagnostics) {
      nlohmann::json line;
      line["method"] = "penkf";
      line["seed_index"] = s;
      line["t"] = d.time;
      line["ess"] = d.ess;
      line["unique_particles"] = d.unique_particles;
      line["resampled"] = d.resampled;
      out.diagnostics.push_back(line.dump());
    }
  }
  return out;
}

}  // namespace henkf::experiments
