#include "henkf/filter.hpp"

#include <cmath>

#include "henkf/stats.hpp"

namespace henkf {

StateEnsemble enkf_forecast(const HssmModel& model, const StateEnsemble& ens,
                            const ParamVector& theta) {
  if (ens.kind != EnsembleKind::filtering)
    throw ConfigError("forecast expects a filtering ensemble");
  StateEnsemble out;
  const int t = ens.time_index + 1;
  out.members.resize(ens.dim(), ens.size());
  for (Index j = 0; j < ens.size(); ++j)
    out.members.col(j) = model.evolve(ens.members.col(j), theta, t);
  out.time_index = t;
  out.kind = EnsembleKind::forecast;
  require_finite(out.members, "evolution map");
  return out;
}

Vector enkf_member_update(const Vector& forecast_member, const Vector& y,
                          const Matrix& gain, const Matrix& obs_matrix,
                          const Matrix& chol_innovation, const Matrix& chol_obs_noise,
                          Rng& rng) {
  Vector prior = forecast_member;
  if (chol_innovation.size() != 0) {
    Vector w(prior.size());
    for (Index i = 0; i < w.size(); ++i) w(i) = rng.normal();
    prior += chol_innovation * w;
  }
  Vector v(obs_matrix.rows());
  for (Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
  const Vector pseudo = obs_matrix * prior + chol_obs_noise * v;
  return prior + gain * (y - pseudo);
}

namespace {

// Cholesky of Q when nonzero; empty matrix for Q = 0 (skip the perturbation).
Matrix innovation_chol(const Matrix& q) {
  if (q.size() == 0 || q.cwiseAbs().maxCoeff() == 0.0) return Matrix();
  return psd_cholesky(q, "innovation covariance Q");
}

}  // namespace

StateEnsemble enkf_update(const StateEnsemble& fore, const Vector& y,
                          const HssmModel& model, const ParamVector& theta,
                          const TaperSpec& taper, std::uint64_t seed,
                          std::uint64_t sweep) {
  if (fore.kind != EnsembleKind::forecast)
    throw ConfigError("update expects a forecast ensemble");
  const int t = fore.time_index;
  if (y.size() != model.obs_dim_at(t))
    throw DimensionError("observation length does not match the model");

  const Matrix h = model.obs_matrix(theta, t);
  const Matrix r = model.obs_noise(theta, t);
  const Matrix q = model.innovation(theta, t);
  const GaussianSummary summary = regularized_cov(fore, taper, q);
  const Matrix gain = kalman_gain(summary, h, r);
  const Matrix lq = innovation_chol(q);
  const Matrix lr = psd_cholesky(r, "observation noise R");

  StateEnsemble out;
  out.members.resize(fore.dim(), fore.size());
  for (Index j = 0; j < fore.size(); ++j) {
    Rng rng = stream(seed, RngPhase::update, t, j, sweep);
    out.members.col(j) = enkf_member_update(fore.members.col(j), y, gain, h, lq, lr, rng);
  }
  out.time_index = t;
  out.kind = EnsembleKind::filtering;
  require_finite(out.members, "enkf update");
  return out;
}

StateEnsemble enkf_update_nonlinear_obs(
    const StateEnsemble& fore, const Vector& z,
    const std::function<Vector(const Vector& x, Rng& rng)>& obs_fn,
    const Matrix& innovation_cov, const Matrix* taper_xy, const Matrix* taper_yy,
    std::uint64_t seed) {
  if (fore.kind != EnsembleKind::forecast)
    throw ConfigError("update expects a forecast ensemble");
  if (fore.size() < 2)
    throw DegenerateEnsembleError("nonlinear-observation update needs N >= 2");
  const int t = fore.time_index;
  const Index n = fore.dim(), n_members = fore.size(), m = z.size();

  const Matrix lq = innovation_chol(innovation_cov);
  Matrix priors(n, n_members);
  Matrix pseudo(m, n_members);
  for (Index j = 0; j < n_members; ++j) {
    Rng rng = stream(seed, RngPhase::update, t, j, 0);
    Vector prior = fore.members.col(j);
    if (lq.size() != 0) {
      Vector w(n);
      for (Index i = 0; i < n; ++i) w(i) = rng.normal();
      prior += lq * w;
    }
    priors.col(j) = prior;
    pseudo.col(j) = obs_fn(prior, rng);
  }
  if (pseudo.rows() != m) throw DimensionError("observation operator output mismatch");

  Matrix c_xy = column_cross_cov(priors, pseudo);
  Matrix c_yy = column_cov(pseudo);
  if (taper_xy != nullptr) c_xy = c_xy.cwiseProduct(*taper_xy);
  if (taper_yy != nullptr) c_yy = c_yy.cwiseProduct(*taper_yy);
  const Matrix gain = gain_from_covariances(c_xy, c_yy);

  StateEnsemble out;
  out.members = priors + gain * ((-pseudo).colwise() + z);
  out.time_index = t;
  out.kind = EnsembleKind::filtering;
  require_finite(out.members, "nonlinear-observation update");
  return out;
}

HssmModel augment_state(const HssmModel& model, const std::vector<AugmentedParam>& params,
                        int first_noise_time) {
  if (params.empty()) return model;
  Rng proto_rng(0x9d2c5680);
  const ParamVector prototype = model.param_init.sample(proto_rng);
  const Index n = model.state_dim;
  const Index p = static_cast<Index>(params.size());

  std::vector<Index> indices;
  Vector sds(p);
  for (Index k = 0; k < p; ++k) {
    const Index idx = prototype.index_of(params[k].name);
    if (idx < 0)
      throw ConfigError("parameter not found for augmentation: " + params[k].name);
    indices.push_back(idx);
    sds(k) = params[k].artificial_sd;
  }

  auto embed = [prototype, indices, n](const Vector& x_aug, const ParamVector& theta) {
    ParamVector full = theta.size() == prototype.size() ? theta : prototype;
    for (std::size_t k = 0; k < indices.size(); ++k)
      full[indices[k]] = x_aug(n + static_cast<Index>(k));
    return full;
  };

  HssmModel aug = model;
  aug.state_dim = n + p;
  aug.evolve = [model, embed, n, p](const Vector& x, const ParamVector& theta, int t) {
    const ParamVector full = embed(x, theta);
    Vector out(n + p);
    out.head(n) = model.evolve(x.head(n), full, t);
    out.tail(p) = x.tail(p);
    return out;
  };
  aug.innovation = [model, n, p, sds, first_noise_time](const ParamVector& theta,
                                                        int t) {
    Matrix q = Matrix::Zero(n + p, n + p);
    q.topLeftCorner(n, n) = model.innovation(theta, t);
    if (t >= first_noise_time)
      for (Index k = 0; k < p; ++k) q(n + k, n + k) = sds(k) * sds(k);
    return q;
  };
  aug.obs_matrix = [model, n, p](const ParamVector& theta, int t) {
    const Matrix h = model.obs_matrix(theta, t);
    Matrix out = Matrix::Zero(h.rows(), n + p);
    out.leftCols(n) = h;
    return out;
  };
  aug.init_mean = Vector(n + p);
  aug.init_mean.head(n) = model.init_mean;
  aug.init_cov = Matrix();  // superseded by init_sampler
  std::vector<std::function<double(Rng&)>> draws;
  for (Index k = 0; k < p; ++k) {
    if (params[k].init_draw) {
      draws.push_back(params[k].init_draw);
    } else {
      const Index idx = indices[k];
      auto init = model.param_init;
      draws.push_back([init, idx](Rng& rng) { return init.sample(rng)[idx]; });
    }
  }
  const Matrix init_chol = psd_cholesky(model.init_cov, "initial covariance");
  const Vector init_mean = model.init_mean;
  aug.init_sampler = [init_mean, init_chol, draws, n, p](Rng& rng) {
    Vector out(n + p);
    out.head(n) = mvn_sample(init_mean, init_chol, rng);
    for (Index k = 0; k < p; ++k) out(n + k) = draws[k](rng);
    return out;
  };
  for (Index k = 0; k < p; ++k) aug.init_mean(n + k) = 0.0;
  return aug;
}

TaperSpec augment_taper(const TaperSpec& base, Index n_state) {
  if (base.family == TaperSpec::Family::identity) return base;
  TaperSpec out = base;
  auto base_distance = base.distance;
  out.distance = [base_distance, n_state](Index i, Index j) {
    if (i >= n_state || j >= n_state) return 0.0;
    if (base_distance) return base_distance(i, j);
    return std::abs(static_cast<double>(i - j));
  };
  return out;
}

}  // namespace henkf
