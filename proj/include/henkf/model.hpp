// The four-layer hierarchical state-space model: transformation f_t,
// observation (H_t, R_t), evolution (M_t, Q_t), parameter evolution p_t.
#pragma once

#include <functional>

#include "henkf/obs_models.hpp"
#include "henkf/param_vector.hpp"
#include "henkf/rng.hpp"
#include "henkf/types.hpp"

namespace henkf {

double matern15(double d, double lambda);
double powered_exponential_corr(double d, double power, double scale);

struct CovFunction {
  enum class Family { powered_exponential, matern_smooth15, from_matrix };
  Family family = Family::powered_exponential;
  double power = 2.0;
  double scale = 1.0;
  double amplitude = 1.0;  // tau^2
  Matrix matrix;           // explicit covariance for from_matrix

  static CovFunction powered_exp(double power, double scale, double amplitude = 1.0);
  static CovFunction matern(double scale, double amplitude = 1.0);
  static CovFunction from_matrix(Matrix m);

  // Materialize on the 1-D integer grid 0..n-1 with |i-j| distances.
  Matrix build_grid(Index n) const;
  Matrix build(Index n, const std::function<double(Index, Index)>& distance) const;
};

struct ParamTransition {
  // Sample theta_t | theta_{t-1}.
  std::function<ParamVector(const ParamVector& prev, int t, Rng&)> sample;
  // log p_t(cur | prev); null for degenerate (known / point-mass) layers.
  std::function<double(const ParamVector& cur, const ParamVector& prev, int t)>
      log_density;
  bool is_static = false;  // point mass at the previous value
};

struct ParamInit {
  std::function<ParamVector(Rng&)> sample;
  std::function<double(const ParamVector&)> log_density;
};

struct HssmModel {
  Index state_dim = 0;
  std::function<Index(int t)> obs_dim;
  std::function<Matrix(const ParamVector&, int t)> obs_matrix;  // H_t, m_t x n
  std::function<Matrix(const ParamVector&, int t)> obs_noise;   // R_t, SPD
  // Deterministic evolution map; innovation noise is handled separately.
  std::function<Vector(const Vector&, const ParamVector&, int t)> evolve;
  std::function<Matrix(const ParamVector&, int t)> innovation;  // Q_t, PSD
  ObsModel transformation;
  ParamTransition param_transition;
  ParamInit param_init;
  Vector init_mean;  // mu_{0|0}
  Matrix init_cov;   // Sigma_{0|0}
  // Optional override of Gaussian initial sampling (used by state
  // augmentation, where the parameter block has its own initial law).
  std::function<Vector(Rng&)> init_sampler;
  bool forecast_independent = false;

  // Closed-form filtering FCD: theta_t | z_t, y_t, x_t, theta_{t-1}.
  std::function<ParamVector(const Vector& z, const Vector& y, const Vector& x,
                            const ParamVector& prev, int t, Rng&)>
      theta_fcd_filter;
  // Closed-form smoothing FCD: theta_{1:T} | x_{1:T}, y_{1:T}, z_{1:T}.
  // Returns one ParamVector per time point (identical entries when static).
  std::function<std::vector<ParamVector>(
      const std::vector<Vector>& z, const std::vector<Vector>& y,
      const std::vector<Vector>& x, Rng&)>
      theta_fcd_smoother;

  Index obs_dim_at(int t) const { return obs_dim ? obs_dim(t) : state_dim; }
};

// Draw the time-0 filtering ensemble (or the t=1 forecast prior, for models
// whose first evolution step is the identity).
Matrix sample_initial_ensemble(const HssmModel& model, Index n_members,
                               std::uint64_t seed);

}  // namespace henkf
