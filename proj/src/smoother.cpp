#include "henkf/smoother.hpp"

#include <cmath>

#include "henkf/stats.hpp"

namespace henkf {

EnksResult enks_run(const HssmModel& model, const std::vector<Vector>& y_seq,
                    const std::vector<ParamVector>& theta_seq,
                    const EnksOptions& options) {
  const int horizon = static_cast<int>(y_seq.size());
  if (theta_seq.size() != y_seq.size())
    throw DimensionError("smoother needs one theta per observation");
  if (options.lag < 1) throw ConfigError("smoother lag must be at least 1");
  const Index n = model.state_dim;
  const Index n_members = options.n_members;
  const double lag_radius =
      options.lag_taper_radius > 0 ? options.lag_taper_radius : double(options.lag);

  EnksResult result;
  result.smoothed.resize(horizon);

  Matrix filtering = options.initial_members
                         ? *options.initial_members
                         : sample_initial_ensemble(model, n_members, options.seed);
  if (filtering.rows() != n || filtering.cols() != n_members)
    throw DimensionError("initial ensemble has the wrong shape");

  // Working window of updated slices x_{l|t}, oldest first.
  std::deque<std::pair<int, Matrix>> window;
  auto account = [&] {
    const long scalars = static_cast<long>(window.size()) * n * n_members;
    result.max_window_scalars = std::max(result.max_window_scalars, scalars);
  };

  auto finalize = [&](int l, Matrix members) {
    StateEnsemble slice;
    slice.members = std::move(members);
    slice.time_index = l;
    slice.kind = EnsembleKind::smoothing;
    result.smoothed[l - 1] = std::move(slice);
  };

  for (int t = 1; t <= horizon; ++t) {
    const ParamVector& theta = theta_seq[t - 1];
    const Matrix h = model.obs_matrix(theta, t);
    const Matrix r = model.obs_noise(theta, t);
    const Matrix q = model.innovation(theta, t);
    const Vector& y = y_seq[t - 1];
    if (y.size() != h.rows()) throw DimensionError("observation length mismatch");

    // Clean forecast (no noise) from the filtering ensemble x_{t-1|t-1},
    // as in the filter.
    const Matrix& base = window.empty() ? filtering : window.back().second;
    Matrix fore(n, n_members);
    for (Index j = 0; j < n_members; ++j)
      fore.col(j) = model.evolve(base.col(j), theta, t);
    require_finite(fore, "evolution map");

    // The slice at lag k leaves the window before the time-t shifts.
    if (static_cast<int>(window.size()) == options.lag) {
      finalize(window.front().first, std::move(window.front().second));
      window.pop_front();
    }

    const bool has_q = q.size() != 0 && q.cwiseAbs().maxCoeff() > 0.0;
    const Matrix lq = has_q ? psd_cholesky(q, "innovation covariance Q") : Matrix();
    const Matrix lr = psd_cholesky(r, "observation noise R");

    // Prior members and shared pseudo-observations: one draw per (t, j),
    // reused by every lag.
    Matrix priors(n, n_members), pseudo(h.rows(), n_members);
    for (Index j = 0; j < n_members; ++j) {
      Rng rng = stream(options.seed, RngPhase::update, t, j, 0);
      Vector prior = fore.col(j);
      if (has_q) {
        Vector w(n);
        for (Index i = 0; i < n; ++i) w(i) = rng.normal();
        prior += lq * w;
      }
      Vector v(h.rows());
      for (Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
      priors.col(j) = prior;
      pseudo.col(j) = h * prior + lr * v;
    }

    StateEnsemble fore_ens{fore, t, EnsembleKind::forecast};
    const GaussianSummary summary = regularized_cov(fore_ens, options.taper_space, q);
    const Matrix gain_t = kalman_gain(summary, h, r);
    const Matrix innov = innovation_matrix(summary, h, r);
    const Matrix residuals = (-pseudo).colwise() + y;

    // Shift the lagged slices through tapered cross-covariances.
    for (auto& [l, members] : window) {
      const double lag_factor = options.lag_taper_radius < 0
                                    ? 1.0
                                    : wendland_c2(double(t - l), lag_radius);
      if (lag_factor == 0.0) continue;
      Matrix cross = column_cross_cov(members, fore);
      if (options.taper_space.family != TaperSpec::Family::identity) {
        const SparseMatrix taper = taper_matrix(options.taper_space, n);
        cross = Matrix(taper.cwiseProduct(cross));
      }
      cross *= lag_factor;
      const Matrix gain_l = gain_from_covariances(cross * h.transpose(), innov);
      members += gain_l * residuals;
      require_finite(members, "smoother lag shift");
    }

    // Current-time slice: column-wise, bitwise-identical to the filter update.
    Matrix current(n, n_members);
    for (Index j = 0; j < n_members; ++j)
      current.col(j) = priors.col(j) + gain_t * residuals.col(j);
    require_finite(current, "smoother update");
    window.emplace_back(t, std::move(current));
    account();
  }

  // Remaining slices are the final smoothed marginals x_{l|T}.
  result.final_window.time = horizon;
  result.final_window.lag_window = options.lag;
  for (auto& [l, members] : window) {
    StateEnsemble slice{members, l, EnsembleKind::smoothing};
    result.final_window.slices.push_back(slice);
    finalize(l, std::move(members));
  }
  return result;
}

std::vector<Vector> member_trajectory(const EnksResult& result, Index j) {
  std::vector<Vector> out;
  out.reserve(result.smoothed.size());
  for (const StateEnsemble& slice : result.smoothed) out.push_back(slice.members.col(j));
  return out;
}

}  // namespace henkf
