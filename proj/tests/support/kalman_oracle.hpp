// Exact Kalman filter / RTS smoother oracle for linear-Gaussian models.
// Test-only; independent of the ensemble implementation it checks.
#pragma once

#include <vector>

#include <Eigen/Dense>
#include <henkf/model.hpp>
#include <henkf/stats.hpp>
#include <henkf/types.hpp>

namespace henkf::test {

struct LinearGaussianModel {
  Matrix transition;  // A
  Matrix innovation;  // Q
  Matrix obs;         // H
  Matrix obs_noise;   // R
  Vector mu0;
  Matrix sigma0;
};

struct KalmanResult {
  std::vector<Vector> pred_mean, filt_mean;
  std::vector<Matrix> pred_cov, filt_cov;
  double loglik = 0.0;
};

inline KalmanResult kalman_filter(const LinearGaussianModel& m,
                                  const std::vector<Vector>& ys) {
  KalmanResult out;
  Vector mean = m.mu0;
  Matrix cov = m.sigma0;
  for (const Vector& y : ys) {
    const Vector pm = m.transition * mean;
    const Matrix pc =
        m.transition * cov * m.transition.transpose() + m.innovation;
    out.pred_mean.push_back(pm);
    out.pred_cov.push_back(pc);
    const Matrix s = m.obs * pc * m.obs.transpose() + m.obs_noise;
    out.loglik += log_mvn_density(y, m.obs * pm, s);
    const Matrix gain = pc * m.obs.transpose() * s.inverse();
    mean = pm + gain * (y - m.obs * pm);
    cov = pc - gain * m.obs * pc;
    cov = ((cov + cov.transpose()) / 2).eval();
    out.filt_mean.push_back(mean);
    out.filt_cov.push_back(cov);
  }
  return out;
}

struct RtsResult {
  std::vector<Vector> mean;
  std::vector<Matrix> cov;
};

inline RtsResult rts_smoother(const LinearGaussianModel& m, const KalmanResult& kf) {
  const int horizon = static_cast<int>(kf.filt_mean.size());
  RtsResult out;
  out.mean.resize(horizon);
  out.cov.resize(horizon);
  out.mean[horizon - 1] = kf.filt_mean[horizon - 1];
  out.cov[horizon - 1] = kf.filt_cov[horizon - 1];
  for (int t = horizon - 2; t >= 0; --t) {
    const Matrix gain = kf.filt_cov[t] * m.transition.transpose() *
                        kf.pred_cov[t + 1].inverse();
    out.mean[t] = kf.filt_mean[t] + gain * (out.mean[t + 1] - kf.pred_mean[t + 1]);
    out.cov[t] = kf.filt_cov[t] +
                 gain * (out.cov[t + 1] - kf.pred_cov[t + 1]) * gain.transpose();
  }
  return out;
}

inline HssmModel to_hssm(const LinearGaussianModel& m) {
  HssmModel out;
  out.state_dim = m.transition.rows();
  const Matrix h = m.obs, r = m.obs_noise, a = m.transition, q = m.innovation;
  out.obs_dim = [h](int) { return h.rows(); };
  out.obs_matrix = [h](const ParamVector&, int) { return h; };
  out.obs_noise = [r](const ParamVector&, int) { return r; };
  out.evolve = [a](const Vector& x, const ParamVector&, int) { return Vector(a * x); };
  out.innovation = [q](const ParamVector&, int) { return q; };
  out.transformation = ObsModel::identity();
  out.init_mean = m.mu0;
  out.init_cov = m.sigma0;
  return out;
}

// Forward-filtering backward-sampling draw of x_{1:T} | y_{1:T}.
inline std::vector<Vector> ffbs_sample(const LinearGaussianModel& m,
                                       const std::vector<Vector>& ys, Rng& rng) {
  const KalmanResult kf = kalman_filter(m, ys);
  const int horizon = static_cast<int>(ys.size());
  std::vector<Vector> x(horizon);
  x[horizon - 1] = mvn_sample(kf.filt_mean[horizon - 1],
                              psd_cholesky(kf.filt_cov[horizon - 1], "P"), rng);
  for (int t = horizon - 2; t >= 0; --t) {
    const Matrix gain =
        kf.filt_cov[t] * m.transition.transpose() * kf.pred_cov[t + 1].inverse();
    const Vector mean = kf.filt_mean[t] + gain * (x[t + 1] - kf.pred_mean[t + 1]);
    Matrix cov = kf.filt_cov[t] - gain * kf.pred_cov[t + 1] * gain.transpose();
    cov = ((cov + cov.transpose()) / 2).eval();
    x[t] = mvn_sample(mean, psd_cholesky(cov, "P_cond"), rng);
  }
  return x;
}

inline std::vector<Vector> simulate_linear(const LinearGaussianModel& m, int horizon,
                                           Rng& rng, std::vector<Vector>* states = nullptr) {
  const Matrix lq = psd_cholesky(m.innovation, "Q");
  const Matrix lr = psd_cholesky(m.obs_noise, "R");
  const Matrix l0 = psd_cholesky(m.sigma0, "Sigma0");
  Vector x = mvn_sample(m.mu0, l0, rng);
  std::vector<Vector> ys;
  for (int t = 1; t <= horizon; ++t) {
    x = mvn_sample(m.transition * x, lq, rng);
    if (states != nullptr) states->push_back(x);
    ys.push_back(mvn_sample(m.obs * x, lr, rng));
  }
  return ys;
}

}  // namespace henkf::test
