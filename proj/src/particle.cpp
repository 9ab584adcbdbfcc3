#include "henkf/particle.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include <Eigen/Eigenvalues>

#include "henkf/errors.hpp"
#include "henkf/stats.hpp"

namespace henkf {

std::shared_ptr<const ThetaPathNode> extend_path(
    std::shared_ptr<const ThetaPathNode> parent, ParamVector value) {
  auto node = std::make_shared<ThetaPathNode>();
  node->value = std::move(value);
  node->parent = std::move(parent);
  return node;
}

std::vector<ParamVector> path_values(const std::shared_ptr<const ThetaPathNode>& head) {
  std::vector<ParamVector> out;
  for (const ThetaPathNode* node = head.get(); node != nullptr;
       node = node->parent.get())
    out.push_back(node->value);
  std::reverse(out.begin(), out.end());
  return out;
}

double ParticleSystem::ess() const {
  double acc = 0.0;
  for (const Particle& p : particles) acc += p.weight * p.weight;
  return acc > 0.0 ? 1.0 / acc : 0.0;
}

Vector ParticleSystem::weights() const {
  Vector w(size());
  for (Index i = 0; i < size(); ++i) w(i) = particles[i].weight;
  return w;
}

int ParticleSystem::unique_root_ancestors() const {
  std::set<const ThetaPathNode*> roots;
  for (const Particle& p : particles) {
    const ThetaPathNode* node = p.theta_path.get();
    while (node != nullptr && node->parent != nullptr) node = node->parent.get();
    roots.insert(node);
  }
  return static_cast<int>(roots.size());
}

double ParticleSystem::weighted_theta_mean(Index component) const {
  double acc = 0.0;
  for (const Particle& p : particles) acc += p.weight * p.theta()[component];
  return acc;
}

std::vector<double> normalize_log_weights(const std::vector<double>& log_weights) {
  const double top = *std::max_element(log_weights.begin(), log_weights.end());
  if (top == -std::numeric_limits<double>::infinity())
    throw DegeneracyError("all particle weights vanished (max raw log weight -inf)");
  std::vector<double> out(log_weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    out[i] = std::exp(log_weights[i] - top);
    total += out[i];
  }
  for (double& w : out) w /= total;
  return out;
}

std::vector<Index> resample_indices(const Vector& weights, ResampleScheme scheme,
                                    Rng& rng) {
  const Index m = weights.size();
  std::vector<Index> picks(m);
  if (scheme == ResampleScheme::multinomial) {
    for (Index k = 0; k < m; ++k) {
      const double u = rng.uniform();
      double acc = 0.0;
      Index pick = m - 1;
      for (Index i = 0; i < m; ++i) {
        acc += weights(i);
        if (u < acc) {
          pick = i;
          break;
        }
      }
      picks[k] = pick;
    }
    return picks;
  }
  // Systematic: one uniform offset, stratified points u/m + k/m.
  const double u = rng.uniform() / double(m);
  double acc = weights(0);
  Index i = 0;
  for (Index k = 0; k < m; ++k) {
    const double point = u + double(k) / double(m);
    while (point >= acc && i + 1 < m) acc += weights(++i);
    picks[k] = i;
  }
  return picks;
}

ParticleSystem resample(const ParticleSystem& system, ResampleScheme scheme, Rng& rng) {
  const Index m = system.size();
  const std::vector<Index> picks = resample_indices(system.weights(), scheme, rng);
  ParticleSystem out;
  out.time_index = system.time_index;
  out.particles.reserve(m);
  for (Index k = 0; k < m; ++k) {
    Particle p = system.particles[picks[k]];
    p.weight = 1.0 / double(m);
    out.particles.push_back(std::move(p));
  }
  return out;
}

Matrix liu_west_refresh(const Matrix& thetas, const Vector& weights, double h,
                        Rng& rng) {
  if (!(h > 0.0 && h < 1.0))
    throw ParameterDomainError("liu-west shrinkage h must lie in (0,1)");
  const Index p = thetas.rows(), m = thetas.cols();
  if (weights.size() != m) throw DimensionError("weights do not match particle count");
  const double a = std::sqrt(1.0 - h * h);

  const Vector mean = thetas * weights;
  Matrix cov = Matrix::Zero(p, p);
  for (Index i = 0; i < m; ++i) {
    const Vector d = thetas.col(i) - mean;
    cov += weights(i) * d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  Matrix root;
  const double top = std::max(es.eigenvalues().maxCoeff(), 0.0);
  if (top <= 0.0 || es.eigenvalues().minCoeff() < -1e-12 * top) {
    // Singular weighted covariance: mean-preserving diagonal jitter.
    root = cov.diagonal().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  } else {
    root = es.eigenvectors() *
           es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }

  Matrix out(p, m);
  for (Index i = 0; i < m; ++i) {
    Vector eps(p);
    for (Index k = 0; k < p; ++k) eps(k) = rng.normal();
    out.col(i) = a * thetas.col(i) + (1.0 - a) * mean + h * (root * eps);
  }
  return out;
}

}  // namespace henkf
