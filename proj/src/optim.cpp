#include "uvtex/optim.hpp"

#include <cmath>

#include "uvtex/errors.hpp"
#include "uvtex/rng.hpp"

namespace uvtex {

PSOResult pso(const BatchObjective& objective, const Eigen::VectorXd& lower,
              const Eigen::VectorXd& upper, const PSOConfig& config, std::uint64_t seed) {
  const Eigen::Index dim = lower.size();
  if (upper.size() != dim || dim == 0) throw ConfigError("pso: bad bounds");
  for (Eigen::Index d = 0; d < dim; ++d)
    if (!(lower[d] < upper[d])) throw ConfigError("pso: lower must be < upper");
  if (config.particles < 2) throw ConfigError("pso: need at least 2 particles");
  if (config.iterations < 1) throw ConfigError("pso: need at least 1 iteration");
  if (!(config.inertia > 0) || !(config.cognitive > 0) || !(config.social > 0))
    throw ConfigError("pso: inertia and acceleration coefficients must be > 0");

  Rng rng(seed);

  std::vector<Eigen::VectorXd> pos(config.particles), vel(config.particles),
      best_pos(config.particles);
  std::vector<double> best_val(config.particles);
  for (int i = 0; i < config.particles; ++i) {
    pos[i].resize(dim);
    for (Eigen::Index d = 0; d < dim; ++d) pos[i][d] = rng.uniform(lower[d], upper[d]);
    vel[i] = Eigen::VectorXd::Zero(dim);
  }

  // Seed personal and global bests from the initial swarm (iteration 0).
  std::vector<double> vals = objective(pos, 0);
  Eigen::VectorXd g;
  double g_val = std::numeric_limits<double>::infinity();
  for (int i = 0; i < config.particles; ++i) {
    best_pos[i] = pos[i];
    best_val[i] = vals[i];
    if (vals[i] < g_val) {
      g_val = vals[i];
      g = pos[i];
    }
  }

  PSOResult result;
  Eigen::VectorXd v_max(dim);
  for (int iter = 1; iter <= config.iterations; ++iter) {
    for (Eigen::Index d = 0; d < dim; ++d) {
      double mn = best_pos[0][d], mx = best_pos[0][d];
      for (int i = 1; i < config.particles; ++i) {
        mn = std::min(mn, best_pos[i][d]);
        mx = std::max(mx, best_pos[i][d]);
      }
      v_max[d] = std::max(config.velocity_clamp * (mx - mn), 1e-12);
    }
    for (int i = 0; i < config.particles; ++i) {
      const double r1 = rng.uniform();
      const double r2 = rng.uniform();
      vel[i] = config.inertia * vel[i] + config.cognitive * r1 * (best_pos[i] - pos[i]) +
               config.social * r2 * (g - pos[i]);
      for (Eigen::Index d = 0; d < dim; ++d) {
        vel[i][d] = std::clamp(vel[i][d], -v_max[d], v_max[d]);
        pos[i][d] += vel[i][d];
        if (pos[i][d] < lower[d]) {
          pos[i][d] = lower[d];
          vel[i][d] = 0.0;
        } else if (pos[i][d] > upper[d]) {
          pos[i][d] = upper[d];
          vel[i][d] = 0.0;
        }
      }
    }
    vals = objective(pos, iter);
    double iter_best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < config.particles; ++i) {
      iter_best = std::min(iter_best, vals[i]);
      if (vals[i] < best_val[i]) {
        best_val[i] = vals[i];
        best_pos[i] = pos[i];
      }
      if (vals[i] < g_val) {
        g_val = vals[i];
        g = pos[i];
      }
    }
    result.history.push_back({iter_best, g_val});
  }

  result.best = g;
  result.best_value = g_val;
  return result;
}

AdamResult adam(const GradObjective& objective, Eigen::VectorXd z0,
                const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                const AdamConfig& config) {
  const Eigen::Index dim = z0.size();
  if (lower.size() != dim || upper.size() != dim) throw ConfigError("adam: bad bounds");
  if (!(config.lr > 0)) throw ConfigError("adam: learning rate must be > 0");
  if (!(config.beta1 >= 0 && config.beta1 < 1) || !(config.beta2 >= 0 && config.beta2 < 1))
    throw ConfigError("adam: betas must lie in [0, 1)");
  if (config.iterations < 1) throw ConfigError("adam: need at least 1 iteration");

  AdamResult result;
  Eigen::VectorXd m = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd grad(dim);
  for (int t = 1; t <= config.iterations; ++t) {
    const double loss = objective(z0, t, grad);
    if (!grad.allFinite())
      throw NumericalError("adam: non-finite gradient at iteration " + std::to_string(t));
    result.losses.push_back(loss);
    m = config.beta1 * m + (1.0 - config.beta1) * grad;
    v = config.beta2 * v + (1.0 - config.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(config.beta1, t);
    const double bc2 = 1.0 - std::pow(config.beta2, t);
    for (Eigen::Index d = 0; d < dim; ++d) {
      const double m_hat = m[d] / bc1;
      const double v_hat = v[d] / bc2;
      z0[d] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
      z0[d] = std::clamp(z0[d], lower[d], upper[d]);
    }
  }
  result.z = std::move(z0);
  return result;
}

}  // namespace uvtex
