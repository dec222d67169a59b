#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace uvtex {

struct PSOConfig {
  int particles = 50;
  int iterations = 30;
  double inertia = 0.729;    // omega
  double cognitive = 1.494;  // c1
  double social = 1.494;     // c2
  // Per-dimension |v| limit as a fraction of the swarm's current
  // personal-best spread in that dimension. Tying the clamp to the spread
  // lets the swarm travel freely early and damps the endgame jitter once it
  // has contracted.
  double velocity_clamp = 0.32;
};

// Evaluates a set of positions for one iteration; entries may be computed in
// parallel but the returned order must match the input order.
using BatchObjective =
    std::function<std::vector<double>(const std::vector<Eigen::VectorXd>&, int iteration)>;

struct PSOIterStats {
  double iter_best = 0.0;  // best value evaluated this iteration
  double best_so_far = 0.0;
};

struct PSOResult {
  Eigen::VectorXd best;
  double best_value = 0.0;
  std::vector<PSOIterStats> history;  // one entry per iteration
};

// Velocity update v <- w v + c1 r1 (p - z) + c2 r2 (g - z) with fresh scalar
// r1, r2 per particle per iteration; positions clamped to the box (the
// clamped component's velocity is zeroed). The initial swarm is evaluated at
// iteration index 0; the main loop runs iterations 1..config.iterations.
PSOResult pso(const BatchObjective& objective, const Eigen::VectorXd& lower,
              const Eigen::VectorXd& upper, const PSOConfig& config, std::uint64_t seed);

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int iterations = 300;
  int batch = 100;  // scenario batch size when used by the attack loop
};

// Returns the loss at z and fills grad; `iteration` counts from 1.
using GradObjective =
    std::function<double(const Eigen::VectorXd& z, int iteration, Eigen::VectorXd& grad)>;

struct AdamResult {
  Eigen::VectorXd z;
  std::vector<double> losses;  // loss evaluated at the pre-update iterate
};

// Bias-corrected Adam with box clamping after every step; throws
// NumericalError on non-finite gradients.
AdamResult adam(const GradObjective& objective, Eigen::VectorXd z0,
                const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                const AdamConfig& config);

}  // namespace uvtex
