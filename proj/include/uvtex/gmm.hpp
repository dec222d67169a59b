#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "uvtex/body.hpp"
#include "uvtex/rng.hpp"

namespace uvtex {

// Bounded pose distribution: a diagonal Gaussian mixture over u-space with
// theta = a * tanh(u) + b, a = (theta_max - theta_min) / 2, b = their mean.
struct GMMModel {
  Eigen::VectorXd weights;    // K, sums to 1
  Eigen::MatrixXd means;      // K x D
  Eigen::MatrixXd stds;       // K x D, > 0
  Eigen::VectorXd theta_min;  // D
  Eigen::VectorXd theta_max;  // D

  int components() const { return static_cast<int>(weights.size()); }
  int dim() const { return static_cast<int>(theta_min.size()); }
  Eigen::VectorXd scale() const { return 0.5 * (theta_max - theta_min); }   // a
  Eigen::VectorXd center() const { return 0.5 * (theta_max + theta_min); }  // b

  void validate() const;
};

// Inverse bound map u = atanh((theta - b) / a); throws if theta touches or
// leaves the open interval.
Eigen::VectorXd to_u(const Eigen::VectorXd& theta, const Eigen::VectorXd& theta_min,
                     const Eigen::VectorXd& theta_max);

// Forward bound map theta = a * tanh(u) + b, strictly inside the bounds for
// every finite u.
Eigen::VectorXd to_theta(const Eigen::VectorXd& u, const Eigen::VectorXd& theta_min,
                         const Eigen::VectorXd& theta_max);

struct EmOptions {
  int max_iters = 200;
  double rel_tol = 1e-8;
  double var_floor = 1e-12;
};

struct EmResult {
  GMMModel model;
  std::vector<double> log_likelihood;  // one entry per EM iteration
  int iterations = 0;
};

// Diagonal-covariance EM over u-space rows of `samples` (N x D), seeded
// k-means++ style. An emptied component is re-seeded from the sample farthest
// from all current means.
EmResult fit_em(const Eigen::MatrixXd& samples, int k, const Eigen::VectorXd& theta_min,
                const Eigen::VectorXd& theta_max, std::uint64_t seed,
                const EmOptions& opts = {});

Eigen::VectorXd sample_u(const GMMModel& gmm, Rng& rng);
std::vector<PoseParams> sample_poses(const GMMModel& gmm, Rng& rng, int n);

std::string gmm_to_json_text(const GMMModel& gmm);
GMMModel gmm_from_json_text(const std::string& text);
void save_gmm(const GMMModel& gmm, const std::string& path);
GMMModel load_gmm(const std::string& path);

// Pose datasets: a bounds header plus an array of theta vectors.
struct PoseDataset {
  Eigen::VectorXd theta_min;
  Eigen::VectorXd theta_max;
  std::vector<Eigen::VectorXd> poses;
};

PoseDataset load_pose_dataset(const std::string& path);
void save_pose_dataset(const PoseDataset& ds, const std::string& path);

}  // namespace uvtex
