#include "uvtex/gmm.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "uvtex/errors.hpp"

namespace uvtex {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

void check_bounds(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  if (lo.size() != hi.size()) throw ConfigError("gmm: bounds dimension mismatch");
  for (Eigen::Index i = 0; i < lo.size(); ++i)
    if (!(lo[i] < hi[i])) throw ConfigError("gmm: theta_min must be < theta_max");
}

}  // namespace

void GMMModel::validate() const {
  check_bounds(theta_min, theta_max);
  const int k = components();
  if (k < 1) throw ConfigError("gmm: needs at least one component");
  if (means.rows() != k || stds.rows() != k || means.cols() != dim() || stds.cols() != dim())
    throw ConfigError("gmm: parameter shape mismatch");
  double sum = 0;
  for (int i = 0; i < k; ++i) {
    if (!(weights[i] >= 0.0 && weights[i] <= 1.0))
      throw ConfigError("gmm: weights must lie in [0, 1]");
    sum += weights[i];
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("gmm: weights must sum to 1");
  if (!(stds.minCoeff() > 0)) throw ConfigError("gmm: stds must be positive");
}

Eigen::VectorXd to_u(const Eigen::VectorXd& theta, const Eigen::VectorXd& theta_min,
                     const Eigen::VectorXd& theta_max) {
  check_bounds(theta_min, theta_max);
  if (theta.size() != theta_min.size()) throw ConfigError("to_u: dimension mismatch");
  Eigen::VectorXd u(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double a = 0.5 * (theta_max[i] - theta_min[i]);
    const double b = 0.5 * (theta_max[i] + theta_min[i]);
    const double t = (theta[i] - b) / a;
    if (!(t > -1.0 && t < 1.0))
      throw ConfigError("to_u: theta lies on or outside its bounds");
    u[i] = std::atanh(t);
  }
  return u;
}

Eigen::VectorXd to_theta(const Eigen::VectorXd& u, const Eigen::VectorXd& theta_min,
                         const Eigen::VectorXd& theta_max) {
  check_bounds(theta_min, theta_max);
  if (u.size() != theta_min.size()) throw ConfigError("to_theta: dimension mismatch");
  Eigen::VectorXd theta(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double a = 0.5 * (theta_max[i] - theta_min[i]);
    const double b = 0.5 * (theta_max[i] + theta_min[i]);
    // tanh rounds to +-1 for |u| > ~19; pin it just inside so the result
    // stays strictly between the bounds.
    const double t = std::clamp(std::tanh(u[i]), -1.0 + 1e-12, 1.0 - 1e-12);
    theta[i] = a * t + b;
  }
  return theta;
}

namespace {

// log N(x | mu, diag(std^2)) summed over dimensions.
double log_gauss(const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                 const Eigen::VectorXd& std_dev) {
  double ll = 0;
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    const double z = (x[d] - mu[d]) / std_dev[d];
    ll += -0.5 * (kLog2Pi + z * z) - std::log(std_dev[d]);
  }
  return ll;
}

Eigen::VectorXd global_std(const Eigen::MatrixXd& samples, double var_floor) {
  const Eigen::VectorXd mean = samples.colwise().mean();
  Eigen::VectorXd var = Eigen::VectorXd::Zero(samples.cols());
  for (Eigen::Index i = 0; i < samples.rows(); ++i)
    var += (samples.row(i).transpose() - mean).array().square().matrix();
  var /= static_cast<double>(samples.rows());
  return var.array().max(var_floor).sqrt();
}

// k-means++ style seeding: the first mean is a random sample, later means are
// drawn with probability proportional to squared distance from chosen ones.
Eigen::MatrixXd seed_means(const Eigen::MatrixXd& samples, int k, Rng& rng) {
  const Eigen::Index n = samples.rows();
  Eigen::MatrixXd means(k, samples.cols());
  means.row(0) = samples.row(rng.uniform_int(static_cast<int>(n)));
  Eigen::VectorXd d2 = (samples.rowwise() - means.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0) {
      double r = rng.uniform() * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= d2[i];
        if (r <= 0) {
          pick = i;
          break;
        }
        pick = i;
      }
    } else {
      pick = rng.uniform_int(static_cast<int>(n));
    }
    means.row(c) = samples.row(pick);
    d2 = d2.cwiseMin((samples.rowwise() - means.row(c)).rowwise().squaredNorm());
  }
  return means;
}

}  // namespace

EmResult fit_em(const Eigen::MatrixXd& samples, int k, const Eigen::VectorXd& theta_min,
                const Eigen::VectorXd& theta_max, std::uint64_t seed,
                const EmOptions& opts) {
  check_bounds(theta_min, theta_max);
  const Eigen::Index n = samples.rows();
  const Eigen::Index dim = samples.cols();
  if (k < 1) throw ConfigError("fit_em: component count must be >= 1");
  if (n < k) throw ConfigError("fit_em: need at least one sample per component");
  if (dim != theta_min.size()) throw ConfigError("fit_em: sample dimension mismatch");

  Rng rng(seed);
  GMMModel model;
  model.theta_min = theta_min;
  model.theta_max = theta_max;
  model.weights = Eigen::VectorXd::Constant(k, 1.0 / k);
  model.means = seed_means(samples, k, rng);
  const Eigen::VectorXd init_std = global_std(samples, opts.var_floor);
  model.stds = init_std.transpose().replicate(k, 1);

  EmResult result;
  Eigen::MatrixXd log_resp(n, k);
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    // E-step with the running log-likelihood of the current parameters.
    double ll = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double max_term = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double t = std::log(std::max(model.weights[c], 1e-300)) +
                         log_gauss(samples.row(i).transpose(), model.means.row(c).transpose(),
                                   model.stds.row(c).transpose());
        log_resp(i, c) = t;
        max_term = std::max(max_term, t);
      }
      double denom = 0;
      for (int c = 0; c < k; ++c) denom += std::exp(log_resp(i, c) - max_term);
      const double log_denom = max_term + std::log(denom);
      ll += log_denom;
      for (int c = 0; c < k; ++c) log_resp(i, c) = std::exp(log_resp(i, c) - log_denom);
    }
    result.log_likelihood.push_back(ll);
    result.iterations = iter + 1;

    // M-step.
    bool reseeded = false;
    for (int c = 0; c < k; ++c) {
      const double nk = log_resp.col(c).sum();
      if (nk < 1e-10) {
        // Empty component: re-seed it from the sample farthest from every mean.
        Eigen::Index far = 0;
        double best = -1;
        for (Eigen::Index i = 0; i < n; ++i) {
          double nearest = std::numeric_limits<double>::max();
          for (int c2 = 0; c2 < k; ++c2)
            nearest = std::min(nearest,
                               (samples.row(i) - model.means.row(c2)).squaredNorm());
          if (nearest > best) {
            best = nearest;
            far = i;
          }
        }
        model.means.row(c) = samples.row(far);
        model.stds.row(c) = init_std.transpose();
        model.weights[c] = 1.0 / static_cast<double>(n);
        reseeded = true;
        continue;
      }
      model.weights[c] = nk / static_cast<double>(n);
      Eigen::VectorXd mu = Eigen::VectorXd::Zero(dim);
      for (Eigen::Index i = 0; i < n; ++i) mu += log_resp(i, c) * samples.row(i).transpose();
      mu /= nk;
      Eigen::VectorXd var = Eigen::VectorXd::Zero(dim);
      for (Eigen::Index i = 0; i < n; ++i)
        var += log_resp(i, c) *
               (samples.row(i).transpose() - mu).array().square().matrix();
      var = (var / nk).array().max(opts.var_floor);
      model.means.row(c) = mu.transpose();
      model.stds.row(c) = var.array().sqrt().transpose();
    }
    model.weights /= model.weights.sum();

    if (!reseeded && result.log_likelihood.size() >= 2) {
      const double prev = result.log_likelihood[result.log_likelihood.size() - 2];
      const double cur = result.log_likelihood.back();
      if (std::abs(cur - prev) < opts.rel_tol * (std::abs(prev) + 1e-12)) break;
    }
  }

  model.validate();
  result.model = std::move(model);
  return result;
}

Eigen::VectorXd sample_u(const GMMModel& gmm, Rng& rng) {
  const double r = rng.uniform();
  int pick = gmm.components() - 1;
  double acc = 0;
  for (int c = 0; c < gmm.components(); ++c) {
    acc += gmm.weights[c];
    if (r < acc) {
      pick = c;
      break;
    }
  }
  Eigen::VectorXd u(gmm.dim());
  for (int d = 0; d < gmm.dim(); ++d)
    u[d] = gmm.means(pick, d) + gmm.stds(pick, d) * rng.normal();
  return u;
}

std::vector<PoseParams> sample_poses(const GMMModel& gmm, Rng& rng, int n) {
  if (n < 1) throw ConfigError("sample_poses: n must be >= 1");
  gmm.validate();
  std::vector<PoseParams> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    PoseParams p;
    p.theta = to_theta(sample_u(gmm, rng), gmm.theta_min, gmm.theta_max);
    p.theta_min = gmm.theta_min;
    p.theta_max = gmm.theta_max;
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

nlohmann::json vec_to_json(const Eigen::VectorXd& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Eigen::VectorXd json_to_vec(const nlohmann::json& arr) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i];
  return v;
}

}  // namespace

std::string gmm_to_json_text(const GMMModel& gmm) {
  nlohmann::json j;
  j["weights"] = vec_to_json(gmm.weights);
  j["theta_min"] = vec_to_json(gmm.theta_min);
  j["theta_max"] = vec_to_json(gmm.theta_max);
  nlohmann::json means = nlohmann::json::array();
  nlohmann::json stds = nlohmann::json::array();
  for (int c = 0; c < gmm.components(); ++c) {
    means.push_back(vec_to_json(gmm.means.row(c).transpose()));
    stds.push_back(vec_to_json(gmm.stds.row(c).transpose()));
  }
  j["means"] = means;
  j["stds"] = stds;
  return j.dump(2);
}

GMMModel gmm_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("gmm: invalid JSON: ") + e.what());
  }
  GMMModel gmm;
  try {
    gmm.weights = json_to_vec(j.at("weights"));
    gmm.theta_min = json_to_vec(j.at("theta_min"));
    gmm.theta_max = json_to_vec(j.at("theta_max"));
    const auto& means = j.at("means");
    const auto& stds = j.at("stds");
    gmm.means.resize(means.size(), gmm.dim());
    gmm.stds.resize(stds.size(), gmm.dim());
    for (std::size_t c = 0; c < means.size(); ++c) {
      gmm.means.row(static_cast<Eigen::Index>(c)) = json_to_vec(means[c]).transpose();
      gmm.stds.row(static_cast<Eigen::Index>(c)) = json_to_vec(stds[c]).transpose();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("gmm: missing or mistyped field: ") + e.what());
  }
  gmm.validate();
  return gmm;
}

void save_gmm(const GMMModel& gmm, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("gmm: cannot write " + path);
  out << gmm_to_json_text(gmm) << "\n";
}

GMMModel load_gmm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("gmm: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return gmm_from_json_text(buf.str());
}

PoseDataset load_pose_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("poses: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("poses: invalid JSON in ") + path + ": " + e.what());
  }
  PoseDataset ds;
  try {
    ds.theta_min = json_to_vec(j.at("theta_min"));
    ds.theta_max = json_to_vec(j.at("theta_max"));
    for (const auto& row : j.at("poses")) {
      Eigen::VectorXd theta = json_to_vec(row);
      if (theta.size() != ds.theta_min.size())
        throw ConfigError("poses: pose dimension mismatch in " + path);
      ds.poses.push_back(std::move(theta));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("poses: missing or mistyped field: ") + e.what());
  }
  check_bounds(ds.theta_min, ds.theta_max);
  if (ds.poses.empty()) throw ConfigError("poses: empty dataset in " + path);
  return ds;
}

void save_pose_dataset(const PoseDataset& ds, const std::string& path) {
  nlohmann::json j;
  j["theta_min"] = vec_to_json(ds.theta_min);
  j["theta_max"] = vec_to_json(ds.theta_max);
  nlohmann::json poses = nlohmann::json::array();
  for (const auto& p : ds.poses) poses.push_back(vec_to_json(p));
  j["poses"] = poses;
  std::ofstream out(path);
  if (!out) throw ConfigError("poses: cannot write " + path);
  out << j.dump() << "\n";
}

}  // namespace uvtex
