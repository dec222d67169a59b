#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "uvtex/body.hpp"
#include "uvtex/gmm.hpp"
#include "uvtex/image.hpp"
#include "uvtex/rng.hpp"
#include "uvtex/scenario.hpp"

namespace testutil {

inline std::string data_path(const std::string& name) {
  return std::string(UVTEX_DATA_DIR) + "/" + name;
}

inline std::string cli_path() { return UVTEX_CLI_PATH; }

// Scratch directory unique to the process, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("uvtex_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

// A two-bone arm: unit links along +y, joints at the base and the elbow.
inline uvtex::BodyShape two_link_chain() {
  uvtex::BodyShape shape;
  shape.part_count = 2;
  shape.joints.push_back({-1, {0, 0, 0}});
  shape.joints.push_back({0, {0, 1, 0}});
  shape.capsules.push_back({0, {0, 1, 0}, 0.1, 1.0, 0, 5.0});
  shape.capsules.push_back({1, {0, 1, 0}, 0.1, 1.0, 1, 5.0});
  return shape;
}

// One fat capsule at the origin pointing up.
inline uvtex::BodyShape single_capsule_body(double radius = 0.5, double length = 1.0,
                                            double density = 8.0) {
  uvtex::BodyShape shape;
  shape.part_count = 1;
  shape.joints.push_back({-1, {0, 0, 0}});
  shape.capsules.push_back({0, {0, 1, 0}, radius, length, 0, density});
  return shape;
}

// Small synthetic pose family around the rest stance: three activity modes
// moving shoulders, elbows, hips, and knees, plus mild root yaw. Matches the
// default 17-joint body.
inline uvtex::PoseDataset make_pose_family(int n, std::uint64_t seed) {
  const int joints = 17;
  uvtex::PoseParams rest = uvtex::PoseParams::rest(joints);
  uvtex::PoseDataset ds;
  ds.theta_min = rest.theta_min;
  ds.theta_max = rest.theta_max;
  uvtex::Rng rng(seed);
  auto set = [](Eigen::VectorXd& th, int joint, int axis, double v) {
    th[3 * joint + axis] = std::clamp(v, -1.5, 1.5);
  };
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd th = Eigen::VectorXd::Zero(3 * joints);
    const int mode = i % 3;
    const double arm = mode == 0 ? 0.25 : (mode == 1 ? -0.2 : 0.0);
    set(th, 0, 1, 0.2 * rng.normal());                      // root yaw
    set(th, 5, 2, arm + 0.15 * rng.normal());               // l shoulder
    set(th, 8, 2, -arm + 0.15 * rng.normal());              // r shoulder
    set(th, 6, 2, 0.2 * rng.normal());                      // l elbow
    set(th, 9, 2, 0.2 * rng.normal());                      // r elbow
    set(th, 11, 0, 0.12 * rng.normal());                    // l hip
    set(th, 14, 0, 0.12 * rng.normal());                    // r hip
    set(th, 12, 0, 0.15 * rng.normal());                    // l knee
    set(th, 15, 0, 0.15 * rng.normal());                    // r knee
    set(th, 1, 0, 0.08 * rng.normal());                     // spine lean
    ds.poses.push_back(th);
  }
  return ds;
}

// Small end-to-end problem over the default body: toy detector, solid base
// stack, synthetic pose mixture, dim backgrounds.
inline uvtex::EoptProblem make_tiny_problem(std::uint64_t seed, int image_size = 16,
                                            int texture_size = 16, int window = 12,
                                            int stride = 2, double weight_value = 0.02,
                                            double bias = -4.0) {
  using namespace uvtex;
  EoptProblem p;
  p.body = load_body_shape(data_path("default_body.json"));

  const PoseDataset ds = make_pose_family(60, seed);
  Eigen::MatrixXd u(ds.poses.size(), ds.theta_min.size());
  for (std::size_t i = 0; i < ds.poses.size(); ++i)
    u.row(static_cast<Eigen::Index>(i)) =
        to_u(ds.poses[i], ds.theta_min, ds.theta_max).transpose();
  GMMModel gmm = fit_em(u, 3, ds.theta_min, ds.theta_max, seed).model;

  SamplerConfig cfg;
  cfg.image_width = image_size;
  cfg.image_height = image_size;
  cfg.part_count = p.body.part_count;
  cfg.background_count = 2;
  ScenarioSampler sampler(std::move(gmm), cfg, seed);
  p.sampler = std::make_shared<ScenarioSampler>(sampler);

  std::vector<Eigen::Vector3d> colors(p.body.part_count, {0.55, 0.55, 0.6});
  colors[1] = {0.85, 0.72, 0.62};
  std::vector<std::uint8_t> attackable(p.body.part_count, 1);
  attackable[1] = 0;
  p.base_stack = TextureStack::solid(p.body.part_count, texture_size, colors, attackable);

  uvtex::Rng bg_rng(seed + 100);
  for (int i = 0; i < 2; ++i) {
    Image bg(image_size, image_size);
    for (double& v : bg.data) v = 0.05 + 0.2 * bg_rng.uniform();
    p.backgrounds.push_back(std::move(bg));
  }

  ToyDetector det;
  det.tmpl = Image(window, window, weight_value);
  det.bias = bias;
  det.stride = stride;
  p.detectors.push_back(std::make_shared<ToyDetectorClient>(std::move(det)));
  p.detector_weights.push_back(1.0);

  p.generator.kind = GeneratorKind::Direct;
  p.generator.patch_size = 4;
  p.threads = 1;
  return p;
}

// Dim backgrounds with gentle structure; values stay below ~0.3.
inline uvtex::Image make_background(int w, int h, std::uint64_t seed) {
  uvtex::Rng rng(seed);
  const double base = rng.uniform(0.05, 0.18);
  const double slope = rng.uniform(-0.08, 0.08);
  uvtex::Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = base + slope * (static_cast<double>(y) / h) +
                         0.04 * rng.uniform();
        img.at(x, y, c) = std::clamp(v, 0.0, 0.3);
      }
  return img;
}

}  // namespace testutil
