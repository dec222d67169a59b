#pragma once

#include <Eigen/Dense>
#include <array>
#include <memory>
#include <vector>

#include "uvtex/body.hpp"
#include "uvtex/detector.hpp"
#include "uvtex/generator.hpp"
#include "uvtex/gmm.hpp"
#include "uvtex/protocol.hpp"
#include "uvtex/texture.hpp"

namespace uvtex {

struct SamplerConfig {
  std::array<double, 2> azimuth_deg{-180.0, 180.0};
  std::array<double, 2> elevation_deg{0.0, 30.0};
  std::array<double, 2> distance{3.15, 3.45};
  std::array<double, 2> light_intensity{0.85, 1.15};
  int image_width = 64;
  int image_height = 64;
  double vfov_deg = 45.0;
  int tps_grid = 4;            // G x G control points per part
  double tps_max_disp = 0.05;  // displacements drawn from U(-d, d)
  double tps_lambda = 1e-6;
  int background_count = 1;
  int part_count = 1;

  void validate() const;
};

// One Monte-Carlo draw of the nuisance parameters the loss averages over.
struct SceneSample {
  PoseParams pose;
  CameraParams camera;
  LightParams light;
  int background = 0;
  Eigen::MatrixXd tps_disp;  // (part_count * G^2) x 2, part-major
};

// Deterministic scenario stream: every draw comes from a generator keyed by
// (master seed, epoch, index), so a scenario is a pure function of its key.
class ScenarioSampler {
 public:
  ScenarioSampler(GMMModel gmm, SamplerConfig cfg, std::uint64_t master_seed);

  SceneSample sample(std::uint64_t epoch, std::uint64_t index) const;
  const SamplerConfig& config() const { return cfg_; }
  const GMMModel& gmm() const { return gmm_; }
  std::uint64_t master_seed() const { return seed_; }

 private:
  GMMModel gmm_;
  SamplerConfig cfg_;
  std::uint64_t seed_;
};

// Everything about a scenario that does not depend on the latent: the IUV
// map, the gt box, the per-part warp grids, and warped textures for parts the
// patch never touches.
struct SceneContext {
  IUVMap iuv;
  BBox gt;
  bool has_gt = false;
  int background = 0;
  LightParams light;
  std::vector<WarpGrid> warps;
  std::vector<Image> warped_base;  // filled only for non-attackable parts
};

SceneContext prepare_scene(const BodyShape& body, const TextureStack& base_stack,
                           const SceneSample& sample, double step,
                           double tps_lambda = 1e-6);

// Builds the per-scenario stack from a pre-tiled one: attackable parts are
// warped through the scenario's TPS grids, the rest reuse the cached warps.
TextureStack assemble_scene_stack(const SceneContext& ctx, const TextureStack& tiled);

struct EoptProblem {
  BodyShape body;
  TextureStack base_stack;
  std::vector<Image> backgrounds;
  std::shared_ptr<ScenarioSampler> sampler;
  GeneratorSpec generator;
  std::vector<std::shared_ptr<DetectorClient>> detectors;
  std::vector<double> detector_weights;
  std::string target_label = "person";
  double step = 0.0;  // 0 = bounding-diameter / 128 per pose
  int threads = 1;

  std::vector<SceneContext> prepare_epoch(std::uint64_t epoch, int n_batch) const;

  // Mean detection loss over the batch; multiple detectors are combined as
  // the weighted mean of per-detector batch means.
  double batch_loss(const std::vector<SceneContext>& batch, const Eigen::VectorXd& z) const;

  // Loss plus the analytic latent gradient; requires built-in detectors.
  double batch_loss_grad(const std::vector<SceneContext>& batch, const Eigen::VectorXd& z,
                         Eigen::VectorXd& grad) const;

  // Convenience wrapper: prepare a fresh batch for `epoch`, then average.
  double eopt_loss(const Eigen::VectorXd& z, int n_batch, std::uint64_t epoch) const;

  // Composite image for one prepared scenario and patch.
  Image render(const SceneContext& ctx, const Image& patch) const;

  bool all_toy() const;
  void validate() const;
};

}  // namespace uvtex
