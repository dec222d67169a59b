#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "uvtex/generator.hpp"
#include "uvtex/optim.hpp"
#include "uvtex/scenario.hpp"

namespace uvtex {

struct DetectorSpec {
  enum class Type { Toy, Subprocess, Tcp };
  Type type = Type::Toy;
  // toy
  int window = 36;
  int stride = 4;
  double weight_value = 0.008;  // uniform template weight per component
  double bias = -6.4;
  // subprocess
  std::vector<std::string> command;
  // tcp
  std::string host = "127.0.0.1";
  int port = 0;
  int timeout_ms = 10000;
  // ensemble weight
  double weight = 1.0;
};

struct RunConfig {
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = hardware concurrency

  std::string body_path;
  std::string poses_path;  // fit a GMM from these when gmm_model_path is empty
  std::string gmm_model_path;
  std::vector<std::string> background_paths;
  std::string out_dir = "out";

  SamplerConfig sampler;  // part_count is filled from the body at build time
  double render_step = 0.0;

  int texture_size = 64;
  std::vector<Eigen::Vector3d> part_colors;    // empty = defaults
  std::vector<std::uint8_t> part_attackable;   // empty = defaults (head part 1 fixed)

  GeneratorSpec generator;
  double latent_lower = -3.0;
  double latent_upper = 3.0;

  int gmm_components = 10;
  int gmm_max_iters = 200;

  PSOConfig pso;
  AdamConfig adam;
  bool resample_each_epoch = true;
  double fd_step = 0.05;  // forward-difference step for external detectors

  std::vector<DetectorSpec> detectors;

  double tau_iou = 0.5;
  double tau_conf = 0.5;
  int eval_frames = 200;

  void validate() const;
};

RunConfig run_config_from_json_text(const std::string& text, const std::string& base_dir);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json_text(const RunConfig& cfg);

}  // namespace uvtex
