#include "uvtex/attack.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

#include "json.hpp"
#include "uvtex/errors.hpp"
#include "uvtex/optim.hpp"
#include "uvtex/parallel.hpp"

namespace uvtex {

namespace {

using Clock = std::chrono::steady_clock;

long ms_since(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0).count();
}

std::shared_ptr<DetectorClient> make_detector(const DetectorSpec& spec) {
  switch (spec.type) {
    case DetectorSpec::Type::Toy: {
      ToyDetector det;
      det.tmpl = Image(spec.window, spec.window, spec.weight_value);
      det.bias = spec.bias;
      det.stride = spec.stride;
      det.validate();
      return std::make_shared<ToyDetectorClient>(std::move(det));
    }
    case DetectorSpec::Type::Subprocess:
      return std::make_shared<WireDetectorClient>(open_subprocess_channel(spec.command),
                                                  spec.timeout_ms);
    case DetectorSpec::Type::Tcp:
      return std::make_shared<WireDetectorClient>(open_tcp_channel(spec.host, spec.port),
                                                  spec.timeout_ms);
  }
  throw ConfigError("unknown detector spec");
}

std::vector<Eigen::Vector3d> default_part_colors(int parts) {
  // Gray garments everywhere except part 1, which stands in for skin.
  std::vector<Eigen::Vector3d> colors(parts, Eigen::Vector3d(0.55, 0.55, 0.60));
  if (parts > 1) colors[1] = Eigen::Vector3d(0.85, 0.72, 0.62);
  return colors;
}

std::vector<std::uint8_t> default_attackable(int parts) {
  std::vector<std::uint8_t> flags(parts, 1);
  if (parts > 1) flags[1] = 0;
  return flags;
}

}  // namespace

BuiltProblem build_problem(const RunConfig& cfg) {
  cfg.validate();
  BuiltProblem built;
  EoptProblem& p = built.problem;

  p.body = load_body_shape(cfg.body_path);
  const int parts = p.body.part_count;

  GMMModel gmm;
  if (!cfg.gmm_model_path.empty()) {
    gmm = load_gmm(cfg.gmm_model_path);
  } else {
    const PoseDataset ds = load_pose_dataset(cfg.poses_path);
    Eigen::MatrixXd u_samples(ds.poses.size(), ds.theta_min.size());
    for (std::size_t i = 0; i < ds.poses.size(); ++i)
      u_samples.row(static_cast<Eigen::Index>(i)) =
          to_u(ds.poses[i], ds.theta_min, ds.theta_max).transpose();
    EmOptions opts;
    opts.max_iters = cfg.gmm_max_iters;
    gmm = fit_em(u_samples, cfg.gmm_components, ds.theta_min, ds.theta_max, cfg.seed, opts)
              .model;
  }
  if (gmm.dim() != 3 * p.body.joint_count())
    throw ConfigError("config: pose dimension does not match the body joint count");

  SamplerConfig sampler_cfg = cfg.sampler;
  sampler_cfg.part_count = parts;
  sampler_cfg.background_count = static_cast<int>(cfg.background_paths.size());
  p.sampler = std::make_shared<ScenarioSampler>(std::move(gmm), sampler_cfg, cfg.seed);

  const auto colors =
      cfg.part_colors.empty() ? default_part_colors(parts) : cfg.part_colors;
  const auto attackable =
      cfg.part_attackable.empty() ? default_attackable(parts) : cfg.part_attackable;
  p.base_stack = TextureStack::solid(parts, cfg.texture_size, colors, attackable);

  for (const auto& path : cfg.background_paths) p.backgrounds.push_back(read_ppm(path));

  p.generator = cfg.generator;
  for (const auto& spec : cfg.detectors) {
    p.detectors.push_back(make_detector(spec));
    p.detector_weights.push_back(spec.weight);
  }
  p.step = cfg.render_step;
  p.threads = resolve_threads(cfg.threads);

  const int dz = cfg.generator.latent_dim();
  built.latent_lower = Eigen::VectorXd::Constant(dz, cfg.latent_lower);
  built.latent_upper = Eigen::VectorXd::Constant(dz, cfg.latent_upper);

  p.validate();
  return built;
}

std::string log_line_to_json_text(const LogLine& line) {
  nlohmann::json j;
  j["phase"] = line.phase;
  j["iter"] = line.iter;
  j["loss"] = line.loss;
  j["best_loss"] = line.best_loss;
  j["wall_ms"] = line.wall_ms;
  return j.dump();
}

namespace {

AttackResult run_attack_impl(const RunConfig& cfg, BuiltProblem& built,
                             std::ostream* log_stream) {
  EoptProblem& problem = built.problem;
  const int n_batch = cfg.adam.batch;
  const bool analytic = problem.all_toy();
  const auto t0 = Clock::now();

  AttackResult result;
  auto emit = [&](LogLine line) {
    if (log_stream) *log_stream << log_line_to_json_text(line) << "\n";
    result.log.push_back(std::move(line));
  };

  // Scenario epochs: PSO evaluates the initial swarm on epoch 0 and iteration
  // t on epoch t; Adam iteration t continues on epoch T_pso + t. With
  // resampling disabled everything reuses the frozen epoch-0 batch.
  std::vector<SceneContext> frozen;
  if (!cfg.resample_each_epoch) frozen = problem.prepare_epoch(0, n_batch);

  std::vector<SceneContext> current;
  std::uint64_t current_epoch = ~0ull;
  auto batch_for_epoch = [&](std::uint64_t epoch) -> const std::vector<SceneContext>& {
    if (!cfg.resample_each_epoch) return frozen;
    if (epoch != current_epoch) {
      current = problem.prepare_epoch(epoch, n_batch);
      current_epoch = epoch;
    }
    return current;
  };

  std::vector<long> pso_wall;
  BatchObjective pso_objective = [&](const std::vector<Eigen::VectorXd>& zs,
                                     int iter) -> std::vector<double> {
    const auto& batch = batch_for_epoch(static_cast<std::uint64_t>(iter));
    std::vector<double> out(zs.size());
    for (std::size_t i = 0; i < zs.size(); ++i) out[i] = problem.batch_loss(batch, zs[i]);
    pso_wall.push_back(ms_since(t0));
    return out;
  };

  const PSOResult swarm =
      pso(pso_objective, built.latent_lower, built.latent_upper, cfg.pso, cfg.seed);
  for (std::size_t i = 0; i < swarm.history.size(); ++i) {
    emit({"pso", static_cast<int>(i + 1), swarm.history[i].iter_best,
          swarm.history[i].best_so_far,
          pso_wall.size() > i + 1 ? pso_wall[i + 1] : ms_since(t0)});
  }
  result.pso_best_loss = swarm.best_value;

  double best_so_far = swarm.best_value;
  std::vector<LogLine> adam_lines;
  GradObjective grad_objective = [&](const Eigen::VectorXd& z, int iter,
                                     Eigen::VectorXd& grad) -> double {
    const std::uint64_t epoch = static_cast<std::uint64_t>(cfg.pso.iterations + iter);
    const auto& batch = batch_for_epoch(epoch);
    double loss = 0;
    if (analytic) {
      loss = problem.batch_loss_grad(batch, z, grad);
    } else {
      // Forward differences over the frozen batch of this iteration; every
      // probe shares the batch so noise cancels out of the quotient.
      loss = problem.batch_loss(batch, z);
      grad.resize(z.size());
      for (Eigen::Index d = 0; d < z.size(); ++d) {
        Eigen::VectorXd zp = z;
        zp[d] += cfg.fd_step;
        grad[d] = (problem.batch_loss(batch, zp) - loss) / cfg.fd_step;
      }
    }
    best_so_far = std::min(best_so_far, loss);
    adam_lines.push_back({"adam", iter, loss, best_so_far, ms_since(t0)});
    return loss;
  };

  const AdamResult refined = adam(grad_objective, swarm.best, built.latent_lower,
                                  built.latent_upper, cfg.adam);
  for (auto& line : adam_lines) emit(std::move(line));

  result.z = refined.z;
  result.patch = generate_patch(problem.generator, refined.z);
  result.final_loss = refined.losses.empty() ? swarm.best_value : refined.losses.back();
  return result;
}

}  // namespace

AttackResult run_attack(const RunConfig& cfg, BuiltProblem& built,
                        std::ostream* log_stream) {
  try {
    return run_attack_impl(cfg, built, log_stream);
  } catch (const std::exception& e) {
    // Leave a structured trace of the aborting stage in the run log.
    if (log_stream) {
      nlohmann::json j;
      j["phase"] = "error";
      j["what"] = e.what();
      *log_stream << j.dump() << "\n" << std::flush;
    }
    throw;
  }
}

EvalOutput evaluate_patch(const RunConfig& cfg, const EoptProblem& problem,
                          const Image& patch, int frames, std::uint64_t epoch) {
  if (frames < 1) throw ConfigError("eval: need at least one frame");
  EvalOutput out;
  out.frames = frames;
  out.tau_iou = cfg.tau_iou;
  out.tau_conf = cfg.tau_conf;

  const auto batch = problem.prepare_epoch(epoch, frames);
  const TextureStack tiled = tile_patch(patch, problem.base_stack);
  std::vector<Image> images(batch.size());
  parallel_for(static_cast<std::int64_t>(batch.size()), problem.threads,
               [&](std::int64_t i) {
                 const TextureStack stack = assemble_scene_stack(batch[i], tiled);
                 images[i] = composite(batch[i].iuv, stack,
                                       problem.backgrounds[batch[i].background],
                                       batch[i].light);
               });

  const std::vector<double> taus{0.01, 0.1, 0.3, 0.5};
  for (std::size_t d = 0; d < problem.detectors.size(); ++d) {
    std::vector<FrameEval> evals(batch.size());
    if (const ToyDetector* toy = problem.detectors[d]->toy()) {
      parallel_for(static_cast<std::int64_t>(batch.size()), problem.threads,
                   [&](std::int64_t i) {
                     evals[i].dets = toy_forward(*toy, images[i]);
                     evals[i].gt = batch[i].gt;
                     evals[i].has_gt = batch[i].has_gt;
                   });
    } else {
      for (std::size_t i = 0; i < batch.size(); ++i) {
        evals[i].dets = problem.detectors[d]->detect(images[i]);
        evals[i].gt = batch[i].gt;
        evals[i].has_gt = batch[i].has_gt;
      }
    }
    DetectorEval de;
    de.taus = taus;
    for (double tau : taus) de.asr_at_tau.push_back(asr(evals, tau, cfg.tau_conf));
    de.map = map_metric(evals, cfg.tau_iou);
    out.detectors.push_back(std::move(de));
    if (d == 0) out.per_frame = std::move(evals);
  }
  return out;
}

std::string eval_to_json_text(const EvalOutput& out) {
  nlohmann::json j;
  j["frames"] = out.frames;
  j["tau_iou"] = out.tau_iou;
  j["tau_conf"] = out.tau_conf;
  nlohmann::json dets = nlohmann::json::array();
  for (const auto& d : out.detectors) {
    nlohmann::json asr_obj;
    for (std::size_t i = 0; i < d.taus.size(); ++i) {
      char key[16];
      std::snprintf(key, sizeof(key), "%.2f", d.taus[i]);
      asr_obj[key] = d.asr_at_tau[i];
    }
    dets.push_back({{"asr", asr_obj}, {"map", d.map}});
  }
  j["detectors"] = dets;
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : out.per_frame) {
    nlohmann::json fe;
    fe["gt"] = {f.gt.x1, f.gt.y1, f.gt.x2, f.gt.y2};
    fe["has_gt"] = f.has_gt;
    bool detected = false;
    for (const auto& det : f.dets)
      if (f.has_gt && det.label == "person" && det.conf > out.tau_conf &&
          iou(det.box, f.gt) > out.tau_iou)
        detected = true;
    fe["evaded"] = !detected;
    nlohmann::json ds = nlohmann::json::array();
    for (const auto& det : f.dets)
      ds.push_back({{"x1", det.box.x1},
                    {"y1", det.box.y1},
                    {"x2", det.box.x2},
                    {"y2", det.box.y2},
                    {"conf", det.conf},
                    {"label", det.label}});
    fe["detections"] = ds;
    frames.push_back(std::move(fe));
  }
  j["per_frame"] = frames;
  return j.dump();
}

}  // namespace uvtex
