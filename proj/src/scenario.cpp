#include "uvtex/scenario.hpp"

#include <cmath>

#include "uvtex/errors.hpp"
#include "uvtex/parallel.hpp"

namespace uvtex {

void SamplerConfig::validate() const {
  auto range_ok = [](const std::array<double, 2>& r) { return r[0] <= r[1]; };
  if (!range_ok(azimuth_deg) || !range_ok(elevation_deg) || !range_ok(distance) ||
      !range_ok(light_intensity))
    throw ConfigError("sampler: ranges must satisfy lo <= hi");
  if (azimuth_deg[0] < -180.0 || azimuth_deg[1] > 180.0)
    throw ConfigError("sampler: azimuth range must stay inside [-180, 180]");
  if (elevation_deg[0] < 0.0 || elevation_deg[1] > 30.0)
    throw ConfigError("sampler: elevation range must stay inside [0, 30]");
  if (!(distance[0] > 0)) throw ConfigError("sampler: distance must be > 0");
  if (image_width < 1 || image_height < 1) throw ConfigError("sampler: empty image");
  if (tps_grid < 2) throw ConfigError("sampler: tps grid must be >= 2");
  if (tps_max_disp < 0) throw ConfigError("sampler: tps displacement must be >= 0");
  if (tps_lambda < 0) throw ConfigError("sampler: tps lambda must be >= 0");
  if (background_count < 1) throw ConfigError("sampler: need at least one background");
  if (part_count < 1) throw ConfigError("sampler: part count must be >= 1");
  if (!(light_intensity[0] >= 0.5 && light_intensity[1] <= 1.5))
    throw ConfigError("sampler: light intensity range must stay inside [0.5, 1.5]");
}

ScenarioSampler::ScenarioSampler(GMMModel gmm, SamplerConfig cfg, std::uint64_t master_seed)
    : gmm_(std::move(gmm)), cfg_(cfg), seed_(master_seed) {
  gmm_.validate();
  cfg_.validate();
}

SceneSample ScenarioSampler::sample(std::uint64_t epoch, std::uint64_t index) const {
  // Fixed draw order; every field comes from the same keyed stream.
  Rng rng = Rng::keyed(seed_, epoch, index);
  SceneSample s;
  s.pose.theta = to_theta(sample_u(gmm_, rng), gmm_.theta_min, gmm_.theta_max);
  s.pose.theta_min = gmm_.theta_min;
  s.pose.theta_max = gmm_.theta_max;

  s.camera.azimuth_deg = rng.uniform(cfg_.azimuth_deg[0], cfg_.azimuth_deg[1]);
  s.camera.elevation_deg = rng.uniform(cfg_.elevation_deg[0], cfg_.elevation_deg[1]);
  s.camera.distance = rng.uniform(cfg_.distance[0], cfg_.distance[1]);
  s.camera.width = cfg_.image_width;
  s.camera.height = cfg_.image_height;
  s.camera.vfov_deg = cfg_.vfov_deg;

  s.light.intensity = rng.uniform(cfg_.light_intensity[0], cfg_.light_intensity[1]);
  const double lz = rng.uniform(-1.0, 1.0);
  const double lphi = rng.uniform(0.0, 2.0 * M_PI);
  const double lr = std::sqrt(std::max(0.0, 1.0 - lz * lz));
  s.light.direction = Vec3(lr * std::cos(lphi), lz, lr * std::sin(lphi)).normalized();

  s.background = rng.uniform_int(cfg_.background_count);

  const int g2 = cfg_.tps_grid * cfg_.tps_grid;
  s.tps_disp.resize(static_cast<Eigen::Index>(cfg_.part_count) * g2, 2);
  for (Eigen::Index i = 0; i < s.tps_disp.rows(); ++i) {
    s.tps_disp(i, 0) = rng.uniform(-cfg_.tps_max_disp, cfg_.tps_max_disp);
    s.tps_disp(i, 1) = rng.uniform(-cfg_.tps_max_disp, cfg_.tps_max_disp);
  }
  return s;
}

SceneContext prepare_scene(const BodyShape& body, const TextureStack& base_stack,
                           const SceneSample& sample, double step, double tps_lambda) {
  SceneContext ctx;
  const PosedBody posed = pose_body(body, sample.pose);
  const double used_step = step > 0 ? step : default_step(posed);
  // Rendering is already parallelized across scenarios by the callers.
  ctx.iuv = render_iuv(posed, sample.camera, used_step, 1);
  if (const auto box = mask_bbox(ctx.iuv, 0.5)) {
    ctx.gt = {(*box)[0], (*box)[1], (*box)[2], (*box)[3]};
    ctx.has_gt = true;
  }
  ctx.background = sample.background;
  ctx.light = sample.light;

  const int g = static_cast<int>(std::sqrt(static_cast<double>(
      sample.tps_disp.rows() / base_stack.part_count())));
  const Eigen::MatrixXd grid = tps_control_grid(g);
  ctx.warps.resize(base_stack.part_count());
  ctx.warped_base.resize(base_stack.part_count());
  for (int k = 0; k < base_stack.part_count(); ++k) {
    const Eigen::MatrixXd disp = sample.tps_disp.middleRows(
        static_cast<Eigen::Index>(k) * g * g, g * g);
    const TPSWarp warp = tps_fit(grid, grid + disp, tps_lambda);
    ctx.warps[k] = build_warp_grid(warp, base_stack.size);
    if (!base_stack.attackable[k])
      ctx.warped_base[k] = warp_apply(ctx.warps[k], base_stack.parts[k]);
  }
  return ctx;
}

TextureStack assemble_scene_stack(const SceneContext& ctx, const TextureStack& tiled) {
  TextureStack out;
  out.size = tiled.size;
  out.attackable = tiled.attackable;
  out.parts.resize(tiled.parts.size());
  for (std::size_t k = 0; k < tiled.parts.size(); ++k)
    out.parts[k] = tiled.attackable[k] ? warp_apply(ctx.warps[k], tiled.parts[k])
                                       : ctx.warped_base[k];
  return out;
}

void EoptProblem::validate() const {
  body.validate();
  base_stack.validate();
  if (backgrounds.empty()) throw ConfigError("eopt: need at least one background");
  for (const auto& bg : backgrounds)
    if (bg.width != sampler->config().image_width ||
        bg.height != sampler->config().image_height)
      throw ConfigError("eopt: background dimensions must match the image size");
  if (detectors.empty()) throw ConfigError("eopt: need at least one detector");
  if (detector_weights.size() != detectors.size())
    throw ConfigError("eopt: detector weights must match detector count");
  if (sampler->config().part_count != base_stack.part_count())
    throw ConfigError("eopt: sampler part count must match the texture stack");
}

bool EoptProblem::all_toy() const {
  for (const auto& d : detectors)
    if (d->toy() == nullptr) return false;
  return true;
}

std::vector<SceneContext> EoptProblem::prepare_epoch(std::uint64_t epoch, int n_batch) const {
  if (n_batch < 1) throw ConfigError("eopt: batch size must be >= 1");
  std::vector<SceneContext> batch(n_batch);
  parallel_for(n_batch, threads, [&](std::int64_t i) {
    const SceneSample s = sampler->sample(epoch, static_cast<std::uint64_t>(i));
    batch[i] = prepare_scene(body, base_stack, s, step, sampler->config().tps_lambda);
  });
  return batch;
}

Image EoptProblem::render(const SceneContext& ctx, const Image& patch) const {
  const TextureStack tiled = tile_patch(patch, base_stack);
  const TextureStack stack = assemble_scene_stack(ctx, tiled);
  return composite(ctx.iuv, stack, backgrounds[ctx.background], ctx.light);
}

namespace {

double frame_loss(const std::vector<Detection>& dets, const SceneContext& ctx,
                  const std::string& label) {
  // A frame with no visible body has nothing to suppress.
  if (!ctx.has_gt) return 0.0;
  return detection_loss(dets, ctx.gt, label);
}

}  // namespace

double EoptProblem::batch_loss(const std::vector<SceneContext>& batch,
                               const Eigen::VectorXd& z) const {
  const Image patch = generate_patch(generator, z);
  const TextureStack tiled = tile_patch(patch, base_stack);
  const std::size_t n = batch.size();

  std::vector<Image> images(n);
  parallel_for(static_cast<std::int64_t>(n), threads, [&](std::int64_t i) {
    const TextureStack stack = assemble_scene_stack(batch[i], tiled);
    images[i] = composite(batch[i].iuv, stack, backgrounds[batch[i].background],
                          batch[i].light);
  });

  std::vector<double> per_detector(detectors.size(), 0.0);
  for (std::size_t d = 0; d < detectors.size(); ++d) {
    std::vector<double> losses(n, 0.0);
    if (const ToyDetector* toy = detectors[d]->toy()) {
      parallel_for(static_cast<std::int64_t>(n), threads, [&](std::int64_t i) {
        losses[i] = frame_loss(toy_forward(*toy, images[i]), batch[i], target_label);
      });
    } else {
      // Wire clients hold one connection; requests stay serialized per client.
      for (std::size_t i = 0; i < n; ++i) {
        try {
          losses[i] = frame_loss(detectors[d]->detect(images[i]), batch[i], target_label);
        } catch (const ProtocolError& e) {
          throw ProtocolError("detector " + std::to_string(d) + ", scenario " +
                              std::to_string(i) + ": " + e.what());
        }
      }
    }
    double sum = 0;
    for (double l : losses) sum += l;
    per_detector[d] = sum / static_cast<double>(n);
  }
  return ensemble_loss(per_detector, detector_weights);
}

double EoptProblem::batch_loss_grad(const std::vector<SceneContext>& batch,
                                    const Eigen::VectorXd& z, Eigen::VectorXd& grad) const {
  if (!all_toy())
    throw ConfigError("eopt: analytic gradients need built-in detectors only");
  const Image patch = generate_patch(generator, z);
  const TextureStack tiled = tile_patch(patch, base_stack);
  const std::size_t n = batch.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  double weight_sum = 0;
  for (double w : detector_weights) weight_sum += w;
  if (weight_sum <= 0) throw ConfigError("eopt: detector weights sum to zero");

  std::vector<double> scene_loss(n, 0.0);
  std::vector<Image> scene_d_patch(n);
  parallel_for(static_cast<std::int64_t>(n), threads, [&](std::int64_t i) {
    const SceneContext& ctx = batch[i];
    const TextureStack stack = assemble_scene_stack(ctx, tiled);
    const Image image = composite(ctx.iuv, stack, backgrounds[ctx.background], ctx.light);

    Image d_image(image.width, image.height);
    double weighted = 0;
    bool any_grad = false;
    for (std::size_t d = 0; d < detectors.size(); ++d) {
      const ToyDetector* toy = detectors[d]->toy();
      const auto dets = toy_forward(*toy, image);
      const double w = detector_weights[d] / weight_sum;
      if (!ctx.has_gt) continue;
      const int pick = detection_loss_pick(dets, ctx.gt, target_label);
      if (pick < 0) continue;
      weighted += w * dets[pick].conf;
      std::vector<double> d_conf(dets.size(), 0.0);
      d_conf[static_cast<std::size_t>(pick)] = w;
      const Image g = toy_backward(*toy, image, d_conf);
      for (std::size_t p = 0; p < g.data.size(); ++p) d_image.data[p] += g.data[p];
      any_grad = true;
    }
    scene_loss[i] = weighted;
    if (!any_grad) return;

    // Pull the image gradient back through composite -> warp -> tile.
    TextureStack d_stack;
    composite_backward(ctx.iuv, stack, backgrounds[ctx.background], ctx.light, d_image,
                       d_stack);
    TextureStack d_tiled;
    d_tiled.size = tiled.size;
    d_tiled.attackable = tiled.attackable;
    d_tiled.parts.assign(tiled.parts.size(), Image());
    for (std::size_t k = 0; k < tiled.parts.size(); ++k) {
      if (!tiled.attackable[k]) {
        d_tiled.parts[k] = Image(tiled.size, tiled.size);
        continue;
      }
      warp_backward(ctx.warps[k], d_stack.parts[k], d_tiled.parts[k]);
    }
    Image d_patch(patch.width, patch.height);
    tile_patch_backward(d_tiled, base_stack, patch.width, d_patch);
    scene_d_patch[i] = std::move(d_patch);
  });

  double loss = 0;
  Image d_patch_total(patch.width, patch.height);
  for (std::size_t i = 0; i < n; ++i) {
    loss += scene_loss[i];
    if (scene_d_patch[i].data.empty()) continue;
    for (std::size_t p = 0; p < d_patch_total.data.size(); ++p)
      d_patch_total.data[p] += inv_n * scene_d_patch[i].data[p];
  }
  loss *= inv_n;
  grad = generate_patch_backward(generator, z, d_patch_total);
  return loss;
}

double EoptProblem::eopt_loss(const Eigen::VectorXd& z, int n_batch,
                              std::uint64_t epoch) const {
  return batch_loss(prepare_epoch(epoch, n_batch), z);
}

}  // namespace uvtex
