#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "uvtex/attack.hpp"
#include "uvtex/config.hpp"
#include "uvtex/errors.hpp"
#include "uvtex/gmm.hpp"
#include "uvtex/metrics.hpp"
#include "uvtex/parallel.hpp"
#include "uvtex/protocol.hpp"

namespace fs = std::filesystem;
using namespace uvtex;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::int64_t seed = -1;
  int threads = -1;
  std::string out_dir;
};

RunConfig resolved_config(const GlobalOpts& g) {
  if (g.config_path.empty()) throw ConfigError("--config is required for this subcommand");
  RunConfig cfg = load_run_config(g.config_path);
  if (g.seed >= 0) cfg.seed = static_cast<std::uint64_t>(g.seed);
  if (g.threads >= 0) cfg.threads = g.threads;
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  return cfg;
}

Eigen::MatrixXd dataset_to_u(const PoseDataset& ds) {
  Eigen::MatrixXd u(ds.poses.size(), ds.theta_min.size());
  for (std::size_t i = 0; i < ds.poses.size(); ++i)
    u.row(static_cast<Eigen::Index>(i)) =
        to_u(ds.poses[i], ds.theta_min, ds.theta_max).transpose();
  return u;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

int run(int argc, char** argv) {
  CLI::App app{"Adversarial texture attack pipeline over an articulated capsule body"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "Run configuration (JSON)");
  app.add_option("--seed", g.seed, "Master seed override");
  app.add_option("--threads", g.threads, "Worker thread count (0 = auto)");
  app.add_option("--out", g.out_dir, "Output directory override");

  // fit-gmm
  auto* fit = app.add_subcommand("fit-gmm", "Fit the bounded pose mixture from pose files");
  std::vector<std::string> fit_poses;
  std::string fit_model;
  int fit_components = -1;
  fit->add_option("--poses", fit_poses,
                  "Pose dataset (JSON); repeat to concatenate several sources");
  fit->add_option("--model", fit_model, "Output model path")->required();
  fit->add_option("--components", fit_components, "Component count override");

  // sample-poses
  auto* sp = app.add_subcommand("sample-poses", "Draw poses from a fitted mixture");
  std::string sp_model, sp_out;
  int sp_count = 100;
  sp->add_option("--model", sp_model, "GMM model path")->required();
  sp->add_option("--count", sp_count, "Number of poses");
  sp->add_option("--out-poses", sp_out, "Output pose dataset path")->required();

  // render
  auto* rd = app.add_subcommand("render", "Render one scenario to a PPM image");
  std::string rd_poses, rd_patch, rd_background, rd_out = "render.ppm";
  int rd_pose_index = 0;
  double rd_az = 0, rd_el = 10, rd_dist = -1, rd_light = 1.0;
  rd->add_option("--poses", rd_poses, "Pose dataset; omit for the rest pose");
  rd->add_option("--pose-index", rd_pose_index, "Pose row to render");
  rd->add_option("--azimuth", rd_az, "Camera azimuth (deg)");
  rd->add_option("--elevation", rd_el, "Camera elevation (deg)");
  rd->add_option("--distance", rd_dist, "Camera distance (body units)");
  rd->add_option("--light-intensity", rd_light, "Light intensity scale");
  rd->add_option("--patch", rd_patch, "Patch PPM tiled onto attackable parts");
  rd->add_option("--background", rd_background, "Background PPM");
  rd->add_option("--out-image", rd_out, "Output PPM path");

  // attack
  auto* atk = app.add_subcommand("attack", "Optimize a patch latent with PSO then Adam");

  // eval
  auto* ev = app.add_subcommand("eval", "Score a patch over held-out scenarios");
  std::string ev_patch, ev_out;
  int ev_frames = -1;
  ev->add_option("--patch", ev_patch, "Patch PPM")->required();
  ev->add_option("--frames", ev_frames, "Scenario count override");
  ev->add_option("--out-eval", ev_out, "Output JSON path (default <out>/eval.json)");

  // stub-detector
  auto* stub = app.add_subcommand("stub-detector", "Reference wire-protocol detector stub");
  int stub_port = 0;
  StubConfig stub_cfg;
  stub->add_option("--listen", stub_port, "Serve one TCP client on this port (default stdio)");
  stub->add_option("--conf", stub_cfg.conf, "Constant confidence");
  stub->add_option("--box-scale", stub_cfg.box_scale, "Centered box side fraction");
  stub->add_option("--label", stub_cfg.label, "Detection label");

  CLI11_PARSE(app, argc, argv);

  if (fit->parsed()) {
    const RunConfig cfg = resolved_config(g);
    if (fit_poses.empty()) fit_poses.push_back(cfg.poses_path);
    // Several sources (say an annotated corpus plus estimated poses) are
    // merged by plain concatenation; their bounds headers must agree.
    PoseDataset ds = load_pose_dataset(fit_poses[0]);
    auto same = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
      return a.size() == b.size() && (a.array() == b.array()).all();
    };
    for (std::size_t i = 1; i < fit_poses.size(); ++i) {
      const PoseDataset extra = load_pose_dataset(fit_poses[i]);
      if (!same(extra.theta_min, ds.theta_min) || !same(extra.theta_max, ds.theta_max))
        throw ConfigError("fit-gmm: pose files carry different bounds headers");
      ds.poses.insert(ds.poses.end(), extra.poses.begin(), extra.poses.end());
    }
    EmOptions opts;
    opts.max_iters = cfg.gmm_max_iters;
    const int k = fit_components > 0 ? fit_components : cfg.gmm_components;
    const EmResult res = fit_em(dataset_to_u(ds), k, ds.theta_min, ds.theta_max, cfg.seed, opts);
    save_gmm(res.model, fit_model);
    std::cout << "fit-gmm: " << ds.poses.size() << " poses, " << res.iterations
              << " EM iterations, log-likelihood " << res.log_likelihood.back()
              << ", model written to " << fit_model << "\n";
    return 0;
  }

  if (sp->parsed()) {
    const RunConfig cfg = resolved_config(g);
    const GMMModel gmm = load_gmm(sp_model);
    Rng rng = Rng::keyed(cfg.seed, 0x706f7365, 0);
    const auto poses = sample_poses(gmm, rng, sp_count);
    PoseDataset ds;
    ds.theta_min = gmm.theta_min;
    ds.theta_max = gmm.theta_max;
    for (const auto& p : poses) ds.poses.push_back(p.theta);
    save_pose_dataset(ds, sp_out);
    std::cout << "sample-poses: wrote " << sp_count << " poses to " << sp_out << "\n";
    return 0;
  }

  if (rd->parsed()) {
    const RunConfig cfg = resolved_config(g);
    const BodyShape body = load_body_shape(cfg.body_path);
    PoseParams pose = PoseParams::rest(body.joint_count());
    if (!rd_poses.empty()) {
      const PoseDataset ds = load_pose_dataset(rd_poses);
      if (rd_pose_index < 0 || rd_pose_index >= static_cast<int>(ds.poses.size()))
        throw ConfigError("render: pose index out of range");
      pose.theta = ds.poses[rd_pose_index];
      pose.theta_min = ds.theta_min;
      pose.theta_max = ds.theta_max;
    }
    const PosedBody posed = pose_body(body, pose);
    CameraParams cam;
    cam.azimuth_deg = rd_az;
    cam.elevation_deg = rd_el;
    cam.distance = rd_dist > 0 ? rd_dist
                               : 0.5 * (cfg.sampler.distance[0] + cfg.sampler.distance[1]);
    cam.width = cfg.sampler.image_width;
    cam.height = cfg.sampler.image_height;
    cam.vfov_deg = cfg.sampler.vfov_deg;
    const double step = cfg.render_step > 0 ? cfg.render_step : default_step(posed);
    const IUVMap iuv = render_iuv(posed, cam, step, resolve_threads(cfg.threads));

    const int parts = body.part_count;
    std::vector<Eigen::Vector3d> colors = cfg.part_colors;
    std::vector<std::uint8_t> attackable = cfg.part_attackable;
    if (colors.empty()) {
      colors.assign(parts, Eigen::Vector3d(0.55, 0.55, 0.60));
      if (parts > 1) colors[1] = Eigen::Vector3d(0.85, 0.72, 0.62);
    }
    if (attackable.empty()) {
      attackable.assign(parts, 1);
      if (parts > 1) attackable[1] = 0;
    }
    TextureStack stack = TextureStack::solid(parts, cfg.texture_size, colors, attackable);
    if (!rd_patch.empty()) stack = tile_patch(read_ppm(rd_patch), stack);
    Image background(cam.width, cam.height, 0.0);
    if (!rd_background.empty()) background = read_ppm(rd_background);
    LightParams light;
    light.intensity = rd_light;
    light.validate();
    write_ppm(composite(iuv, stack, background, light), rd_out);
    std::cout << "render: wrote " << rd_out << "\n";
    return 0;
  }

  if (atk->parsed()) {
    const RunConfig cfg = resolved_config(g);
    fs::create_directories(cfg.out_dir);
    BuiltProblem built = build_problem(cfg);
    std::ofstream log(fs::path(cfg.out_dir) / "runlog.jsonl");
    const AttackResult result = run_attack(cfg, built, &log);
    write_ppm(result.patch, (fs::path(cfg.out_dir) / "patch.ppm").string());
    nlohmann::json latent;
    latent["z"] = std::vector<double>(result.z.data(), result.z.data() + result.z.size());
    latent["bounds"] = {cfg.latent_lower, cfg.latent_upper};
    latent["generator"] = {{"kind", to_string(cfg.generator.kind)},
                           {"patch_size", cfg.generator.patch_size},
                           {"coeffs", cfg.generator.coeffs},
                           {"scale", cfg.generator.scale}};
    write_text((fs::path(cfg.out_dir) / "latent.json").string(), latent.dump(2) + "\n");
    write_text((fs::path(cfg.out_dir) / "config.json").string(),
               run_config_to_json_text(cfg) + "\n");
    std::cout << "attack: PSO best " << result.pso_best_loss << ", final loss "
              << result.final_loss << ", artifacts in " << cfg.out_dir << "\n";
    return 0;
  }

  if (ev->parsed()) {
    const RunConfig cfg = resolved_config(g);
    fs::create_directories(cfg.out_dir);
    BuiltProblem built = build_problem(cfg);
    const Image patch = read_ppm(ev_patch);
    const int frames = ev_frames > 0 ? ev_frames : cfg.eval_frames;
    const EvalOutput out = evaluate_patch(cfg, built.problem, patch, frames);
    const std::string path =
        ev_out.empty() ? (fs::path(cfg.out_dir) / "eval.json").string() : ev_out;
    write_text(path, eval_to_json_text(out) + "\n");
    std::cout << "eval: " << frames << " frames";
    for (std::size_t i = 0; i < out.detectors[0].taus.size(); ++i)
      std::cout << "  asr@" << out.detectors[0].taus[i] << "="
                << out.detectors[0].asr_at_tau[i];
    std::cout << "  map=" << out.detectors[0].map << "  -> " << path << "\n";
    return 0;
  }

  if (stub->parsed()) {
    if (stub_port > 0)
      run_stub_tcp(stub_port, stub_cfg);
    else
      run_stub_server(std::cin, std::cout, stub_cfg);
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
