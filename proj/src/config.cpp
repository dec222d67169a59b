#include "uvtex/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "uvtex/errors.hpp"

namespace uvtex {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void read_range(const json& j, const char* key, std::array<double, 2>& out) {
  if (!j.contains(key)) return;
  const auto& r = j.at(key);
  if (!r.is_array() || r.size() != 2)
    throw ConfigError(std::string("config: ") + key + " must be [lo, hi]");
  out[0] = r[0].get<double>();
  out[1] = r[1].get<double>();
}

std::string resolve_path(const std::string& path, const std::string& base_dir) {
  if (path.empty() || base_dir.empty()) return path;
  const fs::path p(path);
  return p.is_absolute() ? path : (fs::path(base_dir) / p).string();
}

void require_exists(const std::string& path, const char* what) {
  if (!fs::exists(path))
    throw ConfigError(std::string("config: ") + what + " path does not exist: " + path);
}

}  // namespace

void RunConfig::validate() const {
  if (body_path.empty()) throw ConfigError("config: paths.body is required");
  if (poses_path.empty() && gmm_model_path.empty())
    throw ConfigError("config: one of paths.poses or paths.gmm is required");
  if (background_paths.empty())
    throw ConfigError("config: paths.backgrounds must list at least one image");
  if (!(tau_iou > 0 && tau_iou <= 1) || !(tau_conf > 0 && tau_conf <= 1))
    throw ConfigError("config: thresholds must lie in (0, 1]");
  if (!(latent_lower < latent_upper)) throw ConfigError("config: bad latent bounds");
  if (texture_size < 2) throw ConfigError("config: texture size must be >= 2");
  if (eval_frames < 1) throw ConfigError("config: eval.frames must be >= 1");
  if (detectors.empty()) throw ConfigError("config: at least one detector is required");
  if (gmm_components < 1) throw ConfigError("config: gmm.components must be >= 1");
  generator.validate();
}

RunConfig run_config_from_json_text(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig cfg;
  try {
    cfg.seed = j.value("seed", cfg.seed);
    cfg.threads = j.value("threads", cfg.threads);

    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      cfg.body_path = resolve_path(p.value("body", ""), base_dir);
      cfg.poses_path = resolve_path(p.value("poses", ""), base_dir);
      cfg.gmm_model_path = resolve_path(p.value("gmm", ""), base_dir);
      cfg.out_dir = resolve_path(p.value("out", cfg.out_dir), base_dir);
      if (p.contains("backgrounds"))
        for (const auto& b : p.at("backgrounds"))
          cfg.background_paths.push_back(resolve_path(b.get<std::string>(), base_dir));
    }

    if (j.contains("image")) {
      const auto& im = j.at("image");
      cfg.sampler.image_width = im.value("width", cfg.sampler.image_width);
      cfg.sampler.image_height = im.value("height", cfg.sampler.image_height);
      cfg.sampler.vfov_deg = im.value("vfov_deg", cfg.sampler.vfov_deg);
    }
    if (j.contains("camera")) {
      const auto& c = j.at("camera");
      read_range(c, "azimuth_deg", cfg.sampler.azimuth_deg);
      read_range(c, "elevation_deg", cfg.sampler.elevation_deg);
      read_range(c, "distance", cfg.sampler.distance);
    }
    if (j.contains("light"))
      read_range(j.at("light"), "intensity", cfg.sampler.light_intensity);
    if (j.contains("render")) cfg.render_step = j.at("render").value("step", 0.0);
    if (j.contains("tps")) {
      const auto& t = j.at("tps");
      cfg.sampler.tps_grid = t.value("grid", cfg.sampler.tps_grid);
      cfg.sampler.tps_max_disp = t.value("max_displacement", cfg.sampler.tps_max_disp);
      cfg.sampler.tps_lambda = t.value("lambda", cfg.sampler.tps_lambda);
    }

    if (j.contains("texture")) {
      const auto& t = j.at("texture");
      cfg.texture_size = t.value("size", cfg.texture_size);
      if (t.contains("colors"))
        for (const auto& c : t.at("colors"))
          cfg.part_colors.emplace_back(c[0].get<double>(), c[1].get<double>(),
                                       c[2].get<double>());
      if (t.contains("attackable"))
        for (const auto& a : t.at("attackable"))
          cfg.part_attackable.push_back(a.get<bool>() ? 1 : 0);
    }

    if (j.contains("generator")) {
      const auto& g = j.at("generator");
      cfg.generator.kind = generator_kind_from_string(g.value("kind", "smooth-basis"));
      cfg.generator.patch_size = g.value("patch_size", cfg.generator.patch_size);
      cfg.generator.coeffs = g.value("coeffs", cfg.generator.coeffs);
      cfg.generator.scale = g.value("scale", cfg.generator.scale);
    }
    if (j.contains("latent")) {
      cfg.latent_lower = j.at("latent").value("lower", cfg.latent_lower);
      cfg.latent_upper = j.at("latent").value("upper", cfg.latent_upper);
    }
    if (j.contains("gmm")) {
      cfg.gmm_components = j.at("gmm").value("components", cfg.gmm_components);
      cfg.gmm_max_iters = j.at("gmm").value("max_iters", cfg.gmm_max_iters);
    }
    if (j.contains("pso")) {
      const auto& p = j.at("pso");
      cfg.pso.particles = p.value("particles", cfg.pso.particles);
      cfg.pso.iterations = p.value("iterations", cfg.pso.iterations);
      cfg.pso.inertia = p.value("inertia", cfg.pso.inertia);
      cfg.pso.cognitive = p.value("cognitive", cfg.pso.cognitive);
      cfg.pso.social = p.value("social", cfg.pso.social);
      cfg.pso.velocity_clamp = p.value("velocity_clamp", cfg.pso.velocity_clamp);
    }
    if (j.contains("adam")) {
      const auto& a = j.at("adam");
      cfg.adam.lr = a.value("lr", cfg.adam.lr);
      cfg.adam.beta1 = a.value("beta1", cfg.adam.beta1);
      cfg.adam.beta2 = a.value("beta2", cfg.adam.beta2);
      cfg.adam.eps = a.value("eps", cfg.adam.eps);
      cfg.adam.iterations = a.value("iterations", cfg.adam.iterations);
      cfg.adam.batch = a.value("batch", cfg.adam.batch);
    }
    if (j.contains("attack")) {
      cfg.resample_each_epoch =
          j.at("attack").value("resample_each_epoch", cfg.resample_each_epoch);
      cfg.fd_step = j.at("attack").value("fd_step", cfg.fd_step);
    }

    if (j.contains("detectors")) {
      for (const auto& d : j.at("detectors")) {
        DetectorSpec spec;
        const std::string type = d.value("type", "toy");
        if (type == "toy") {
          spec.type = DetectorSpec::Type::Toy;
          spec.window = d.value("window", spec.window);
          spec.stride = d.value("stride", spec.stride);
          spec.weight_value = d.value("weight_value", spec.weight_value);
          spec.bias = d.value("bias", spec.bias);
        } else if (type == "subprocess") {
          spec.type = DetectorSpec::Type::Subprocess;
          for (const auto& c : d.at("command")) spec.command.push_back(c.get<std::string>());
        } else if (type == "tcp") {
          spec.type = DetectorSpec::Type::Tcp;
          spec.host = d.value("host", spec.host);
          spec.port = d.at("port").get<int>();
        } else {
          throw ConfigError("config: unknown detector type '" + type + "'");
        }
        spec.timeout_ms = d.value("timeout_ms", spec.timeout_ms);
        spec.weight = d.value("weight", spec.weight);
        cfg.detectors.push_back(std::move(spec));
      }
    }
    if (cfg.detectors.empty()) cfg.detectors.push_back(DetectorSpec{});

    if (j.contains("thresholds")) {
      cfg.tau_iou = j.at("thresholds").value("iou", cfg.tau_iou);
      cfg.tau_conf = j.at("thresholds").value("conf", cfg.tau_conf);
    }
    if (j.contains("eval")) cfg.eval_frames = j.at("eval").value("frames", cfg.eval_frames);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: missing or mistyped field: ") + e.what());
  }

  cfg.validate();
  require_exists(cfg.body_path, "body");
  if (!cfg.poses_path.empty()) require_exists(cfg.poses_path, "poses");
  if (!cfg.gmm_model_path.empty()) require_exists(cfg.gmm_model_path, "gmm");
  for (const auto& b : cfg.background_paths) require_exists(b, "background");
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return run_config_from_json_text(buf.str(), fs::path(path).parent_path().string());
}

std::string run_config_to_json_text(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["paths"] = {{"body", cfg.body_path},
                {"poses", cfg.poses_path},
                {"gmm", cfg.gmm_model_path},
                {"backgrounds", cfg.background_paths},
                {"out", cfg.out_dir}};
  j["image"] = {{"width", cfg.sampler.image_width},
                {"height", cfg.sampler.image_height},
                {"vfov_deg", cfg.sampler.vfov_deg}};
  j["camera"] = {{"azimuth_deg", cfg.sampler.azimuth_deg},
                 {"elevation_deg", cfg.sampler.elevation_deg},
                 {"distance", cfg.sampler.distance}};
  j["light"] = {{"intensity", cfg.sampler.light_intensity}};
  j["render"] = {{"step", cfg.render_step}};
  j["tps"] = {{"grid", cfg.sampler.tps_grid},
              {"max_displacement", cfg.sampler.tps_max_disp},
              {"lambda", cfg.sampler.tps_lambda}};
  json colors = json::array();
  for (const auto& c : cfg.part_colors) colors.push_back({c[0], c[1], c[2]});
  json attackable = json::array();
  for (auto a : cfg.part_attackable) attackable.push_back(a != 0);
  j["texture"] = {{"size", cfg.texture_size}, {"colors", colors}, {"attackable", attackable}};
  j["generator"] = {{"kind", to_string(cfg.generator.kind)},
                    {"patch_size", cfg.generator.patch_size},
                    {"coeffs", cfg.generator.coeffs},
                    {"scale", cfg.generator.scale}};
  j["latent"] = {{"lower", cfg.latent_lower}, {"upper", cfg.latent_upper}};
  j["gmm"] = {{"components", cfg.gmm_components}, {"max_iters", cfg.gmm_max_iters}};
  j["pso"] = {{"particles", cfg.pso.particles},     {"iterations", cfg.pso.iterations},
              {"inertia", cfg.pso.inertia},         {"cognitive", cfg.pso.cognitive},
              {"social", cfg.pso.social},           {"velocity_clamp", cfg.pso.velocity_clamp}};
  j["adam"] = {{"lr", cfg.adam.lr},       {"beta1", cfg.adam.beta1},
               {"beta2", cfg.adam.beta2}, {"eps", cfg.adam.eps},
               {"iterations", cfg.adam.iterations}, {"batch", cfg.adam.batch}};
  j["attack"] = {{"resample_each_epoch", cfg.resample_each_epoch}, {"fd_step", cfg.fd_step}};
  json dets = json::array();
  for (const auto& d : cfg.detectors) {
    json e;
    switch (d.type) {
      case DetectorSpec::Type::Toy:
        e = {{"type", "toy"},
             {"window", d.window},
             {"stride", d.stride},
             {"weight_value", d.weight_value},
             {"bias", d.bias}};
        break;
      case DetectorSpec::Type::Subprocess:
        e = {{"type", "subprocess"}, {"command", d.command}};
        break;
      case DetectorSpec::Type::Tcp:
        e = {{"type", "tcp"}, {"host", d.host}, {"port", d.port}};
        break;
    }
    e["timeout_ms"] = d.timeout_ms;
    e["weight"] = d.weight;
    dets.push_back(std::move(e));
  }
  j["detectors"] = dets;
  j["thresholds"] = {{"iou", cfg.tau_iou}, {"conf", cfg.tau_conf}};
  j["eval"] = {{"frames", cfg.eval_frames}};
  return j.dump(2);
}

}  // namespace uvtex
