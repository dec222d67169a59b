#include "uvtex/body.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "uvtex/errors.hpp"
#include "uvtex/parallel.hpp"

namespace uvtex {

namespace {

Mat3 rodrigues(const Eigen::Vector3d& aa) {
  const double angle = aa.norm();
  if (angle < 1e-12) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, aa / angle).toRotationMatrix();
}

// Stable perpendicular frame for a unit axis.
void axis_frame(const Vec3& axis, Vec3& e1, Vec3& e2) {
  const Vec3 ref = std::abs(axis.y()) > 0.99 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
  e1 = ref.cross(axis).normalized();
  e2 = axis.cross(e1);
}

Vec3 parse_vec3(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 3)
    throw ConfigError(std::string("body shape: ") + what + " must be a 3-array");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

void BodyShape::validate() const {
  if (joints.empty()) throw ConfigError("body shape: no joints");
  if (capsules.empty()) throw ConfigError("body shape: no capsules");
  if (part_count < 1) throw ConfigError("body shape: part count must be >= 1");
  for (int j = 0; j < joint_count(); ++j) {
    const int parent = joints[j].parent;
    if (j == 0 && parent != -1) throw ConfigError("body shape: joint 0 must be the root");
    if (j > 0 && (parent < 0 || parent >= j))
      throw ConfigError("body shape: joint parents must form a rooted tree (parent < child)");
  }
  std::vector<bool> seen(part_count, false);
  for (const auto& c : capsules) {
    if (c.joint < 0 || c.joint >= joint_count())
      throw ConfigError("body shape: capsule joint index out of range");
    if (c.part < 0 || c.part >= part_count)
      throw ConfigError("body shape: capsule part id out of range");
    if (!(c.radius > 0) || !(c.length > 0) || !(c.density > 0))
      throw ConfigError("body shape: radius, length, and density must be > 0");
    if (c.rest_dir.norm() < 1e-9)
      throw ConfigError("body shape: capsule rest direction must be nonzero");
    seen[c.part] = true;
  }
  for (int k = 0; k < part_count; ++k)
    if (!seen[k])
      throw ConfigError("body shape: part id " + std::to_string(k) + " has no capsule");
}

BodyShape body_shape_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("body shape: invalid JSON: ") + e.what());
  }
  BodyShape shape;
  try {
    shape.part_count = j.at("parts").get<int>();
    for (const auto& joint : j.at("joints")) {
      JointDef def;
      def.parent = joint.at("parent").get<int>();
      def.offset = parse_vec3(joint.at("offset"), "joint offset");
      shape.joints.push_back(def);
    }
    for (const auto& cap : j.at("capsules")) {
      CapsuleDef def;
      def.joint = cap.at("joint").get<int>();
      def.rest_dir = parse_vec3(cap.at("dir"), "capsule dir");
      def.radius = cap.at("radius").get<double>();
      def.length = cap.at("length").get<double>();
      def.part = cap.at("part").get<int>();
      def.density = cap.at("density").get<double>();
      shape.capsules.push_back(def);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("body shape: missing or mistyped field: ") + e.what());
  }
  shape.validate();
  return shape;
}

BodyShape load_body_shape(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("body shape: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return body_shape_from_json_text(buf.str());
}

void PoseParams::validate() const {
  const auto n = theta.size();
  if (theta_min.size() != n || theta_max.size() != n)
    throw ConfigError("pose: bounds dimension mismatch");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(theta_min[i] < theta_max[i]))
      throw ConfigError("pose: theta_min must be < theta_max elementwise");
    if (!(theta[i] > theta_min[i] && theta[i] < theta_max[i]))
      throw ConfigError("pose: theta must lie strictly inside its bounds");
  }
}

PoseParams PoseParams::rest(int joint_count, double limit, double root_limit) {
  PoseParams p;
  const int n = 3 * joint_count;
  p.theta = Eigen::VectorXd::Zero(n);
  p.theta_min = Eigen::VectorXd::Constant(n, -limit);
  p.theta_max = Eigen::VectorXd::Constant(n, limit);
  for (int i = 0; i < std::min(3, n); ++i) {
    p.theta_min[i] = -root_limit;
    p.theta_max[i] = root_limit;
  }
  return p;
}

void LightParams::validate() const {
  if (std::abs(direction.norm() - 1.0) > 1e-6)
    throw ConfigError("light: direction must be a unit vector");
  if (!(intensity >= 0.5 && intensity <= 1.5))
    throw ConfigError("light: intensity must lie in [0.5, 1.5]");
}

PosedBody pose_body(const BodyShape& shape, const PoseParams& pose) {
  shape.validate();
  const int joints = shape.joint_count();
  if (pose.theta.size() != 3 * joints)
    throw ConfigError("pose_body: theta length does not match joint count");

  std::vector<Mat3> rot(joints);
  std::vector<Vec3> pos(joints);
  for (int j = 0; j < joints; ++j) {
    const Mat3 local = rodrigues(pose.theta.segment<3>(3 * j));
    if (shape.joints[j].parent < 0) {
      rot[j] = local;
      pos[j] = shape.joints[j].offset;
    } else {
      const int p = shape.joints[j].parent;
      rot[j] = rot[p] * local;
      pos[j] = pos[p] + rot[p] * shape.joints[j].offset;
    }
  }

  PosedBody out;
  out.part_count = shape.part_count;
  out.capsules.reserve(shape.capsules.size());
  for (const auto& def : shape.capsules) {
    PosedCapsule cap;
    const Vec3 dir_local = def.rest_dir.normalized();
    cap.axis = rot[def.joint] * dir_local;
    cap.a = pos[def.joint];
    cap.b = cap.a + def.length * cap.axis;
    Vec3 e1_local, e2_local;
    axis_frame(dir_local, e1_local, e2_local);
    cap.e1 = rot[def.joint] * e1_local;
    cap.e2 = rot[def.joint] * e2_local;
    cap.radius = def.radius;
    cap.length = def.length;
    cap.part = def.part;
    cap.density = def.density;
    out.capsules.push_back(cap);
  }

  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::max());
  Vec3 hi = Vec3::Constant(std::numeric_limits<double>::lowest());
  for (const auto& cap : out.capsules) {
    lo = lo.cwiseMin(cap.a.array().min(cap.b.array()).matrix() - Vec3::Constant(cap.radius));
    hi = hi.cwiseMax(cap.a.array().max(cap.b.array()).matrix() + Vec3::Constant(cap.radius));
  }
  out.bound_center = 0.5 * (lo + hi);
  double r = 0;
  for (const auto& cap : out.capsules) {
    r = std::max(r, (cap.a - out.bound_center).norm() + cap.radius);
    r = std::max(r, (cap.b - out.bound_center).norm() + cap.radius);
  }
  out.bound_radius = r;
  return out;
}

double default_step(const PosedBody& posed) { return 2.0 * posed.bound_radius / 128.0; }

namespace {

struct Interval {
  double lo = 1.0;
  double hi = 0.0;
  bool empty() const { return !(lo <= hi); }
};

void merge(Interval& acc, double lo, double hi) {
  if (!(lo <= hi)) return;
  if (acc.empty()) {
    acc.lo = lo;
    acc.hi = hi;
  } else {
    acc.lo = std::min(acc.lo, lo);
    acc.hi = std::max(acc.hi, hi);
  }
}

bool sphere_interval(const Vec3& o, const Vec3& d, const Vec3& c, double r,
                     double& t0, double& t1) {
  const Vec3 m = o - c;
  const double b = m.dot(d);
  const double cc = m.squaredNorm() - r * r;
  const double disc = b * b - cc;
  if (disc < 0) return false;
  const double s = std::sqrt(disc);
  t0 = -b - s;
  t1 = -b + s;
  return true;
}

// The capsule is convex, so its ray intersection is a single interval: the
// hull of the finite-cylinder piece and the two cap spheres.
Interval capsule_interval(const PosedCapsule& cap, const Vec3& o, const Vec3& d) {
  Interval acc;
  const Vec3& u = cap.axis;
  const Vec3 m = o - cap.a;
  const double md = m.dot(u);
  const double dd = d.dot(u);
  const Vec3 m_perp = m - md * u;
  const Vec3 d_perp = d - dd * u;
  const double a2 = d_perp.squaredNorm();
  const double r2 = cap.radius * cap.radius;

  // Finite cylinder: radial quadratic intersected with the axial slab.
  double cyl_lo = 0, cyl_hi = -1;
  bool have_radial = false;
  if (a2 > 1e-14) {
    const double b = m_perp.dot(d_perp);
    const double c = m_perp.squaredNorm() - r2;
    const double disc = b * b - a2 * c;
    if (disc >= 0) {
      const double s = std::sqrt(disc);
      cyl_lo = (-b - s) / a2;
      cyl_hi = (-b + s) / a2;
      have_radial = true;
    }
  } else if (m_perp.squaredNorm() <= r2) {
    cyl_lo = -std::numeric_limits<double>::infinity();
    cyl_hi = std::numeric_limits<double>::infinity();
    have_radial = true;
  }
  if (have_radial) {
    double s_lo = -std::numeric_limits<double>::infinity();
    double s_hi = std::numeric_limits<double>::infinity();
    if (std::abs(dd) > 1e-14) {
      s_lo = (0.0 - md) / dd;
      s_hi = (cap.length - md) / dd;
      if (s_lo > s_hi) std::swap(s_lo, s_hi);
    } else if (md < 0.0 || md > cap.length) {
      s_hi = s_lo - 1.0;  // outside the slab entirely
    }
    merge(acc, std::max(cyl_lo, s_lo), std::min(cyl_hi, s_hi));
  }

  double t0, t1;
  if (sphere_interval(o, d, cap.a, cap.radius, t0, t1)) merge(acc, t0, t1);
  if (sphere_interval(o, d, cap.b, cap.radius, t0, t1)) merge(acc, t0, t1);
  return acc;
}

struct PartAccum {
  double depth = 0.0;
  double first_entry = std::numeric_limits<double>::max();
  int first_capsule = -1;
};

}  // namespace

std::pair<double, double> capsule_uv(const PosedCapsule& cap, const Vec3& point) {
  if (cap.length < 1e-12) throw ConfigError("capsule_uv: degenerate zero-length axis");
  const Vec3 rel = point - cap.a;
  const double s = rel.dot(cap.axis);
  const double v = std::clamp(s / cap.length, 0.0, 1.0);
  const Vec3 perp = rel - s * cap.axis;
  double u = 0.0;
  if (perp.squaredNorm() > 1e-20) {
    u = std::atan2(perp.dot(cap.e2), perp.dot(cap.e1)) / (2.0 * M_PI);
    if (u < 0.0) u += 1.0;
    if (u >= 1.0) u = 0.0;
  }
  return {u, v};
}

RaySample ray_alpha(const PosedBody& posed, const Vec3& origin, const Vec3& dir,
                    double step) {
  if (!(step > 0)) throw ConfigError("ray_alpha: step must be > 0");
  RaySample out;

  // Marching domain: the ray's span of the body bounding sphere.
  double dom0, dom1;
  if (!sphere_interval(origin, dir, posed.bound_center, posed.bound_radius, dom0, dom1))
    return out;
  dom0 = std::max(dom0, 0.0);
  if (!(dom0 < dom1)) return out;
  const long max_index = static_cast<long>(std::floor((dom1 - dom0) / step)) - 1;
  if (max_index < 0) return out;

  std::vector<PartAccum> parts(posed.part_count);
  double total_depth = 0.0;
  for (std::size_t ci = 0; ci < posed.capsules.size(); ++ci) {
    const auto& cap = posed.capsules[ci];
    Interval iv = capsule_interval(cap, origin, dir);
    if (iv.empty()) continue;
    const double lo = std::max(iv.lo, dom0);
    const double hi = std::min(iv.hi, dom1);
    if (!(lo < hi)) continue;
    // Midpoint samples t_j = dom0 + (j + 0.5) step that fall inside [lo, hi].
    long j_lo = static_cast<long>(std::ceil((lo - dom0) / step - 0.5));
    long j_hi = static_cast<long>(std::floor((hi - dom0) / step - 0.5));
    j_lo = std::max(j_lo, 0L);
    j_hi = std::min(j_hi, max_index);
    if (j_hi < j_lo) continue;
    const double depth = cap.density * step * static_cast<double>(j_hi - j_lo + 1);
    auto& acc = parts[cap.part];
    acc.depth += depth;
    total_depth += depth;
    if (iv.lo < acc.first_entry) {
      acc.first_entry = iv.lo;
      acc.first_capsule = static_cast<int>(ci);
    }
  }

  if (total_depth <= 0.0) return out;
  out.mask = 1.0 - std::exp(-total_depth);
  for (int k = 0; k < posed.part_count; ++k) {
    const auto& acc = parts[k];
    if (acc.depth <= 0.0) continue;
    const Vec3 entry = origin + std::max(acc.first_entry, 0.0) * dir;
    const auto [u, v] = capsule_uv(posed.capsules[acc.first_capsule], entry);
    out.contribs.push_back({k, acc.depth / total_depth, u, v});
  }
  return out;
}

CameraBasis make_camera_basis(const CameraParams& cam, const Vec3& default_target) {
  if (cam.width < 1 || cam.height < 1) throw ConfigError("camera: degenerate image size");
  if (!(cam.distance > 0)) throw ConfigError("camera: distance must be > 0");
  const double az = cam.azimuth_deg * M_PI / 180.0;
  const double el = cam.elevation_deg * M_PI / 180.0;
  const Vec3 target = cam.target.value_or(default_target);
  CameraBasis basis;
  basis.origin = target + cam.distance * Vec3(std::cos(el) * std::sin(az), std::sin(el),
                                              std::cos(el) * std::cos(az));
  basis.forward = (target - basis.origin).normalized();
  const Vec3 up_ref = std::abs(basis.forward.y()) > 0.999 ? Vec3(0, 0, 1) : Vec3(0, 1, 0);
  basis.right = basis.forward.cross(up_ref).normalized();
  basis.up = basis.right.cross(basis.forward);
  basis.tan_half_vfov = std::tan(0.5 * cam.vfov_deg * M_PI / 180.0);
  basis.aspect = static_cast<double>(cam.width) / cam.height;
  return basis;
}

Vec3 pixel_ray_dir(const CameraBasis& basis, double px, double py, int width, int height) {
  const double ndc_x = ((px + 0.5) / width * 2.0 - 1.0) * basis.aspect * basis.tan_half_vfov;
  const double ndc_y = (1.0 - (py + 0.5) / height * 2.0) * basis.tan_half_vfov;
  return (basis.forward + ndc_x * basis.right + ndc_y * basis.up).normalized();
}

IUVMap render_iuv(const PosedBody& posed, const CameraParams& cam, double step,
                  int threads) {
  if (!cam.target.has_value() && !(cam.distance > posed.bound_radius))
    throw ConfigError("camera: distance must exceed the body bounding radius");
  const CameraBasis basis = make_camera_basis(cam, posed.bound_center);

  IUVMap map;
  map.width = cam.width;
  map.height = cam.height;
  map.mask.assign(map.width * static_cast<std::size_t>(map.height), 0.0);

  // One contribution buffer per row, stitched in row order afterwards so the
  // output is identical for any worker count.
  std::vector<std::vector<PartContribution>> rows(cam.height);
  std::vector<std::vector<std::uint32_t>> row_counts(cam.height);
  parallel_for(cam.height, threads, [&](std::int64_t y) {
    auto& row = rows[y];
    auto& counts = row_counts[y];
    counts.resize(cam.width);
    for (int x = 0; x < cam.width; ++x) {
      const Vec3 dir = pixel_ray_dir(basis, x, static_cast<double>(y), cam.width, cam.height);
      RaySample s = ray_alpha(posed, basis.origin, dir, step);
      map.mask[map.pixel_index(x, static_cast<int>(y))] = s.mask;
      counts[x] = static_cast<std::uint32_t>(s.contribs.size());
      row.insert(row.end(), s.contribs.begin(), s.contribs.end());
    }
  });

  map.offsets.resize(map.mask.size() + 1);
  map.offsets[0] = 0;
  std::size_t p = 0;
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x, ++p)
      map.offsets[p + 1] = map.offsets[p] + row_counts[y][x];
  map.contribs.reserve(map.offsets.back());
  for (auto& row : rows) map.contribs.insert(map.contribs.end(), row.begin(), row.end());
  return map;
}

std::optional<Eigen::Vector4d> mask_bbox(const IUVMap& iuv, double threshold) {
  int x0 = iuv.width, y0 = iuv.height, x1 = -1, y1 = -1;
  for (int y = 0; y < iuv.height; ++y)
    for (int x = 0; x < iuv.width; ++x)
      if (iuv.mask[iuv.pixel_index(x, y)] > threshold) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) return std::nullopt;
  return Eigen::Vector4d(x0, y0, x1 + 1.0, y1 + 1.0);
}

}  // namespace uvtex
