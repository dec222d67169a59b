#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace uvtex {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct JointDef {
  int parent = -1;     // -1 for the root; otherwise an earlier joint index
  Vec3 offset{0, 0, 0};  // rest offset from the parent joint, in the parent frame
};

// One capsule bone: the axis starts at its joint and runs `length` units along
// the (posed) direction of `rest_dir`. Only the direction of rest_dir is used.
struct CapsuleDef {
  int joint = 0;
  Vec3 rest_dir{0, 1, 0};
  double radius = 0.1;
  double length = 0.3;
  int part = 0;
  double density = 1.0;
};

struct BodyShape {
  std::vector<JointDef> joints;
  std::vector<CapsuleDef> capsules;
  int part_count = 0;

  int joint_count() const { return static_cast<int>(joints.size()); }
  void validate() const;  // throws ConfigError on a malformed shape
};

BodyShape load_body_shape(const std::string& path);
BodyShape body_shape_from_json_text(const std::string& text);

// Joint rotations as axis-angle triples, strictly inside (theta_min, theta_max).
struct PoseParams {
  Eigen::VectorXd theta;
  Eigen::VectorXd theta_min;
  Eigen::VectorXd theta_max;

  void validate() const;
  static PoseParams rest(int joint_count, double limit = M_PI / 2, double root_limit = M_PI);
};

struct CameraParams {
  double azimuth_deg = 0.0;    // [-180, 180]
  double elevation_deg = 0.0;  // [0, 30]
  double distance = 4.0;       // body units, > body bounding radius
  int width = 64;
  int height = 64;
  double vfov_deg = 45.0;
  // Look-at point; defaults to the posed body's bounding center.
  std::optional<Vec3> target;
};

struct LightParams {
  Vec3 direction{0, 0, 1};  // unit
  double intensity = 1.0;   // multiplicative scale in [0.5, 1.5]

  void validate() const;
};

struct PosedCapsule {
  Vec3 a, b;      // world endpoints
  Vec3 axis;      // unit (b - a) / length
  Vec3 e1, e2;    // cross-section frame, rotated with the bone
  double radius = 0;
  double length = 0;
  int part = 0;
  double density = 0;
};

struct PosedBody {
  std::vector<PosedCapsule> capsules;
  int part_count = 0;
  Vec3 bound_center{0, 0, 0};
  double bound_radius = 1.0;
};

PosedBody pose_body(const BodyShape& shape, const PoseParams& pose);

// Marching step that keeps 128 samples across the body's bounding sphere.
double default_step(const PosedBody& posed);

struct PartContribution {
  int part = 0;
  double weight = 0;
  double u = 0, v = 0;
};

struct RaySample {
  double mask = 0.0;
  std::vector<PartContribution> contribs;
};

// Fixed-step transmittance along one ray: T = exp(-sum sigma(x_j) * step) over
// midpoint samples, m = 1 - T. Part weights are the per-part share of the
// accumulated optical depth; the per-part uv is taken at the ray's first entry
// into that part. The sample sum is evaluated in closed form per capsule
// (chord point counts), which is exactly the naive midpoint sum.
RaySample ray_alpha(const PosedBody& posed, const Vec3& origin, const Vec3& dir, double step);

// Surface/axis parametrization: v is the clamped normalized position along the
// axis, u the cross-section angle mapped to [0, 1).
std::pair<double, double> capsule_uv(const PosedCapsule& capsule, const Vec3& point);

struct IUVMap {
  int width = 0;
  int height = 0;
  std::vector<double> mask;             // width * height
  std::vector<std::uint32_t> offsets;   // width * height + 1
  std::vector<PartContribution> contribs;

  std::size_t pixel_index(int x, int y) const {
    return static_cast<std::size_t>(y) * width + x;
  }
  // Contribution range for one pixel.
  std::pair<const PartContribution*, const PartContribution*> at(int x, int y) const {
    const std::size_t p = pixel_index(x, y);
    return {contribs.data() + offsets[p], contribs.data() + offsets[p + 1]};
  }
};

struct CameraBasis {
  Vec3 origin, forward, right, up;
  double tan_half_vfov = 1.0;
  double aspect = 1.0;
};

CameraBasis make_camera_basis(const CameraParams& cam, const Vec3& default_target);
Vec3 pixel_ray_dir(const CameraBasis& basis, double px, double py, int width, int height);

IUVMap render_iuv(const PosedBody& posed, const CameraParams& cam, double step,
                  int threads = 1);

// Tight bounding box of pixels with mask > threshold as (x1, y1, x2, y2) in
// pixel units; nullopt when no pixel qualifies.
std::optional<Eigen::Vector4d> mask_bbox(const IUVMap& iuv, double threshold = 0.5);

}  // namespace uvtex
