#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "uvtex/body.hpp"
#include "uvtex/image.hpp"

namespace uvtex {

// Per-part square textures plus per-part attackable flags.
struct TextureStack {
  int size = 0;                          // N_t
  std::vector<Image> parts;              // K textures, size x size
  std::vector<std::uint8_t> attackable;  // K flags

  int part_count() const { return static_cast<int>(parts.size()); }
  void validate() const;
  static TextureStack solid(int part_count, int size,
                            const std::vector<Eigen::Vector3d>& colors,
                            const std::vector<std::uint8_t>& attackable);
};

// Mesh-grid UV construction: U rows are linspace(0, 1, n) and V = U^T.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> uv_grid(int n);

// Repeats the patch over every attackable part texture: texel (x, y) becomes
// patch(x mod P, y mod P). Non-attackable parts are returned unchanged.
TextureStack tile_patch(const Image& patch, const TextureStack& stack);
void tile_patch_into(const Image& patch, const TextureStack& base, TextureStack& out);
// Accumulates d(stack)/d(patch) contributions back into d_patch.
void tile_patch_backward(const TextureStack& d_stack, const TextureStack& base,
                         int patch_size, Image& d_patch);

struct TPSParams {
  Eigen::MatrixXd sources;        // n x 2 control points in [0, 1]^2
  Eigen::MatrixXd displacements;  // n x 2
  double lambda = 0.0;

  Eigen::MatrixXd targets() const { return sources + displacements; }
  void validate(double max_disp = 0.1) const;
};

// Fitted thin-plate-spline map: f(p) = affine^T [1 p] + sum_i w_i U(|p - s_i|)
// with U(r) = r^2 log(r^2), solved per output dimension.
struct TPSWarp {
  Eigen::MatrixXd sources;         // n x 2
  Eigen::MatrixXd kernel_weights;  // n x 2
  Eigen::Matrix<double, 3, 2> affine;

  Eigen::Vector2d map(const Eigen::Vector2d& p) const;
};

TPSWarp tps_fit(const Eigen::MatrixXd& sources, const Eigen::MatrixXd& targets,
                double lambda);

// Axis-aligned G x G control grid on [0, 1]^2, row-major.
Eigen::MatrixXd tps_control_grid(int g);

// Per-texel inverse-map sample positions (pixel coordinates, align-corners).
struct WarpGrid {
  int size = 0;
  std::vector<float> sx, sy;  // size * size source pixel coords
};

WarpGrid build_warp_grid(const TPSWarp& warp, int size);
Image warp_apply(const WarpGrid& grid, const Image& tex);
void warp_backward(const WarpGrid& grid, const Image& d_out, Image& d_in);
// Convenience wrapper: fit on params.targets() and warp one texture.
Image tps_apply(const TPSParams& params, const Image& tex);

// Bilinear lookup with the align-corners convention (u = 0 hits texel center
// 0, u = 1 hits texel center N_t - 1) and border clamping.
Eigen::Vector3d grid_sample(const Image& tex, double u, double v);
void grid_sample_backward(const Image& tex, double u, double v,
                          const Eigen::Vector3d& d_rgb, Image& d_tex);

// Foreground color per pixel is the part-weighted sum of texture samples,
// scaled by the light intensity, clamped to [0, 1], then alpha-composited
// over the background with the mask.
Image composite(const IUVMap& iuv, const TextureStack& stack, const Image& background,
                const LightParams& light);
// Gradient of the composite output with respect to the stack texels.
void composite_backward(const IUVMap& iuv, const TextureStack& stack,
                        const Image& background, const LightParams& light,
                        const Image& d_out, TextureStack& d_stack);

}  // namespace uvtex
