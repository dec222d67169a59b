#include "uvtex/texture.hpp"

#include <cmath>

#include "uvtex/errors.hpp"

namespace uvtex {

void TextureStack::validate() const {
  if (size < 2) throw ConfigError("texture stack: size must be >= 2");
  if (parts.empty()) throw ConfigError("texture stack: no parts");
  if (attackable.size() != parts.size())
    throw ConfigError("texture stack: attackable flags must match part count");
  for (const auto& tex : parts) {
    if (tex.width != size || tex.height != size)
      throw ConfigError("texture stack: texture dimensions must equal size");
    for (double v : tex.data)
      if (!(v >= 0.0 && v <= 1.0))
        throw ConfigError("texture stack: components must lie in [0, 1]");
  }
}

TextureStack TextureStack::solid(int part_count, int size,
                                 const std::vector<Eigen::Vector3d>& colors,
                                 const std::vector<std::uint8_t>& attackable) {
  if (static_cast<int>(colors.size()) != part_count ||
      static_cast<int>(attackable.size()) != part_count)
    throw ConfigError("texture stack: colors/attackable must match part count");
  TextureStack stack;
  stack.size = size;
  stack.attackable = attackable;
  for (int k = 0; k < part_count; ++k) {
    Image tex(size, size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        for (int c = 0; c < 3; ++c) tex.at(x, y, c) = colors[k][c];
    stack.parts.push_back(std::move(tex));
  }
  stack.validate();
  return stack;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> uv_grid(int n) {
  if (n < 2) throw ConfigError("uv_grid: size must be >= 2");
  Eigen::MatrixXd u(n, n), v(n, n);
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / (n - 1);
    for (int j = 0; j < n; ++j) {
      u(j, i) = t;  // rows of U are linspace(0, 1, n)
      v(i, j) = t;  // V = U^T
    }
  }
  return {u, v};
}

void tile_patch_into(const Image& patch, const TextureStack& base, TextureStack& out) {
  if (patch.width != patch.height || patch.width < 1)
    throw ConfigError("tile_patch: patch must be square and nonempty");
  out.size = base.size;
  out.attackable = base.attackable;
  out.parts.resize(base.parts.size());
  const int p = patch.width;
  for (std::size_t k = 0; k < base.parts.size(); ++k) {
    if (!base.attackable[k]) {
      out.parts[k] = base.parts[k];
      continue;
    }
    Image& tex = out.parts[k];
    if (tex.width != base.size || tex.height != base.size) tex = Image(base.size, base.size);
    for (int y = 0; y < base.size; ++y) {
      const int py = y % p;
      for (int x = 0; x < base.size; ++x) {
        const int px = x % p;
        for (int c = 0; c < 3; ++c) tex.at(x, y, c) = patch.at(px, py, c);
      }
    }
  }
}

TextureStack tile_patch(const Image& patch, const TextureStack& stack) {
  TextureStack out;
  tile_patch_into(patch, stack, out);
  return out;
}

void tile_patch_backward(const TextureStack& d_stack, const TextureStack& base,
                         int patch_size, Image& d_patch) {
  if (d_patch.width != patch_size || d_patch.height != patch_size)
    d_patch = Image(patch_size, patch_size);
  for (std::size_t k = 0; k < base.parts.size(); ++k) {
    if (!base.attackable[k]) continue;
    const Image& g = d_stack.parts[k];
    for (int y = 0; y < base.size; ++y) {
      const int py = y % patch_size;
      for (int x = 0; x < base.size; ++x) {
        const int px = x % patch_size;
        for (int c = 0; c < 3; ++c) d_patch.at(px, py, c) += g.at(x, y, c);
      }
    }
  }
}

void TPSParams::validate(double max_disp) const {
  if (sources.rows() < 3 || sources.cols() != 2)
    throw ConfigError("tps: need at least 3 control points (n x 2)");
  if (displacements.rows() != sources.rows() || displacements.cols() != 2)
    throw ConfigError("tps: displacement shape mismatch");
  if (lambda < 0) throw ConfigError("tps: lambda must be >= 0");
  for (Eigen::Index i = 0; i < sources.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < sources.rows(); ++j)
      if ((sources.row(i) - sources.row(j)).norm() < 1e-12)
        throw ConfigError("tps: control points must be distinct");
    if (displacements.row(i).norm() > max_disp + 1e-12)
      throw ConfigError("tps: displacement exceeds configured maximum");
  }
}

namespace {

// U(r) = r^2 log(r^2) with U(0) = 0.
inline double tps_kernel(double r2) { return r2 > 0.0 ? r2 * std::log(r2) : 0.0; }

}  // namespace

Eigen::Vector2d TPSWarp::map(const Eigen::Vector2d& p) const {
  Eigen::Vector2d out = affine.row(0).transpose() + affine.row(1).transpose() * p.x() +
                        affine.row(2).transpose() * p.y();
  for (Eigen::Index i = 0; i < sources.rows(); ++i) {
    const double r2 = (p - sources.row(i).transpose()).squaredNorm();
    out += kernel_weights.row(i).transpose() * tps_kernel(r2);
  }
  return out;
}

TPSWarp tps_fit(const Eigen::MatrixXd& sources, const Eigen::MatrixXd& targets,
                double lambda) {
  const Eigen::Index n = sources.rows();
  if (n < 3 || sources.cols() != 2 || targets.rows() != n || targets.cols() != 2)
    throw ConfigError("tps_fit: need matching n x 2 sources and targets, n >= 3");
  if (lambda < 0) throw ConfigError("tps_fit: lambda must be >= 0");

  Eigen::MatrixXd system = Eigen::MatrixXd::Zero(n + 3, n + 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j)
      system(i, j) = tps_kernel((sources.row(i) - sources.row(j)).squaredNorm());
    system(i, i) += lambda;
    system(i, n) = 1.0;
    system(i, n + 1) = sources(i, 0);
    system(i, n + 2) = sources(i, 1);
    system(n, i) = 1.0;
    system(n + 1, i) = sources(i, 0);
    system(n + 2, i) = sources(i, 1);
  }
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + 3, 2);
  rhs.topRows(n) = targets;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
  if (!lu.isInvertible()) {
    const double max_piv = std::abs(lu.matrixLU().diagonal().cwiseAbs().maxCoeff());
    const double min_piv = std::abs(lu.matrixLU().diagonal().cwiseAbs().minCoeff());
    throw NumericalError("tps_fit: singular system (pivot ratio " +
                         std::to_string(min_piv / std::max(max_piv, 1e-300)) +
                         "); control points may be collinear");
  }
  const Eigen::MatrixXd sol = lu.solve(rhs);

  TPSWarp warp;
  warp.sources = sources;
  warp.kernel_weights = sol.topRows(n);
  warp.affine = sol.bottomRows(3);
  return warp;
}

Eigen::MatrixXd tps_control_grid(int g) {
  if (g < 2) throw ConfigError("tps: control grid must be at least 2 x 2");
  Eigen::MatrixXd pts(g * g, 2);
  for (int r = 0; r < g; ++r)
    for (int c = 0; c < g; ++c) {
      pts(r * g + c, 0) = static_cast<double>(c) / (g - 1);
      pts(r * g + c, 1) = static_cast<double>(r) / (g - 1);
    }
  return pts;
}

WarpGrid build_warp_grid(const TPSWarp& warp, int size) {
  if (size < 2) throw ConfigError("warp grid: size must be >= 2");
  WarpGrid grid;
  grid.size = size;
  grid.sx.resize(static_cast<std::size_t>(size) * size);
  grid.sy.resize(grid.sx.size());
  const auto [u, v] = uv_grid(size);  // texel-center uv coordinates
  const double scale = size - 1;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const Eigen::Vector2d q = warp.map({u(y, x), v(y, x)});
      const std::size_t i = static_cast<std::size_t>(y) * size + x;
      grid.sx[i] = static_cast<float>(q.x() * scale);
      grid.sy[i] = static_cast<float>(q.y() * scale);
    }
  return grid;
}

namespace {

struct BilinearTaps {
  int x0, x1, y0, y1;
  double w00, w01, w10, w11;
};

// Border-clamped bilinear taps for a sample at pixel coordinates (gx, gy).
inline BilinearTaps bilinear_taps(double gx, double gy, int w, int h) {
  gx = std::clamp(gx, 0.0, static_cast<double>(w - 1));
  gy = std::clamp(gy, 0.0, static_cast<double>(h - 1));
  BilinearTaps t;
  t.x0 = static_cast<int>(gx);
  t.y0 = static_cast<int>(gy);
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.y1 = std::min(t.y0 + 1, h - 1);
  const double fx = gx - t.x0;
  const double fy = gy - t.y0;
  t.w00 = (1 - fx) * (1 - fy);
  t.w01 = fx * (1 - fy);
  t.w10 = (1 - fx) * fy;
  t.w11 = fx * fy;
  return t;
}

}  // namespace

Image warp_apply(const WarpGrid& grid, const Image& tex) {
  if (tex.width != grid.size || tex.height != grid.size)
    throw ConfigError("warp_apply: texture size mismatch");
  Image out(grid.size, grid.size);
  for (int y = 0; y < grid.size; ++y)
    for (int x = 0; x < grid.size; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * grid.size + x;
      const BilinearTaps t = bilinear_taps(grid.sx[i], grid.sy[i], tex.width, tex.height);
      for (int c = 0; c < 3; ++c)
        out.at(x, y, c) = t.w00 * tex.at(t.x0, t.y0, c) + t.w01 * tex.at(t.x1, t.y0, c) +
                          t.w10 * tex.at(t.x0, t.y1, c) + t.w11 * tex.at(t.x1, t.y1, c);
    }
  return out;
}

void warp_backward(const WarpGrid& grid, const Image& d_out, Image& d_in) {
  if (d_in.width != grid.size || d_in.height != grid.size) d_in = Image(grid.size, grid.size);
  for (int y = 0; y < grid.size; ++y)
    for (int x = 0; x < grid.size; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * grid.size + x;
      const BilinearTaps t = bilinear_taps(grid.sx[i], grid.sy[i], grid.size, grid.size);
      for (int c = 0; c < 3; ++c) {
        const double g = d_out.at(x, y, c);
        if (g == 0.0) continue;
        d_in.at(t.x0, t.y0, c) += t.w00 * g;
        d_in.at(t.x1, t.y0, c) += t.w01 * g;
        d_in.at(t.x0, t.y1, c) += t.w10 * g;
        d_in.at(t.x1, t.y1, c) += t.w11 * g;
      }
    }
}

Image tps_apply(const TPSParams& params, const Image& tex) {
  if (tex.width != tex.height) throw ConfigError("tps_apply: texture must be square");
  const TPSWarp warp = tps_fit(params.sources, params.targets(), params.lambda);
  return warp_apply(build_warp_grid(warp, tex.width), tex);
}

Eigen::Vector3d grid_sample(const Image& tex, double u, double v) {
  const BilinearTaps t = bilinear_taps(std::clamp(u, 0.0, 1.0) * (tex.width - 1),
                                       std::clamp(v, 0.0, 1.0) * (tex.height - 1),
                                       tex.width, tex.height);
  Eigen::Vector3d out;
  for (int c = 0; c < 3; ++c)
    out[c] = t.w00 * tex.at(t.x0, t.y0, c) + t.w01 * tex.at(t.x1, t.y0, c) +
             t.w10 * tex.at(t.x0, t.y1, c) + t.w11 * tex.at(t.x1, t.y1, c);
  return out;
}

void grid_sample_backward(const Image& tex, double u, double v,
                          const Eigen::Vector3d& d_rgb, Image& d_tex) {
  if (!d_tex.same_size(tex)) d_tex = Image(tex.width, tex.height);
  const BilinearTaps t = bilinear_taps(std::clamp(u, 0.0, 1.0) * (tex.width - 1),
                                       std::clamp(v, 0.0, 1.0) * (tex.height - 1),
                                       tex.width, tex.height);
  for (int c = 0; c < 3; ++c) {
    const double g = d_rgb[c];
    if (g == 0.0) continue;
    d_tex.at(t.x0, t.y0, c) += t.w00 * g;
    d_tex.at(t.x1, t.y0, c) += t.w01 * g;
    d_tex.at(t.x0, t.y1, c) += t.w10 * g;
    d_tex.at(t.x1, t.y1, c) += t.w11 * g;
  }
}

Image composite(const IUVMap& iuv, const TextureStack& stack, const Image& background,
                const LightParams& light) {
  if (background.width != iuv.width || background.height != iuv.height)
    throw ConfigError("composite: background dimensions must match the IUV map");
  Image out(iuv.width, iuv.height);
  for (int y = 0; y < iuv.height; ++y)
    for (int x = 0; x < iuv.width; ++x) {
      const double m = iuv.mask[iuv.pixel_index(x, y)];
      if (m == 0.0) {
        for (int c = 0; c < 3; ++c) out.at(x, y, c) = background.at(x, y, c);
        continue;
      }
      Eigen::Vector3d acc = Eigen::Vector3d::Zero();
      const auto [begin, end] = iuv.at(x, y);
      for (const auto* it = begin; it != end; ++it)
        acc += it->weight * grid_sample(stack.parts[it->part], it->u, it->v);
      for (int c = 0; c < 3; ++c) {
        const double fg = std::clamp(light.intensity * acc[c], 0.0, 1.0);
        out.at(x, y, c) = fg * m + background.at(x, y, c) * (1.0 - m);
      }
    }
  return out;
}

void composite_backward(const IUVMap& iuv, const TextureStack& stack,
                        const Image& background, const LightParams& light,
                        const Image& d_out, TextureStack& d_stack) {
  (void)background;
  if (d_stack.parts.size() != stack.parts.size()) {
    d_stack.size = stack.size;
    d_stack.attackable = stack.attackable;
    d_stack.parts.assign(stack.parts.size(), Image(stack.size, stack.size));
  }
  for (int y = 0; y < iuv.height; ++y)
    for (int x = 0; x < iuv.width; ++x) {
      const double m = iuv.mask[iuv.pixel_index(x, y)];
      if (m == 0.0) continue;
      const auto [begin, end] = iuv.at(x, y);
      Eigen::Vector3d acc = Eigen::Vector3d::Zero();
      for (const auto* it = begin; it != end; ++it)
        acc += it->weight * grid_sample(stack.parts[it->part], it->u, it->v);
      Eigen::Vector3d d_acc;
      for (int c = 0; c < 3; ++c) {
        const double pre = light.intensity * acc[c];
        // The clamp blocks gradient outside the open interval.
        const bool inside = pre > 0.0 && pre < 1.0;
        d_acc[c] = inside ? d_out.at(x, y, c) * m * light.intensity : 0.0;
      }
      if (d_acc.isZero(0.0)) continue;
      for (const auto* it = begin; it != end; ++it)
        grid_sample_backward(stack.parts[it->part], it->u, it->v, it->weight * d_acc,
                             d_stack.parts[it->part]);
    }
}

}  // namespace uvtex
