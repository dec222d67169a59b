#include "uvtex/generator.hpp"

#include <cmath>

#include "uvtex/detector.hpp"
#include "uvtex/errors.hpp"

namespace uvtex {

GeneratorKind generator_kind_from_string(const std::string& name) {
  if (name == "direct") return GeneratorKind::Direct;
  if (name == "smooth-basis") return GeneratorKind::SmoothBasis;
  throw ConfigError("generator: unknown kind '" + name + "'");
}

std::string to_string(GeneratorKind kind) {
  return kind == GeneratorKind::Direct ? "direct" : "smooth-basis";
}

int GeneratorSpec::latent_dim() const {
  return kind == GeneratorKind::Direct ? 3 * patch_size * patch_size : 3 * coeffs * coeffs;
}

void GeneratorSpec::validate() const {
  if (patch_size < 1) throw ConfigError("generator: patch size must be >= 1");
  if (kind == GeneratorKind::SmoothBasis) {
    if (coeffs < 1 || coeffs > patch_size)
      throw ConfigError("generator: coefficient count must lie in [1, patch size]");
    if (!(scale > 0)) throw ConfigError("generator: scale must be > 0");
  }
}

namespace {

// cos(pi (2x + 1) k / (2P)) table, P rows x C columns.
Eigen::MatrixXd cosine_table(int p, int c) {
  Eigen::MatrixXd t(p, c);
  for (int x = 0; x < p; ++x)
    for (int k = 0; k < c; ++k)
      t(x, k) = std::cos(M_PI * (2.0 * x + 1.0) * k / (2.0 * p));
  return t;
}

}  // namespace

Image generate_patch(const GeneratorSpec& spec, const Eigen::VectorXd& z) {
  spec.validate();
  if (z.size() != spec.latent_dim())
    throw ConfigError("generate_patch: latent dimension mismatch (expected " +
                      std::to_string(spec.latent_dim()) + ", got " +
                      std::to_string(z.size()) + ")");
  const int p = spec.patch_size;
  Image patch(p, p);
  if (spec.kind == GeneratorKind::Direct) {
    std::size_t i = 0;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < p; ++y)
        for (int x = 0; x < p; ++x) patch.at(x, y, c) = logistic(z[i++]);
    return patch;
  }
  const int nc = spec.coeffs;
  const Eigen::MatrixXd table = cosine_table(p, nc);
  for (int c = 0; c < 3; ++c) {
    Eigen::MatrixXd coef(nc, nc);
    for (int ky = 0; ky < nc; ++ky)
      for (int kx = 0; kx < nc; ++kx) coef(ky, kx) = z[c * nc * nc + ky * nc + kx];
    // field(y, x) = sum_{ky,kx} coef(ky,kx) cos_y(ky) cos_x(kx)
    const Eigen::MatrixXd field = table * coef * table.transpose();
    for (int y = 0; y < p; ++y)
      for (int x = 0; x < p; ++x) patch.at(x, y, c) = logistic(spec.scale * field(y, x));
  }
  return patch;
}

Eigen::VectorXd generate_patch_backward(const GeneratorSpec& spec, const Eigen::VectorXd& z,
                                        const Image& d_patch) {
  spec.validate();
  if (z.size() != spec.latent_dim())
    throw ConfigError("generate_patch_backward: latent dimension mismatch");
  const int p = spec.patch_size;
  if (d_patch.width != p || d_patch.height != p)
    throw ConfigError("generate_patch_backward: patch gradient shape mismatch");
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(z.size());
  if (spec.kind == GeneratorKind::Direct) {
    std::size_t i = 0;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < p; ++y)
        for (int x = 0; x < p; ++x) {
          const double s = logistic(z[i]);
          grad[i] = d_patch.at(x, y, c) * s * (1.0 - s);
          ++i;
        }
    return grad;
  }
  const int nc = spec.coeffs;
  const Eigen::MatrixXd table = cosine_table(p, nc);
  for (int c = 0; c < 3; ++c) {
    Eigen::MatrixXd coef(nc, nc);
    for (int ky = 0; ky < nc; ++ky)
      for (int kx = 0; kx < nc; ++kx) coef(ky, kx) = z[c * nc * nc + ky * nc + kx];
    const Eigen::MatrixXd field = table * coef * table.transpose();
    Eigen::MatrixXd d_field(p, p);
    for (int y = 0; y < p; ++y)
      for (int x = 0; x < p; ++x) {
        const double s = logistic(spec.scale * field(y, x));
        d_field(y, x) = d_patch.at(x, y, c) * s * (1.0 - s) * spec.scale;
      }
    // Adjoint of coef -> field under the cosine expansion.
    const Eigen::MatrixXd d_coef = table.transpose() * d_field * table;
    for (int ky = 0; ky < nc; ++ky)
      for (int kx = 0; kx < nc; ++kx) grad[c * nc * nc + ky * nc + kx] = d_coef(ky, kx);
  }
  return grad;
}

}  // namespace uvtex
