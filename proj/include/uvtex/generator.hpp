#pragma once

#include <Eigen/Dense>
#include <string>

#include "uvtex/image.hpp"

namespace uvtex {

enum class GeneratorKind { Direct, SmoothBasis };

GeneratorKind generator_kind_from_string(const std::string& name);
std::string to_string(GeneratorKind kind);

// Maps a latent vector to a P x P x 3 patch in (0, 1).
//   direct:       logistic over per-pixel logits, D_z = 3 P^2.
//   smooth-basis: logistic over a low-frequency cosine expansion, D_z = 3 C^2.
// The cosine basis is unnormalized (basis 0 is the constant 1), so the DC
// coefficient directly drives the patch mean.
struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::SmoothBasis;
  int patch_size = 32;  // P
  int coeffs = 4;       // C, per axis (smooth-basis only)
  double scale = 2.0;   // s, amplitude of the cosine expansion

  int latent_dim() const;
  void validate() const;
};

Image generate_patch(const GeneratorSpec& spec, const Eigen::VectorXd& z);
// Chain-rule pullback of a patch gradient onto the latent.
Eigen::VectorXd generate_patch_backward(const GeneratorSpec& spec, const Eigen::VectorXd& z,
                                        const Image& d_patch);

}  // namespace uvtex
