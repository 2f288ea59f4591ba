#pragma once

#include "attrflip/core.hpp"
#include "attrflip/ecc.hpp"
#include "attrflip/ssim.hpp"

namespace attrflip {

// Perceptual similarity gate: ECC homography alignment of the perturbed
// image onto the original, then SSIM over the aligned pair. Pixels the warp
// pushed out of bounds are excluded from the SSIM mean.
struct PassConfig {
  EccConfig ecc;
  SsimConfig ssim;
  double tau = 0.95;
};

struct PassResult {
  double score = 0.0;
  Homography warp;
  double ecc_correlation = 0.0;
  bool ecc_converged = false;
};

inline PassResult pass_score_full(const ImageTensor& original, const ImageTensor& perturbed,
                                  const PassConfig& cfg = {}) {
  if (!original.same_shape(perturbed)) throw ShapeError("pass_score: image shapes differ");
  PassResult out;
  EccResult ecc = ecc_align(original, perturbed, cfg.ecc);
  out.ecc_converged = ecc.converged;
  out.ecc_correlation = ecc.correlation;
  if (ecc.converged) {
    out.warp = ecc.warp;
    out.score = ssim(original, ecc.warped, cfg.ssim, &ecc.valid);
  } else {
    out.warp = Homography::identity();
    out.score = ssim(original, perturbed, cfg.ssim);
  }
  return out;
}

inline double pass_score(const ImageTensor& original, const ImageTensor& perturbed,
                         const PassConfig& cfg = {}) {
  return pass_score_full(original, perturbed, cfg).score;
}

// tau = 0 disables the perceptual gate entirely (any flip counts).
inline bool is_adversarial_pair(const ImageTensor& original, const ImageTensor& perturbed,
                                double tau, const PassConfig& cfg = {}) {
  if (tau <= 0.0) return true;
  return pass_score(original, perturbed, cfg) >= tau;
}

}  // namespace attrflip
