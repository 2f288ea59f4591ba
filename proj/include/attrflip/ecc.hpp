#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "attrflip/core.hpp"

namespace attrflip {

// 3x3 projective warp, normalized so the bottom-right entry is 1.
struct Homography {
  std::array<double, 9> h{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Homography identity() { return Homography{}; }

  static Homography from_params(const std::array<double, 8>& p) {
    Homography m;
    m.h = {1.0 + p[0], p[1], p[2], p[3], 1.0 + p[4], p[5], p[6], p[7], 1.0};
    return m;
  }

  // maps (x, y) to (u, v); returns false when the denominator degenerates
  bool apply(double x, double y, double& u, double& v) const {
    const double d = h[6] * x + h[7] * y + h[8];
    if (std::fabs(d) < 1e-12) return false;
    u = (h[0] * x + h[1] * y + h[2]) / d;
    v = (h[3] * x + h[4] * y + h[5]) / d;
    return true;
  }

  bool is_identity(double tol = 0.0) const {
    const Homography id;
    for (int i = 0; i < 9; ++i)
      if (std::fabs(h[static_cast<std::size_t>(i)] - id.h[static_cast<std::size_t>(i)]) > tol)
        return false;
    return true;
  }
};

struct EccConfig {
  int max_iters = 100;
  double epsilon = 1e-6;           // stop when the correlation gain drops below this
  double accept_correlation = 0.9; // alignment counts as converged at or above this
  int min_valid_pixels = 32;
};

struct EccResult {
  Homography warp;
  ImageTensor warped;               // moving image resampled through `warp`
  std::vector<std::uint8_t> valid;  // H*W, 0 where the warp sampled out of bounds
  double correlation = 0.0;
  bool converged = false;
  int iterations = 0;
};

namespace detail {

inline double bilinear(const std::vector<double>& img, int h, int w, double u, double v) {
  int ix = static_cast<int>(std::floor(u));
  int iy = static_cast<int>(std::floor(v));
  if (ix > w - 2) ix = w - 2;
  if (iy > h - 2) iy = h - 2;
  if (ix < 0) ix = 0;
  if (iy < 0) iy = 0;
  const double fx = u - ix, fy = v - iy;
  const double p00 = img[static_cast<std::size_t>(iy) * w + ix];
  const double p01 = img[static_cast<std::size_t>(iy) * w + ix + 1];
  const double p10 = img[static_cast<std::size_t>(iy + 1) * w + ix];
  const double p11 = img[static_cast<std::size_t>(iy + 1) * w + ix + 1];
  return (1 - fy) * ((1 - fx) * p00 + fx * p01) + fy * ((1 - fx) * p10 + fx * p11);
}

inline bool in_bounds(double u, double v, int h, int w) {
  return u >= 0.0 && u <= w - 1.0 && v >= 0.0 && v <= h - 1.0;
}

// zero-mean normalized correlation between the reference and the moving image
// warped by p, over the in-bounds pixels
inline double ecc_correlation(const std::vector<double>& ref, const std::vector<double>& mov,
                              int h, int w, const std::array<double, 8>& p, long* valid_count) {
  const Homography H = Homography::from_params(p);
  double sr = 0.0, sw = 0.0;
  long n = 0;
  std::vector<double> rs, ws;
  rs.reserve(static_cast<std::size_t>(h) * w);
  ws.reserve(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double u, v;
      if (!H.apply(x, y, u, v) || !in_bounds(u, v, h, w)) continue;
      const double rv = ref[static_cast<std::size_t>(y) * w + x];
      const double wv = bilinear(mov, h, w, u, v);
      rs.push_back(rv);
      ws.push_back(wv);
      sr += rv;
      sw += wv;
      ++n;
    }
  if (valid_count) *valid_count = n;
  if (n == 0) return -1.0;
  const double mr = sr / n, mw = sw / n;
  double num = 0.0, dr = 0.0, dw = 0.0;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const double a = rs[i] - mr, b = ws[i] - mw;
    num += a * b;
    dr += a * a;
    dw += b * b;
  }
  const double den = std::sqrt(dr) * std::sqrt(dw);
  if (den < 1e-12) return 0.0;
  return num / den;
}

// solves A x = b for an 8x8 symmetric system; false when singular
inline bool solve8(std::array<std::array<double, 8>, 8>& A, std::array<double, 8>& b,
                   std::array<double, 8>& x) {
  for (int col = 0; col < 8; ++col) {
    int piv = col;
    for (int r = col + 1; r < 8; ++r)
      if (std::fabs(A[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)]) >
          std::fabs(A[static_cast<std::size_t>(piv)][static_cast<std::size_t>(col)]))
        piv = r;
    if (std::fabs(A[static_cast<std::size_t>(piv)][static_cast<std::size_t>(col)]) < 1e-12)
      return false;
    std::swap(A[static_cast<std::size_t>(piv)], A[static_cast<std::size_t>(col)]);
    std::swap(b[static_cast<std::size_t>(piv)], b[static_cast<std::size_t>(col)]);
    const double d = A[static_cast<std::size_t>(col)][static_cast<std::size_t>(col)];
    for (int r = col + 1; r < 8; ++r) {
      const double f = A[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)] / d;
      if (f == 0.0) continue;
      for (int c2 = col; c2 < 8; ++c2)
        A[static_cast<std::size_t>(r)][static_cast<std::size_t>(c2)] -=
            f * A[static_cast<std::size_t>(col)][static_cast<std::size_t>(c2)];
      b[static_cast<std::size_t>(r)] -= f * b[static_cast<std::size_t>(col)];
    }
  }
  for (int r = 7; r >= 0; --r) {
    double s = b[static_cast<std::size_t>(r)];
    for (int c2 = r + 1; c2 < 8; ++c2)
      s -= A[static_cast<std::size_t>(r)][static_cast<std::size_t>(c2)] *
           x[static_cast<std::size_t>(c2)];
    x[static_cast<std::size_t>(r)] = s / A[static_cast<std::size_t>(r)][static_cast<std::size_t>(r)];
  }
  return true;
}

inline void image_gradients(const std::vector<double>& img, int h, int w,
                            std::vector<double>& gx, std::vector<double>& gy) {
  gx.assign(img.size(), 0.0);
  gy.assign(img.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int xm = x > 0 ? x - 1 : 0, xp = x < w - 1 ? x + 1 : w - 1;
      const int ym = y > 0 ? y - 1 : 0, yp = y < h - 1 ? y + 1 : h - 1;
      gx[static_cast<std::size_t>(y) * w + x] =
          (img[static_cast<std::size_t>(y) * w + xp] - img[static_cast<std::size_t>(y) * w + xm]) /
          (xp - xm);
      gy[static_cast<std::size_t>(y) * w + x] =
          (img[static_cast<std::size_t>(yp) * w + x] - img[static_cast<std::size_t>(ym) * w + x]) /
          (yp - ym);
    }
}

}  // namespace detail

// Resamples every channel of `img` through H; `valid` marks in-bounds pixels.
inline ImageTensor warp_image(const ImageTensor& img, const Homography& H,
                              std::vector<std::uint8_t>& valid) {
  ImageTensor out = ImageTensor::zeros(img.height, img.width, img.channels);
  valid.assign(static_cast<std::size_t>(img.height) * img.width, 0);
  std::vector<std::vector<double>> planes(static_cast<std::size_t>(img.channels));
  for (int c = 0; c < img.channels; ++c) {
    auto& pl = planes[static_cast<std::size_t>(c)];
    pl.resize(static_cast<std::size_t>(img.height) * img.width);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        pl[static_cast<std::size_t>(y) * img.width + x] = img.at(y, x, c);
  }
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double u, v;
      if (!H.apply(x, y, u, v) || !detail::in_bounds(u, v, img.height, img.width)) continue;
      valid[static_cast<std::size_t>(y) * img.width + x] = 1;
      for (int c = 0; c < img.channels; ++c)
        out.at(y, x, c) =
            detail::bilinear(planes[static_cast<std::size_t>(c)], img.height, img.width, u, v);
    }
  return out;
}

// Aligns `moving` to `reference` by maximizing the zero-mean normalized
// correlation over homography parameters (forward-additive Gauss-Newton on
// luma, bilinear sampling, step halving so accepted iterations never lower
// the correlation). On failure the identity warp is returned with
// converged=false and the caller scores the pair unaligned.
inline EccResult ecc_align(const ImageTensor& reference, const ImageTensor& moving,
                           const EccConfig& cfg = {}) {
  if (!reference.same_shape(moving)) throw ShapeError("ecc_align: image shapes differ");
  const int h = reference.height, w = reference.width;

  EccResult res;
  const auto fail = [&]() {
    res.warp = Homography::identity();
    res.warped = moving;
    res.valid.assign(static_cast<std::size_t>(h) * w, 1);
    res.converged = false;
    return res;
  };

  const std::vector<double> ref = luma(reference);
  const std::vector<double> mov = luma(moving);
  std::vector<double> gx, gy;
  detail::image_gradients(mov, h, w, gx, gy);

  std::array<double, 8> p{};  // identity
  long valid_count = 0;
  double rho = detail::ecc_correlation(ref, mov, h, w, p, &valid_count);
  const double rho_identity = rho;
  if (valid_count < cfg.min_valid_pixels) return fail();

  std::array<double, 8> best_p = p;
  double best_rho = rho;

  std::vector<std::array<double, 8>> jac(static_cast<std::size_t>(h) * w);
  std::vector<double> wvals(static_cast<std::size_t>(h) * w), rvals(static_cast<std::size_t>(h) * w);

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    ++res.iterations;
    const Homography H = Homography::from_params(p);
    long n = 0;
    double sw = 0.0, sr = 0.0;
    std::array<double, 8> jsum{};
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double u, v;
        if (!H.apply(x, y, u, v) || !detail::in_bounds(u, v, h, w)) continue;
        const double d = p[6] * x + p[7] * y + 1.0;
        const double wv = detail::bilinear(mov, h, w, u, v);
        const double gxv = detail::bilinear(gx, h, w, u, v);
        const double gyv = detail::bilinear(gy, h, w, u, v);
        std::array<double, 8>& J = jac[static_cast<std::size_t>(n)];
        J[0] = gxv * x / d;
        J[1] = gxv * y / d;
        J[2] = gxv / d;
        J[3] = gyv * x / d;
        J[4] = gyv * y / d;
        J[5] = gyv / d;
        J[6] = -(gxv * u + gyv * v) * x / d;
        J[7] = -(gxv * u + gyv * v) * y / d;
        wvals[static_cast<std::size_t>(n)] = wv;
        rvals[static_cast<std::size_t>(n)] = ref[static_cast<std::size_t>(y) * w + x];
        sw += wv;
        sr += rvals[static_cast<std::size_t>(n)];
        for (int k = 0; k < 8; ++k) jsum[static_cast<std::size_t>(k)] += J[static_cast<std::size_t>(k)];
        ++n;
      }
    if (n < cfg.min_valid_pixels) break;

    const double mw = sw / n, mr = sr / n;
    double nw2 = 0.0, nr2 = 0.0;
    for (long i = 0; i < n; ++i) {
      const double a = wvals[static_cast<std::size_t>(i)] - mw;
      const double b = rvals[static_cast<std::size_t>(i)] - mr;
      nw2 += a * a;
      nr2 += b * b;
    }
    const double nw = std::sqrt(nw2), nr = std::sqrt(nr2);
    if (nw < 1e-9 || nr < 1e-9) return fail();  // constant image, no signal to align

    std::array<double, 8> jmean;
    for (int k = 0; k < 8; ++k) jmean[static_cast<std::size_t>(k)] = jsum[static_cast<std::size_t>(k)] / n;

    // s = w_hat^T J_zm
    std::array<double, 8> s{};
    for (long i = 0; i < n; ++i) {
      const double what = (wvals[static_cast<std::size_t>(i)] - mw) / nw;
      for (int k = 0; k < 8; ++k)
        s[static_cast<std::size_t>(k)] +=
            what * (jac[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] -
                    jmean[static_cast<std::size_t>(k)]);
    }

    // normal equations for the normalized residual w_hat - r_hat
    std::array<std::array<double, 8>, 8> A{};
    std::array<double, 8> b{};
    for (long i = 0; i < n; ++i) {
      const double what = (wvals[static_cast<std::size_t>(i)] - mw) / nw;
      const double rhat = (rvals[static_cast<std::size_t>(i)] - mr) / nr;
      std::array<double, 8> jn;
      for (int k = 0; k < 8; ++k)
        jn[static_cast<std::size_t>(k)] =
            (jac[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] -
             jmean[static_cast<std::size_t>(k)] - what * s[static_cast<std::size_t>(k)]) /
            nw;
      const double e = what - rhat;
      for (int r = 0; r < 8; ++r) {
        b[static_cast<std::size_t>(r)] -= jn[static_cast<std::size_t>(r)] * e;
        for (int c2 = r; c2 < 8; ++c2)
          A[static_cast<std::size_t>(r)][static_cast<std::size_t>(c2)] +=
              jn[static_cast<std::size_t>(r)] * jn[static_cast<std::size_t>(c2)];
      }
    }
    for (int r = 0; r < 8; ++r)
      for (int c2 = 0; c2 < r; ++c2)
        A[static_cast<std::size_t>(r)][static_cast<std::size_t>(c2)] =
            A[static_cast<std::size_t>(c2)][static_cast<std::size_t>(r)];

    std::array<double, 8> delta;
    if (!detail::solve8(A, b, delta)) return fail();

    // step-halving line search, accept only strict improvement
    bool accepted = false;
    double rho_new = rho;
    for (int half = 0; half < 9 && !accepted; ++half) {
      const double alpha = std::ldexp(1.0, -half);
      std::array<double, 8> cand;
      for (int k = 0; k < 8; ++k)
        cand[static_cast<std::size_t>(k)] =
            p[static_cast<std::size_t>(k)] + alpha * delta[static_cast<std::size_t>(k)];
      long cn = 0;
      const double cr = detail::ecc_correlation(ref, mov, h, w, cand, &cn);
      if (cn >= cfg.min_valid_pixels && cr > rho) {
        p = cand;
        rho_new = cr;
        accepted = true;
      }
    }
    if (!accepted) break;
    const double gain = rho_new - rho;
    rho = rho_new;
    if (rho > best_rho) {
      best_rho = rho;
      best_p = p;
    }
    if (gain < cfg.epsilon) break;
  }

  res.correlation = best_rho;
  res.converged =
      best_rho >= cfg.accept_correlation || best_rho >= rho_identity + cfg.epsilon;
  if (!res.converged) return fail();
  res.warp = Homography::from_params(best_p);
  res.warped = warp_image(moving, res.warp, res.valid);
  return res;
}

}  // namespace attrflip
