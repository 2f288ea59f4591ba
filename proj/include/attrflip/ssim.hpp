#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "attrflip/core.hpp"

namespace attrflip {

struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 255.0;

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

namespace detail {

inline std::vector<double> gaussian_kernel(int window, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(window));
  const double mid = (window - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - mid;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += g[static_cast<std::size_t>(i)];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Separable valid-mode convolution with a 1D kernel applied along rows then
// columns. Output is (h-win+1) x (w-win+1).
inline std::vector<double> conv_valid(const std::vector<double>& img, int h, int w,
                                      const std::vector<double>& k) {
  const int win = static_cast<int>(k.size());
  const int ow = w - win + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < win; ++i)
        s += k[static_cast<std::size_t>(i)] * img[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  const int oh = h - win + 1;
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < win; ++i)
        s += k[static_cast<std::size_t>(i)] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

// SSIM from plain (unweighted) global statistics over the usable pixels.
inline double ssim_global(const ImageTensor& a, const ImageTensor& b, const SsimConfig& cfg,
                          const std::vector<std::uint8_t>* valid) {
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    double ma = 0.0, mb = 0.0;
    long n = 0;
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        if (valid && !(*valid)[static_cast<std::size_t>(y) * a.width + x]) continue;
        ma += a.at(y, x, c);
        mb += b.at(y, x, c);
        ++n;
      }
    if (n == 0) throw ConfigError("ssim: no valid pixels");
    ma /= n;
    mb /= n;
    double va = 0.0, vb = 0.0, cov = 0.0;
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        if (valid && !(*valid)[static_cast<std::size_t>(y) * a.width + x]) continue;
        const double da = a.at(y, x, c) - ma, db = b.at(y, x, c) - mb;
        va += da * da;
        vb += db * db;
        cov += da * db;
      }
    va /= n;
    vb /= n;
    cov /= n;
    total += (2.0 * ma * mb + cfg.c1()) * (2.0 * cov + cfg.c2()) /
             ((ma * ma + mb * mb + cfg.c1()) * (va + vb + cfg.c2()));
  }
  return total / a.channels;
}

}  // namespace detail

// Mean structural similarity with a Gaussian window, valid positioning.
// `valid`, when given, marks usable pixels (H*W); any window touching an
// unusable pixel is dropped from the mean. Images smaller than the window
// fall back to global statistics. Range [-1, 1]; ssim(a, a) == 1 exactly.
inline double ssim(const ImageTensor& a, const ImageTensor& b, const SsimConfig& cfg = {},
                   const std::vector<std::uint8_t>* valid = nullptr) {
  if (!a.same_shape(b)) throw ShapeError("ssim: image shapes differ");
  if (valid && valid->size() != static_cast<std::size_t>(a.height) * a.width)
    throw ShapeError("ssim: valid mask size mismatch");

  const int h = a.height, w = a.width;
  const int win = cfg.window;
  if (h < win || w < win) return detail::ssim_global(a, b, cfg, valid);

  const auto kernel = detail::gaussian_kernel(win, cfg.sigma);
  const int oh = h - win + 1, ow = w - win + 1;

  // window usable iff no covered pixel is invalid
  std::vector<std::uint8_t> window_ok;
  long usable = static_cast<long>(oh) * ow;
  if (valid) {
    window_ok.assign(static_cast<std::size_t>(oh) * ow, 1);
    std::vector<std::uint8_t> row_ok(static_cast<std::size_t>(h) * ow, 1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < ow; ++x) {
        std::uint8_t ok = 1;
        for (int i = 0; i < win && ok; ++i)
          ok = (*valid)[static_cast<std::size_t>(y) * w + x + i];
        row_ok[static_cast<std::size_t>(y) * ow + x] = ok;
      }
    usable = 0;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        std::uint8_t ok = 1;
        for (int i = 0; i < win && ok; ++i) ok = row_ok[static_cast<std::size_t>(y + i) * ow + x];
        window_ok[static_cast<std::size_t>(y) * ow + x] = ok;
        usable += ok;
      }
    if (usable == 0) return detail::ssim_global(a, b, cfg, valid);
  }

  const double C1 = cfg.c1(), C2 = cfg.c2();
  double total = 0.0;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> pa(plane), pb(plane), paa(plane), pbb(plane), pab(plane);
  for (int c = 0; c < a.channels; ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const double va = a.at(y, x, c), vb = b.at(y, x, c);
        pa[i] = va;
        pb[i] = vb;
        paa[i] = va * va;
        pbb[i] = vb * vb;
        pab[i] = va * vb;
      }
    const auto mu1 = detail::conv_valid(pa, h, w, kernel);
    const auto mu2 = detail::conv_valid(pb, h, w, kernel);
    const auto s11 = detail::conv_valid(paa, h, w, kernel);
    const auto s22 = detail::conv_valid(pbb, h, w, kernel);
    const auto s12 = detail::conv_valid(pab, h, w, kernel);

    double acc = 0.0;
    for (std::size_t i = 0; i < mu1.size(); ++i) {
      if (valid && !window_ok[i]) continue;
      const double m1 = mu1[i], m2 = mu2[i];
      const double v1 = s11[i] - m1 * m1;
      const double v2 = s22[i] - m2 * m2;
      const double cv = s12[i] - m1 * m2;
      acc += (2.0 * m1 * m2 + C1) * (2.0 * cv + C2) /
             ((m1 * m1 + m2 * m2 + C1) * (v1 + v2 + C2));
    }
    total += acc / static_cast<double>(usable);
  }
  return total / a.channels;
}

}  // namespace attrflip
