#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "attrflip/core.hpp"
#include "attrflip/dataset.hpp"
#include "attrflip/rng.hpp"

namespace attrflip {

// Procedural stand-in for a face-attribute corpus. Attributes are rendered
// as image features chosen so that some are global (brightness, hue) and
// some local (bar, disk, checker), and labels can be correlated pairwise
// through a Gaussian copula.
enum class AttributeGenerator { brightness, vertical_bar, disk, checker, hue_shift };

inline std::string to_string(AttributeGenerator g) {
  switch (g) {
    case AttributeGenerator::brightness: return "brightness";
    case AttributeGenerator::vertical_bar: return "vertical_bar";
    case AttributeGenerator::disk: return "disk";
    case AttributeGenerator::checker: return "checker";
    case AttributeGenerator::hue_shift: return "hue_shift";
  }
  return "?";
}

inline AttributeGenerator attribute_generator_from_string(const std::string& s) {
  if (s == "brightness") return AttributeGenerator::brightness;
  if (s == "vertical_bar") return AttributeGenerator::vertical_bar;
  if (s == "disk") return AttributeGenerator::disk;
  if (s == "checker") return AttributeGenerator::checker;
  if (s == "hue_shift") return AttributeGenerator::hue_shift;
  throw ConfigError("unknown attribute generator: " + s);
}

struct SynthAttribute {
  std::string name;
  AttributeGenerator kind = AttributeGenerator::brightness;
};

struct SynthConfig {
  int height = 32, width = 32, channels = 3;
  std::vector<SynthAttribute> attributes;
  // Desired label correlation (M x M, symmetric, unit diagonal). Empty means
  // independent attributes.
  std::vector<std::vector<double>> label_correlation;
  int train_count = 600, val_count = 100, test_count = 200;
  double noise_amplitude = 4.0;
  std::uint64_t seed = 1;

  int attribute_count() const { return static_cast<int>(attributes.size()); }

  void validate() const {
    if (height < 16 || width < 16) throw ConfigError("synth images must be at least 16x16");
    if (channels != 1 && channels != 3) throw ConfigError("synth channels must be 1 or 3");
    if (attributes.empty()) throw ConfigError("synth needs at least one attribute");
    if (train_count <= 0 || val_count <= 0 || test_count <= 0)
      throw ConfigError("synth split counts must be > 0");
    if (noise_amplitude < 0.0) throw ConfigError("noise amplitude must be >= 0");
    for (std::size_t i = 0; i < attributes.size(); ++i)
      for (std::size_t j = i + 1; j < attributes.size(); ++j) {
        if (attributes[i].kind == attributes[j].kind)
          throw ConfigError("each attribute generator may be used only once");
        if (attributes[i].name == attributes[j].name)
          throw ConfigError("duplicate attribute name: " + attributes[i].name);
      }
    if (channels == 1)
      for (const auto& a : attributes)
        if (a.kind == AttributeGenerator::hue_shift)
          throw ConfigError("hue_shift requires 3 channels");
    if (!label_correlation.empty()) {
      const std::size_t m = attributes.size();
      if (label_correlation.size() != m) throw ConfigError("correlation matrix must be M x M");
      for (std::size_t i = 0; i < m; ++i) {
        if (label_correlation[i].size() != m)
          throw ConfigError("correlation matrix must be M x M");
        if (std::fabs(label_correlation[i][i] - 1.0) > 1e-12)
          throw ConfigError("correlation matrix diagonal must be 1");
        for (std::size_t j = 0; j < m; ++j) {
          if (std::fabs(label_correlation[i][j] - label_correlation[j][i]) > 1e-12)
            throw ConfigError("correlation matrix must be symmetric");
          if (label_correlation[i][j] < -1.0 || label_correlation[i][j] > 1.0)
            throw ConfigError("correlation entries must lie in [-1, 1]");
        }
      }
    }
  }

  std::vector<std::string> attribute_names() const {
    std::vector<std::string> names;
    for (const auto& a : attributes) names.push_back(a.name);
    return names;
  }
};

inline SynthConfig default_synth_config() {
  SynthConfig c;
  c.attributes = {{"bright", AttributeGenerator::brightness},
                  {"bar", AttributeGenerator::vertical_bar},
                  {"disk", AttributeGenerator::disk},
                  {"checker", AttributeGenerator::checker},
                  {"warm", AttributeGenerator::hue_shift}};
  return c;
}

namespace detail {

// Cholesky factor allowing positive semi-definite input (rank deficiency is
// how a correlation of exactly 1 degenerates into identical labels).
inline std::vector<std::vector<double>> cholesky_psd(
    const std::vector<std::vector<double>>& a) {
  const std::size_t n = a.size();
  std::vector<std::vector<double>> L(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j][j];
    for (std::size_t k = 0; k < j; ++k) d -= L[j][k] * L[j][k];
    if (d < -1e-9)
      throw ConfigError("correlation matrix is not realizable by the Gaussian copula");
    L[j][j] = d > 0.0 ? std::sqrt(d) : 0.0;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= L[i][k] * L[j][k];
      L[i][j] = L[j][j] > 1e-12 ? s / L[j][j] : 0.0;
    }
  }
  return L;
}

// Threshold-at-zero of jointly normal variables gives label correlation
// (2/pi) asin(rho_z); invert so the requested label correlation comes out.
inline std::vector<std::vector<double>> copula_factor(const SynthConfig& cfg) {
  const std::size_t m = cfg.attributes.size();
  std::vector<std::vector<double>> z(m, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double rho = cfg.label_correlation.empty() ? (i == j ? 1.0 : 0.0)
                                                       : cfg.label_correlation[i][j];
      z[i][j] = std::sin(1.5707963267948966 * rho);
    }
  return cholesky_psd(z);
}

struct FeatureRegions {
  int bar_x0, bar_w, bar_y0, bar_y1;
  int disk_cx, disk_cy;
  double disk_r;
  int chk_x0, chk_x1, chk_y0, chk_y1, chk_cell;
};

inline FeatureRegions feature_regions(int h, int w) {
  FeatureRegions r;
  r.bar_w = std::max(2, w / 10);
  r.bar_x0 = w / 8;
  r.bar_y0 = h / 8;
  r.bar_y1 = h - h / 8;
  r.disk_cx = (3 * w) / 4;
  r.disk_cy = h / 4;
  r.disk_r = std::max(2.0, std::min(h, w) / 10.0);
  r.chk_cell = std::max(1, w / 16);
  r.chk_x0 = (3 * w) / 8;
  r.chk_x1 = r.chk_x0 + 4 * r.chk_cell;
  r.chk_y0 = (11 * h) / 16;
  r.chk_y1 = r.chk_y0 + 4 * r.chk_cell;
  return r;
}

constexpr double kBrightnessDelta = 22.0;
constexpr double kBarDelta = 60.0;
constexpr double kDiskDelta = 60.0;
constexpr double kCheckerDelta = 48.0;
constexpr double kHueDelta = 25.0;

}  // namespace detail

inline std::vector<std::vector<int>> sample_labels(const SynthConfig& cfg, int count, Rng& rng) {
  cfg.validate();
  const auto L = detail::copula_factor(cfg);
  const std::size_t m = cfg.attributes.size();
  std::vector<std::vector<int>> out(static_cast<std::size_t>(count), std::vector<int>(m));
  std::vector<double> g(m);
  for (auto& row : out) {
    for (double& v : g) v = rng.normal();
    for (std::size_t i = 0; i < m; ++i) {
      double z = 0.0;
      for (std::size_t k = 0; k <= i; ++k) z += L[i][k] * g[k];
      row[i] = z > 0.0 ? 1 : -1;
    }
  }
  return out;
}

inline ImageTensor render_image(const SynthConfig& cfg, const std::vector<int>& labels,
                                Rng& rng) {
  const int h = cfg.height, w = cfg.width, ch = cfg.channels;
  const auto reg = detail::feature_regions(h, w);
  ImageTensor img = ImageTensor::constant(h, w, ch, 128.0);

  for (std::size_t ai = 0; ai < cfg.attributes.size(); ++ai) {
    const double sign = labels[ai] > 0 ? 1.0 : -1.0;
    switch (cfg.attributes[ai].kind) {
      case AttributeGenerator::brightness:
        for (double& p : img.pixels) p += sign * detail::kBrightnessDelta;
        break;
      case AttributeGenerator::vertical_bar:
        for (int y = reg.bar_y0; y < reg.bar_y1; ++y)
          for (int x = reg.bar_x0; x < reg.bar_x0 + reg.bar_w; ++x)
            for (int c = 0; c < ch; ++c) img.at(y, x, c) += sign * detail::kBarDelta;
        break;
      case AttributeGenerator::disk:
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            const double dx = x - reg.disk_cx, dy = y - reg.disk_cy;
            if (dx * dx + dy * dy <= reg.disk_r * reg.disk_r)
              for (int c = 0; c < ch; ++c) img.at(y, x, c) += sign * detail::kDiskDelta;
          }
        break;
      case AttributeGenerator::checker:
        for (int y = reg.chk_y0; y < reg.chk_y1 && y < h; ++y)
          for (int x = reg.chk_x0; x < reg.chk_x1 && x < w; ++x) {
            const int cell = ((x - reg.chk_x0) / reg.chk_cell + (y - reg.chk_y0) / reg.chk_cell);
            const double ph = cell % 2 == 0 ? 1.0 : -1.0;
            for (int c = 0; c < ch; ++c) img.at(y, x, c) += sign * ph * detail::kCheckerDelta;
          }
        break;
      case AttributeGenerator::hue_shift:
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            img.at(y, x, 0) += sign * detail::kHueDelta;
            img.at(y, x, 2) -= sign * detail::kHueDelta;
          }
        break;
    }
  }

  if (cfg.noise_amplitude > 0.0)
    for (double& p : img.pixels) p += rng.uniform(-cfg.noise_amplitude, cfg.noise_amplitude);
  return quantized(img);
}

// Recovers each attribute's label from the rendered pixels via the
// generating predicate. Exact for noise_amplitude 0.
inline std::vector<int> recompute_labels(const SynthConfig& cfg, const ImageTensor& img) {
  const int h = img.height, w = img.width;
  const auto reg = detail::feature_regions(h, w);
  const auto Y = luma(img);
  const auto yat = [&](int y, int x) { return Y[static_cast<std::size_t>(y) * w + x]; };

  std::vector<int> out;
  for (const auto& attr : cfg.attributes) {
    double stat = 0.0;
    switch (attr.kind) {
      case AttributeGenerator::brightness: {
        double s = 0.0;
        for (double v : Y) s += v;
        stat = s / static_cast<double>(Y.size()) - 128.0;
        break;
      }
      case AttributeGenerator::vertical_bar: {
        double bar = 0.0, flank = 0.0;
        long nb = 0, nf = 0;
        for (int y = reg.bar_y0; y < reg.bar_y1; ++y) {
          for (int x = reg.bar_x0; x < reg.bar_x0 + reg.bar_w; ++x, ++nb) bar += yat(y, x);
          for (int x = reg.bar_x0 - reg.bar_w; x < reg.bar_x0; ++x, ++nf) flank += yat(y, x);
          for (int x = reg.bar_x0 + reg.bar_w; x < reg.bar_x0 + 2 * reg.bar_w; ++x, ++nf)
            flank += yat(y, x);
        }
        stat = bar / nb - flank / nf;
        break;
      }
      case AttributeGenerator::disk: {
        double in = 0.0, ring = 0.0;
        long ni = 0, nr = 0;
        const double r2 = reg.disk_r * reg.disk_r;
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            const double dx = x - reg.disk_cx, dy = y - reg.disk_cy;
            const double d2 = dx * dx + dy * dy;
            if (d2 <= r2) {
              in += yat(y, x);
              ++ni;
            } else if (d2 <= 4.0 * r2) {
              ring += yat(y, x);
              ++nr;
            }
          }
        stat = in / ni - ring / nr;
        break;
      }
      case AttributeGenerator::checker: {
        for (int y = reg.chk_y0; y < reg.chk_y1 && y < h; ++y)
          for (int x = reg.chk_x0; x < reg.chk_x1 && x < w; ++x) {
            const int cell = ((x - reg.chk_x0) / reg.chk_cell + (y - reg.chk_y0) / reg.chk_cell);
            stat += (cell % 2 == 0 ? 1.0 : -1.0) * yat(y, x);
          }
        break;
      }
      case AttributeGenerator::hue_shift: {
        double r = 0.0, b = 0.0;
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            r += img.at(y, x, 0);
            b += img.at(y, x, 2);
          }
        stat = r - b;
        break;
      }
    }
    out.push_back(stat > 0.0 ? 1 : -1);
  }
  return out;
}

struct SynthResult {
  AttributeDataset train, val, test;
};

// Deterministic given (config, seed): splits are drawn sequentially from one
// seeded stream in train, val, test order.
inline SynthResult synth_dataset(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SynthResult out;
  const auto names = cfg.attribute_names();
  const auto make_split = [&](const std::string& split, int count) {
    AttributeDataset ds;
    ds.attribute_names = names;
    ds.split = split;
    auto labels = sample_labels(cfg, count, rng);
    ds.items.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      DatasetItem item;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s_%05d", split.c_str(), i);
      item.id = buf;
      item.labels = labels[static_cast<std::size_t>(i)];
      item.image = render_image(cfg, item.labels, rng);
      ds.items.push_back(std::move(item));
    }
    return ds;
  };
  out.train = make_split("train", cfg.train_count);
  out.val = make_split("val", cfg.val_count);
  out.test = make_split("test", cfg.test_count);
  return out;
}

}  // namespace attrflip
