#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace attrflip {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

// Parse failure with a 1-based line number for locating bad input.
class ParseError : public Error {
public:
  ParseError(const std::string& file, int line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), line_number(line) {}
  int line_number;
};

// H x W x C pixel array, row-major, values nominally in [0, 255].
// Working copies are double; a "quantized" image has integer pixels.
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> pixels;

  static ImageTensor zeros(int h, int w, int c) {
    ImageTensor t;
    t.height = h;
    t.width = w;
    t.channels = c;
    t.pixels.assign(static_cast<std::size_t>(h) * w * c, 0.0);
    return t;
  }

  static ImageTensor constant(int h, int w, int c, double value) {
    ImageTensor t = zeros(h, w, c);
    std::fill(t.pixels.begin(), t.pixels.end(), value);
    return t;
  }

  double& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  std::size_t size() const { return pixels.size(); }

  bool same_shape(const ImageTensor& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  bool is_quantized() const {
    for (double v : pixels) {
      if (v < 0.0 || v > 255.0 || v != std::floor(v)) return false;
    }
    return true;
  }
};

// Round half away from zero, clamp to [0, 255].
inline double quantize_pixel(double v) {
  double r = std::floor(v + 0.5);
  return std::clamp(r, 0.0, 255.0);
}

inline ImageTensor quantized(const ImageTensor& img) {
  ImageTensor out = img;
  for (double& v : out.pixels) v = quantize_pixel(v);
  return out;
}

// Rec. 601 luma; single-channel images pass through.
inline std::vector<double> luma(const ImageTensor& img) {
  std::vector<double> out(static_cast<std::size_t>(img.height) * img.width);
  if (img.channels == 1) {
    out.assign(img.pixels.begin(), img.pixels.end());
    return out;
  }
  if (img.channels != 3) throw ShapeError("luma: expected 1 or 3 channels");
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out[static_cast<std::size_t>(y) * img.width + x] =
          0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
  return out;
}

// Per-image binary labels, every entry -1 or +1.
struct AttributeLabels {
  std::vector<int> values;
  std::vector<std::string> attribute_names;

  void validate() const {
    for (int v : values)
      if (v != -1 && v != 1) throw ConfigError("attribute label must be -1 or +1");
    if (!attribute_names.empty() && attribute_names.size() != values.size())
      throw ShapeError("attribute name count does not match label count");
  }
};

enum class HeadKind { euclidean_single, euclidean_multi, softmax_logits };

inline std::string to_string(HeadKind h) {
  switch (h) {
    case HeadKind::euclidean_single: return "euclidean_single";
    case HeadKind::euclidean_multi: return "euclidean_multi";
    case HeadKind::softmax_logits: return "softmax_logits";
  }
  return "?";
}

inline HeadKind head_kind_from_string(const std::string& s) {
  if (s == "euclidean_single") return HeadKind::euclidean_single;
  if (s == "euclidean_multi") return HeadKind::euclidean_multi;
  if (s == "softmax_logits") return HeadKind::softmax_logits;
  throw ConfigError("unknown head kind: " + s);
}

// Network output f(x). Euclidean heads hold one score per attribute;
// the softmax head holds two logits per attribute as (absent, present).
struct ScoreVector {
  HeadKind head = HeadKind::euclidean_single;
  std::vector<double> scores;

  int attribute_count() const {
    if (head == HeadKind::softmax_logits) return static_cast<int>(scores.size()) / 2;
    return static_cast<int>(scores.size());
  }
};

// Per-attribute decision: +1 if the score is strictly positive, else -1.
// For the softmax head, +1 if the presence logit beats the absence logit.
inline int classify_attribute(const ScoreVector& s, int attribute) {
  if (attribute < 0 || attribute >= s.attribute_count())
    throw ShapeError("classify_attribute: attribute index out of range");
  if (s.head == HeadKind::softmax_logits) {
    double absent = s.scores[2 * attribute];
    double present = s.scores[2 * attribute + 1];
    return present > absent ? 1 : -1;
  }
  return s.scores[attribute] > 0.0 ? 1 : -1;
}

inline std::vector<int> classify(const ScoreVector& s) {
  std::vector<int> out(s.attribute_count());
  for (int i = 0; i < s.attribute_count(); ++i) out[i] = classify_attribute(s, i);
  return out;
}

// FNV-1a, used for stable config/model ids in reports.
inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

}  // namespace attrflip
