#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "attrflip/core.hpp"
#include "attrflip/dataset.hpp"
#include "attrflip/rng.hpp"

namespace attrflip {

enum class Activation { identity, relu, tanh_act };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh_act: return "tanh";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh_act;
  throw ConfigError("unknown activation: " + s);
}

enum class LayerKind { dense, conv, avgpool };

inline std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv: return "conv";
    case LayerKind::avgpool: return "avgpool";
  }
  return "?";
}

inline LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "dense") return LayerKind::dense;
  if (s == "conv") return LayerKind::conv;
  if (s == "avgpool") return LayerKind::avgpool;
  throw ConfigError("unknown layer kind: " + s);
}

// One layer. dense: in/out are vector sizes. conv: in/out are channel counts,
// square kernel, stride 1, valid padding. avgpool: non-overlapping kernel x
// kernel windows; spatial dims must divide evenly. `in` is resolved from the
// preceding shape by validate(), so configs only need to state out/kernel.
struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  Activation activation = Activation::identity;
  int in = 0;
  int out = 0;
  int kernel = 0;
};

struct Shape3 {
  int h = 1, w = 1, c = 1;
  int count() const { return h * w * c; }
};

// Differentiable feed-forward classifier. Weights are a flat array in layer
// declaration order (dense: W row-major out x in, then bias; conv: W indexed
// [oc][ic][ky][kx], then bias). Activations flow in HWC order.
struct ClassifierModel {
  int input_height = 0, input_width = 0, input_channels = 0;
  HeadKind head = HeadKind::euclidean_single;
  int attribute_count = 1;
  std::vector<std::string> attribute_names;
  double input_scale = 1.0;             // applied before the first layer
  std::vector<double> input_mean;       // per-channel shift, empty = none
  std::vector<LayerSpec> layers;
  std::vector<double> weights;
  int epoch_counter = 0;
  std::uint64_t seed = 0;

  int output_dim() const {
    switch (head) {
      case HeadKind::euclidean_single: return 1;
      case HeadKind::euclidean_multi: return attribute_count;
      case HeadKind::softmax_logits: return 2 * attribute_count;
    }
    return 0;
  }

  Shape3 input_shape() const { return {input_height, input_width, input_channels}; }
};

inline std::size_t layer_weight_count(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::dense: return static_cast<std::size_t>(l.in) * l.out + l.out;
    case LayerKind::conv:
      return static_cast<std::size_t>(l.out) * l.in * l.kernel * l.kernel + l.out;
    case LayerKind::avgpool: return 0;
  }
  return 0;
}

// Shape entering each layer plus the final output shape, with architecture
// validation. Pure; the implied dense/conv input sizes are returned via the
// optional resolved copy used by finalize_model().
inline std::vector<Shape3> layer_shapes(const ClassifierModel& m,
                                        std::vector<LayerSpec>* resolved = nullptr) {
  if (m.input_height <= 0 || m.input_width <= 0 ||
      (m.input_channels != 1 && m.input_channels != 3))
    throw ConfigError("model input shape must be HxWx{1|3}");
  if (m.head == HeadKind::euclidean_single && m.attribute_count != 1)
    throw ConfigError("euclidean_single head requires attribute_count == 1");
  if (!m.input_mean.empty() && static_cast<int>(m.input_mean.size()) != m.input_channels)
    throw ConfigError("input_mean size must match channel count");

  if (resolved) *resolved = m.layers;
  std::vector<Shape3> shapes;
  Shape3 s = m.input_shape();
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const LayerSpec& l = m.layers[li];
    shapes.push_back(s);
    int in = 0, out = l.out;
    switch (l.kind) {
      case LayerKind::dense:
        in = s.count();
        if (l.out <= 0) throw ConfigError("dense layer needs positive output size");
        s = {1, 1, l.out};
        break;
      case LayerKind::conv:
        in = s.c;
        if (l.kernel <= 0 || l.out <= 0) throw ConfigError("conv layer needs kernel and out");
        if (s.h < l.kernel || s.w < l.kernel)
          throw ConfigError("conv kernel larger than its input");
        s = {s.h - l.kernel + 1, s.w - l.kernel + 1, l.out};
        break;
      case LayerKind::avgpool:
        if (l.kernel <= 1) throw ConfigError("avgpool needs kernel > 1");
        if (s.h % l.kernel != 0 || s.w % l.kernel != 0)
          throw ConfigError("avgpool input dims must divide by the kernel");
        if (l.activation != Activation::identity)
          throw ConfigError("avgpool does not take an activation");
        in = s.c;
        out = s.c;
        s = {s.h / l.kernel, s.w / l.kernel, s.c};
        break;
    }
    if (l.in != 0 && l.in != in)
      throw ConfigError("layer " + std::to_string(li) + " declares input size " +
                        std::to_string(l.in) + " but receives " + std::to_string(in));
    if (resolved) {
      (*resolved)[li].in = in;
      (*resolved)[li].out = out;
    }
  }
  shapes.push_back(s);
  if (s.count() != m.output_dim())
    throw ConfigError("final layer size " + std::to_string(s.count()) +
                      " does not match head output " + std::to_string(m.output_dim()));
  return shapes;
}

// Fills in the derived layer input sizes; call once after construction.
inline void finalize_model(ClassifierModel& m) {
  std::vector<LayerSpec> resolved;
  layer_shapes(m, &resolved);
  m.layers = std::move(resolved);
}

inline std::size_t total_weight_count(const ClassifierModel& m) {
  std::size_t n = 0;
  for (const auto& l : m.layers) n += layer_weight_count(l);
  return n;
}

inline void init_weights(ClassifierModel& m, Rng& rng) {
  m.weights.assign(total_weight_count(m), 0.0);
  std::size_t off = 0;
  for (const auto& l : m.layers) {
    std::size_t nw = layer_weight_count(l);
    if (nw == 0) continue;
    int fan_in = l.kind == LayerKind::dense ? l.in : l.in * l.kernel * l.kernel;
    int fan_out = l.kind == LayerKind::dense ? l.out : l.out * l.kernel * l.kernel;
    double std_dev = l.activation == Activation::relu
                         ? std::sqrt(2.0 / fan_in)
                         : std::sqrt(2.0 / (fan_in + fan_out));
    std::size_t n_kernel = nw - static_cast<std::size_t>(l.out);
    for (std::size_t i = 0; i < n_kernel; ++i) m.weights[off + i] = rng.normal(0.0, std_dev);
    // biases start at zero
    off += nw;
  }
}

// Builds, validates and initializes a model in one step.
inline ClassifierModel make_model(int h, int w, int c, HeadKind head, int attribute_count,
                                  std::vector<LayerSpec> layers, std::uint64_t seed,
                                  double input_scale = 1.0,
                                  std::vector<double> input_mean = {}) {
  ClassifierModel m;
  m.input_height = h;
  m.input_width = w;
  m.input_channels = c;
  m.head = head;
  m.attribute_count = attribute_count;
  m.input_scale = input_scale;
  m.input_mean = std::move(input_mean);
  m.layers = std::move(layers);
  m.seed = seed;
  finalize_model(m);
  Rng rng(seed);
  init_weights(m, rng);
  return m;
}

namespace detail {

inline double activate(double v, Activation a) {
  switch (a) {
    case Activation::identity: return v;
    case Activation::relu: return v > 0.0 ? v : 0.0;
    case Activation::tanh_act: return std::tanh(v);
  }
  return v;
}

// derivative expressed through the pre-activation value
inline double activate_grad(double pre, Activation a) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::tanh_act: {
      double t = std::tanh(pre);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

struct ForwardTrace {
  std::vector<std::vector<double>> inputs;  // value entering each layer
  std::vector<std::vector<double>> pre;     // pre-activation output of each layer
  std::vector<double> output;
};

inline void check_input(const ClassifierModel& m, const ImageTensor& x) {
  if (x.height != m.input_height || x.width != m.input_width || x.channels != m.input_channels)
    throw ShapeError("input image shape does not match the model input shape");
  if (m.weights.size() != total_weight_count(m))
    throw ConfigError("model weight array does not match its layer spec (not finalized?)");
}

inline std::vector<double> transform_input(const ClassifierModel& m, const ImageTensor& x) {
  std::vector<double> v(x.pixels.size());
  const bool shift = !m.input_mean.empty();
  for (std::size_t i = 0; i < v.size(); ++i) {
    double p = x.pixels[i];
    if (shift) p -= m.input_mean[i % m.input_channels];
    v[i] = p * m.input_scale;
  }
  return v;
}

inline ForwardTrace forward_trace(const ClassifierModel& m, const ImageTensor& x,
                                  const std::vector<Shape3>& shapes) {
  check_input(m, x);
  ForwardTrace tr;
  tr.inputs.resize(m.layers.size());
  tr.pre.resize(m.layers.size());

  std::vector<double> cur = transform_input(m, x);
  std::size_t off = 0;
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const LayerSpec& l = m.layers[li];
    const Shape3 in_s = shapes[li];
    tr.inputs[li] = cur;
    std::vector<double> pre;
    switch (l.kind) {
      case LayerKind::dense: {
        pre.assign(static_cast<std::size_t>(l.out), 0.0);
        const double* W = m.weights.data() + off;
        const double* b = W + static_cast<std::size_t>(l.in) * l.out;
        for (int o = 0; o < l.out; ++o) {
          double s = b[o];
          const double* row = W + static_cast<std::size_t>(o) * l.in;
          for (int i = 0; i < l.in; ++i) s += row[i] * cur[static_cast<std::size_t>(i)];
          pre[static_cast<std::size_t>(o)] = s;
        }
        break;
      }
      case LayerKind::conv: {
        const int k = l.kernel;
        const int oh = in_s.h - k + 1, ow = in_s.w - k + 1;
        pre.assign(static_cast<std::size_t>(oh) * ow * l.out, 0.0);
        const double* W = m.weights.data() + off;
        const double* b = W + static_cast<std::size_t>(l.out) * l.in * k * k;
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox)
            for (int oc = 0; oc < l.out; ++oc) {
              double s = b[oc];
              for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                  const double* in_px =
                      cur.data() +
                      (static_cast<std::size_t>(oy + ky) * in_s.w + (ox + kx)) * in_s.c;
                  const double* w_px =
                      W + ((static_cast<std::size_t>(oc) * l.in) * k + ky) * k + kx;
                  for (int ic = 0; ic < l.in; ++ic)
                    s += in_px[ic] * w_px[static_cast<std::size_t>(ic) * k * k];
                }
              pre[(static_cast<std::size_t>(oy) * ow + ox) * l.out + oc] = s;
            }
        break;
      }
      case LayerKind::avgpool: {
        const int k = l.kernel;
        const int oh = in_s.h / k, ow = in_s.w / k;
        const double inv = 1.0 / (k * k);
        pre.assign(static_cast<std::size_t>(oh) * ow * in_s.c, 0.0);
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox)
            for (int c = 0; c < in_s.c; ++c) {
              double s = 0.0;
              for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx)
                  s += cur[(static_cast<std::size_t>(oy * k + ky) * in_s.w + (ox * k + kx)) *
                               in_s.c +
                           c];
              pre[(static_cast<std::size_t>(oy) * ow + ox) * in_s.c + c] = s * inv;
            }
        break;
      }
    }
    cur.resize(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) cur[i] = activate(pre[i], l.activation);
    tr.pre[li] = std::move(pre);
    off += layer_weight_count(l);
  }
  tr.output = std::move(cur);
  return tr;
}

}  // namespace detail

inline ScoreVector forward(const ClassifierModel& m, const ImageTensor& x) {
  auto shapes = layer_shapes(m);
  auto tr = detail::forward_trace(m, x, shapes);
  return ScoreVector{m.head, std::move(tr.output)};
}

struct BackpropResult {
  double loss = 0.0;                // filled by callers that know the loss
  std::vector<double> input_grad;   // d loss / d raw pixel
  std::vector<double> param_grad;   // d loss / d weight, flat layout
};

// Backpropagates d loss / d scores to the input pixels and/or the weights.
inline BackpropResult backprop(const ClassifierModel& m, const ImageTensor& x,
                               const std::vector<double>& dscore, bool want_input,
                               bool want_param) {
  auto shapes = layer_shapes(m);
  auto tr = detail::forward_trace(m, x, shapes);
  if (dscore.size() != tr.output.size()) throw ShapeError("dscore size mismatch");

  BackpropResult res;
  if (want_param) res.param_grad.assign(m.weights.size(), 0.0);

  std::vector<std::size_t> offsets(m.layers.size());
  {
    std::size_t off = 0;
    for (std::size_t li = 0; li < m.layers.size(); ++li) {
      offsets[li] = off;
      off += layer_weight_count(m.layers[li]);
    }
  }

  std::vector<double> delta = dscore;
  for (int li = static_cast<int>(m.layers.size()) - 1; li >= 0; --li) {
    const LayerSpec& l = m.layers[static_cast<std::size_t>(li)];
    const Shape3 in_s = shapes[static_cast<std::size_t>(li)];
    const auto& pre = tr.pre[static_cast<std::size_t>(li)];
    const auto& input = tr.inputs[static_cast<std::size_t>(li)];
    if (l.kind != LayerKind::avgpool)
      for (std::size_t i = 0; i < delta.size(); ++i)
        delta[i] *= detail::activate_grad(pre[i], l.activation);

    std::vector<double> prev(input.size(), 0.0);
    const std::size_t off = offsets[static_cast<std::size_t>(li)];
    switch (l.kind) {
      case LayerKind::dense: {
        const double* W = m.weights.data() + off;
        double* gW = want_param ? res.param_grad.data() + off : nullptr;
        double* gb = want_param ? gW + static_cast<std::size_t>(l.in) * l.out : nullptr;
        for (int o = 0; o < l.out; ++o) {
          const double d = delta[static_cast<std::size_t>(o)];
          const double* row = W + static_cast<std::size_t>(o) * l.in;
          if (want_param) {
            gb[o] += d;
            double* grow = gW + static_cast<std::size_t>(o) * l.in;
            for (int i = 0; i < l.in; ++i) grow[i] += d * input[static_cast<std::size_t>(i)];
          }
          for (int i = 0; i < l.in; ++i) prev[static_cast<std::size_t>(i)] += d * row[i];
        }
        break;
      }
      case LayerKind::conv: {
        const int k = l.kernel;
        const int oh = in_s.h - k + 1, ow = in_s.w - k + 1;
        const double* W = m.weights.data() + off;
        double* gW = want_param ? res.param_grad.data() + off : nullptr;
        double* gb = want_param ? gW + static_cast<std::size_t>(l.out) * l.in * k * k : nullptr;
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox)
            for (int oc = 0; oc < l.out; ++oc) {
              const double d = delta[(static_cast<std::size_t>(oy) * ow + ox) * l.out + oc];
              if (d == 0.0) continue;
              if (want_param) gb[oc] += d;
              for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                  const std::size_t px =
                      (static_cast<std::size_t>(oy + ky) * in_s.w + (ox + kx)) * in_s.c;
                  const std::size_t wx =
                      ((static_cast<std::size_t>(oc) * l.in) * k + ky) * k + kx;
                  for (int ic = 0; ic < l.in; ++ic) {
                    prev[px + ic] += d * W[wx + static_cast<std::size_t>(ic) * k * k];
                    if (want_param)
                      gW[wx + static_cast<std::size_t>(ic) * k * k] += d * input[px + ic];
                  }
                }
            }
        break;
      }
      case LayerKind::avgpool: {
        const int k = l.kernel;
        const int oh = in_s.h / k, ow = in_s.w / k;
        const double inv = 1.0 / (k * k);
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox)
            for (int c = 0; c < in_s.c; ++c) {
              const double d =
                  delta[(static_cast<std::size_t>(oy) * ow + ox) * in_s.c + c] * inv;
              for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx)
                  prev[(static_cast<std::size_t>(oy * k + ky) * in_s.w + (ox * k + kx)) *
                           in_s.c +
                       c] += d;
            }
        break;
      }
    }
    delta = std::move(prev);
  }

  if (want_input) {
    res.input_grad = std::move(delta);
    for (double& g : res.input_grad) g *= m.input_scale;  // chain through the input transform
  }
  return res;
}

// ---- losses --------------------------------------------------------------

namespace detail {

inline void check_labels(const ClassifierModel& m, const std::vector<int>& y) {
  if (static_cast<int>(y.size()) != m.attribute_count)
    throw ShapeError("label dimension does not match the model attribute count");
  for (int v : y)
    if (v != -1 && v != 1) throw ConfigError("labels must be -1 or +1");
}

inline double softmax_ce(double z_absent, double z_present, int y, double* d_absent,
                         double* d_present) {
  const double mx = z_absent > z_present ? z_absent : z_present;
  const double ea = std::exp(z_absent - mx), ep = std::exp(z_present - mx);
  const double zsum = ea + ep;
  const double p_absent = ea / zsum, p_present = ep / zsum;
  if (d_absent) {
    *d_absent = p_absent - (y < 0 ? 1.0 : 0.0);
    *d_present = p_present - (y > 0 ? 1.0 : 0.0);
  }
  const double z_true = y > 0 ? z_present : z_absent;
  return (mx + std::log(zsum)) - z_true;
}

}  // namespace detail

// Training loss against ground-truth labels. Euclidean heads use the squared
// distance between scores and +-1 labels; the softmax head sums two-way
// cross-entropies over attributes.
inline double label_loss(const ScoreVector& f, const std::vector<int>& y) {
  switch (f.head) {
    case HeadKind::euclidean_single:
    case HeadKind::euclidean_multi: {
      if (f.scores.size() != y.size()) throw ShapeError("label_loss: dimension mismatch");
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        double d = f.scores[i] - y[i];
        s += d * d;
      }
      return s;
    }
    case HeadKind::softmax_logits: {
      if (f.scores.size() != 2 * y.size()) throw ShapeError("label_loss: dimension mismatch");
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i)
        s += detail::softmax_ce(f.scores[2 * i], f.scores[2 * i + 1], y[i], nullptr, nullptr);
      return s;
    }
  }
  return 0.0;
}

inline std::vector<double> label_loss_dscore(const ScoreVector& f, const std::vector<int>& y) {
  std::vector<double> d(f.scores.size(), 0.0);
  switch (f.head) {
    case HeadKind::euclidean_single:
    case HeadKind::euclidean_multi:
      if (f.scores.size() != y.size()) throw ShapeError("label_loss_dscore: dimension mismatch");
      for (std::size_t i = 0; i < y.size(); ++i) d[i] = 2.0 * (f.scores[i] - y[i]);
      break;
    case HeadKind::softmax_logits:
      if (f.scores.size() != 2 * y.size())
        throw ShapeError("label_loss_dscore: dimension mismatch");
      for (std::size_t i = 0; i < y.size(); ++i)
        detail::softmax_ce(f.scores[2 * i], f.scores[2 * i + 1], y[i], &d[2 * i], &d[2 * i + 1]);
      break;
  }
  return d;
}

// Half squared distance to an arbitrary target score-vector.
inline double target_loss(const ScoreVector& f, const std::vector<double>& target) {
  if (f.scores.size() != target.size()) throw ShapeError("target_loss: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    double d = target[i] - f.scores[i];
    s += d * d;
  }
  return 0.5 * s;
}

inline std::vector<double> target_loss_dscore(const ScoreVector& f,
                                              const std::vector<double>& target) {
  if (f.scores.size() != target.size()) throw ShapeError("target_loss_dscore: dimension mismatch");
  std::vector<double> d(f.scores.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = f.scores[i] - target[i];
  return d;
}

inline double loss(const ClassifierModel& m, const ImageTensor& x, const std::vector<int>& y) {
  detail::check_labels(m, y);
  return label_loss(forward(m, x), y);
}

// Gradient of a loss w.r.t. the input pixels. Either a label loss (y given)
// or a target loss (score-vector target given).
struct LossSpec {
  enum class Kind { vs_label, vs_target } kind = Kind::vs_label;
  std::vector<int> labels;
  std::vector<double> target;

  static LossSpec vs_label(std::vector<int> y) {
    LossSpec s;
    s.kind = Kind::vs_label;
    s.labels = std::move(y);
    return s;
  }
  static LossSpec vs_target(std::vector<double> t) {
    LossSpec s;
    s.kind = Kind::vs_target;
    s.target = std::move(t);
    return s;
  }
};

inline std::vector<double> input_gradient(const ClassifierModel& m, const ImageTensor& x,
                                          const LossSpec& spec) {
  ScoreVector f = forward(m, x);
  std::vector<double> d = spec.kind == LossSpec::Kind::vs_label
                              ? label_loss_dscore(f, spec.labels)
                              : target_loss_dscore(f, spec.target);
  return backprop(m, x, d, true, false).input_grad;
}

// ---- dataset error ---------------------------------------------------------

struct DatasetError {
  std::vector<double> per_attribute;  // error rate in [0,1] per attribute
  double mean = 0.0;                  // average over attributes
  long raw_error_count = 0;           // unnormalized sum of per-sample errors
};

inline DatasetError dataset_error(const ClassifierModel& m, const AttributeDataset& ds) {
  if (ds.items.empty()) throw ConfigError("dataset_error: empty dataset");
  const int M = m.attribute_count;
  if (ds.attribute_count() != M)
    throw ShapeError("dataset_error: dataset attribute count does not match the model");
  DatasetError out;
  out.per_attribute.assign(static_cast<std::size_t>(M), 0.0);
  for (const auto& item : ds.items) {
    std::vector<int> c = classify(forward(m, item.image));
    for (int i = 0; i < M; ++i)
      if (c[static_cast<std::size_t>(i)] != item.labels[static_cast<std::size_t>(i)]) {
        out.per_attribute[static_cast<std::size_t>(i)] += 1.0;
        ++out.raw_error_count;
      }
  }
  const double n = static_cast<double>(ds.items.size());
  for (double& e : out.per_attribute) e /= n;
  for (double e : out.per_attribute) out.mean += e;
  out.mean /= M;
  return out;
}

}  // namespace attrflip
