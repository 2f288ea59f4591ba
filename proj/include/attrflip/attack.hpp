#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "attrflip/core.hpp"
#include "attrflip/model.hpp"
#include "attrflip/pass.hpp"

namespace attrflip {

enum class AttackMethod { fgs, ffa };
enum class AttackMode { line_search, iterative };

inline std::string to_string(AttackMethod m) { return m == AttackMethod::fgs ? "fgs" : "ffa"; }
inline std::string to_string(AttackMode m) {
  return m == AttackMode::line_search ? "line_search" : "iterative";
}

inline AttackMethod attack_method_from_string(const std::string& s) {
  if (s == "fgs") return AttackMethod::fgs;
  if (s == "ffa") return AttackMethod::ffa;
  throw ConfigError("unknown attack method: " + s);
}

inline AttackMode attack_mode_from_string(const std::string& s) {
  if (s == "line_search") return AttackMode::line_search;
  if (s == "iterative") return AttackMode::iterative;
  throw ConfigError("unknown attack mode: " + s);
}

struct AttackConfig {
  AttackMethod method = AttackMethod::ffa;
  AttackMode mode = AttackMode::line_search;
  double epsilon_initial = 0.5;
  double epsilon_max = 0.0;  // <= 0 means 1024 * epsilon_initial
  int binary_search_iters = 20;
  int max_iterations = 500;
  double pass_threshold = 0.95;
  int target_attribute = 0;
  bool quantize_result = true;    // off only for abstract fixtures with non-pixel inputs
  bool ffa_literal_ascent = false;

  double effective_epsilon_max() const {
    return epsilon_max > 0.0 ? epsilon_max : 1024.0 * epsilon_initial;
  }

  void validate() const {
    if (epsilon_initial <= 0.0) throw ConfigError("epsilon_initial must be > 0");
    if (pass_threshold <= 0.0 || pass_threshold > 1.0)
      throw ConfigError("pass_threshold must be in (0, 1]");
    if (binary_search_iters < 1) throw ConfigError("binary_search_iters must be >= 1");
    if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
  }
};

// Attack succeeds when the chosen attribute classifies as target_class.
struct FlipGoal {
  int attribute = 0;
  int target_class = -1;
};

inline bool goal_met(const ScoreVector& f, const FlipGoal& g) {
  return classify_attribute(f, g.attribute) == g.target_class;
}

struct AttackOutcome {
  std::string image_id;
  int attribute = 0;
  AttackMethod method = AttackMethod::ffa;
  AttackMode mode = AttackMode::line_search;
  bool natural = false;  // source image was misclassified on this attribute
  std::vector<int> original_classes;
  int original_class = 0;
  bool flipped = false;  // verified by fresh forward passes on the final image
  bool quantization_reverted = false;
  bool is_adversarial = false;  // flipped and pass_score >= threshold
  double pass_score = 0.0;
  bool ecc_converged = true;
  double epsilon = 0.0;  // line-search: minimal flipping step; iterative: Linf of eta
  int iterations = 0;
  int gradient_evals = 0;
  std::string failure_reason;  // empty on success
  ImageTensor perturbed;
  std::vector<double> eta;  // perturbed - original, exact
};

// ---- directions ------------------------------------------------------------

// Elementwise sign of the gradient of the label loss w.r.t. the input.
inline std::vector<double> fgs_direction(const ClassifierModel& m, const ImageTensor& x,
                                         const std::vector<int>& labels) {
  std::vector<double> g = input_gradient(m, x, LossSpec::vs_label(labels));
  for (double& v : g) v = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
  return g;
}

// Target score-vector that zeroes the attacked attribute and keeps the rest.
// On the softmax head the larger of the attribute's two logits goes to zero.
inline ScoreVector ffa_target(const ScoreVector& f, int attribute) {
  if (attribute < 0 || attribute >= f.attribute_count())
    throw ShapeError("ffa_target: attribute index out of range");
  ScoreVector t = f;
  if (f.head == HeadKind::softmax_logits) {
    const int zero_idx =
        classify_attribute(f, attribute) > 0 ? 2 * attribute + 1 : 2 * attribute;
    t.scores[static_cast<std::size_t>(zero_idx)] = 0.0;
  } else {
    t.scores[static_cast<std::size_t>(attribute)] = 0.0;
  }
  return t;
}

// Descent direction of the half squared loss to the flipping target, i.e.
// -grad_x (1/2 ||t_i(x) - f(x)||^2). Needs no ground-truth label.
// `literal_ascent` flips the sign to the raw (non-descending) form.
inline std::vector<double> ffa_direction(const ClassifierModel& m, const ImageTensor& x,
                                         int attribute, bool literal_ascent = false) {
  ScoreVector f = forward(m, x);
  ScoreVector t = ffa_target(f, attribute);
  std::vector<double> d = target_loss_dscore(f, t.scores);  // = grad of the loss in score space
  std::vector<double> g = backprop(m, x, d, true, false).input_grad;
  if (!literal_ascent)
    for (double& v : g) v = -v;
  return g;
}

// ---- flip verification -----------------------------------------------------

// Fresh forward passes on both images; never trusts attack-time scores.
// natural=false: original classifies as y and the perturbed image does not.
// natural=true:  original misclassifies and the perturbed image equals y.
inline bool verify_flip(const ClassifierModel& m, const ImageTensor& original,
                        const ImageTensor& perturbed, const std::vector<int>& ground_truth,
                        int attribute, bool natural) {
  const int y = ground_truth.at(static_cast<std::size_t>(attribute));
  const int c_orig = classify_attribute(forward(m, original), attribute);
  const int c_pert = classify_attribute(forward(m, perturbed), attribute);
  if (natural) return c_orig != y && c_pert == y;
  return c_orig == y && c_pert != y;
}

// ---- line search -----------------------------------------------------------

struct LineSearchResult {
  bool found = false;
  double epsilon = 0.0;
  int forward_evals = 0;
  std::string failure_reason;
};

namespace detail {

inline ImageTensor add_scaled(const ImageTensor& x, const std::vector<double>& d, double eps) {
  ImageTensor out = x;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] += eps * d[i];
  return out;
}

}  // namespace detail

// Doubles epsilon along a fixed direction until the goal trips, then binary
// searches the last bracket. Candidates stay unquantized; the caller
// quantizes the final image once and re-verifies.
inline LineSearchResult line_search_along(const ClassifierModel& m, const ImageTensor& x,
                                          const std::vector<double>& direction,
                                          const AttackConfig& cfg, const FlipGoal& goal) {
  LineSearchResult res;
  if (direction.size() != x.pixels.size())
    throw ShapeError("line_search_along: direction shape mismatch");

  bool all_zero = true;
  for (double v : direction)
    if (v != 0.0) {
      all_zero = false;
      break;
    }

  ++res.forward_evals;
  if (goal_met(forward(m, x), goal)) {  // vacuous attack
    res.found = true;
    res.epsilon = 0.0;
    return res;
  }
  if (all_zero) {
    res.failure_reason = "zero_direction";
    return res;
  }

  const double eps_max = cfg.effective_epsilon_max();
  double lo = 0.0, hi = 0.0;
  bool bracketed = false;
  double eps = cfg.epsilon_initial;
  while (true) {
    ++res.forward_evals;
    if (goal_met(forward(m, detail::add_scaled(x, direction, eps)), goal)) {
      hi = eps;
      bracketed = true;
      break;
    }
    lo = eps;
    if (eps >= eps_max) break;
    eps = std::min(eps * 2.0, eps_max);
  }
  if (!bracketed) {
    res.failure_reason = "epsilon_max_exhausted";
    return res;
  }

  for (int i = 0; i < cfg.binary_search_iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    ++res.forward_evals;
    if (goal_met(forward(m, detail::add_scaled(x, direction, mid)), goal))
      hi = mid;
    else
      lo = mid;
  }
  res.found = true;
  res.epsilon = hi;
  return res;
}

// ---- attack drivers --------------------------------------------------------

namespace detail {

struct AttackSetup {
  FlipGoal goal;
  std::vector<int> original_classes;
  bool natural = false;
  bool have_labels = false;
};

inline AttackSetup attack_setup(const ClassifierModel& m, const ImageTensor& x,
                                const std::vector<int>* labels, const AttackConfig& cfg,
                                const FlipGoal* goal_override) {
  if (cfg.target_attribute < 0 || cfg.target_attribute >= m.attribute_count)
    throw ConfigError("target_attribute out of range");
  if (cfg.method == AttackMethod::fgs && !labels)
    throw ConfigError("FGS requires ground-truth labels");
  AttackSetup s;
  s.original_classes = classify(forward(m, x));
  s.have_labels = labels != nullptr;
  if (labels) {
    detail::check_labels(m, *labels);
    s.natural = s.original_classes[static_cast<std::size_t>(cfg.target_attribute)] !=
                (*labels)[static_cast<std::size_t>(cfg.target_attribute)];
  }
  if (goal_override)
    s.goal = *goal_override;
  else
    s.goal = FlipGoal{cfg.target_attribute,
                      -s.original_classes[static_cast<std::size_t>(cfg.target_attribute)]};
  return s;
}

inline std::vector<double> attack_direction(const ClassifierModel& m, const ImageTensor& x,
                                            const std::vector<int>* labels,
                                            const AttackConfig& cfg, bool natural) {
  if (cfg.method == AttackMethod::fgs) {
    std::vector<double> d = fgs_direction(m, x, *labels);
    // correcting a misclassified input means descending the label loss
    if (natural)
      for (double& v : d) v = -v;
    return d;
  }
  return ffa_direction(m, x, cfg.target_attribute, cfg.ffa_literal_ascent);
}

// Final bookkeeping shared by both modes: quantize, re-verify with fresh
// forwards, score the pair, fill eta.
inline void finish_outcome(AttackOutcome& out, const ClassifierModel& m, const ImageTensor& x,
                           const std::vector<int>* labels, const AttackConfig& cfg,
                           const PassConfig& pass_cfg, ImageTensor final_image,
                           bool goal_was_met) {
  out.perturbed = cfg.quantize_result ? quantized(final_image) : std::move(final_image);
  out.eta.resize(x.pixels.size());
  for (std::size_t i = 0; i < x.pixels.size(); ++i)
    out.eta[i] = out.perturbed.pixels[i] - x.pixels[i];

  if (!goal_was_met) return;

  bool flipped;
  if (labels) {
    flipped = verify_flip(m, x, out.perturbed, *labels, out.attribute, out.natural);
  } else {
    flipped = classify_attribute(forward(m, out.perturbed), out.attribute) !=
              classify_attribute(forward(m, x), out.attribute);
  }
  out.flipped = flipped;
  if (!flipped) {
    out.quantization_reverted = true;
    out.failure_reason = "quantization_reverted";
    return;
  }
  PassResult pr = pass_score_full(x, out.perturbed, pass_cfg);
  out.pass_score = pr.score;
  out.ecc_converged = pr.ecc_converged;
  out.is_adversarial = out.pass_score >= cfg.pass_threshold;
}

}  // namespace detail

// Single gradient evaluation, doubling line search along the fixed direction,
// binary refinement, then quantize + re-verify.
inline AttackOutcome line_search_attack(const ClassifierModel& m, const ImageTensor& x,
                                        const std::vector<int>* labels, const AttackConfig& cfg,
                                        const PassConfig& pass_cfg = {},
                                        const FlipGoal* goal_override = nullptr) {
  cfg.validate();
  auto setup = detail::attack_setup(m, x, labels, cfg, goal_override);

  AttackOutcome out;
  out.attribute = cfg.target_attribute;
  out.method = cfg.method;
  out.mode = AttackMode::line_search;
  out.natural = setup.natural;
  out.original_classes = setup.original_classes;
  out.original_class = setup.original_classes[static_cast<std::size_t>(cfg.target_attribute)];

  std::vector<double> dir = detail::attack_direction(m, x, labels, cfg, setup.natural);
  out.gradient_evals = 1;

  LineSearchResult ls = line_search_along(m, x, dir, cfg, setup.goal);
  out.epsilon = ls.epsilon;
  if (!ls.found) {
    out.failure_reason = ls.failure_reason;
    detail::finish_outcome(out, m, x, labels, cfg, pass_cfg, x, false);
    return out;
  }
  detail::finish_outcome(out, m, x, labels, cfg, pass_cfg,
                         detail::add_scaled(x, dir, ls.epsilon), true);
  return out;
}

// Recomputes the direction every step. FGS adds its sign pattern (already
// Linf = 1) and keeps the working image on discrete pixels; FFA rescales the
// descent direction to Linf = 1 and works on non-discrete pixels, rounding
// only the final image.
inline AttackOutcome iterative_attack(const ClassifierModel& m, const ImageTensor& x,
                                      const std::vector<int>* labels, const AttackConfig& cfg,
                                      const PassConfig& pass_cfg = {},
                                      const FlipGoal* goal_override = nullptr) {
  cfg.validate();
  auto setup = detail::attack_setup(m, x, labels, cfg, goal_override);

  AttackOutcome out;
  out.attribute = cfg.target_attribute;
  out.method = cfg.method;
  out.mode = AttackMode::iterative;
  out.natural = setup.natural;
  out.original_classes = setup.original_classes;
  out.original_class = setup.original_classes[static_cast<std::size_t>(cfg.target_attribute)];

  if (goal_met(forward(m, x), setup.goal)) {  // vacuous attack
    detail::finish_outcome(out, m, x, labels, cfg, pass_cfg, x, true);
    return out;
  }

  ImageTensor work = x;
  bool success = false;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    std::vector<double> dir = detail::attack_direction(m, work, labels, cfg, setup.natural);
    ++out.gradient_evals;
    if (cfg.method == AttackMethod::ffa) {
      double mx = 0.0;
      for (double v : dir) mx = std::max(mx, std::fabs(v));
      if (mx < 1e-15) {
        out.failure_reason = "zero_gradient";
        break;
      }
      const double inv = 1.0 / mx;
      for (std::size_t i = 0; i < dir.size(); ++i)
        work.pixels[i] = std::clamp(work.pixels[i] + dir[i] * inv, 0.0, 255.0);
    } else {
      for (std::size_t i = 0; i < dir.size(); ++i)
        work.pixels[i] = quantize_pixel(work.pixels[i] + dir[i]);
    }
    out.iterations = it;
    if (goal_met(forward(m, work), setup.goal)) {
      success = true;
      break;
    }
  }
  if (!success && out.failure_reason.empty()) out.failure_reason = "max_iterations";

  detail::finish_outcome(out, m, x, labels, cfg, pass_cfg, std::move(work), success);
  if (success) {
    double linf = 0.0;
    for (double e : out.eta) linf = std::max(linf, std::fabs(e));
    out.epsilon = linf;
  }
  return out;
}

inline AttackOutcome run_attack(const ClassifierModel& m, const ImageTensor& x,
                                const std::vector<int>* labels, const AttackConfig& cfg,
                                const PassConfig& pass_cfg = {}) {
  return cfg.mode == AttackMode::line_search
             ? line_search_attack(m, x, labels, cfg, pass_cfg)
             : iterative_attack(m, x, labels, cfg, pass_cfg);
}

}  // namespace attrflip
