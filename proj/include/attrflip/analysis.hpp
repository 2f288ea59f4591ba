#pragma once

#include <atomic>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "attrflip/attack.hpp"
#include "attrflip/core.hpp"
#include "attrflip/dataset.hpp"
#include "attrflip/model.hpp"
#include "attrflip/outcome_io.hpp"
#include "attrflip/stats.hpp"

namespace attrflip {

// Either one multi-attribute model or one single-attribute model per
// attribute; gives analyses a uniform "classify attribute i" view.
struct ModelBank {
  std::vector<ClassifierModel> models;

  bool separate() const { return models.size() > 1 || (models.size() == 1 && models[0].attribute_count == 1); }

  int attribute_count() const {
    if (models.empty()) throw ConfigError("empty model bank");
    return models.size() > 1 ? static_cast<int>(models.size()) : models[0].attribute_count;
  }

  const ClassifierModel& model_for(int attribute) const {
    if (models.size() > 1) return models[static_cast<std::size_t>(attribute)];
    return models[0];
  }

  int classify_attribute_of(const ImageTensor& x, int attribute) const {
    const ClassifierModel& m = model_for(attribute);
    const int local = models.size() > 1 ? 0 : attribute;
    return classify_attribute(forward(m, x), local);
  }

  void validate() const {
    if (models.empty()) throw ConfigError("empty model bank");
    if (models.size() > 1)
      for (const auto& m : models)
        if (m.attribute_count != 1)
          throw ConfigError("separate model banks hold single-attribute models");
  }
};

// ---- attack suite runner ----------------------------------------------------

// Runs one attack configuration over every (image, attribute) pair. Jobs are
// pure against read-only models; results land in job order regardless of the
// worker count.
inline std::vector<AttackOutcome> run_attack_suite(const ModelBank& bank,
                                                   const std::vector<DatasetItem>& items,
                                                   const AttackConfig& base_cfg,
                                                   const PassConfig& pass_cfg, int workers = 1) {
  bank.validate();
  const int M = bank.attribute_count();
  const std::size_t jobs = items.size() * static_cast<std::size_t>(M);
  std::vector<AttackOutcome> out(jobs);

  auto run_job = [&](std::size_t j) {
    const std::size_t item_idx = j / static_cast<std::size_t>(M);
    const int attr = static_cast<int>(j % static_cast<std::size_t>(M));
    const DatasetItem& item = items[item_idx];
    const ClassifierModel& model = bank.model_for(attr);

    AttackConfig cfg = base_cfg;
    std::vector<int> labels;
    if (bank.models.size() > 1) {
      cfg.target_attribute = 0;
      labels = {item.labels[static_cast<std::size_t>(attr)]};
    } else {
      cfg.target_attribute = attr;
      labels = item.labels;
    }
    AttackOutcome o = run_attack(model, item.image, &labels, cfg, pass_cfg);
    o.image_id = item.id;
    o.attribute = attr;  // dataset attribute index, not the model-local one
    out[j] = std::move(o);
  };

  if (workers <= 1) {
    for (std::size_t j = 0; j < jobs; ++j) run_job(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t)
      pool.emplace_back([&] {
        for (std::size_t j = next.fetch_add(1); j < jobs; j = next.fetch_add(1)) run_job(j);
      });
    for (auto& t : pool) t.join();
  }
  return out;
}

// ---- flippability -----------------------------------------------------------

struct FlippabilityRow {
  std::string label;          // attack run label, e.g. "ffa_line_search"
  bool natural_type = false;  // false: correctly classified sources (+)
  std::vector<double> thresholds;
  std::vector<long> flipped;  // per threshold; non-increasing
  long total = 0;
};

namespace detail {

template <typename Rec>
inline void flippability_count(const Rec& r, bool flipped, double pass, FlippabilityRow& row) {
  (void)r;
  ++row.total;
  if (!flipped) return;
  for (std::size_t t = 0; t < row.thresholds.size(); ++t)
    if (row.thresholds[t] <= 0.0 || pass >= row.thresholds[t]) ++row.flipped[t];
}

}  // namespace detail

inline std::vector<FlippabilityRow> tabulate_flippability(
    const std::string& label, const std::vector<OutcomeRecord>& records,
    const std::vector<double>& thresholds) {
  FlippabilityRow plus, minus;
  plus.label = minus.label = label;
  plus.natural_type = false;
  minus.natural_type = true;
  plus.thresholds = minus.thresholds = thresholds;
  plus.flipped.assign(thresholds.size(), 0);
  minus.flipped.assign(thresholds.size(), 0);
  for (const auto& r : records)
    detail::flippability_count(r, r.flipped, r.pass_score, r.natural ? minus : plus);
  return {plus, minus};
}

inline std::vector<FlippabilityRow> tabulate_flippability(
    const std::string& label, const std::vector<AttackOutcome>& outcomes,
    const std::vector<double>& thresholds) {
  FlippabilityRow plus, minus;
  plus.label = minus.label = label;
  plus.natural_type = false;
  minus.natural_type = true;
  plus.thresholds = minus.thresholds = thresholds;
  plus.flipped.assign(thresholds.size(), 0);
  minus.flipped.assign(thresholds.size(), 0);
  for (const auto& o : outcomes)
    detail::flippability_count(o, o.flipped, o.pass_score, o.natural ? minus : plus);
  return {plus, minus};
}

struct FlippabilityReport {
  std::vector<FlippabilityRow> rows;
  std::vector<AttackOutcome> outcomes;
};

// Runs the configured attacks over the images and tabulates flip proportions
// at each threshold, split into correctly / incorrectly classified sources.
inline FlippabilityReport flippability_report(const ModelBank& bank,
                                              const std::vector<DatasetItem>& items,
                                              const std::vector<AttackConfig>& configs,
                                              const std::vector<double>& thresholds,
                                              const PassConfig& pass_cfg, int workers = 1) {
  FlippabilityReport rep;
  for (const auto& cfg : configs) {
    auto outcomes = run_attack_suite(bank, items, cfg, pass_cfg, workers);
    const std::string label = to_string(cfg.method) + "_" + to_string(cfg.mode);
    for (auto& row : tabulate_flippability(label, outcomes, thresholds))
      rep.rows.push_back(std::move(row));
    for (auto& o : outcomes) rep.outcomes.push_back(std::move(o));
  }
  return rep;
}

// ---- natural adversarial scan ------------------------------------------------

struct NaturalScanResult {
  std::vector<AttackOutcome> records;  // verified corrections with PASS >= tau
  long misclassified_total = 0;
  double rate = 0.0;
};

// Attempts to correct every misclassified (image, attribute) pair; keeps the
// outcomes whose flip to the ground truth verified and passed the gate.
inline NaturalScanResult natural_adversarial_scan(const ModelBank& bank,
                                                  const std::vector<DatasetItem>& items,
                                                  const AttackConfig& cfg,
                                                  const PassConfig& pass_cfg, int workers = 1) {
  NaturalScanResult res;
  auto outcomes = run_attack_suite(bank, items, cfg, pass_cfg, workers);
  for (auto& o : outcomes) {
    if (!o.natural) continue;
    ++res.misclassified_total;
    if (o.flipped && o.is_adversarial) res.records.push_back(std::move(o));
  }
  res.rate = res.misclassified_total == 0
                 ? 0.0
                 : static_cast<double>(res.records.size()) / res.misclassified_total;
  return res;
}

// ---- epoch overlap ------------------------------------------------------------

struct OverlapStat {
  std::string label;
  bool natural_type = false;
  long count_early = 0;
  long count_converged = 0;
  long overlap = 0;  // <= min(count_early, count_converged)
};

namespace detail {

inline std::set<std::pair<std::string, int>> adversarial_keys(
    const std::vector<OutcomeRecord>& records, bool natural_type) {
  std::set<std::pair<std::string, int>> keys;
  for (const auto& r : records)
    if (r.is_adversarial && r.natural == natural_type) keys.emplace(r.image_id, r.attribute);
  return keys;
}

}  // namespace detail

// Overlap counts (image, attribute) pairs that are adversarial sources under
// both checkpoints, within the same correctly/incorrectly classified class.
inline std::vector<OverlapStat> epoch_overlap_from_records(
    const std::string& label, const std::vector<OutcomeRecord>& early,
    const std::vector<OutcomeRecord>& converged) {
  std::vector<OverlapStat> out;
  for (bool natural_type : {false, true}) {
    auto ke = detail::adversarial_keys(early, natural_type);
    auto kc = detail::adversarial_keys(converged, natural_type);
    OverlapStat st;
    st.label = label;
    st.natural_type = natural_type;
    st.count_early = static_cast<long>(ke.size());
    st.count_converged = static_cast<long>(kc.size());
    for (const auto& k : ke)
      if (kc.count(k)) ++st.overlap;
    out.push_back(st);
  }
  return out;
}

inline std::vector<OutcomeRecord> records_from_outcomes(const std::vector<AttackOutcome>& v,
                                                        const std::vector<std::string>& names) {
  std::vector<OutcomeRecord> out;
  out.reserve(v.size());
  for (const auto& o : v) {
    std::string name = o.attribute < static_cast<int>(names.size())
                           ? names[static_cast<std::size_t>(o.attribute)]
                           : "";
    out.push_back(make_record(o, name, "", "", "", ""));
  }
  return out;
}

// Generates adversarial sets on both checkpoints over the same images and
// intersects them. Banks must share architectures and attribute sets.
inline std::vector<OverlapStat> epoch_overlap(const ModelBank& early, const ModelBank& converged,
                                              const std::vector<DatasetItem>& items,
                                              const AttackConfig& cfg, const PassConfig& pass_cfg,
                                              int workers = 1) {
  if (early.attribute_count() != converged.attribute_count())
    throw ConfigError("epoch_overlap: checkpoints disagree on attribute count");
  for (std::size_t i = 0; i < early.models.size(); ++i) {
    const auto& a = early.models[i];
    const auto& b = converged.models[i];
    if (a.head != b.head || a.weights.size() != b.weights.size())
      throw ConfigError("epoch_overlap: checkpoint architecture mismatch");
  }
  auto oe = run_attack_suite(early, items, cfg, pass_cfg, workers);
  auto oc = run_attack_suite(converged, items, cfg, pass_cfg, workers);
  const std::string label = to_string(cfg.method) + "_" + to_string(cfg.mode);
  std::vector<std::string> no_names;
  return epoch_overlap_from_records(label, records_from_outcomes(oe, no_names),
                                    records_from_outcomes(oc, no_names));
}

// ---- portability / correlation matrices ---------------------------------------

struct AdvExample {
  ImageTensor original;
  ImageTensor perturbed;
  int source_attribute = 0;
  std::vector<int> recorded_original_classes;  // classes under the source-time model
};

struct FlipMatrix {
  int m = 0;
  std::vector<double> values;            // row i: advs for attribute i; col j: flips of j
  std::vector<std::uint8_t> row_valid;   // rows with zero adversarials are masked
  std::vector<long> row_counts;
  std::vector<double> baseline_changed;  // fraction whose original class moved between banks

  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * m + j]; }
  double& at(int i, int j) { return values[static_cast<std::size_t>(i) * m + j]; }
  double baseline_at(int i, int j) const {
    return baseline_changed[static_cast<std::size_t>(i) * m + j];
  }
};

// Entry (i, j): fraction of attribute-i adversarials whose perturbed image
// changes model j's classification relative to model j's own prediction on
// the original image. When the adversarials were generated on a different
// checkpoint, images whose original prediction moved between checkpoints are
// tallied in baseline_changed.
inline FlipMatrix portability_matrix(const std::vector<AdvExample>& advs,
                                     const ModelBank& eval_bank) {
  const int M = eval_bank.attribute_count();
  FlipMatrix fm;
  fm.m = M;
  fm.values.assign(static_cast<std::size_t>(M) * M, 0.0);
  fm.baseline_changed.assign(static_cast<std::size_t>(M) * M, 0.0);
  fm.row_valid.assign(static_cast<std::size_t>(M), 0);
  fm.row_counts.assign(static_cast<std::size_t>(M), 0);

  std::vector<std::vector<long>> flips(static_cast<std::size_t>(M),
                                       std::vector<long>(static_cast<std::size_t>(M), 0));
  std::vector<std::vector<long>> moved(static_cast<std::size_t>(M),
                                       std::vector<long>(static_cast<std::size_t>(M), 0));
  for (const auto& adv : advs) {
    const int i = adv.source_attribute;
    if (i < 0 || i >= M) throw ConfigError("portability_matrix: bad source attribute");
    ++fm.row_counts[static_cast<std::size_t>(i)];
    for (int j = 0; j < M; ++j) {
      const int c_orig = eval_bank.classify_attribute_of(adv.original, j);
      const int c_pert = eval_bank.classify_attribute_of(adv.perturbed, j);
      if (c_pert != c_orig) ++flips[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      if (!adv.recorded_original_classes.empty() &&
          adv.recorded_original_classes[static_cast<std::size_t>(j)] != c_orig)
        ++moved[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  for (int i = 0; i < M; ++i) {
    const long n = fm.row_counts[static_cast<std::size_t>(i)];
    fm.row_valid[static_cast<std::size_t>(i)] = n > 0;
    for (int j = 0; j < M; ++j)
      if (n > 0) {
        fm.at(i, j) =
            static_cast<double>(flips[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) / n;
        fm.baseline_changed[static_cast<std::size_t>(i) * M + j] =
            static_cast<double>(moved[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) / n;
      }
  }
  return fm;
}

// Same counting on one multi-attribute model: entry (i, j) is the fraction
// of attribute-i adversarials that also flip attribute j. Diagonal is 1 for
// every populated row by construction.
inline FlipMatrix correlation_matrix(const ClassifierModel& model,
                                     const std::vector<AdvExample>& advs) {
  ModelBank bank;
  bank.models = {model};
  return portability_matrix(advs, bank);
}

// ---- trivial baseline ----------------------------------------------------------

struct TrivialBaseline {
  std::vector<int> predictions;       // majority training class per attribute
  std::vector<double> test_error;     // minority fraction of the test labels
  double mean_error = 0.0;
};

inline TrivialBaseline trivial_baseline(const std::vector<std::vector<int>>& train_labels,
                                        const std::vector<std::vector<int>>& test_labels) {
  if (train_labels.empty()) throw ConfigError("trivial_baseline: empty training labels");
  const std::size_t M = train_labels[0].size();
  TrivialBaseline out;
  out.predictions.assign(M, 1);
  out.test_error.assign(M, 0.0);
  for (std::size_t a = 0; a < M; ++a) {
    long plus = 0;
    for (const auto& row : train_labels) plus += row[a] > 0 ? 1 : 0;
    const long minus = static_cast<long>(train_labels.size()) - plus;
    out.predictions[a] = plus >= minus ? 1 : -1;  // exact tie predicts +1
    long wrong = 0;
    for (const auto& row : test_labels) wrong += row[a] != out.predictions[a] ? 1 : 0;
    out.test_error[a] =
        test_labels.empty() ? 0.0 : static_cast<double>(wrong) / static_cast<double>(test_labels.size());
    out.mean_error += out.test_error[a];
  }
  out.mean_error /= static_cast<double>(M);
  return out;
}

inline std::vector<std::vector<int>> label_matrix(const AttributeDataset& ds) {
  std::vector<std::vector<int>> out;
  out.reserve(ds.items.size());
  for (const auto& it : ds.items) out.push_back(it.labels);
  return out;
}

}  // namespace attrflip
