#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "attrflip/core.hpp"
#include "attrflip/dataset.hpp"
#include "attrflip/model.hpp"
#include "attrflip/rng.hpp"

namespace attrflip {

struct TrainConfig {
  double learning_rate = 1e-5;
  int batch_size = 64;
  // RMSProp with inverse learning-rate decay: lr_t = lr * (1 + gamma*t)^(-power)
  double rms_decay = 0.9;
  double rms_epsilon = 1e-8;
  double lr_decay_gamma = 1e-4;
  double lr_decay_power = 0.75;
  int max_epochs = 10;
  std::uint64_t seed = 0;
  int patience = 3;  // early stop after this many epochs without val improvement; 0 = off

  void validate() const {
    // learning_rate 0 is allowed and leaves the weights untouched
    if (learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  }
};

struct EpochStats {
  int epoch = 0;  // model epoch counter after this epoch
  double lr_last = 0.0;
  double train_loss = 0.0;  // mean per-sample loss over the epoch
  std::vector<double> train_error;
  std::vector<double> val_error;
  double train_error_mean = 0.0;
  double val_error_mean = 0.0;
};

struct TrainLog {
  std::vector<EpochStats> epochs;
  bool early_stopped = false;
};

class TrainDivergence : public Error {
public:
  using Error::Error;
};

using EpochCallback = std::function<void(const ClassifierModel&, const EpochStats&)>;

// RMSProp mini-batch training. Deterministic given (weights, data, seed):
// single-threaded, fixed shuffle stream, no other entropy sources. The
// learning-rate schedule counts global updates, so a resumed model continues
// the decay from epoch_counter * updates_per_epoch.
inline TrainLog train(ClassifierModel& model, const AttributeDataset& train_set,
                      const AttributeDataset* val_set, const TrainConfig& cfg,
                      const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train_set.items.empty()) throw ConfigError("train: empty training set");
  if (train_set.attribute_count() != model.attribute_count)
    throw ShapeError("train: dataset attribute count does not match the model");
  model.attribute_names = train_set.attribute_names;

  const std::size_t n = train_set.items.size();
  const std::size_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  long long step = static_cast<long long>(model.epoch_counter) *
                   static_cast<long long>(batches_per_epoch);

  std::vector<double> cache(model.weights.size(), 0.0);
  std::vector<double> grad_sum(model.weights.size(), 0.0);
  Rng shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainLog log;
  double best_val = 1e300;
  int epochs_since_best = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    double lr_last = cfg.learning_rate;

    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(lo + cfg.batch_size, n);
      std::fill(grad_sum.begin(), grad_sum.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t idx = lo; idx < hi; ++idx) {
        const DatasetItem& item = train_set.items[order[idx]];
        ScoreVector f = forward(model, item.image);
        batch_loss += label_loss(f, item.labels);
        auto d = label_loss_dscore(f, item.labels);
        auto bp = backprop(model, item.image, d, false, true);
        for (std::size_t i = 0; i < grad_sum.size(); ++i) grad_sum[i] += bp.param_grad[i];
      }
      const double inv_count = 1.0 / static_cast<double>(hi - lo);
      batch_loss *= inv_count;
      loss_sum += batch_loss * static_cast<double>(hi - lo);
      if (!std::isfinite(batch_loss))
        throw TrainDivergence("training diverged: non-finite loss at epoch " +
                              std::to_string(model.epoch_counter + 1) + ", batch " +
                              std::to_string(b));

      ++step;
      lr_last = cfg.learning_rate *
                std::pow(1.0 + cfg.lr_decay_gamma * static_cast<double>(step), -cfg.lr_decay_power);
      for (std::size_t i = 0; i < model.weights.size(); ++i) {
        const double g = grad_sum[i] * inv_count;
        cache[i] = cfg.rms_decay * cache[i] + (1.0 - cfg.rms_decay) * g * g;
        model.weights[i] -= lr_last * g / (std::sqrt(cache[i]) + cfg.rms_epsilon);
      }
    }

    ++model.epoch_counter;
    EpochStats st;
    st.epoch = model.epoch_counter;
    st.lr_last = lr_last;
    st.train_loss = loss_sum / static_cast<double>(n);
    auto tr_err = dataset_error(model, train_set);
    st.train_error = tr_err.per_attribute;
    st.train_error_mean = tr_err.mean;
    if (val_set && !val_set->items.empty()) {
      auto va_err = dataset_error(model, *val_set);
      st.val_error = va_err.per_attribute;
      st.val_error_mean = va_err.mean;
    }
    log.epochs.push_back(st);
    if (on_epoch) on_epoch(model, st);

    if (val_set && cfg.patience > 0) {
      if (st.val_error_mean < best_val - 1e-12) {
        best_val = st.val_error_mean;
        epochs_since_best = 0;
      } else if (++epochs_since_best >= cfg.patience) {
        log.early_stopped = true;
        break;
      }
    }
  }
  return log;
}

}  // namespace attrflip
