#pragma once

// Training harness: AdamW with decoupled weight decay, the linear
// learning-rate warm-down, an epoch loop with patience-based early stopping
// on validation token accuracy, and evaluation helpers.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "redattn/csv.hpp"
#include "redattn/data.hpp"
#include "redattn/errors.hpp"
#include "redattn/model.hpp"
#include "redattn/rng.hpp"
#include "redattn/tensor.hpp"

namespace redattn {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct TrainConfig {
  double lr_start = 0.001;
  double lr_end = 0.0001;
  std::size_t warmdown_epochs = 5;
  bool static_lr = false;  // hold lr_end throughout (the long-input regime)
  std::size_t max_epochs = 20;
  std::size_t patience = 5;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  AdamWConfig adamw;
  double dropout = 0.0;
  bool shuffle = true;
};

// Validation-accuracy improvements below this are treated as float jitter.
inline constexpr double kImprovementThreshold = 1e-4;

inline void validate(const TrainConfig& c) {
  if (c.lr_end > c.lr_start) throw UsageError("train config: lr_end must not exceed lr_start");
  if (c.patience > c.max_epochs)
    throw UsageError("train config: patience must not exceed max_epochs");
  if (c.batch_size < 1) throw UsageError("train config: batch_size must be positive");
  if (c.dropout < 0.0 || c.dropout >= 1.0)
    throw UsageError("train config: dropout must lie in [0, 1)");
}

// Linear warm-down from lr_start at epoch 0 to lr_end at warmdown_epochs,
// clamped afterwards; the static regime pins lr_end from the start.
inline double lr_at(std::size_t epoch, const TrainConfig& c) {
  if (c.static_lr || epoch >= c.warmdown_epochs) return c.lr_end;
  const double t = static_cast<double>(epoch) / static_cast<double>(c.warmdown_epochs);
  return c.lr_start + t * (c.lr_end - c.lr_start);
}

// AdamW with decoupled weight decay; moments keyed by parameter name.
template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  // One update over every parameter. Gradients are read, never written;
  // the caller zeroes them between steps.
  void step(AutoencoderParams<T>& params, double lr) {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for_each_param(params, [&](const std::string& name, Tensor<T>& w) {
      if (!w.has_grad())
        throw UsageError("adamw: parameter '" + name + "' has no gradient buffer");
      auto& mom = state_[name];
      if (mom.m.empty()) {
        mom.m.assign(w.size(), T(0));
        mom.v.assign(w.size(), T(0));
      }
      auto g = w.grad();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        const double m = cfg_.beta1 * static_cast<double>(mom.m[i]) + (1.0 - cfg_.beta1) * gi;
        const double v =
            cfg_.beta2 * static_cast<double>(mom.v[i]) + (1.0 - cfg_.beta2) * gi * gi;
        mom.m[i] = static_cast<T>(m);
        mom.v[i] = static_cast<T>(v);
        const double update = (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps) +
                              cfg_.weight_decay * static_cast<double>(w.data()[i]);
        w.data()[i] = static_cast<T>(static_cast<double>(w.data()[i]) - lr * update);
      }
    });
  }

  std::size_t step_count() const { return step_; }

 private:
  struct Moments {
    std::vector<T> m;
    std::vector<T> v;
  };
  AdamWConfig cfg_;
  std::unordered_map<std::string, Moments> state_;
  std::size_t step_ = 0;
};

template <typename T>
void zero_all_grads(AutoencoderParams<T>& params) {
  for_each_param(params, [](const std::string&, Tensor<T>& w) { w.zero_grad(); });
}

// One pass over the data in per-epoch shuffled batches (final partial batch
// included). The autoencoding target is the input itself. Returns the mean
// per-sample loss.
template <typename T>
double train_epoch(AutoencoderParams<T>& params, const std::vector<Sample>& data,
                   const TrainConfig& cfg, AdamW<T>& opt, std::size_t epoch) {
  if (data.empty()) throw UsageError("train_epoch: empty dataset");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (cfg.shuffle) {
    std::mt19937_64 rng(mix_seed(cfg.seed, epoch));
    shuffle_in_place(order, rng);
  }
  std::mt19937_64 dropout_rng(mix_seed(mix_seed(cfg.seed, epoch), 0x64726f70));
  std::mt19937_64* drop = cfg.dropout > 0.0 ? &dropout_rng : nullptr;

  const double lr = lr_at(epoch, cfg);
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t count = std::min(cfg.batch_size, order.size() - start);
    Tape<T> tape;
    Tensor<T> total;
    for (std::size_t b = 0; b < count; ++b) {
      const auto& ids = data[order[start + b]].ids;
      auto loss = cross_entropy(forward(params, ids, cfg.dropout, drop), ids);
      total = b == 0 ? loss : add(total, loss);
    }
    auto batch_loss = scale(total, T(1) / static_cast<T>(count));
    backward(batch_loss);
    opt.step(params, lr);
    zero_all_grads(params);
    loss_sum += static_cast<double>(batch_loss.item()) * static_cast<double>(count);
  }
  return loss_sum / static_cast<double>(data.size());
}

// Mean token accuracy of greedy reconstruction, summed in sample order.
template <typename T>
double evaluate(const AutoencoderParams<T>& params, const std::vector<Sample>& data) {
  if (data.empty()) throw UsageError("evaluate: empty dataset");
  double total = 0.0;
  for (const auto& s : data) total += token_accuracy(reconstruct(params, s.ids), s.ids);
  return total / static_cast<double>(data.size());
}

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double seconds = 0.0;
};

template <typename T>
struct FitResult {
  std::vector<EpochRecord> records;
  AutoencoderParams<T> best_params;
  std::size_t best_epoch = 0;
  double best_accuracy = 0.0;
};

// Epoch loop with early stopping: training ends at max_epochs or after
// `patience` consecutive epochs without a validation-accuracy improvement.
// The returned parameters are a snapshot from the best epoch. `eval` is
// injectable so stopping semantics can be driven by scripted accuracies.
template <typename T, typename EvalFn>
FitResult<T> fit_with(AutoencoderParams<T>& params, const std::vector<Sample>& train_set,
                      const std::vector<Sample>& val_set, const TrainConfig& cfg,
                      EvalFn&& eval) {
  validate(cfg);
  if (train_set.empty()) throw UsageError("fit: empty training split");
  if (val_set.empty()) throw UsageError("fit: empty validation split");

  AdamW<T> opt(cfg.adamw);
  FitResult<T> result;
  result.best_params = clone_params(params);
  double best = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double loss = train_epoch(params, train_set, cfg, opt, epoch);
    const double acc = eval(epoch, params);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.records.push_back({epoch, lr_at(epoch, cfg), loss, acc, seconds});
    if (acc > best + kImprovementThreshold) {
      best = acc;
      result.best_epoch = epoch;
      result.best_accuracy = acc;
      result.best_params = clone_params(params);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

template <typename T>
FitResult<T> fit(AutoencoderParams<T>& params, const std::vector<Sample>& train_set,
                 const std::vector<Sample>& val_set, const TrainConfig& cfg) {
  return fit_with(params, train_set, val_set, cfg,
                  [&val_set](std::size_t, const AutoencoderParams<T>& p) {
                    return evaluate(p, val_set);
                  });
}

// Run log: epoch,lr,train_loss,val_accuracy,seconds at six significant digits.
inline void write_run_csv(const std::string& path, const std::vector<EpochRecord>& records) {
  std::ofstream out(path);
  if (!out) throw UsageError("run csv: cannot open " + path + " for writing");
  out << "epoch,lr,train_loss,val_accuracy,seconds\n";
  for (const auto& r : records)
    out << r.epoch << ',' << format_sig6(r.lr) << ',' << format_sig6(r.train_loss) << ','
        << format_sig6(r.val_accuracy) << ',' << format_sig6(r.seconds) << '\n';
}

}  // namespace redattn
