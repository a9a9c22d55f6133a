#pragma once

#include <limits>
#include <string>
#include <vector>

#include "stb/entropy.hpp"
#include "stb/metrics.hpp"
#include "stb/model.hpp"

namespace stb {

struct TrainConfig {
  double lr = 1e-3;
  double lr_decay = 1.0;  // per-epoch multiplier
  size_t epochs = 50;
  size_t batch_size = 8;
  uint64_t seed = 1;
  double clip_norm = 5.0;  // 0 disables clipping
  size_t patience = 10;    // early stop on val MAE; 0 disables

  void validate() const;
};

// Adaptive moment estimation over one flat parameter vector.
class Adam {
 public:
  Adam(size_t dim, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  void step(std::vector<double>& x, const std::vector<double>& grad);

 private:
  double lr_, beta1_, beta2_, eps_;
  size_t t_ = 0;
  std::vector<double> m_, v_;
};

// Scales g in place so its l2 norm is at most max_norm (no-op when
// max_norm <= 0). Returns the pre-clip norm.
double clip_gradient(std::vector<double>& g, double max_norm);

// Normalized series plus everything derived from its training region.
struct Dataset {
  SeriesTensor raw;
  SeriesTensor normalized;
  Normalizer norm;
  SplitSpec split;
  std::vector<SparseGraph> graphs;
};

Dataset prepare_dataset(SeriesTensor raw, std::vector<SparseGraph> graphs,
                        const SplitSpec& split, bool per_node_norm = false);

struct TrainResult {
  std::vector<double> train_loss;  // per-epoch mean of the joint loss
  std::vector<double> val_mae;     // denormalized; NaN when no val windows
  std::vector<double> grad_norm;   // per-epoch mean pre-clip norm
  size_t best_epoch = 0;
  double best_val_mae = std::numeric_limits<double>::quiet_NaN();
  size_t epochs_run = 0;
  bool stopped_early = false;
};

// Mini-batch training with deterministic seeded shuffling. Keeps the best
// validation parameters and restores them on return (when a val split
// exists). Non-finite losses abort with the epoch and batch in the message.
TrainResult train(StModel& model, const Dataset& data,
                  const WindowSpec& window, const TrainConfig& cfg);

struct ForecastReport {
  size_t n_windows = 0;
  Tensor predictions;  // [S, N, T_out], raw scale
  Tensor targets;      // aligned, raw scale
  MetricSuite overall;
  std::vector<MetricSuite> per_horizon;
  HorizonErrors horizon;
  MetricSuite baseline_hl;           // copy the last observed value
  MetricSuite baseline_climatology;  // per-node training mean
  EntropyReport entropy;             // graph/series mismatch diagnostics
};

// Runs the model over every window of one split and scores everything on
// the denormalized scale. mask_zeros drops cells whose reference is exactly
// zero (sensor-gap convention) from the metric pools.
ForecastReport evaluate(StModel& model, const Dataset& data,
                        const WindowSpec& window, Split which,
                        size_t batch_size = 8, double pnse_threshold = 0.0,
                        bool mask_zeros = false, size_t entropy_bins = 16);

enum class SweepAxis { window_length, embed_rank };
const char* sweep_axis_name(SweepAxis a);

struct SweepPoint {
  size_t value = 0;
  double test_mae = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
  std::string error;
};

// Trains one model per value from the shared seed and scores it on the test
// split. A failing point records its error and leaves the rest intact.
// jobs > 1 runs points in parallel.
std::vector<SweepPoint> sweep(SweepAxis axis, const std::vector<size_t>& values,
                              const Dataset& data, const WindowSpec& window,
                              const ModelConfig& base, const TrainConfig& tcfg,
                              size_t jobs = 1);

// Header: axis_value,test_mae. Failed points are skipped.
void write_sweep_csv(const std::string& path,
                     const std::vector<SweepPoint>& points);

}  // namespace stb
