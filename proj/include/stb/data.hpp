#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stb/graph.hpp"
#include "stb/tensor.hpp"

namespace stb {

// A multivariate series on a fixed node set: values are [N, T, F].
// Timestamps are optional; step_seconds == 0 means "no wall-clock alignment"
// and anything that needs time-of-day indices will reject the series.
struct SeriesTensor {
  Tensor values;
  int64_t start_timestamp = 0;
  int64_t step_seconds = 0;
  std::vector<std::string> feature_names;

  size_t n_nodes() const { return values.rank() > 0 ? values.dim(0) : 0; }
  size_t n_steps() const { return values.rank() > 1 ? values.dim(1) : 0; }
  size_t n_features() const { return values.rank() > 2 ? values.dim(2) : 0; }
  void validate() const;
};

void save_series(const std::string& path, const SeriesTensor& s);
SeriesTensor load_series(const std::string& path);

// Long CSV with header "timestamp,node,feature,value". Every (timestamp,
// node, feature) cell must be present exactly once and timestamps must be
// evenly spaced; violations raise ParseError naming the offending cell.
SeriesTensor load_series_csv(const std::string& path);
void save_series_csv(const std::string& path, const SeriesTensor& s);

// Chronological split over the time axis. Fractions must be positive and
// sum to 1 (within 1e-9); boundaries round down so train gets the slack.
struct SplitSpec {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
  void validate() const;
  // First index of val and of test: [0,b1) train, [b1,b2) val, [b2,T) test.
  std::pair<size_t, size_t> boundaries(size_t n_steps) const;
};

enum class Split { train, val, test };
const char* split_name(Split s);

// Z-score normalization with stats from the training region only. Stats are
// per feature, and per node when per_node is set. Slices with zero variance
// keep std 1 and are flagged.
struct Normalizer {
  bool per_node = false;
  size_t n_nodes = 0;
  size_t n_features = 0;
  std::vector<double> mean;  // [S*F] with S = per_node ? N : 1
  std::vector<double> std;
  std::vector<uint8_t> flat_slice;  // zero-variance markers, same layout

  SeriesTensor normalize(const SeriesTensor& s) const;
  SeriesTensor denormalize(const SeriesTensor& s) const;
  // Forecast tensors are [..., N, H] on a single feature.
  Tensor denormalize_target(const Tensor& y, size_t feature) const;
  double slice_mean(size_t node, size_t feature) const;
  double slice_std(size_t node, size_t feature) const;
};

Normalizer fit_normalizer(const SeriesTensor& s, size_t train_steps,
                          bool per_node = false);

// One training example: a long history window, its aligned short suffix, and
// the target block that immediately follows. Window i starts at i*stride.
struct WindowSpec {
  size_t t_short = 12;
  size_t t_long = 48;
  size_t t_out = 12;
  size_t stride = 1;
  size_t target_feature = 0;
  void validate(size_t n_steps, size_t n_features) const;
  size_t count(size_t n_steps) const;
};

struct WindowPair {
  Tensor x_long;   // [N, T_long, F]
  Tensor x_short;  // [N, T_short, F]
  Tensor target;   // [N, T_out], target feature only
  size_t target_start = 0;  // absolute index of the first target step
};

class WindowSampler {
 public:
  WindowSampler(const SeriesTensor& series, const WindowSpec& spec);
  size_t count() const { return count_; }
  WindowPair sample(size_t i) const;
  // Samples whose target block sits entirely inside one split region.
  // Windows straddling a boundary belong to no split.
  std::vector<size_t> split_indices(Split split, const SplitSpec& spec) const;
  const WindowSpec& spec() const { return spec_; }
  const SeriesTensor& series() const { return *series_; }

 private:
  const SeriesTensor* series_;
  WindowSpec spec_;
  size_t count_ = 0;
};

// A batch stacks B window pairs along a new leading axis.
struct Batch {
  Tensor x_long;   // [B, N, T_long, F]
  Tensor x_short;  // [B, N, T_short, F]
  Tensor target;   // [B, N, T_out]
  std::vector<size_t> target_starts;
  // Per-sample clock indices for the short window, empty when the series
  // carries no timestamps.
  std::vector<size_t> tod;  // [B * T_short], position within the day
  std::vector<size_t> dow;  // [B * T_short], day of week
  size_t steps_per_day = 0;
  size_t size() const { return target_starts.size(); }
};

Batch assemble_batch(const WindowSampler& sampler,
                     const std::vector<size_t>& indices);

// Synthetic benchmark: a random geometric graph with Gaussian-kernel edge
// weights plus a binarized copy of the same support, and a diffused series
// with daily cycles, weekly amplitude modulation, and graph-coupled AR(1)
// noise. Fully determined by the seed.
struct SynthProfile {
  size_t n_nodes = 30;
  double days = 7.0;
  size_t step_minutes = 5;
  uint64_t seed = 7;
  double radius = 0.35;
  double kernel_sigma = 0.2;
  double diffusion = 0.25;
  double ar = 0.85;
  double noise = 0.3;
  double base = 10.0;
  double daily_amp = 2.0;
  double weekly_mod = 0.4;
  // When clusters > 0, node positions and seasonal phases are grouped so the
  // node set has community structure worth a low-rank embedding.
  size_t clusters = 0;
  double cluster_spread = 0.06;
  void validate() const;
};

struct SynthData {
  SparseGraph distance_graph;
  SparseGraph binary_graph;
  SeriesTensor series;
};

SynthData synth_generate(const SynthProfile& p);

}  // namespace stb
