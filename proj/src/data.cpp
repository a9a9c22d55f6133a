#include "stb/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace stb {

void SeriesTensor::validate() const {
  if (values.rank() != 3)
    throw ValidationError(strf("series tensor must be [nodes, steps, features], got %s",
                               shape_str(values.shape()).c_str()));
  if (values.size() == 0) throw ValidationError("series tensor is empty");
  if (!feature_names.empty() && feature_names.size() != n_features())
    throw ValidationError(strf("series has %zu features but %zu feature names",
                               n_features(), feature_names.size()));
  if (step_seconds < 0) throw ValidationError("series step_seconds must be >= 0");
  if (!values.all_finite()) throw ValidationError("series contains non-finite values");
}

namespace {

std::string feature_label(const SeriesTensor& s, size_t f) {
  if (f < s.feature_names.size()) return s.feature_names[f];
  return strf("f%zu", f);
}

constexpr const char* kCsvHeader = "timestamp,node,feature,value";

}  // namespace

void save_series_csv(const std::string& path, const SeriesTensor& s) {
  s.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError(strf("%s: cannot open for writing", path.c_str()));
  out << kCsvHeader << "\n";
  // A series without wall-clock alignment gets unit-step index timestamps.
  int64_t step = s.step_seconds > 0 ? s.step_seconds : 1;
  int64_t start = s.step_seconds > 0 ? s.start_timestamp : 0;
  char line[160];
  for (size_t t = 0; t < s.n_steps(); ++t) {
    for (size_t n = 0; n < s.n_nodes(); ++n) {
      for (size_t f = 0; f < s.n_features(); ++f) {
        std::snprintf(line, sizeof line, "%lld,%zu,%s,%.17g",
                      (long long)(start + int64_t(t) * step), n,
                      feature_label(s, f).c_str(), s.values.at({n, t, f}));
        out << line << "\n";
      }
    }
  }
  if (!out) throw ValidationError(strf("%s: write failed", path.c_str()));
}

SeriesTensor load_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(strf("%s: cannot open for reading", path.c_str()));

  std::string line;
  size_t lineno = 0;
  if (!std::getline(in, line))
    throw ParseError(strf("%s: empty file", path.c_str()));
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader)
    throw ParseError(strf("%s:1: expected header '%s', got '%s'", path.c_str(),
                          kCsvHeader, line.c_str()));

  struct Row {
    int64_t ts;
    int node;
    std::string feature;
    double value;
    size_t lineno;
  };
  std::vector<Row> rows;
  std::vector<std::string> features;  // order of first appearance
  std::map<std::string, size_t> feature_idx;
  int max_node = -1;

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    long long ts;
    int node;
    char feat[64];
    double value;
    char extra;
    int got = std::sscanf(line.c_str(), "%lld ,%d ,%63[^,],%lf %c", &ts, &node,
                          feat, &value, &extra);
    if (got != 4)
      throw ParseError(strf("%s:%zu: expected 'timestamp,node,feature,value', got '%s'",
                            path.c_str(), lineno, line.c_str()));
    if (node < 0)
      throw ParseError(strf("%s:%zu: node id must be >= 0, got %d", path.c_str(),
                            lineno, node));
    if (!std::isfinite(value))
      throw ParseError(strf("%s:%zu: non-finite value", path.c_str(), lineno));
    std::string fname(feat);
    if (!feature_idx.count(fname)) {
      feature_idx[fname] = features.size();
      features.push_back(fname);
    }
    max_node = std::max(max_node, node);
    rows.push_back({ts, node, std::move(fname), value, lineno});
  }
  if (rows.empty()) throw ParseError(strf("%s: no data rows", path.c_str()));

  std::vector<int64_t> stamps;
  stamps.reserve(rows.size());
  for (const auto& r : rows) stamps.push_back(r.ts);
  std::sort(stamps.begin(), stamps.end());
  stamps.erase(std::unique(stamps.begin(), stamps.end()), stamps.end());
  int64_t step = 0;
  if (stamps.size() > 1) {
    step = stamps[1] - stamps[0];
    for (size_t i = 1; i + 1 < stamps.size(); ++i)
      if (stamps[i + 1] - stamps[i] != step)
        throw ParseError(strf("%s: uneven timestamp spacing between %lld and %lld",
                              path.c_str(), (long long)stamps[i],
                              (long long)stamps[i + 1]));
  }
  std::map<int64_t, size_t> stamp_idx;
  for (size_t i = 0; i < stamps.size(); ++i) stamp_idx[stamps[i]] = i;

  size_t n = size_t(max_node) + 1;
  size_t t_count = stamps.size();
  size_t f_count = features.size();
  SeriesTensor s;
  s.values = Tensor({n, t_count, f_count});
  s.start_timestamp = stamps[0];
  s.step_seconds = step;
  s.feature_names = features;

  std::vector<uint8_t> seen(n * t_count * f_count, 0);
  for (const auto& r : rows) {
    size_t ti = stamp_idx.at(r.ts);
    size_t fi = feature_idx.at(r.feature);
    size_t flat = (size_t(r.node) * t_count + ti) * f_count + fi;
    if (seen[flat])
      throw ParseError(strf("%s:%zu: duplicate cell (timestamp=%lld, node=%d, feature=%s)",
                            path.c_str(), r.lineno, (long long)r.ts, r.node,
                            r.feature.c_str()));
    seen[flat] = 1;
    s.values[flat] = r.value;
  }
  for (size_t node = 0; node < n; ++node)
    for (size_t ti = 0; ti < t_count; ++ti)
      for (size_t fi = 0; fi < f_count; ++fi)
        if (!seen[(node * t_count + ti) * f_count + fi])
          throw ParseError(strf("%s: missing cell (timestamp=%lld, node=%zu, feature=%s)",
                                path.c_str(), (long long)stamps[ti], node,
                                features[fi].c_str()));
  s.validate();
  return s;
}

void SplitSpec::validate() const {
  if (train <= 0 || val <= 0 || test <= 0)
    throw ConfigError(strf("split fractions must be positive, got %g/%g/%g",
                           train, val, test));
  if (std::fabs(train + val + test - 1.0) > 1e-9)
    throw ConfigError(strf("split fractions must sum to 1, got %g",
                           train + val + test));
}

std::pair<size_t, size_t> SplitSpec::boundaries(size_t n_steps) const {
  validate();
  size_t n_test = size_t(double(n_steps) * test);
  size_t n_val = size_t(double(n_steps) * val);
  if (n_steps < n_val + n_test + 1)
    throw ValidationError(strf("%zu steps cannot be split %g/%g/%g", n_steps,
                               train, val, test));
  size_t b1 = n_steps - n_val - n_test;
  return {b1, b1 + n_val};
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    default: return "test";
  }
}

Normalizer fit_normalizer(const SeriesTensor& s, size_t train_steps,
                          bool per_node) {
  s.validate();
  if (train_steps == 0 || train_steps > s.n_steps())
    throw ValidationError(strf("normalizer training region must cover 1..%zu steps, got %zu",
                               s.n_steps(), train_steps));
  Normalizer nz;
  nz.per_node = per_node;
  nz.n_nodes = s.n_nodes();
  nz.n_features = s.n_features();
  size_t slices = (per_node ? nz.n_nodes : 1) * nz.n_features;
  nz.mean.assign(slices, 0.0);
  nz.std.assign(slices, 0.0);
  nz.flat_slice.assign(slices, 0);

  std::vector<size_t> counts(slices, 0);
  for (size_t node = 0; node < nz.n_nodes; ++node) {
    for (size_t t = 0; t < train_steps; ++t) {
      for (size_t f = 0; f < nz.n_features; ++f) {
        size_t sl = per_node ? node * nz.n_features + f : f;
        nz.mean[sl] += s.values.at({node, t, f});
        ++counts[sl];
      }
    }
  }
  for (size_t sl = 0; sl < slices; ++sl) nz.mean[sl] /= double(counts[sl]);
  for (size_t node = 0; node < nz.n_nodes; ++node)
    for (size_t t = 0; t < train_steps; ++t)
      for (size_t f = 0; f < nz.n_features; ++f) {
        size_t sl = per_node ? node * nz.n_features + f : f;
        double d = s.values.at({node, t, f}) - nz.mean[sl];
        nz.std[sl] += d * d;
      }
  for (size_t sl = 0; sl < slices; ++sl) {
    nz.std[sl] = std::sqrt(nz.std[sl] / double(counts[sl]));
    if (nz.std[sl] < 1e-12) {
      nz.std[sl] = 1.0;
      nz.flat_slice[sl] = 1;
    }
  }
  return nz;
}

double Normalizer::slice_mean(size_t node, size_t feature) const {
  return mean[per_node ? node * n_features + feature : feature];
}

double Normalizer::slice_std(size_t node, size_t feature) const {
  return std[per_node ? node * n_features + feature : feature];
}

namespace {

void check_series_match(const Normalizer& nz, const SeriesTensor& s) {
  if (s.n_features() != nz.n_features || (nz.per_node && s.n_nodes() != nz.n_nodes))
    throw ValidationError(strf("normalizer fitted on %zu nodes x %zu features cannot apply to %s",
                               nz.n_nodes, nz.n_features,
                               shape_str(s.values.shape()).c_str()));
}

}  // namespace

SeriesTensor Normalizer::normalize(const SeriesTensor& s) const {
  check_series_match(*this, s);
  SeriesTensor out = s;
  for (size_t node = 0; node < s.n_nodes(); ++node)
    for (size_t t = 0; t < s.n_steps(); ++t)
      for (size_t f = 0; f < s.n_features(); ++f)
        out.values.at({node, t, f}) =
            (s.values.at({node, t, f}) - slice_mean(node, f)) / slice_std(node, f);
  return out;
}

SeriesTensor Normalizer::denormalize(const SeriesTensor& s) const {
  check_series_match(*this, s);
  SeriesTensor out = s;
  for (size_t node = 0; node < s.n_nodes(); ++node)
    for (size_t t = 0; t < s.n_steps(); ++t)
      for (size_t f = 0; f < s.n_features(); ++f)
        out.values.at({node, t, f}) =
            s.values.at({node, t, f}) * slice_std(node, f) + slice_mean(node, f);
  return out;
}

Tensor Normalizer::denormalize_target(const Tensor& y, size_t feature) const {
  if (feature >= n_features)
    throw ValidationError(strf("feature %zu out of range (%zu features)", feature,
                               n_features));
  if (y.rank() < 2)
    throw ShapeError(strf("forecast tensor must be [..., nodes, horizon], got %s",
                          shape_str(y.shape()).c_str()));
  size_t node_dim = y.dim(y.rank() - 2);
  if (per_node && node_dim != n_nodes)
    throw ShapeError(strf("forecast has %zu nodes, normalizer has %zu", node_dim,
                          n_nodes));
  size_t horizon = y.dim(y.rank() - 1);
  Tensor out = y;
  for (size_t i = 0; i < y.size(); ++i) {
    size_t node = (i / horizon) % node_dim;
    out[i] = y[i] * slice_std(node, feature) + slice_mean(node, feature);
  }
  return out;
}

void WindowSpec::validate(size_t n_steps, size_t n_features) const {
  if (t_short == 0 || t_out == 0 || stride == 0)
    throw ConfigError("window lengths and stride must be >= 1");
  if (t_long < t_short)
    throw ConfigError(strf("long window (%zu) must cover the short window (%zu)",
                           t_long, t_short));
  if (target_feature >= n_features)
    throw ConfigError(strf("target feature %zu out of range (%zu features)",
                           target_feature, n_features));
  if (n_steps < t_long + t_out)
    throw ValidationError(strf("series of %zu steps too short for %zu history + %zu horizon",
                               n_steps, t_long, t_out));
}

size_t WindowSpec::count(size_t n_steps) const {
  return (n_steps - t_long - t_out) / stride + 1;
}

WindowSampler::WindowSampler(const SeriesTensor& series, const WindowSpec& spec)
    : series_(&series), spec_(spec) {
  series.validate();
  spec.validate(series.n_steps(), series.n_features());
  count_ = spec.count(series.n_steps());
}

WindowPair WindowSampler::sample(size_t i) const {
  if (i >= count_)
    throw ValidationError(strf("window %zu out of range (%zu windows)", i, count_));
  const SeriesTensor& s = *series_;
  size_t n = s.n_nodes(), f_count = s.n_features();
  size_t long_start = i * spec_.stride;
  size_t short_start = long_start + spec_.t_long - spec_.t_short;
  WindowPair w;
  w.target_start = long_start + spec_.t_long;
  w.x_long = Tensor({n, spec_.t_long, f_count});
  w.x_short = Tensor({n, spec_.t_short, f_count});
  w.target = Tensor({n, spec_.t_out});
  for (size_t node = 0; node < n; ++node) {
    const double* src = s.values.data() + node * s.n_steps() * f_count;
    std::memcpy(w.x_long.data() + node * spec_.t_long * f_count,
                src + long_start * f_count, spec_.t_long * f_count * sizeof(double));
    std::memcpy(w.x_short.data() + node * spec_.t_short * f_count,
                src + short_start * f_count, spec_.t_short * f_count * sizeof(double));
    for (size_t t = 0; t < spec_.t_out; ++t)
      w.target.at({node, t}) =
          s.values.at({node, w.target_start + t, spec_.target_feature});
  }
  return w;
}

std::vector<size_t> WindowSampler::split_indices(Split split,
                                                 const SplitSpec& spec) const {
  auto [b1, b2] = spec.boundaries(series_->n_steps());
  std::vector<size_t> out;
  for (size_t i = 0; i < count_; ++i) {
    size_t start = i * spec_.stride + spec_.t_long;
    size_t end = start + spec_.t_out;
    bool keep = false;
    switch (split) {
      case Split::train: keep = end <= b1; break;
      case Split::val: keep = start >= b1 && end <= b2; break;
      case Split::test: keep = start >= b2; break;
    }
    if (keep) out.push_back(i);
  }
  return out;
}

Batch assemble_batch(const WindowSampler& sampler,
                     const std::vector<size_t>& indices) {
  if (indices.empty()) throw ValidationError("cannot assemble an empty batch");
  const SeriesTensor& s = sampler.series();
  const WindowSpec& spec = sampler.spec();
  size_t b = indices.size(), n = s.n_nodes(), f_count = s.n_features();
  Batch batch;
  batch.x_long = Tensor({b, n, spec.t_long, f_count});
  batch.x_short = Tensor({b, n, spec.t_short, f_count});
  batch.target = Tensor({b, n, spec.t_out});
  batch.target_starts.reserve(b);

  bool clocked = s.step_seconds > 0 && 86400 % s.step_seconds == 0 &&
                 s.start_timestamp >= 0;
  if (clocked) {
    batch.steps_per_day = size_t(86400 / s.step_seconds);
    batch.tod.reserve(b * spec.t_short);
    batch.dow.reserve(b * spec.t_short);
  }

  for (size_t k = 0; k < b; ++k) {
    WindowPair w = sampler.sample(indices[k]);
    std::memcpy(batch.x_long.data() + k * w.x_long.size(), w.x_long.data(),
                w.x_long.size() * sizeof(double));
    std::memcpy(batch.x_short.data() + k * w.x_short.size(), w.x_short.data(),
                w.x_short.size() * sizeof(double));
    std::memcpy(batch.target.data() + k * w.target.size(), w.target.data(),
                w.target.size() * sizeof(double));
    batch.target_starts.push_back(w.target_start);
    if (clocked) {
      for (size_t t = 0; t < spec.t_short; ++t) {
        size_t abs_step = w.target_start - spec.t_short + t;
        int64_t ts = s.start_timestamp + int64_t(abs_step) * s.step_seconds;
        batch.tod.push_back(size_t((ts % 86400) / s.step_seconds));
        batch.dow.push_back(size_t((ts / 86400) % 7));
      }
    }
  }
  return batch;
}

void SynthProfile::validate() const {
  if (n_nodes < 2) throw ConfigError("synthetic graph needs at least 2 nodes");
  if (days <= 0 || step_minutes == 0) throw ConfigError("synthetic series needs days > 0 and step_minutes >= 1");
  if (radius <= 0 || kernel_sigma <= 0) throw ConfigError("radius and kernel_sigma must be positive");
  if (diffusion < 0 || diffusion > 1) throw ConfigError("diffusion must lie in [0, 1]");
  if (ar < 0 || ar >= 1) throw ConfigError("ar coefficient must lie in [0, 1)");
  if (noise < 0) throw ConfigError("noise level must be >= 0");
  if (clusters > n_nodes) throw ConfigError("more clusters than nodes");
}

SynthData synth_generate(const SynthProfile& p) {
  p.validate();
  Rng root(p.seed);
  Rng pos_rng = root.fork(fnv1a("pos"));
  Rng season_rng = root.fork(fnv1a("season"));
  Rng noise_rng = root.fork(fnv1a("noise"));

  size_t n = p.n_nodes;
  std::vector<double> px(n), py(n);
  if (p.clusters == 0) {
    for (size_t i = 0; i < n; ++i) {
      px[i] = pos_rng.uniform();
      py[i] = pos_rng.uniform();
    }
  } else {
    std::vector<double> cx(p.clusters), cy(p.clusters);
    for (size_t k = 0; k < p.clusters; ++k) {
      cx[k] = 0.15 + 0.7 * pos_rng.uniform();
      cy[k] = 0.15 + 0.7 * pos_rng.uniform();
    }
    for (size_t i = 0; i < n; ++i) {
      size_t k = i % p.clusters;
      px[i] = cx[k] + p.cluster_spread * pos_rng.normal();
      py[i] = cy[k] + p.cluster_spread * pos_rng.normal();
    }
  }

  auto dist = [&](size_t u, size_t v) {
    return std::hypot(px[u] - px[v], py[u] - py[v]);
  };
  auto kernel = [&](double d) {
    return std::exp(-d * d / (2 * p.kernel_sigma * p.kernel_sigma));
  };

  std::vector<Edge> edges;
  std::vector<uint8_t> linked(n, 0);
  for (size_t u = 0; u < n; ++u)
    for (size_t v = u + 1; v < n; ++v) {
      double d = dist(u, v);
      if (d < p.radius) {
        edges.push_back({int(u), int(v), kernel(d)});
        linked[u] = linked[v] = 1;
      }
    }
  // Attach any isolated node to its nearest neighbor so every node has a
  // defined neighborhood for diffusion and strength entropy.
  for (size_t u = 0; u < n; ++u) {
    if (linked[u]) continue;
    size_t best = u == 0 ? 1 : 0;
    for (size_t v = 0; v < n; ++v)
      if (v != u && dist(u, v) < dist(u, best)) best = v;
    edges.push_back({int(std::min(u, best)), int(std::max(u, best)),
                     kernel(dist(u, best))});
    linked[u] = 1;
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    return a.u != b.u ? a.u < b.u : a.v < b.v;
  });
  edges.erase(std::unique(edges.begin(), edges.end(),
                          [](const Edge& a, const Edge& b) {
                            return a.u == b.u && a.v == b.v;
                          }),
              edges.end());

  std::vector<Edge> binary = edges;
  for (auto& e : binary) e.w = 1.0;
  SynthData out{SparseGraph(n, edges, false), SparseGraph(n, binary, false),
                SeriesTensor{}};

  // Row-normalized neighbor weights for the diffusion step.
  std::vector<std::vector<std::pair<size_t, double>>> nbrs(n);
  for (const auto& e : edges) {
    nbrs[size_t(e.u)].push_back({size_t(e.v), e.w});
    nbrs[size_t(e.v)].push_back({size_t(e.u), e.w});
  }
  std::vector<double> row_sum(n, 0.0);
  for (size_t u = 0; u < n; ++u)
    for (const auto& [v, w] : nbrs[u]) row_sum[u] += w;

  size_t day_period = 24 * 60 / p.step_minutes;
  size_t week_period = 7 * day_period;
  size_t t_count = size_t(p.days * 24.0 * 60.0 / double(p.step_minutes));
  if (t_count == 0) throw ConfigError("synthetic series has zero steps");

  std::vector<double> amp(n), phase(n), wphase(n);
  if (p.clusters == 0) {
    for (size_t i = 0; i < n; ++i) {
      amp[i] = 0.7 + 0.6 * season_rng.uniform();
      phase[i] = 2 * std::numbers::pi * season_rng.uniform();
      wphase[i] = 2 * std::numbers::pi * season_rng.uniform();
    }
  } else {
    // Cluster-level seasonality with small per-node jitter: node identity is
    // mostly "which community", which a low-rank embedding can carry.
    std::vector<double> ca(p.clusters), cp(p.clusters), cw(p.clusters);
    for (size_t k = 0; k < p.clusters; ++k) {
      ca[k] = 0.7 + 0.6 * season_rng.uniform();
      cp[k] = 2 * std::numbers::pi * season_rng.uniform();
      cw[k] = 2 * std::numbers::pi * season_rng.uniform();
    }
    for (size_t i = 0; i < n; ++i) {
      size_t k = i % p.clusters;
      amp[i] = ca[k] * (1.0 + 0.05 * season_rng.normal());
      phase[i] = cp[k] + 0.05 * season_rng.normal();
      wphase[i] = cw[k];
    }
  }

  out.series.values = Tensor({n, t_count, 1});
  out.series.start_timestamp = 1617580800;  // 2021-04-05 00:00 UTC
  out.series.step_seconds = int64_t(p.step_minutes) * 60;
  out.series.feature_names = {"flow"};

  std::vector<double> z(n, 0.0), z_next(n, 0.0);
  const double two_pi = 2 * std::numbers::pi;
  for (size_t t = 0; t < t_count; ++t) {
    for (size_t i = 0; i < n; ++i) {
      double mixed = 0.0;
      if (p.diffusion > 0 && row_sum[i] > 0) {
        for (const auto& [v, w] : nbrs[i]) mixed += w * z[v];
        mixed /= row_sum[i];
      }
      double carried = (1.0 - p.diffusion) * z[i] + p.diffusion * mixed;
      z_next[i] = p.ar * carried + p.noise * noise_rng.normal();
    }
    std::swap(z, z_next);
    for (size_t i = 0; i < n; ++i) {
      double weekly = 1.0 + p.weekly_mod *
                                std::sin(two_pi * double(t) / double(week_period) +
                                         wphase[i]);
      double daily = std::sin(two_pi * double(t) / double(day_period) + phase[i]);
      out.series.values.at({i, t, 0}) =
          p.base + p.daily_amp * amp[i] * weekly * daily + z[i];
    }
  }
  return out;
}

}  // namespace stb
