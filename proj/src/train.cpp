#include "stb/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <thread>

#include "stb/autodiff.hpp"

namespace stb {

void TrainConfig::validate() const {
  // lr 0 is allowed: a frozen run is the cheapest smoke test there is.
  if (lr < 0) throw ConfigError("lr must be >= 0");
  if (lr_decay <= 0) throw ConfigError("lr_decay must be positive");
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (clip_norm < 0) throw ConfigError("clip_norm must be >= 0");
}

Adam::Adam(size_t dim, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(dim, 0.0),
      v_(dim, 0.0) {}

void Adam::step(std::vector<double>& x, const std::vector<double>& grad) {
  if (x.size() != m_.size() || grad.size() != m_.size())
    throw ShapeError(strf("optimizer built for %zu coords, got %zu/%zu",
                          m_.size(), x.size(), grad.size()));
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  for (size_t i = 0; i < x.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    x[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

double clip_gradient(std::vector<double>& g, double max_norm) {
  double sq = 0;
  for (double v : g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm))
    throw NumericError("gradient norm is not finite");
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (double& v : g) v *= s;
  }
  return norm;
}

Dataset prepare_dataset(SeriesTensor raw, std::vector<SparseGraph> graphs,
                        const SplitSpec& split, bool per_node_norm) {
  raw.validate();
  split.validate();
  Dataset d;
  const auto bounds = split.boundaries(raw.n_steps());
  d.norm = fit_normalizer(raw, bounds.first, per_node_norm);
  d.normalized = d.norm.normalize(raw);
  d.raw = std::move(raw);
  d.split = split;
  d.graphs = std::move(graphs);
  return d;
}

namespace {

struct PredPair {
  Tensor preds;    // [S, N, H], normalized
  Tensor targets;  // [S, N, H], normalized
};

PredPair predict_windows(StModel& model, const WindowSampler& sampler,
                         const std::vector<size_t>& idx, size_t batch_size) {
  const size_t n = model.n_nodes();
  const size_t horizon = sampler.spec().t_out;
  PredPair pp;
  pp.preds = Tensor({idx.size(), n, horizon});
  pp.targets = Tensor({idx.size(), n, horizon});
  for (size_t off = 0; off < idx.size(); off += batch_size) {
    const size_t take = std::min(batch_size, idx.size() - off);
    std::vector<size_t> slice(idx.begin() + off, idx.begin() + off + take);
    const Batch batch = assemble_batch(sampler, slice);
    Tape tape;
    Workspace ws(tape, model.params());
    const Tensor& out = model.forecast(ws, batch).value();
    std::copy(out.data(), out.data() + out.size(),
              pp.preds.data() + off * n * horizon);
    std::copy(batch.target.data(), batch.target.data() + batch.target.size(),
              pp.targets.data() + off * n * horizon);
  }
  return pp;
}

double denormalized_mae(const PredPair& pp, const Normalizer& nz,
                        size_t feature) {
  return mae(nz.denormalize_target(pp.targets, feature),
             nz.denormalize_target(pp.preds, feature));
}

}  // namespace

TrainResult train(StModel& model, const Dataset& data,
                  const WindowSpec& window, const TrainConfig& cfg) {
  cfg.validate();
  window.validate(data.normalized.n_steps(), data.normalized.n_features());
  const WindowSampler sampler(data.normalized, window);
  const std::vector<size_t> train_idx =
      sampler.split_indices(Split::train, data.split);
  if (train_idx.empty())
    throw ValidationError("no training windows fit inside the train region");
  const std::vector<size_t> val_idx =
      sampler.split_indices(Split::val, data.split);

  ParamStore& ps = model.params();
  Adam opt(ps.total_size(), cfg.lr);
  const Rng shuffle_rng = Rng(cfg.seed).fork(fnv1a("shuffle"));

  size_t neg_count = 0;
  if (model.config().lambda_recon > 0) {
    const SparseGraph& g0 = model.graphs()[0];
    neg_count = std::min(model.config().negatives_per_edge * g0.edges().size(),
                         non_edge_count(g0));
  }

  TrainResult res;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_params;
  size_t since_best = 0;
  double lr = cfg.lr;
  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.set_lr(lr);
    std::vector<size_t> order = train_idx;
    Rng r = shuffle_rng.fork(epoch);
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[r.index(i)]);

    double loss_sum = 0, norm_sum = 0;
    size_t batches = 0;
    for (size_t off = 0; off < order.size(); off += cfg.batch_size, ++batches) {
      const size_t take = std::min(cfg.batch_size, order.size() - off);
      std::vector<size_t> slice(order.begin() + off,
                                order.begin() + off + take);
      const Batch batch = assemble_batch(sampler, slice);
      std::vector<std::pair<int, int>> negatives;
      if (neg_count > 0)
        negatives = negative_sample(
            model.graphs()[0], neg_count,
            fnv1a(strf("neg.%llu.%zu.%zu",
                       static_cast<unsigned long long>(cfg.seed), epoch,
                       batches)));
      try {
        Tape tape;
        Workspace ws(tape, ps);
        const StModel::LossParts parts = model.loss(ws, batch, negatives);
        tape.backward(parts.total);
        loss_sum += parts.total.value()[0];
        std::vector<double> grad = ws.grad_flat();
        norm_sum += clip_gradient(grad, cfg.clip_norm);
        std::vector<double> flat = ps.flatten();
        opt.step(flat, grad);
        ps.unflatten(flat);
      } catch (const NumericError& e) {
        throw TrainError(strf("aborted at epoch %zu batch %zu: %s", epoch,
                              batches, e.what()));
      }
    }
    res.train_loss.push_back(loss_sum / double(batches));
    res.grad_norm.push_back(norm_sum / double(batches));

    double vm = std::numeric_limits<double>::quiet_NaN();
    if (!val_idx.empty()) {
      vm = denormalized_mae(
          predict_windows(model, sampler, val_idx, cfg.batch_size), data.norm,
          window.target_feature);
      if (vm < best) {
        best = vm;
        res.best_epoch = epoch;
        best_params = ps.flatten();
        since_best = 0;
      } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
        res.val_mae.push_back(vm);
        res.stopped_early = true;
        break;
      }
    }
    if (!res.stopped_early) res.val_mae.push_back(vm);
    lr *= cfg.lr_decay;
  }
  res.epochs_run = res.train_loss.size();
  if (!best_params.empty()) {
    ps.unflatten(best_params);
    res.best_val_mae = best;
  }
  return res;
}

ForecastReport evaluate(StModel& model, const Dataset& data,
                        const WindowSpec& window, Split which,
                        size_t batch_size, double pnse_threshold,
                        bool mask_zeros, size_t entropy_bins) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  window.validate(data.normalized.n_steps(), data.normalized.n_features());
  const WindowSampler sampler(data.normalized, window);
  const std::vector<size_t> idx = sampler.split_indices(which, data.split);
  if (idx.empty())
    throw ValidationError(strf("%s split holds no complete windows",
                               split_name(which)));

  const PredPair pp = predict_windows(model, sampler, idx, batch_size);
  ForecastReport rep;
  rep.n_windows = idx.size();
  rep.predictions = data.norm.denormalize_target(pp.preds, window.target_feature);
  rep.targets = data.norm.denormalize_target(pp.targets, window.target_feature);

  std::vector<uint8_t> keep;
  if (mask_zeros) {
    keep.resize(rep.targets.size());
    for (size_t i = 0; i < rep.targets.size(); ++i)
      keep[i] = rep.targets[i] != 0.0;
  }
  auto score = [&](const Tensor& yhat) {
    return mask_zeros ? metric_suite_masked(rep.targets, yhat, keep,
                                            pnse_threshold)
                      : metric_suite(rep.targets, yhat, pnse_threshold);
  };
  rep.overall = score(rep.predictions);
  if (mask_zeros) {
    // Slice mask and cells per horizon; same layout trick as the clean path.
    const size_t horizon = window.t_out;
    const size_t rows = rep.targets.size() / horizon;
    Shape slice_shape{idx.size(), model.n_nodes(), 1};
    for (size_t h = 0; h < horizon; ++h) {
      Tensor ys(slice_shape), ph(slice_shape);
      std::vector<uint8_t> kh(rows);
      for (size_t r = 0; r < rows; ++r) {
        ys[r] = rep.targets[r * horizon + h];
        ph[r] = rep.predictions[r * horizon + h];
        kh[r] = keep[r * horizon + h];
      }
      rep.per_horizon.push_back(metric_suite_masked(ys, ph, kh, pnse_threshold));
    }
  } else {
    rep.per_horizon = per_horizon_suite(rep.targets, rep.predictions,
                                        pnse_threshold);
  }
  rep.horizon = horizon_error_report(rep.predictions, rep.targets);

  // Copy-last: every horizon step repeats the observation just before the
  // target block. Climatology: the per-node training mean.
  const size_t n = model.n_nodes();
  const size_t horizon = window.t_out;
  const size_t f = window.target_feature;
  Tensor hl({idx.size(), n, horizon}), clim({idx.size(), n, horizon});
  const size_t train_steps = data.split.boundaries(data.raw.n_steps()).first;
  std::vector<double> node_mean(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    for (size_t t = 0; t < train_steps; ++t)
      node_mean[i] += data.raw.values.at({i, t, f});
    node_mean[i] /= double(train_steps);
  }
  for (size_t s = 0; s < idx.size(); ++s) {
    const size_t target_start = idx[s] * window.stride + window.t_long;
    for (size_t i = 0; i < n; ++i) {
      const double last = data.raw.values.at({i, target_start - 1, f});
      for (size_t h = 0; h < horizon; ++h) {
        hl.at({s, i, h}) = last;
        clim.at({s, i, h}) = node_mean[i];
      }
    }
  }
  rep.baseline_hl = score(hl);
  rep.baseline_climatology = score(clim);

  std::vector<size_t> windows{window.t_short, window.t_long};
  std::sort(windows.begin(), windows.end());
  windows.erase(std::unique(windows.begin(), windows.end()), windows.end());
  rep.entropy = mismatch_report(model.graphs()[0], data.raw.values, windows,
                                entropy_bins, f);
  return rep;
}

const char* sweep_axis_name(SweepAxis a) {
  return a == SweepAxis::window_length ? "window_length" : "embed_rank";
}

std::vector<SweepPoint> sweep(SweepAxis axis, const std::vector<size_t>& values,
                              const Dataset& data, const WindowSpec& window,
                              const ModelConfig& base, const TrainConfig& tcfg,
                              size_t jobs) {
  if (values.empty()) throw ValidationError("sweep needs at least one value");
  std::vector<SweepPoint> points(values.size());
  std::atomic<size_t> cursor{0};

  auto run_point = [&](size_t i) {
    SweepPoint p;
    p.value = values[i];
    try {
      WindowSpec w = window;
      ModelConfig m = base;
      if (axis == SweepAxis::window_length) {
        w.t_long = values[i];
        m.temporal.t_long = values[i];
      } else {
        m.embed_rank = values[i];
      }
      StModel model(m, data.raw.n_nodes(), data.raw.n_features(), data.graphs,
                    tcfg.seed);
      train(model, data, w, tcfg);
      p.test_mae =
          evaluate(model, data, w, Split::test, tcfg.batch_size).overall.mae;
      p.ok = true;
    } catch (const std::exception& e) {
      p.ok = false;
      p.error = e.what();
    }
    points[i] = std::move(p);
  };

  jobs = std::max<size_t>(1, std::min(jobs, values.size()));
  if (jobs == 1) {
    for (size_t i = 0; i < values.size(); ++i) run_point(i);
    return points;
  }
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (size_t t = 0; t < jobs; ++t)
    pool.emplace_back([&]() {
      for (;;) {
        const size_t i = cursor.fetch_add(1);
        if (i >= points.size()) return;
        run_point(i);
      }
    });
  for (auto& th : pool) th.join();
  return points;
}

void write_sweep_csv(const std::string& path,
                     const std::vector<SweepPoint>& points) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw ValidationError("cannot open for writing: " + path);
  std::fprintf(f, "axis_value,test_mae\n");
  for (const SweepPoint& p : points)
    if (p.ok) std::fprintf(f, "%zu,%.10g\n", p.value, p.test_mae);
  std::fclose(f);
}

}  // namespace stb
