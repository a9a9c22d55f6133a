#include "stb/temporal.hpp"

#include <cmath>

#include "stb/autodiff.hpp"

namespace stb {

void TemporalConfig::validate() const {
  if (t_short == 0 || t_long == 0 || t_out == 0 || patch_len == 0 || d_p == 0 ||
      d_x == 0 || d_model == 0 || heads == 0)
    throw ConfigError("temporal config dimensions must be positive");
  if (use_long && t_long % patch_len != 0)
    throw ConfigError(strf("long window %zu not divisible by patch length %zu",
                           t_long, patch_len));
  if (d_x % heads != 0)
    throw ConfigError(strf("attention width %zu not divisible by %zu heads",
                           d_x, heads));
  if (t_long < t_short)
    throw ConfigError(strf("long window %zu shorter than short window %zu",
                           t_long, t_short));
  if (use_time_embeddings && steps_per_day == 0)
    throw ConfigError("time embeddings need steps_per_day");
}

TemporalPath::TemporalPath(ParamStore& ps, const TemporalConfig& cfg,
                           size_t n_features, const Rng& rng,
                           const std::string& prefix)
    : cfg_(cfg), f_(n_features) {
  cfg.validate();
  if (n_features == 0) throw ConfigError("temporal path needs at least one feature");
  lift_ = Linear::create(ps, prefix + ".lift", n_features, cfg.d_x, rng);
  pos_ = prefix + ".pos";
  ps.create(pos_, {cfg.t_short, cfg.d_x}, cfg.d_x, rng);
  if (cfg.use_time_embeddings) {
    tod_table_ = prefix + ".tod";
    dow_table_ = prefix + ".dow";
    ps.create(tod_table_, {cfg.steps_per_day, cfg.d_x}, cfg.d_x, rng);
    ps.create(dow_table_, {7, cfg.d_x}, cfg.d_x, rng);
  }
  if (cfg.use_long) {
    patch_proj_ = Linear::create(ps, prefix + ".patch",
                                 cfg.patch_len * n_features, cfg.d_p, rng);
    align_ = Linear::create(ps, prefix + ".align", cfg.patch_count(),
                            cfg.t_short, rng);
  }
  for (size_t l = 0; l < cfg.l_e; ++l)
    enc_layers_.push_back(
        EncoderLayer::create(ps, strf("%s.enc%zu", prefix.c_str(), l), cfg.d_x,
                             cfg.heads, rng));
  for (size_t l = 0; l < cfg.l_d; ++l)
    dec_layers_.push_back(
        DecoderLayer::create(ps, strf("%s.dec%zu", prefix.c_str(), l), cfg.d_x,
                             cfg.heads, rng));
  readout_ = Linear::create(ps, prefix + ".readout",
                            cfg.t_short * cfg.fused_width(), cfg.d_model, rng);
}

namespace {

// [..., T, F] sanity check on the trailing dims.
void expect_window(const Var& x, size_t t, size_t f, const char* what) {
  const Shape& s = x.shape();
  if (s.size() < 2 || s[s.size() - 2] != t || s[s.size() - 1] != f)
    throw ShapeError(strf("%s expects [..., %zu, %zu], got %s", what, t, f,
                          shape_str(s).c_str()));
}

}  // namespace

Var TemporalPath::lift_short(Workspace& ws, Var x_short,
                             const ClockIndices& clock) const {
  expect_window(x_short, cfg_.t_short, f_, "lift_short");
  Var h = lift_.apply(ws, x_short);
  Var pos = broadcast_to(ws[pos_], h.shape());
  h = add(h, pos);
  if (!clock.present()) return h;
  if (!cfg_.use_time_embeddings)
    throw ConfigError("clock indices passed but time embeddings are disabled");
  if (clock.tod->size() != clock.dow->size())
    throw ShapeError("tod and dow index lists differ in length");

  // Copy: recording more nodes may reallocate tape storage.
  const Shape hs = h.shape();
  // Clock indices are per (batch, step) and shared across the node axis,
  // which sits immediately before the time axis.
  if (hs.size() < 3)
    throw ShapeError(strf("clock embeddings need [..., N, T, d], got %s",
                          shape_str(hs).c_str()));
  size_t lead = 1;
  for (size_t i = 0; i + 3 < hs.size(); ++i) lead *= hs[i];
  if (clock.tod->size() != lead * cfg_.t_short)
    throw ShapeError(strf("expected %zu clock indices, got %zu",
                          lead * cfg_.t_short, clock.tod->size()));

  Shape table_shape(hs.size(), 1);
  for (size_t i = 0; i + 3 < hs.size(); ++i) table_shape[i] = hs[i];
  table_shape[hs.size() - 2] = cfg_.t_short;
  table_shape[hs.size() - 1] = cfg_.d_x;
  Var tod = reshape(gather_rows(ws[tod_table_], *clock.tod), table_shape);
  Var dow = reshape(gather_rows(ws[dow_table_], *clock.dow), table_shape);
  h = add(h, broadcast_to(tod, hs));
  h = add(h, broadcast_to(dow, hs));
  return h;
}

Var TemporalPath::long_patches(Workspace& ws, Var x_long) const {
  if (!cfg_.use_long)
    throw ConfigError("long-window branch is disabled in this configuration");
  expect_window(x_long, cfg_.t_long, f_, "long_patches");
  Shape s = x_long.shape();
  Shape patched(s.begin(), s.end() - 2);
  patched.push_back(cfg_.patch_count());
  patched.push_back(cfg_.patch_len * f_);
  return patch_proj_.apply(ws, reshape(x_long, patched));
}

Var TemporalPath::long_projection(Workspace& ws, Var x_long) const {
  Var patches = long_patches(ws, x_long);              // [..., P, d_p]
  Var swapped = transpose_last2(patches);              // [..., d_p, P]
  Var aligned = align_.apply(ws, swapped);             // [..., d_p, T_short]
  return transpose_last2(aligned);                     // [..., T_short, d_p]
}

Var TemporalPath::encode(Workspace& ws, Var lifted) const {
  Var h = lifted;
  for (const auto& layer : enc_layers_) h = layer.apply(ws, h);
  return h;
}

Var TemporalPath::decode(Workspace& ws, Var lifted, Var enc) const {
  const Shape& a = lifted.shape();
  const Shape& b = enc.shape();
  if (a.size() < 2 || b.size() < 2 || a[a.size() - 2] != b[b.size() - 2])
    throw ShapeError(strf("decoder input %s and encoder output %s disagree on step count",
                          shape_str(a).c_str(), shape_str(b).c_str()));
  Var h = lifted;
  for (const auto& layer : dec_layers_) h = layer.apply(ws, h, enc);
  return h;
}

Var TemporalPath::fuse(Workspace& ws, Var long_aligned, Var enc, Var dec) const {
  auto steps = [](const Var& v) { return v.shape()[v.shape().size() - 2]; };
  if (steps(long_aligned) != steps(enc) || steps(enc) != steps(dec))
    throw ShapeError(strf("fuse_temporal needs equal step counts, got %s / %s / %s",
                          shape_str(long_aligned.shape()).c_str(),
                          shape_str(enc.shape()).c_str(),
                          shape_str(dec.shape()).c_str()));
  Var cat = concat_last({long_aligned, enc, dec});  // [..., T_short, W]
  const Shape s = cat.shape();
  Shape flat(s.begin(), s.end() - 2);
  flat.push_back(s[s.size() - 2] * s[s.size() - 1]);
  return readout_.apply(ws, reshape(cat, flat));
}

Var TemporalPath::forward(Workspace& ws, Var x_short, Var x_long,
                          const ClockIndices& clock) const {
  Var lifted = lift_short(ws, x_short, clock);
  Var enc = encode(ws, lifted);
  Var dec = decode(ws, lifted, enc);
  if (!cfg_.use_long) {
    Var cat = concat_last({enc, dec});
    const Shape s = cat.shape();
    Shape flat(s.begin(), s.end() - 2);
    flat.push_back(s[s.size() - 2] * s[s.size() - 1]);
    return readout_.apply(ws, reshape(cat, flat));
  }
  Var long_al = long_projection(ws, x_long);
  return fuse(ws, long_al, enc, dec);
}

size_t TemporalPath::param_count(const TemporalConfig& cfg, size_t n_features) {
  size_t total = Linear::param_count(n_features, cfg.d_x);
  total += cfg.t_short * cfg.d_x;  // positions
  if (cfg.use_time_embeddings) total += (cfg.steps_per_day + 7) * cfg.d_x;
  if (cfg.use_long) {
    total += Linear::param_count(cfg.patch_len * n_features, cfg.d_p);
    total += Linear::param_count(cfg.patch_count(), cfg.t_short);
  }
  total += cfg.l_e * EncoderLayer::param_count(cfg.d_x);
  total += cfg.l_d * DecoderLayer::param_count(cfg.d_x);
  total += Linear::param_count(cfg.t_short * cfg.fused_width(), cfg.d_model);
  return total;
}

HorizonErrors horizon_error_report(const Tensor& predictions,
                                   const Tensor& targets) {
  if (!shape_eq(predictions.shape(), targets.shape()))
    throw ShapeError(strf("prediction shape %s != target shape %s",
                          shape_str(predictions.shape()).c_str(),
                          shape_str(targets.shape()).c_str()));
  if (predictions.rank() != 2 && predictions.rank() != 3)
    throw ShapeError(strf("expected [N, T_out] or [S, N, T_out], got %s",
                          shape_str(predictions.shape()).c_str()));
  size_t samples = predictions.rank() == 3 ? predictions.dim(0) : 1;
  size_t n = predictions.dim(predictions.rank() - 2);
  size_t horizon = predictions.dim(predictions.rank() - 1);

  HorizonErrors he;
  he.abs_error = Tensor({n, horizon});
  for (size_t s = 0; s < samples; ++s)
    for (size_t i = 0; i < n; ++i)
      for (size_t t = 0; t < horizon; ++t) {
        size_t flat = (s * n + i) * horizon + t;
        he.abs_error.at({i, t}) +=
            std::fabs(predictions[flat] - targets[flat]) / double(samples);
      }
  he.mean.assign(horizon, 0.0);
  for (size_t t = 0; t < horizon; ++t) {
    for (size_t i = 0; i < n; ++i) he.mean[t] += he.abs_error.at({i, t});
    he.mean[t] /= double(n);
  }
  return he;
}

}  // namespace stb
