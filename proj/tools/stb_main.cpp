// Batch front end: every subcommand reads one JSON config (plus --set
// overrides), seeds all randomness from it, writes its outputs and the
// resolved config into out_dir, and prints a short human summary. Files are
// the contract; stdout is a courtesy.
#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "stb/embedding.hpp"
#include "stb/grad_check.hpp"
#include "stb/io.hpp"
#include "stb/train.hpp"

using json = nlohmann::json;
using namespace stb;

namespace {

json default_config() {
  return json{
      {"seed", 7},
      {"out_dir", "out"},
      {"data",
       {{"series", ""},
        {"graphs", json::array()},
        {"graph_directed", false},
        {"split", {{"train", 0.6}, {"val", 0.2}, {"test", 0.2}}},
        {"per_node_norm", false},
        {"mask_zeros", false}}},
      {"synth",
       {{"n_nodes", 30},
        {"days", 7.0},
        {"step_minutes", 5},
        {"seed", 7},
        {"radius", 0.35},
        {"kernel_sigma", 0.2},
        {"diffusion", 0.25},
        {"ar", 0.85},
        {"noise", 0.3},
        {"base", 10.0},
        {"daily_amp", 2.0},
        {"weekly_mod", 0.4},
        {"clusters", 0},
        {"cluster_spread", 0.06}}},
      {"window",
       {{"t_short", 12},
        {"t_long", 48},
        {"t_out", 12},
        {"stride", 1},
        {"target_feature", 0}}},
      {"temporal",
       {{"patch_len", 12},
        {"d_p", 32},
        {"d_x", 32},
        {"d_model", 64},
        {"l_e", 1},
        {"l_d", 1},
        {"heads", 4},
        {"use_time_embeddings", false},
        {"use_long", true}}},
      {"fusion",
       {{"l", 3},
        {"j", 2},
        {"d_s", 64},
        {"d_m", 64},
        {"gate_tokens", 4},
        {"sf_depth", 1},
        {"mf_depth", 1},
        {"head_skip", true}}},
      {"embed",
       {{"rank", 16},
        {"beta", 1.0},
        {"lambda_recon", 0.1},
        {"negatives_per_edge", 5},
        {"pretrain",
         {{"enabled", false}, {"epochs", 300}, {"lr", 0.01}, {"init", "spectral"}}}}},
      {"train",
       {{"lr", 1e-3},
        {"lr_decay", 1.0},
        {"epochs", 50},
        {"batch_size", 8},
        {"clip_norm", 5.0},
        {"patience", 10}}},
      {"eval",
       {{"split", "test"},
        {"batch_size", 8},
        {"pnse_threshold", 0.0},
        {"entropy_bins", 16}}},
      {"entropy", {{"windows", {12, 48, 288}}, {"bins", 16}}},
      {"gradcheck",
       {{"probes", 32}, {"eps", 1e-5}, {"batch", 2}, {"windows", 2}}},
      {"sweep",
       {{"axis", "window_length"},
        {"values", {12, 96, 288, 576}},
        {"jobs", 1}}}};
}

const char* category(const json& j) {
  if (j.is_object()) return "object";
  if (j.is_array()) return "array";
  if (j.is_string()) return "string";
  if (j.is_boolean()) return "boolean";
  if (j.is_number()) return "number";
  return "null";
}

std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

// Every user key must exist in the defaults with the same JSON category.
void check_keys(const json& user, const json& defaults,
                const std::string& path) {
  for (const auto& item : user.items()) {
    const std::string here = join_path(path, item.key());
    if (!defaults.contains(item.key()))
      throw ConfigError("unknown config key: " + here);
    const json& ref = defaults.at(item.key());
    if (std::string(category(item.value())) != category(ref))
      throw ConfigError(strf("config key %s should be a %s, got %s",
                             here.c_str(), category(ref),
                             category(item.value())));
    if (item.value().is_object()) check_keys(item.value(), ref, here);
    if (item.value().is_array() && !ref.empty() && !item.value().empty()) {
      for (const json& e : item.value())
        if (std::string(category(e)) != category(ref.at(0)))
          throw ConfigError(strf("config key %s holds mixed element types",
                                 here.c_str()));
    }
  }
}

void deep_merge(json& base, const json& over) {
  for (const auto& item : over.items()) {
    if (item.value().is_object() && base.contains(item.key()) &&
        base.at(item.key()).is_object()) {
      deep_merge(base.at(item.key()), item.value());
    } else {
      base[item.key()] = item.value();
    }
  }
}

void apply_set(json& cfg, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set expects key.path=value, got: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  json parsed = json::parse(raw, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded()) parsed = raw;  // bare strings stay strings

  json* node = &cfg;
  size_t start = 0;
  for (;;) {
    const size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (!node->contains(key))
      throw ConfigError("unknown config key: " + path.substr(0, dot));
    if (dot == std::string::npos) {
      json& slot = (*node)[key];
      if (std::string(category(parsed)) != category(slot))
        throw ConfigError(strf("config key %s should be a %s, got %s",
                               path.c_str(), category(slot),
                               category(parsed)));
      slot = parsed;
      return;
    }
    node = &(*node)[key];
    if (!node->is_object())
      throw ConfigError("config key " + path.substr(0, dot) +
                        " is not a section");
    start = dot + 1;
  }
}

json resolve_config(const std::string& path,
                    const std::vector<std::string>& sets) {
  json cfg = default_config();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read config file: " + path);
    json user;
    try {
      in >> user;
    } catch (const json::parse_error& e) {
      throw ParseError(strf("%s: %s", path.c_str(), e.what()));
    }
    if (!user.is_object()) throw ParseError(path + ": config must be a JSON object");
    check_keys(user, cfg, "");
    deep_merge(cfg, user);
  }
  for (const std::string& s : sets) apply_set(cfg, s);
  return cfg;
}

// Numeric extraction with the config path in every complaint.
size_t as_index(const json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<size_t>();
  if (j.is_number_integer() && j.get<int64_t>() >= 0)
    return size_t(j.get<int64_t>());
  if (j.is_number_float() && j.get<double>() >= 0 &&
      std::floor(j.get<double>()) == j.get<double>())
    return size_t(j.get<double>());
  throw ConfigError("config key " + path + " must be a non-negative integer");
}

double as_num(const json& j, const std::string& path) {
  if (!j.is_number())
    throw ConfigError("config key " + path + " must be a number");
  return j.get<double>();
}

std::vector<size_t> as_index_list(const json& j, const std::string& path) {
  std::vector<size_t> out;
  for (size_t i = 0; i < j.size(); ++i)
    out.push_back(as_index(j.at(i), strf("%s[%zu]", path.c_str(), i)));
  return out;
}

SynthProfile synth_profile(const json& s) {
  SynthProfile p;
  p.n_nodes = as_index(s.at("n_nodes"), "synth.n_nodes");
  p.days = as_num(s.at("days"), "synth.days");
  p.step_minutes = as_index(s.at("step_minutes"), "synth.step_minutes");
  p.seed = as_index(s.at("seed"), "synth.seed");
  p.radius = as_num(s.at("radius"), "synth.radius");
  p.kernel_sigma = as_num(s.at("kernel_sigma"), "synth.kernel_sigma");
  p.diffusion = as_num(s.at("diffusion"), "synth.diffusion");
  p.ar = as_num(s.at("ar"), "synth.ar");
  p.noise = as_num(s.at("noise"), "synth.noise");
  p.base = as_num(s.at("base"), "synth.base");
  p.daily_amp = as_num(s.at("daily_amp"), "synth.daily_amp");
  p.weekly_mod = as_num(s.at("weekly_mod"), "synth.weekly_mod");
  p.clusters = as_index(s.at("clusters"), "synth.clusters");
  p.cluster_spread = as_num(s.at("cluster_spread"), "synth.cluster_spread");
  return p;
}

WindowSpec window_spec(const json& cfg) {
  const json& w = cfg.at("window");
  WindowSpec spec;
  spec.t_short = as_index(w.at("t_short"), "window.t_short");
  spec.t_long = as_index(w.at("t_long"), "window.t_long");
  spec.t_out = as_index(w.at("t_out"), "window.t_out");
  spec.stride = as_index(w.at("stride"), "window.stride");
  spec.target_feature = as_index(w.at("target_feature"), "window.target_feature");
  return spec;
}

SplitSpec split_spec(const json& cfg) {
  const json& s = cfg.at("data").at("split");
  SplitSpec spec;
  spec.train = as_num(s.at("train"), "data.split.train");
  spec.val = as_num(s.at("val"), "data.split.val");
  spec.test = as_num(s.at("test"), "data.split.test");
  return spec;
}

TrainConfig train_config(const json& cfg) {
  const json& t = cfg.at("train");
  TrainConfig tc;
  tc.lr = as_num(t.at("lr"), "train.lr");
  tc.lr_decay = as_num(t.at("lr_decay"), "train.lr_decay");
  tc.epochs = as_index(t.at("epochs"), "train.epochs");
  tc.batch_size = as_index(t.at("batch_size"), "train.batch_size");
  tc.seed = as_index(cfg.at("seed"), "seed");
  tc.clip_norm = as_num(t.at("clip_norm"), "train.clip_norm");
  tc.patience = as_index(t.at("patience"), "train.patience");
  return tc;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

struct RawData {
  SeriesTensor series;
  std::vector<SparseGraph> graphs;
};

RawData load_raw(const json& cfg) {
  const json& dc = cfg.at("data");
  const size_t j = as_index(cfg.at("fusion").at("j"), "fusion.j");
  RawData rd;
  const std::string spath = dc.at("series").get<std::string>();
  if (spath.empty()) {
    SynthData sd = synth_generate(synth_profile(cfg.at("synth")));
    rd.series = std::move(sd.series);
    rd.graphs.push_back(std::move(sd.distance_graph));
    if (j >= 2) rd.graphs.push_back(std::move(sd.binary_graph));
    if (j > 2)
      throw ConfigError(strf(
          "synthetic data provides at most 2 prior graphs; fusion.j is %zu", j));
  } else {
    rd.series = ends_with(spath, ".csv") ? load_series_csv(spath)
                                         : load_series(spath);
    const bool directed = dc.at("graph_directed").get<bool>();
    for (const json& g : dc.at("graphs"))
      rd.graphs.push_back(SparseGraph::from_csv(g.get<std::string>(), directed));
    if (rd.graphs.size() != j)
      throw ConfigError(strf("fusion.j is %zu but data.graphs lists %zu files",
                             j, rd.graphs.size()));
  }
  return rd;
}

Dataset build_dataset(const json& cfg) {
  RawData rd = load_raw(cfg);
  return prepare_dataset(std::move(rd.series), std::move(rd.graphs),
                         split_spec(cfg),
                         cfg.at("data").at("per_node_norm").get<bool>());
}

ModelConfig model_config(const json& cfg, const Dataset& data) {
  const json& t = cfg.at("temporal");
  const json& f = cfg.at("fusion");
  const json& e = cfg.at("embed");
  const WindowSpec w = window_spec(cfg);

  ModelConfig mc;
  mc.temporal.t_short = w.t_short;
  mc.temporal.t_long = w.t_long;
  mc.temporal.t_out = w.t_out;
  mc.temporal.patch_len = as_index(t.at("patch_len"), "temporal.patch_len");
  mc.temporal.d_p = as_index(t.at("d_p"), "temporal.d_p");
  mc.temporal.d_x = as_index(t.at("d_x"), "temporal.d_x");
  mc.temporal.d_model = as_index(t.at("d_model"), "temporal.d_model");
  mc.temporal.l_e = as_index(t.at("l_e"), "temporal.l_e");
  mc.temporal.l_d = as_index(t.at("l_d"), "temporal.l_d");
  mc.temporal.heads = as_index(t.at("heads"), "temporal.heads");
  mc.temporal.use_time_embeddings = t.at("use_time_embeddings").get<bool>();
  mc.temporal.use_long = t.at("use_long").get<bool>();
  if (mc.temporal.use_time_embeddings) {
    const int64_t step = data.raw.step_seconds;
    if (step <= 0 || 86400 % step != 0)
      throw ConfigError(
          "temporal.use_time_embeddings needs a series whose step divides one day");
    mc.temporal.steps_per_day = size_t(86400 / step);
  }

  mc.fusion.l = as_index(f.at("l"), "fusion.l");
  mc.fusion.j = as_index(f.at("j"), "fusion.j");
  mc.fusion.d_s = as_index(f.at("d_s"), "fusion.d_s");
  mc.fusion.d_m = as_index(f.at("d_m"), "fusion.d_m");
  mc.fusion.d_model = mc.temporal.d_model;
  mc.fusion.gate_tokens = as_index(f.at("gate_tokens"), "fusion.gate_tokens");
  mc.fusion.t_out = w.t_out;
  mc.fusion.sf_depth = as_index(f.at("sf_depth"), "fusion.sf_depth");
  mc.fusion.mf_depth = as_index(f.at("mf_depth"), "fusion.mf_depth");
  mc.fusion.head_skip = f.at("head_skip").get<bool>();

  mc.embed_rank = as_index(e.at("rank"), "embed.rank");
  mc.beta = as_num(e.at("beta"), "embed.beta");
  mc.lambda_recon = as_num(e.at("lambda_recon"), "embed.lambda_recon");
  mc.negatives_per_edge =
      as_index(e.at("negatives_per_edge"), "embed.negatives_per_edge");
  return mc;
}

StModel build_model(const json& cfg, const Dataset& data) {
  return StModel(model_config(cfg, data), data.raw.n_nodes(),
                 data.raw.n_features(), data.graphs,
                 as_index(cfg.at("seed"), "seed"));
}

// Everything that shapes the parameter vector or the data it trains on.
uint64_t model_signature(const json& cfg) {
  json sig{{"window", cfg.at("window")},   {"temporal", cfg.at("temporal")},
           {"fusion", cfg.at("fusion")},   {"embed", cfg.at("embed")},
           {"synth", cfg.at("synth")},     {"seed", cfg.at("seed")},
           {"series", cfg.at("data").at("series")}};
  return fnv1a(sig.dump());
}

void load_into(StModel& model, const std::string& path, uint64_t want) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.config_hash != want)
    throw ValidationError(
        strf("checkpoint %s was written under a different model configuration "
             "(hash %016llx, expected %016llx)",
             path.c_str(), (unsigned long long)ck.config_hash,
             (unsigned long long)want));
  ParamStore& dst = model.params();
  if (ck.params.count() != dst.count())
    throw ValidationError(strf("checkpoint holds %zu parameters, model has %zu",
                               ck.params.count(), dst.count()));
  for (size_t i = 0; i < dst.count(); ++i) {
    ParamStore::Entry& e = dst.entry(i);
    if (!ck.params.has(e.name))
      throw ValidationError("checkpoint lacks parameter " + e.name);
    const Tensor& src = ck.params.get(e.name);
    if (!shape_eq(src.shape(), e.value.shape()))
      throw ValidationError(strf("parameter %s is %s in the checkpoint, %s in the model",
                                 e.name.c_str(), shape_str(src.shape()).c_str(),
                                 shape_str(e.value.shape()).c_str()));
    e.value = src;
  }
}

void write_resolved(const json& cfg, const std::string& out,
                    const std::string& cmd) {
  std::ofstream f(out + "/" + cmd + "_config.json");
  f << cfg.dump(2) << "\n";
}

FILE* open_csv(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw ValidationError("cannot open for writing: " + path);
  return f;
}

// ---- subcommands ----

void cmd_synth(const json& cfg, const std::string& out) {
  const SynthData sd = synth_generate(synth_profile(cfg.at("synth")));
  save_series(out + "/series.stbs", sd.series);
  sd.distance_graph.to_csv(out + "/graph_distance.csv");
  sd.binary_graph.to_csv(out + "/graph_binary.csv");
  std::printf("synth: %zu nodes, %zu steps, %zu features, %zu distance edges\n",
              sd.series.n_nodes(), sd.series.n_steps(), sd.series.n_features(),
              sd.distance_graph.edges().size());
  std::printf("wrote %s/series.stbs, graph_distance.csv, graph_binary.csv\n",
              out.c_str());
}

void cmd_diagnose(const json& cfg, const std::string& out) {
  const RawData rd = load_raw(cfg);
  const json& ec = cfg.at("entropy");
  const std::vector<size_t> windows =
      as_index_list(ec.at("windows"), "entropy.windows");
  const size_t bins = as_index(ec.at("bins"), "entropy.bins");
  const size_t feature = window_spec(cfg).target_feature;
  const EntropyReport rep =
      mismatch_report(rd.graphs[0], rd.series.values, windows, bins, feature);
  write_entropy_csv(rep, out + "/entropy.csv");
  std::printf("spatial entropy %.6f nats over %zu nodes\n", rep.h_spatial,
              rep.n_nodes);
  for (size_t i = 0; i < rep.windows.size(); ++i)
    std::printf("window %zu: temporal %.6f, mismatch %.6f\n", rep.windows[i],
                rep.h_temporal[i], rep.mismatch[i]);
  std::printf("recommended window: %zu\n", rep.recommended_window);
}

void cmd_embed(const json& cfg, const std::string& out) {
  const RawData rd = load_raw(cfg);
  const json& e = cfg.at("embed");
  const json& p = e.at("pretrain");
  EmbedFitConfig ec;
  ec.m = as_index(e.at("rank"), "embed.rank");
  ec.beta = as_num(e.at("beta"), "embed.beta");
  ec.negatives_per_edge =
      as_index(e.at("negatives_per_edge"), "embed.negatives_per_edge");
  ec.epochs = as_index(p.at("epochs"), "embed.pretrain.epochs");
  ec.lr = as_num(p.at("lr"), "embed.pretrain.lr");
  ec.seed = as_index(cfg.at("seed"), "seed");
  const std::string init = p.at("init").get<std::string>();
  if (init == "spectral")
    ec.init = EmbedFitConfig::Init::spectral;
  else if (init == "random")
    ec.init = EmbedFitConfig::Init::random;
  else
    throw ConfigError("embed.pretrain.init must be spectral or random");

  const EmbedFitResult res = fit_embedding(rd.graphs[0], ec);
  save_tensor(out + "/embedding.stb", res.embedding.h);
  FILE* f = open_csv(out + "/embed_trace.csv");
  std::fprintf(f, "epoch,loss\n");
  for (size_t i = 0; i < res.loss_trace.size(); ++i)
    std::fprintf(f, "%zu,%.10g\n", i, res.loss_trace[i]);
  std::fclose(f);
  std::printf("embed: rank %zu, loss %.6g -> %.6g, edge loss %.6g\n", ec.m,
              res.initial_loss,
              res.loss_trace.empty() ? res.initial_loss : res.loss_trace.back(),
              res.final_edge_loss);
  std::printf("wrote %s/embedding.stb, embed_trace.csv\n", out.c_str());
}

void cmd_gradcheck(const json& cfg, const std::string& out) {
  const Dataset data = build_dataset(cfg);
  StModel model = build_model(cfg, data);
  const WindowSpec w = window_spec(cfg);
  const WindowSampler sampler(data.normalized, w);
  const std::vector<size_t> train_idx =
      sampler.split_indices(Split::train, data.split);
  if (train_idx.empty()) throw ValidationError("no training windows to check");
  const json& gc = cfg.at("gradcheck");
  const size_t want = as_index(gc.at("windows"), "gradcheck.windows");
  const size_t batch_n = std::min(want == 0 ? size_t(1) : want, train_idx.size());
  const std::vector<size_t> pick(train_idx.begin(),
                                 train_idx.begin() + batch_n);
  const Batch batch = assemble_batch(sampler, pick);

  std::vector<std::pair<int, int>> negatives;
  if (model.config().lambda_recon > 0) {
    const SparseGraph& g0 = model.graphs()[0];
    const size_t count = std::min(
        model.config().negatives_per_edge * g0.edges().size(),
        non_edge_count(g0));
    negatives = negative_sample(g0, count, as_index(cfg.at("seed"), "seed"));
  }
  auto loss = [&](Tape&, Workspace& ws) {
    return model.loss(ws, batch, negatives).total;
  };
  const GradCheckResult r =
      grad_check(model.params(), loss, as_num(gc.at("eps"), "gradcheck.eps"),
                 5000, as_index(gc.at("probes"), "gradcheck.probes"),
                 as_index(cfg.at("seed"), "seed"));
  FILE* f = open_csv(out + "/gradcheck.txt");
  std::fprintf(f, "max_rel_err %.3e\nworst %s\nchecked %zu\nparams %zu\n",
               r.max_rel_err, r.worst_coord.c_str(), r.checked,
               model.param_count());
  std::fclose(f);
  std::printf("gradcheck: max rel err %.3e over %zu checks (%zu params), worst %s\n",
              r.max_rel_err, r.checked, model.param_count(),
              r.worst_coord.c_str());
  if (r.max_rel_err >= 1e-4)
    throw NumericError(strf("gradient check failed: %.3e >= 1e-4", r.max_rel_err));
  std::printf("gradcheck: PASS\n");
}

void cmd_train(const json& cfg, const std::string& out) {
  const Dataset data = build_dataset(cfg);
  StModel model = build_model(cfg, data);

  if (cfg.at("embed").at("pretrain").at("enabled").get<bool>()) {
    const json& e = cfg.at("embed");
    const json& p = e.at("pretrain");
    EmbedFitConfig ec;
    ec.m = model.config().embed_rank;
    ec.beta = model.config().beta;
    ec.negatives_per_edge = model.config().negatives_per_edge;
    ec.epochs = as_index(p.at("epochs"), "embed.pretrain.epochs");
    ec.lr = as_num(p.at("lr"), "embed.pretrain.lr");
    ec.seed = as_index(cfg.at("seed"), "seed");
    ec.init = p.at("init").get<std::string>() == "random"
                  ? EmbedFitConfig::Init::random
                  : EmbedFitConfig::Init::spectral;
    const EmbedFitResult pre = fit_embedding(data.graphs[0], ec);
    Tensor& table = model.params().get("embed.table");
    if (!shape_eq(pre.embedding.h.shape(), table.shape()))
      throw ValidationError(strf("pretrained embedding is %s, model table is %s",
                                 shape_str(pre.embedding.h.shape()).c_str(),
                                 shape_str(table.shape()).c_str()));
    table = pre.embedding.h;
    log_info(strf("pretrained embedding: edge loss %.6g", pre.final_edge_loss));
  }

  const TrainConfig tc = train_config(cfg);
  const WindowSpec w = window_spec(cfg);
  const TrainResult res = train(model, data, w, tc);

  save_checkpoint(out + "/checkpoint.stbc", model.params(),
                  model_signature(cfg));
  FILE* f = open_csv(out + "/train_trace.csv");
  std::fprintf(f, "epoch,train_loss,val_mae,grad_norm\n");
  for (size_t i = 0; i < res.train_loss.size(); ++i)
    std::fprintf(f, "%zu,%.10g,%.10g,%.10g\n", i, res.train_loss[i],
                 i < res.val_mae.size() ? res.val_mae[i]
                                        : std::numeric_limits<double>::quiet_NaN(),
                 res.grad_norm[i]);
  std::fclose(f);
  std::printf("train: %zu epochs (%s), best val MAE %.6g at epoch %zu\n",
              res.epochs_run, res.stopped_early ? "stopped early" : "completed",
              res.best_val_mae, res.best_epoch);
  std::printf("wrote %s/checkpoint.stbc, train_trace.csv\n", out.c_str());
}

Split parse_split(const json& cfg) {
  const std::string s = cfg.at("eval").at("split").get<std::string>();
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError("eval.split must be train, val, or test");
}

ForecastReport run_eval(const json& cfg, const std::string& checkpoint) {
  const Dataset data = build_dataset(cfg);
  StModel model = build_model(cfg, data);
  load_into(model, checkpoint, model_signature(cfg));
  const json& ev = cfg.at("eval");
  return evaluate(model, data, window_spec(cfg), parse_split(cfg),
                  as_index(ev.at("batch_size"), "eval.batch_size"),
                  as_num(ev.at("pnse_threshold"), "eval.pnse_threshold"),
                  cfg.at("data").at("mask_zeros").get<bool>(),
                  as_index(ev.at("entropy_bins"), "eval.entropy_bins"));
}

void cmd_predict(const json& cfg, const std::string& out,
                 const std::string& checkpoint) {
  const ForecastReport rep = run_eval(cfg, checkpoint);
  save_tensor(out + "/predictions.stb", rep.predictions);
  FILE* f = open_csv(out + "/predictions.csv");
  std::fprintf(f, "sample,node,horizon,prediction,target\n");
  const size_t n = rep.predictions.dim(1), h = rep.predictions.dim(2);
  for (size_t s = 0; s < rep.predictions.dim(0); ++s)
    for (size_t i = 0; i < n; ++i)
      for (size_t t = 0; t < h; ++t)
        std::fprintf(f, "%zu,%zu,%zu,%.10g,%.10g\n", s, i, t + 1,
                     rep.predictions.at({s, i, t}), rep.targets.at({s, i, t}));
  std::fclose(f);
  std::printf("predict: %zu windows over %zu nodes, %zu horizons\n",
              rep.n_windows, n, h);
  std::printf("wrote %s/predictions.stb, predictions.csv\n", out.c_str());
}

void print_suite_row(FILE* f, const char* scope, const MetricSuite& s) {
  std::fprintf(f, "%s,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", scope,
               s.mae, s.rmse, s.pcc, s.r2, s.kge, s.mnse, s.pnse);
}

void cmd_eval(const json& cfg, const std::string& out,
              const std::string& checkpoint) {
  const ForecastReport rep = run_eval(cfg, checkpoint);
  write_metrics_csv(out + "/metrics.csv", rep.per_horizon);
  FILE* f = open_csv(out + "/overall.csv");
  std::fprintf(f, "scope,mae,rmse,pcc,r2,kge,mnse,pnse\n");
  print_suite_row(f, "model", rep.overall);
  print_suite_row(f, "baseline_hl", rep.baseline_hl);
  print_suite_row(f, "baseline_climatology", rep.baseline_climatology);
  std::fclose(f);
  write_entropy_csv(rep.entropy, out + "/entropy.csv");
  std::printf("eval: %zu windows; model MAE %.6g, HL %.6g, climatology %.6g\n",
              rep.n_windows, rep.overall.mae, rep.baseline_hl.mae,
              rep.baseline_climatology.mae);
  if (rep.baseline_hl.mae > 0)
    std::printf("model vs HL: %+.1f%%\n",
                100.0 * (rep.overall.mae - rep.baseline_hl.mae) /
                    rep.baseline_hl.mae);
  std::printf("wrote %s/metrics.csv, overall.csv, entropy.csv\n", out.c_str());
}

void cmd_sweep(const json& cfg, const std::string& out,
               const std::string& axis_flag, size_t jobs_flag) {
  const json& sc = cfg.at("sweep");
  const std::string axis_name =
      axis_flag.empty() ? sc.at("axis").get<std::string>() : axis_flag;
  SweepAxis axis;
  if (axis_name == "window_length")
    axis = SweepAxis::window_length;
  else if (axis_name == "embed_rank")
    axis = SweepAxis::embed_rank;
  else
    throw ConfigError("sweep.axis must be window_length or embed_rank");
  const std::vector<size_t> values =
      as_index_list(sc.at("values"), "sweep.values");
  const size_t jobs =
      jobs_flag > 0 ? jobs_flag : as_index(sc.at("jobs"), "sweep.jobs");

  const Dataset data = build_dataset(cfg);
  const ModelConfig base = model_config(cfg, data);
  const TrainConfig tc = train_config(cfg);
  const std::vector<SweepPoint> points =
      sweep(axis, values, data, window_spec(cfg), base, tc, jobs);
  write_sweep_csv(out + "/sweep.csv", points);

  size_t ok = 0;
  for (const SweepPoint& p : points) {
    if (p.ok) {
      std::printf("%s %zu: test MAE %.6g\n", axis_name.c_str(), p.value,
                  p.test_mae);
      ++ok;
    } else {
      std::printf("%s %zu: FAILED (%s)\n", axis_name.c_str(), p.value,
                  p.error.c_str());
    }
  }
  std::printf("wrote %s/sweep.csv (%zu of %zu points)\n", out.c_str(), ok,
              points.size());
  if (ok == 0) throw TrainError("every sweep point failed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"st-balance forecasting pipeline"};
  app.fallthrough(true);
  app.require_subcommand(1);

  std::string config_path, checkpoint, axis_flag;
  size_t jobs_flag = 0;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--set", sets, "override, key.path=value (repeatable)");

  CLI::App* c_synth = app.add_subcommand("synth", "generate the synthetic benchmark");
  CLI::App* c_diag = app.add_subcommand("diagnose", "entropy mismatch report");
  CLI::App* c_embed = app.add_subcommand("embed", "fit a low-rank node embedding");
  CLI::App* c_grad = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  CLI::App* c_train = app.add_subcommand("train", "train a forecaster");
  CLI::App* c_pred = app.add_subcommand("predict", "write forecasts for one split");
  CLI::App* c_eval = app.add_subcommand("eval", "score a checkpoint");
  CLI::App* c_sweep = app.add_subcommand("sweep", "train across one axis");
  c_pred->add_option("--checkpoint", checkpoint, "trained checkpoint path");
  c_eval->add_option("--checkpoint", checkpoint, "trained checkpoint path");
  c_sweep->add_option("--axis", axis_flag, "window_length or embed_rank");
  c_sweep->add_option("--jobs", jobs_flag, "parallel training jobs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const json cfg = resolve_config(config_path, sets);
    const std::string out = cfg.at("out_dir").get<std::string>();
    std::filesystem::create_directories(out);

    if (checkpoint.empty()) checkpoint = out + "/checkpoint.stbc";

    if (app.got_subcommand(c_synth)) {
      write_resolved(cfg, out, "synth");
      cmd_synth(cfg, out);
    } else if (app.got_subcommand(c_diag)) {
      write_resolved(cfg, out, "diagnose");
      cmd_diagnose(cfg, out);
    } else if (app.got_subcommand(c_embed)) {
      write_resolved(cfg, out, "embed");
      cmd_embed(cfg, out);
    } else if (app.got_subcommand(c_grad)) {
      write_resolved(cfg, out, "gradcheck");
      cmd_gradcheck(cfg, out);
    } else if (app.got_subcommand(c_train)) {
      write_resolved(cfg, out, "train");
      cmd_train(cfg, out);
    } else if (app.got_subcommand(c_pred)) {
      write_resolved(cfg, out, "predict");
      cmd_predict(cfg, out, checkpoint);
    } else if (app.got_subcommand(c_eval)) {
      write_resolved(cfg, out, "eval");
      cmd_eval(cfg, out, checkpoint);
    } else if (app.got_subcommand(c_sweep)) {
      write_resolved(cfg, out, "sweep");
      cmd_sweep(cfg, out, axis_flag, jobs_flag);
    }
    return 0;
  } catch (const ConfigError& e) {
    log_error(e.what());
    return 2;
  } catch (const ParseError& e) {
    log_error(e.what());
    return 2;
  } catch (const ValidationError& e) {
    log_error(e.what());
    return 2;
  } catch (const ShapeError& e) {
    log_error(e.what());
    return 2;
  } catch (const std::exception& e) {
    log_error(e.what());
    return 1;
  }
}
