#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "stb/autodiff.hpp"
#include "stb/fusion.hpp"
#include "stb/grad_check.hpp"

using namespace stb;

namespace {

Tensor filled(Shape shape, uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

FusionConfig tiny_cfg() {
  FusionConfig cfg;
  cfg.l = 1;
  cfg.j = 1;
  cfg.d_s = 2;
  cfg.d_m = 2;
  cfg.d_model = 2;
  cfg.gate_tokens = 1;
  cfg.t_out = 2;
  return cfg;
}

void zero_param(ParamStore& ps, const std::string& name) {
  Tensor& t = ps.get(name);
  for (size_t i = 0; i < t.size(); ++i) t[i] = 0.0;
}

void identity_param(ParamStore& ps, const std::string& name) {
  Tensor& t = ps.get(name);
  size_t d = t.dim(0);
  for (size_t i = 0; i < d; ++i)
    for (size_t j = 0; j < t.dim(1); ++j) t.at({i, j}) = i == j ? 1.0 : 0.0;
}

void neutralize_rmlp(ParamStore& ps, const std::string& prefix) {
  zero_param(ps, prefix + ".fc1.w");
  zero_param(ps, prefix + ".fc1.b");
  zero_param(ps, prefix + ".fc2.b");
  identity_param(ps, prefix + ".fc2.w");
}

// y = W'x + b with the [d_in, d_out] layout used by Linear.
std::vector<double> affine(const Tensor& w, const Tensor& b,
                           const std::vector<double>& x) {
  std::vector<double> y(w.dim(1), 0.0);
  for (size_t j = 0; j < w.dim(1); ++j) {
    y[j] = b[j];
    for (size_t i = 0; i < w.dim(0); ++i) y[j] += x[i] * w.at({i, j});
  }
  return y;
}

std::vector<double> rmlp_ref(ParamStore& ps, const std::string& prefix,
                             const std::vector<double>& z) {
  std::vector<double> h =
      affine(ps.get(prefix + ".fc1.w"), ps.get(prefix + ".fc1.b"), z);
  for (size_t i = 0; i < h.size(); ++i) h[i] = std::max(0.0, h[i]) + z[i];
  return affine(ps.get(prefix + ".fc2.w"), ps.get(prefix + ".fc2.b"), h);
}

}  // namespace

TEST_CASE("config validation rejects mismatched widths") {
  FusionConfig cfg = tiny_cfg();
  cfg.d_m = 3;  // != d_s
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_cfg();
  cfg.gate_tokens = 3;  // 2 % 3 != 0
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_cfg();
  cfg.l = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  // concat width bookkeeping
  FusionConfig counts;
  counts.d_model = 4;
  counts.d_s = 3;
  counts.d_m = 2;
  CHECK(counts.sf_width() == 9);
}

TEST_CASE("init: zero phi weights give bias rows, M0 is exactly zero") {
  ParamStore ps;
  FusionConfig cfg = tiny_cfg();
  cfg.j = 2;
  FusionStack stack(ps, cfg, 3, Rng(2));
  zero_param(ps, "fusion.phi0.w");
  Tensor& b = ps.get("fusion.phi0.b");
  b[0] = 7.0;
  b[1] = -3.0;

  Tape tape;
  Workspace ws(tape, ps);
  Var h = tape.input(filled({4, 3}, 10));
  Var xf = tape.input(filled({4, 2}, 11));
  FusionState st = stack.init(ws, h, xf);
  REQUIRE(st.g.size() == 2);
  for (size_t node = 0; node < 4; ++node) {
    CHECK(st.g[0].value()[node * 2] == 7.0);
    CHECK(st.g[0].value()[node * 2 + 1] == -3.0);
  }
  for (size_t i = 0; i < st.m.size(); ++i) CHECK(st.m.value()[i] == 0.0);
  CHECK(st.m.shape() == Shape{4, 2});
}

TEST_CASE("init: identity phi reproduces the embedding exactly") {
  ParamStore ps;
  FusionConfig cfg = tiny_cfg();  // d_s == 2 == rank
  FusionStack stack(ps, cfg, 2, Rng(3));
  identity_param(ps, "fusion.phi0.w");
  zero_param(ps, "fusion.phi0.b");

  Tape tape;
  Workspace ws(tape, ps);
  Tensor hval = filled({3, 2}, 12);
  Var h = tape.input(hval);
  Var xf = tape.input(filled({3, 2}, 13));
  FusionState st = stack.init(ws, h, xf);
  for (size_t i = 0; i < hval.size(); ++i) CHECK(st.g[0].value()[i] == hval[i]);

  Var bad = tape.input(filled({3, 5}, 14));
  CHECK_THROWS_AS(stack.init(ws, bad, xf), ShapeError);
}

TEST_CASE("single_fusion: zeroed stack turns into the head bias") {
  ParamStore ps;
  FusionConfig cfg = tiny_cfg();
  FusionStack stack(ps, cfg, 2, Rng(4));
  neutralize_rmlp(ps, "fusion.l0.sf0");
  zero_param(ps, "fusion.l0.sf0.fc2.w");  // now the whole stack maps to zero
  zero_param(ps, "fusion.l0.fc0.w");
  Tensor& b = ps.get("fusion.l0.fc0.b");
  b[0] = 1.25;
  b[1] = -0.5;

  Tape tape;
  Workspace ws(tape, ps);
  Var xf = tape.input(filled({3, 2}, 20));
  Var g = tape.input(filled({3, 2}, 21));
  Var m = tape.input(filled({3, 2}, 22));
  Var s = stack.single_fusion(ws, xf, g, m, 0, 0);
  for (size_t node = 0; node < 3; ++node) {
    CHECK(s.value()[node * 2] == 1.25);
    CHECK(s.value()[node * 2 + 1] == -0.5);
  }
}

TEST_CASE("single_fusion matches a plain-loop reference") {
  ParamStore ps;
  FusionConfig cfg = tiny_cfg();
  FusionStack stack(ps, cfg, 2, Rng(5));
  Tensor xf = filled({2, 2}, 30), g = filled({2, 2}, 31), m = filled({2, 2}, 32);

  Tape tape;
  Workspace ws(tape, ps);
  Var s = stack.single_fusion(ws, tape.input(xf), tape.input(g), tape.input(m),
                              0, 0);
  for (size_t node = 0; node < 2; ++node) {
    std::vector<double> z = {xf[node * 2], xf[node * 2 + 1], g[node * 2],
                             g[node * 2 + 1], m[node * 2], m[node * 2 + 1]};
    std::vector<double> sf = rmlp_ref(ps, "fusion.l0.sf0", z);
    std::vector<double> out =
        affine(ps.get("fusion.l0.fc0.w"), ps.get("fusion.l0.fc0.b"), sf);
    CHECK(s.value()[node * 2] == doctest::Approx(out[0]).epsilon(1e-12));
    CHECK(s.value()[node * 2 + 1] == doctest::Approx(out[1]).epsilon(1e-12));
  }
}

TEST_CASE("multi_fusion: identity-configured single-graph passthrough") {
  ParamStore ps;
  FusionConfig cfg = tiny_cfg();
  FusionStack stack(ps, cfg, 2, Rng(6));
  neutralize_rmlp(ps, "fusion.l0.mf0");
  identity_param(ps, "fusion.l0.merge.w");
  zero_param(ps, "fusion.l0.merge.b");

  Tape tape;
  Workspace ws(tape, ps);
  Tensor sval = filled({3, 2}, 40);
  Var m = stack.multi_fusion(ws, {tape.input(sval)}, 0);
  for (size_t i = 0; i < sval.size(); ++i) CHECK(m.value()[i] == sval[i]);

  CHECK_THROWS_AS(stack.multi_fusion(ws, {}, 0), ShapeError);
}

TEST_CASE("multi_fusion: J=2 hand case matches the reference") {
  ParamStore ps;
  FusionConfig cfg = tiny_cfg();
  cfg.j = 2;
  FusionStack stack(ps, cfg, 2, Rng(7));
  Tensor s0 = filled({2, 2}, 50), s1 = filled({2, 2}, 51);

  Tape tape;
  Workspace ws(tape, ps);
  Var m = stack.multi_fusion(ws, {tape.input(s0), tape.input(s1)}, 0);
  for (size_t node = 0; node < 2; ++node) {
    std::vector<double> z = {s0[node * 2], s0[node * 2 + 1], s1[node * 2],
                             s1[node * 2 + 1]};
    std::vector<double> mf = rmlp_ref(ps, "fusion.l0.mf0", z);
    std::vector<double> out =
        affine(ps.get("fusion.l0.merge.w"), ps.get("fusion.l0.merge.b"), mf);
    CHECK(m.value()[node * 2] == doctest::Approx(out[0]).epsilon(1e-12));
    CHECK(m.value()[node * 2 + 1] == doctest::Approx(out[1]).epsilon(1e-12));
  }

  Tensor ragged({1, 2});
  CHECK_THROWS_AS(
      stack.multi_fusion(ws, {tape.input(s0), tape.input(ragged)}, 0),
      ShapeError);
}

TEST_CASE("feedback gate saturates to passthrough and to zero") {
  ParamStore ps;
  FusionConfig cfg = tiny_cfg();
  cfg.d_s = 4;
  cfg.d_m = 4;
  cfg.gate_tokens = 2;
  FusionStack stack(ps, cfg, 2, Rng(8));
  zero_param(ps, "fusion.l0.gatefc.w");
  Tensor& b = ps.get("fusion.l0.gatefc.b");

  Tensor sval = filled({3, 4}, 60), gval = filled({3, 4}, 61);
  auto run = [&]() {
    Tape tape;
    Workspace ws(tape, ps);
    return stack.feedback_update(ws, tape.input(sval), tape.input(gval), 0)
        .value();
  };

  for (size_t i = 0; i < b.size(); ++i) b[i] = 40.0;  // sigmoid -> 1
  Tensor open = run();
  for (size_t i = 0; i < sval.size(); ++i)
    CHECK(open[i] == doctest::Approx(sval[i]).epsilon(1e-12));

  for (size_t i = 0; i < b.size(); ++i) b[i] = -40.0;  // sigmoid -> 0
  Tensor closed = run();
  for (size_t i = 0; i < sval.size(); ++i)
    CHECK(closed[i] == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("feedback gate matches a hand-rolled K=2 reference on one node") {
  ParamStore ps;
  FusionConfig cfg = tiny_cfg();
  cfg.d_s = 4;
  cfg.d_m = 4;
  cfg.gate_tokens = 2;
  FusionStack stack(ps, cfg, 2, Rng(9));
  Tensor sval = filled({1, 4}, 70), gval = filled({1, 4}, 71);

  Tape tape;
  Workspace ws(tape, ps);
  Var out = stack.feedback_update(ws, tape.input(sval), tape.input(gval), 0);

  // tokens of width 2; single-head attention over the two tokens
  std::vector<double> t0 = {gval[0], gval[1]}, t1 = {gval[2], gval[3]};
  auto att = [&](const char* which, const std::vector<double>& x) {
    return affine(ps.get(strf("fusion.l0.gate.%s.w", which)),
                  ps.get(strf("fusion.l0.gate.%s.b", which)), x);
  };
  std::vector<double> q0 = att("q", t0), q1 = att("q", t1);
  std::vector<double> k0 = att("k", t0), k1 = att("k", t1);
  std::vector<double> v0 = att("v", t0), v1 = att("v", t1);
  auto mix = [&](const std::vector<double>& q) {
    double s0 = (q[0] * k0[0] + q[1] * k0[1]) / std::sqrt(2.0);
    double s1 = (q[0] * k1[0] + q[1] * k1[1]) / std::sqrt(2.0);
    double m = std::max(s0, s1);
    double e0 = std::exp(s0 - m), e1 = std::exp(s1 - m);
    double w0 = e0 / (e0 + e1), w1 = e1 / (e0 + e1);
    std::vector<double> mixed = {w0 * v0[0] + w1 * v1[0],
                                 w0 * v0[1] + w1 * v1[1]};
    return att("o", mixed);
  };
  std::vector<double> o0 = mix(q0), o1 = mix(q1);
  std::vector<double> flat = {o0[0], o0[1], o1[0], o1[1]};
  std::vector<double> gate =
      affine(ps.get("fusion.l0.gatefc.w"), ps.get("fusion.l0.gatefc.b"), flat);
  for (size_t i = 0; i < 4; ++i) {
    double expect = sval[i] / (1.0 + std::exp(-gate[i]));
    CHECK(out.value()[i] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("feedback gate never mixes nodes") {
  ParamStore ps;
  FusionConfig cfg = tiny_cfg();
  cfg.d_s = 4;
  cfg.d_m = 4;
  cfg.gate_tokens = 2;
  FusionStack stack(ps, cfg, 2, Rng(10));
  Tensor sval = filled({3, 4}, 80), gval = filled({3, 4}, 81);

  auto run = [&](const Tensor& s, const Tensor& g) {
    Tape tape;
    Workspace ws(tape, ps);
    return stack.feedback_update(ws, tape.input(s), tape.input(g), 0).value();
  };
  Tensor base = run(sval, gval);
  Tensor s2 = sval, g2 = gval;
  for (size_t j = 0; j < 4; ++j) {
    s2.at({1, j}) = -9.0 - double(j);
    g2.at({1, j}) = 4.0 + double(j);
  }
  Tensor moved = run(s2, g2);
  for (size_t j = 0; j < 4; ++j) {
    CHECK(moved.at({0, j}) == base.at({0, j}));  // untouched rows identical
    CHECK(moved.at({2, j}) == base.at({2, j}));
  }
  bool row1_changed = false;
  for (size_t j = 0; j < 4; ++j)
    if (moved.at({1, j}) != base.at({1, j})) row1_changed = true;
  CHECK(row1_changed);
}

TEST_CASE("forward composition equals manual chaining for L=1, J=1") {
  ParamStore ps;
  FusionConfig cfg = tiny_cfg();
  FusionStack stack(ps, cfg, 2, Rng(11));
  Tensor hval = filled({3, 2}, 90), xval = filled({3, 2}, 91);

  Tape t1;
  Workspace w1(t1, ps);
  FusionStack::Output out = stack.forward(w1, t1.input(xval), t1.input(hval));

  Tape t2;
  Workspace w2(t2, ps);
  Var xf = t2.input(xval);
  FusionState st = stack.init(w2, t2.input(hval), xf);
  Var s = stack.single_fusion(w2, xf, st.g[0], st.m, 0, 0);
  Var m = stack.multi_fusion(w2, {s}, 0);
  Var head_in = concat_last({m, xf});
  Var fc = add_rowvec(matmul(head_in, w2["fusion.head.w"]), w2["fusion.head.b"]);

  REQUIRE(out.m_final.size() == m.size());
  for (size_t i = 0; i < m.size(); ++i)
    CHECK(out.m_final.value()[i] == m.value()[i]);
  REQUIRE(out.forecast.size() == fc.size());
  for (size_t i = 0; i < fc.size(); ++i)
    CHECK(out.forecast.value()[i] == fc.value()[i]);
}

TEST_CASE("zeroing every parameter leaves only the head bias") {
  ParamStore ps;
  FusionConfig cfg;
  cfg.l = 2;
  cfg.j = 2;
  cfg.d_s = 4;
  cfg.d_m = 4;
  cfg.d_model = 4;
  cfg.gate_tokens = 2;
  cfg.t_out = 3;
  FusionStack stack(ps, cfg, 3, Rng(12));
  for (size_t i = 0; i < ps.count(); ++i) {
    Tensor& t = ps.entry(i).value;
    for (size_t k = 0; k < t.size(); ++k) t[k] = 0.0;
  }
  Tensor& b = ps.get("fusion.head.b");
  b[0] = 0.5;
  b[1] = 1.5;
  b[2] = -2.5;

  Tape tape;
  Workspace ws(tape, ps);
  FusionStack::Output out =
      stack.forward(ws, tape.input(filled({5, 4}, 100)),
                    tape.input(filled({5, 3}, 101)));
  REQUIRE(out.forecast.shape() == Shape{5, 3});
  for (size_t node = 0; node < 5; ++node) {
    CHECK(out.forecast.value()[node * 3] == 0.5);
    CHECK(out.forecast.value()[node * 3 + 1] == 1.5);
    CHECK(out.forecast.value()[node * 3 + 2] == -2.5);
  }
}

TEST_CASE("identical graph parameters give identical single-graph results") {
  ParamStore ps;
  FusionConfig cfg = tiny_cfg();
  cfg.j = 2;
  FusionStack stack(ps, cfg, 2, Rng(13));
  // copy graph-0 parameters onto graph 1
  ps.get("fusion.phi1.w") = ps.get("fusion.phi0.w");
  ps.get("fusion.phi1.b") = ps.get("fusion.phi0.b");
  ps.get("fusion.l0.fc1.w") = ps.get("fusion.l0.fc0.w");
  ps.get("fusion.l0.fc1.b") = ps.get("fusion.l0.fc0.b");

  Tape tape;
  Workspace ws(tape, ps);
  Var h = tape.input(filled({3, 2}, 110));
  Var xf = tape.input(filled({3, 2}, 111));
  FusionState st = stack.init(ws, h, xf);
  for (size_t i = 0; i < st.g[0].size(); ++i)
    CHECK(st.g[0].value()[i] == st.g[1].value()[i]);
  Var s0 = stack.single_fusion(ws, xf, st.g[0], st.m, 0, 0);
  Var s1 = stack.single_fusion(ws, xf, st.g[1], st.m, 0, 1);
  for (size_t i = 0; i < s0.size(); ++i)
    CHECK(s0.value()[i] == s1.value()[i]);
}

TEST_CASE("node permutation permutes the forecast identically") {
  ParamStore ps;
  FusionConfig cfg;
  cfg.l = 2;
  cfg.j = 2;
  cfg.d_s = 4;
  cfg.d_m = 4;
  cfg.d_model = 4;
  cfg.gate_tokens = 2;
  cfg.t_out = 2;
  FusionStack stack(ps, cfg, 3, Rng(14));
  Tensor h = filled({4, 3}, 120), xf = filled({4, 4}, 121);

  Tape t1;
  Workspace w1(t1, ps);
  Tensor base = stack.forward(w1, t1.input(xf), t1.input(h)).forecast.value();

  std::vector<size_t> perm = {3, 1, 0, 2};
  Tensor ph({4, 3}), pxf({4, 4});
  for (size_t node = 0; node < 4; ++node) {
    for (size_t j = 0; j < 3; ++j) ph.at({node, j}) = h.at({perm[node], j});
    for (size_t j = 0; j < 4; ++j) pxf.at({node, j}) = xf.at({perm[node], j});
  }
  Tape t2;
  Workspace w2(t2, ps);
  Tensor moved = stack.forward(w2, t2.input(pxf), t2.input(ph)).forecast.value();
  for (size_t node = 0; node < 4; ++node)
    for (size_t j = 0; j < 2; ++j)
      CHECK(moved.at({node, j}) == base.at({perm[node], j}));
}

TEST_CASE("largest recorded tensor scales linearly in node count") {
  FusionConfig cfg;
  cfg.l = 2;
  cfg.j = 2;
  cfg.d_s = 8;
  cfg.d_m = 8;
  cfg.d_model = 8;
  cfg.gate_tokens = 4;
  cfg.t_out = 4;
  auto max_elems = [&](size_t n) {
    ParamStore ps;
    FusionStack stack(ps, cfg, 4, Rng(15));
    Tape tape;
    Workspace ws(tape, ps);
    stack.forward(ws, tape.input(filled({n, 8}, 130 + n)),
                  tape.input(filled({n, 4}, 131 + n)));
    return tape.max_tensor_elems();
  };
  size_t m16 = max_elems(16);
  size_t m32 = max_elems(32);
  CHECK(m32 <= 2 * m16);  // a dense node-pair tensor would scale 4x
  CHECK(m32 < 32 * 32);   // and never anything as large as N^2 at these widths
}

TEST_CASE("parameter audit matches the config formula") {
  for (auto [l, j, skip] : {std::tuple<size_t, size_t, bool>{1, 1, true},
                            {3, 2, true},
                            {2, 3, false}}) {
    ParamStore ps;
    FusionConfig cfg;
    cfg.l = l;
    cfg.j = j;
    cfg.d_s = 4;
    cfg.d_m = 4;
    cfg.d_model = 6;
    cfg.gate_tokens = 2;
    cfg.t_out = 3;
    cfg.head_skip = skip;
    FusionStack stack(ps, cfg, 3, Rng(16));
    CHECK(ps.total_size() == FusionStack::param_count(cfg, 3));
    // the shared SF stack appears once per layer regardless of J
    size_t sf_tensors = 0;
    for (size_t i = 0; i < ps.count(); ++i)
      if (ps.entry(i).name.find(".sf") != std::string::npos) ++sf_tensors;
    CHECK(sf_tensors == l * cfg.sf_depth * 4);
  }
}

TEST_CASE("fusion gradients pass the finite-difference check") {
  ParamStore ps;
  FusionConfig cfg;
  cfg.l = 2;
  cfg.j = 2;
  cfg.d_s = 4;
  cfg.d_m = 4;
  cfg.d_model = 6;
  cfg.gate_tokens = 2;
  cfg.t_out = 3;
  FusionStack stack(ps, cfg, 3, Rng(17));
  ps.create("embed.table", {4, 3}, 3, Rng(18));
  Tensor xf = filled({4, 6}, 140);

  auto loss = [&](Tape& tape, Workspace& ws) {
    FusionStack::Output out = stack.forward(ws, tape.input(xf), ws["embed.table"]);
    // unit-scale loss keeps finite-difference noise below the tolerance
    return scale(sum_squares(out.forecast), 1.0 / double(out.forecast.size()));
  };
  GradCheckResult res = grad_check(ps, loss);
  CAPTURE(res.worst_coord);
  CHECK(res.max_rel_err < 1e-4);
  CHECK(res.checked == ps.total_size());
}

TEST_CASE("non-finite activations name the fusion layer and graph") {
  ParamStore ps;
  FusionConfig cfg = tiny_cfg();
  cfg.l = 2;
  cfg.j = 2;
  FusionStack stack(ps, cfg, 2, Rng(19));
  // the shared stack emits ~1e200 values; the graph-2 head multiplies by
  // another 1e200 and overflows right there, after graph 1 passed cleanly
  Tensor& w = ps.get("fusion.l1.sf0.fc2.w");
  for (size_t i = 0; i < w.size(); ++i) w[i] = 1e200;
  Tensor& hw = ps.get("fusion.l1.fc1.w");
  for (size_t i = 0; i < hw.size(); ++i) hw[i] = 1e200;

  Tape tape;
  Workspace ws(tape, ps);
  Var h = tape.input(filled({2, 2}, 150));
  Var xf = tape.input(filled({2, 2}, 151));
  CHECK_THROWS_WITH_AS(stack.forward(ws, xf, h),
                       doctest::Contains("fusion layer 2 graph 2"),
                       NumericError);
}
