#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "stb/grad_check.hpp"
#include "stb/nn.hpp"

using namespace stb;

namespace {

void set_all(Tensor& t, double v) {
  for (size_t i = 0; i < t.size(); ++i) t[i] = v;
}

void set_identity(Tensor& t) {
  REQUIRE(t.rank() == 2);
  REQUIRE(t.dim(0) == t.dim(1));
  set_all(t, 0.0);
  for (size_t i = 0; i < t.dim(0); ++i) t.at({i, i}) = 1.0;
}

}  // namespace

TEST_CASE("param store flatten round trip and ordering") {
  Rng rng(5);
  ParamStore ps;
  ps.create("a", {2, 3}, 3, rng);
  ps.create("b", {4}, 4, rng);
  ps.create_const("c", {2}, 1.0);
  CHECK(ps.total_size() == 12);

  std::vector<double> flat = ps.flatten();
  REQUIRE(flat.size() == 12);
  std::vector<double> shifted = flat;
  for (double& v : shifted) v += 0.25;
  ps.unflatten(shifted);
  CHECK(ps.get("a")[0] == doctest::Approx(flat[0] + 0.25));
  CHECK(ps.get("c")[1] == doctest::Approx(1.25));
  ps.unflatten(flat);
  CHECK(ps.flatten() == flat);

  CHECK_THROWS_AS(ps.unflatten(std::vector<double>(5)), ShapeError);
  CHECK_THROWS_AS(ps.create("a", {3, 3}, 3, rng), ShapeError);
}

TEST_CASE("parameter init depends on name and seed, not creation order") {
  Rng rng(5);
  ParamStore p1, p2;
  p1.create("x", {4}, 4, rng);
  p1.create("y", {4}, 4, rng);
  p2.create("y", {4}, 4, rng);
  p2.create("x", {4}, 4, rng);
  for (size_t i = 0; i < 4; ++i) {
    CHECK(p1.get("x")[i] == p2.get("x")[i]);
    CHECK(p1.get("y")[i] == p2.get("y")[i]);
  }
  ParamStore p3;
  p3.create("x", {4}, 4, Rng(6));
  CHECK(p3.get("x")[0] != p1.get("x")[0]);
}

TEST_CASE("workspace caches one tape input per parameter") {
  Rng rng(7);
  ParamStore ps;
  Linear lin = Linear::create(ps, "lin", 3, 3, rng);
  Tape tape;
  Workspace ws(tape, ps);
  Var x = tape.input(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  const size_t before = tape.node_count();
  Var y1 = lin.apply(ws, x);
  const size_t mid = tape.node_count();
  Var y2 = lin.apply(ws, y1);
  // second application adds matmul + add_rowvec only, params are cached
  CHECK(tape.node_count() - mid == 2);
  CHECK(mid - before == 4);  // w, b inputs + matmul + add_rowvec
  tape.backward(sum_all(y2));
  CHECK(ws.used(lin.w));
}

TEST_CASE("linear layer hand values") {
  Rng rng(1);
  ParamStore ps;
  Linear lin = Linear::create(ps, "l", 2, 2, rng);

  set_identity(ps.get("l.w"));
  set_all(ps.get("l.b"), 0.0);
  {
    Tape tape;
    Workspace ws(tape, ps);
    Tensor y = lin.apply(ws, tape.input(Tensor({1, 2}, {1.0, 2.0}))).value();
    CHECK(y[0] == 1.0);
    CHECK(y[1] == 2.0);
  }

  ps.get("l.w") = Tensor({2, 2}, {1.0, 2.0, 3.0, 4.0});
  {
    Tape tape;
    Workspace ws(tape, ps);
    Tensor y = lin.apply(ws, tape.input(Tensor({1, 2}, {1.0, 1.0}))).value();
    CHECK(y[0] == 4.0);
    CHECK(y[1] == 6.0);
  }

  ps.get("l.b") = Tensor({2}, {5.0, -1.0});
  {
    Tape tape;
    Workspace ws(tape, ps);
    Tensor y = lin.apply(ws, tape.input(Tensor({3, 2}))).value();
    for (size_t r = 0; r < 3; ++r) {
      CHECK(y.at({r, 0}) == 5.0);
      CHECK(y.at({r, 1}) == -1.0);
    }
  }
}

TEST_CASE("rmlp identities") {
  Rng rng(2);
  ParamStore ps;
  RmlpBlock rmlp = RmlpBlock::create(ps, "r", 3, rng);

  set_all(ps.get("r.fc1.w"), 0.0);
  set_all(ps.get("r.fc1.b"), 0.0);
  set_identity(ps.get("r.fc2.w"));
  set_all(ps.get("r.fc2.b"), 0.0);
  {
    Tape tape;
    Workspace ws(tape, ps);
    Tensor z0({2, 3}, {0.5, -1.0, 2.0, 3.0, 0.0, -0.25});
    Tensor y = rmlp.apply(ws, tape.input(z0)).value();
    for (size_t i = 0; i < y.size(); ++i) CHECK(y[i] == z0[i]);
  }

  Rng rng2(3);
  ParamStore ps2;
  RmlpBlock r2 = RmlpBlock::create(ps2, "r", 3, rng2);
  ps2.get("r.fc1.b") = Tensor({3});
  ps2.get("r.fc2.b") = Tensor({3}, {7.0, -2.0, 0.5});
  {
    Tape tape;
    Workspace ws(tape, ps2);
    Tensor y = r2.apply(ws, tape.input(Tensor({1, 3}))).value();
    CHECK(y[0] == 7.0);
    CHECK(y[1] == -2.0);
    CHECK(y[2] == 0.5);
  }
}

TEST_CASE("rmlp matches plain-loop reference") {
  Rng rng(4);
  ParamStore ps;
  RmlpBlock rmlp = RmlpBlock::create(ps, "r", 3, rng);
  Tensor z({2, 3});
  Rng data(11);
  for (size_t i = 0; i < z.size(); ++i) z[i] = data.uniform(-1.0, 1.0);

  Tape tape;
  Workspace ws(tape, ps);
  Tensor got = rmlp.apply(ws, tape.input(z)).value();

  const Tensor &w1 = ps.get("r.fc1.w"), &b1 = ps.get("r.fc1.b");
  const Tensor &w2 = ps.get("r.fc2.w"), &b2 = ps.get("r.fc2.b");
  for (size_t r = 0; r < 2; ++r) {
    std::vector<double> hidden(3);
    for (size_t j = 0; j < 3; ++j) {
      double acc = b1[j];
      for (size_t i = 0; i < 3; ++i) acc += z.at({r, i}) * w1.at({i, j});
      hidden[j] = std::max(0.0, acc) + z.at({r, j});
    }
    for (size_t j = 0; j < 3; ++j) {
      double acc = b2[j];
      for (size_t i = 0; i < 3; ++i) acc += hidden[i] * w2.at({i, j});
      CHECK(got.at({r, j}) == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("attention with one key equals projected value") {
  Rng rng(6);
  ParamStore ps;
  MhaBlock mha = MhaBlock::create(ps, "m", 4, 2, rng);
  Linear wv = mha.wv, wo = mha.wo;

  Tape tape;
  Workspace ws(tape, ps);
  Var q = tape.input(Tensor({1, 3, 4},
                            {0.3, -1.0, 0.7, 0.2, 2.0, 0.1, -0.4, 0.9,
                             -0.5, 0.5, 1.5, -1.5}));
  Var kv = tape.input(Tensor({1, 1, 4}, {0.8, -0.2, 0.4, 1.1}));
  Tensor got = mha.apply(ws, q, kv, kv).value();
  Tensor want = wo.apply(ws, wv.apply(ws, kv)).value();
  REQUIRE(shape_eq(got.shape(), {1, 3, 4}));
  for (size_t t = 0; t < 3; ++t)
    for (size_t j = 0; j < 4; ++j)
      CHECK(got.at({0, t, j}) == doctest::Approx(want.at({0, 0, j})).epsilon(1e-14));
}

TEST_CASE("two identical keys split attention equally") {
  Rng rng(8);
  ParamStore ps;
  MhaBlock mha = MhaBlock::create(ps, "m", 4, 1, rng);

  Tape tape;
  Workspace ws(tape, ps);
  Var q = tape.input(Tensor({1, 1, 4}, {0.3, -1.0, 0.7, 0.2}));
  Tensor tok({4}, {0.8, -0.2, 0.4, 1.1});
  Tensor two({1, 2, 4});
  for (size_t j = 0; j < 4; ++j) {
    two.at({0, 0, j}) = tok[j];
    two.at({0, 1, j}) = tok[j];
  }
  Var kv2 = tape.input(two);
  Var kv1 = tape.input(tok.reshaped({1, 1, 4}));
  Tensor with_two = mha.apply(ws, q, kv2, kv2).value();
  Tensor with_one = mha.apply(ws, q, kv1, kv1).value();
  for (size_t j = 0; j < 4; ++j)
    CHECK(with_two[j] == doctest::Approx(with_one[j]).epsilon(1e-12));
}

TEST_CASE("single-head attention matches plain-loop reference") {
  const size_t d = 2, T = 2;
  Rng rng(9);
  ParamStore ps;
  MhaBlock mha = MhaBlock::create(ps, "m", d, 1, rng);

  Tensor x({1, T, d}, {0.5, -0.3, 1.2, 0.4});
  Tape tape;
  Workspace ws(tape, ps);
  Var xv = tape.input(x);
  Tensor got = mha.apply(ws, xv, xv, xv).value();

  auto affine = [&](const Tensor& in, const char* wn, const char* bn) {
    const Tensor &w = ps.get(wn), &b = ps.get(bn);
    Tensor out({T, d});
    for (size_t t = 0; t < T; ++t)
      for (size_t j = 0; j < d; ++j) {
        double acc = b[j];
        for (size_t i = 0; i < d; ++i) acc += in.at({0, t, i}) * w.at({i, j});
        out.at({t, j}) = acc;
      }
    return out;
  };
  Tensor Q = affine(x, "m.q.w", "m.q.b");
  Tensor K = affine(x, "m.k.w", "m.k.b");
  Tensor V = affine(x, "m.v.w", "m.v.b");
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor attn_out({1, T, d});
  for (size_t t = 0; t < T; ++t) {
    double s0 = 0.0, s1 = 0.0;
    for (size_t i = 0; i < d; ++i) {
      s0 += Q.at({t, i}) * K.at({0, i});
      s1 += Q.at({t, i}) * K.at({1, i});
    }
    s0 *= inv;
    s1 *= inv;
    const double m = std::max(s0, s1);
    const double e0 = std::exp(s0 - m), e1 = std::exp(s1 - m);
    const double a0 = e0 / (e0 + e1), a1 = e1 / (e0 + e1);
    for (size_t j = 0; j < d; ++j)
      attn_out.at({0, t, j}) = a0 * V.at({0, j}) + a1 * V.at({1, j});
  }
  Tensor want = affine(attn_out, "m.o.w", "m.o.b");
  for (size_t t = 0; t < T; ++t)
    for (size_t j = 0; j < d; ++j)
      CHECK(got.at({0, t, j}) == doctest::Approx(want.at({t, j})).epsilon(1e-12));
}

TEST_CASE("attention head divisibility is enforced") {
  Rng rng(10);
  ParamStore ps;
  CHECK_THROWS_AS(MhaBlock::create(ps, "m", 5, 2, rng), ConfigError);
}

TEST_CASE("parameter count formulas match the store") {
  Rng rng(12);
  const size_t d = 6;
  auto created_size = [](const ParamStore& ps) {
    size_t n = 0;
    for (size_t i = 0; i < ps.count(); ++i) n += ps.entry(i).value.size();
    return n;
  };
  {
    ParamStore ps;
    MhaBlock::create(ps, "m", d, 2, rng);
    CHECK(created_size(ps) == MhaBlock::param_count(d));
  }
  {
    ParamStore ps;
    RmlpBlock::create(ps, "r", d, rng);
    CHECK(created_size(ps) == RmlpBlock::param_count(d));
  }
  {
    ParamStore ps;
    EncoderLayer::create(ps, "e", d, 3, rng);
    CHECK(created_size(ps) == EncoderLayer::param_count(d));
  }
  {
    ParamStore ps;
    DecoderLayer::create(ps, "dl", d, 3, rng);
    CHECK(created_size(ps) == DecoderLayer::param_count(d));
  }
}

TEST_CASE("grad_check trivial cases") {
  Rng rng(13);
  ParamStore ps;
  ps.create("theta", {6}, 6, rng);

  GradCheckResult constant = grad_check(
      ps, [](Tape& t, Workspace&) { return t.input(Tensor::scalar(3.0)); });
  CHECK(constant.max_rel_err == 0.0);

  GradCheckResult quad = grad_check(ps, [](Tape&, Workspace& ws) {
    return scale(sum_squares(ws["theta"]), 0.5);
  });
  CHECK(quad.max_rel_err < 1e-8);
  CHECK(quad.checked == 6);
}

TEST_CASE("grad_check covers encoder and decoder stacks") {
  Rng rng(14);
  ParamStore ps;
  EncoderLayer enc = EncoderLayer::create(ps, "enc", 4, 2, rng);
  DecoderLayer dec = DecoderLayer::create(ps, "dec", 4, 2, rng);
  Tensor x({2, 3, 4});
  Rng data(15);
  for (size_t i = 0; i < x.size(); ++i) x[i] = data.uniform(-1.0, 1.0);

  GradCheckResult r = grad_check(
      ps,
      [&](Tape& tape, Workspace& ws) {
        Var xv = tape.input(x);
        Var e = enc.apply(ws, xv);
        Var v = dec.apply(ws, xv, e);
        // loss kept at unit scale so finite-difference noise stays far
        // below the tolerance
        return scale(sum_squares(v), 1.0 / static_cast<double>(x.size()));
      },
      1e-5);
  CHECK(r.max_rel_err < 1e-4);
  CHECK(r.checked == ps.total_size());
}

TEST_CASE("grad_check probe mode agrees on large stores") {
  Rng rng(16);
  ParamStore ps;
  ps.create("big", {40, 40}, 40, rng);
  GradCheckResult r = grad_check(
      ps,
      [](Tape&, Workspace& ws) { return sum_squares(sigmoid(ws["big"])); },
      1e-5, /*coord_limit=*/100, /*probes=*/8);
  CHECK(r.checked == 8);
  CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("unused parameters stay untouched by backward") {
  Rng rng(17);
  ParamStore ps;
  ps.create("used", {3}, 3, rng);
  ps.create("idle", {4}, 4, rng);
  Tape tape;
  Workspace ws(tape, ps);
  tape.backward(sum_squares(ws["used"]));
  Tensor g = ws.grad("idle");
  for (size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0);
  std::vector<double> flat = ws.grad_flat();
  REQUIRE(flat.size() == 7);
  for (size_t i = 3; i < 7; ++i) CHECK(flat[i] == 0.0);
}
