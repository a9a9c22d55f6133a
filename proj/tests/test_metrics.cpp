#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "stb/common.hpp"
#include "stb/metrics.hpp"

using namespace stb;

namespace {

Tensor vec(std::vector<double> v) {
  const size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor randu(const Shape& shape, uint64_t seed, double lo, double hi) {
  Rng rng(seed);
  Tensor t(shape);
  for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Plain single-loop references, kept independent of the library versions.
struct Ref {
  double mae = 0, rmse = 0, pcc = 0, r2 = 0, kge = 0, mnse = 0;
};

Ref reference(const Tensor& y, const Tensor& p) {
  const size_t n = y.size();
  double my = 0, mp = 0;
  for (size_t i = 0; i < n; ++i) { my += y[i]; mp += p[i]; }
  my /= n; mp /= n;
  double sae = 0, sse = 0, cov = 0, vy = 0, vp = 0, sad = 0;
  for (size_t i = 0; i < n; ++i) {
    const double e = p[i] - y[i];
    sae += std::fabs(e);
    sse += e * e;
    cov += (y[i] - my) * (p[i] - mp);
    vy += (y[i] - my) * (y[i] - my);
    vp += (p[i] - mp) * (p[i] - mp);
    sad += std::fabs(y[i] - my);
  }
  Ref r;
  r.mae = sae / n;
  r.rmse = std::sqrt(sse / n);
  r.pcc = cov / std::sqrt(vy * vp);
  r.r2 = 1 - sse / vy;
  const double alpha = std::sqrt(vp / vy), beta = mp / my;
  r.kge = 1 - std::sqrt((r.pcc - 1) * (r.pcc - 1) + (alpha - 1) * (alpha - 1) +
                        (beta - 1) * (beta - 1));
  r.mnse = 1 - sae / sad;
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("doubled forecast hand values") {
  const Tensor y = vec({1, 2, 3});
  const Tensor p = vec({2, 4, 6});
  CHECK(mae(y, p) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(rmse(y, p) == doctest::Approx(std::sqrt(14.0 / 3.0)).epsilon(1e-12));
  CHECK(pcc(y, p) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r2(y, p) == doctest::Approx(-6.0).epsilon(1e-12));
  CHECK(kge(y, p) == doctest::Approx(1.0 - std::sqrt(2.0)).epsilon(1e-12));
  CHECK(mnse(y, p) == doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("perfect forecast scores one everywhere") {
  const Tensor y = randu({3, 4, 5}, 11, -2, 7);
  const MetricSuite s = metric_suite(y, y);
  CHECK(s.mae == 0.0);
  CHECK(s.rmse == 0.0);
  CHECK(s.pcc == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.r2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.kge == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.mnse == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.pnse == 1.0);
  CHECK_FALSE(s.flat_reference);
}

TEST_CASE("climatology forecast zeroes the skill scores") {
  const Tensor y = vec({1, 5, 2, 8, 4});
  double mean = 0;
  for (size_t i = 0; i < y.size(); ++i) mean += y[i];
  mean /= double(y.size());
  Tensor p(y.shape());
  for (size_t i = 0; i < p.size(); ++i) p[i] = mean;
  CHECK(r2(y, p) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(mnse(y, p) == doctest::Approx(0.0).epsilon(1e-12));
  // Constant forecast has no variance, so correlation-based scores vanish.
  CHECK(std::isnan(pcc(y, p)));
  CHECK(std::isnan(kge(y, p)));
}

TEST_CASE("mae versus rmse on signed errors") {
  CHECK(mae(vec({0, 0}), vec({1, -1})) == doctest::Approx(1.0));
  CHECK(rmse(vec({0, 0}), vec({1, -1})) == doctest::Approx(1.0));
  CHECK(mae(vec({0, 0}), vec({0, 2})) == doctest::Approx(1.0));
  CHECK(rmse(vec({0, 0}), vec({0, 2})) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("library matches plain-loop references on random data") {
  for (uint64_t seed : {1u, 2u, 3u}) {
    const Tensor y = randu({200}, seed, 1, 9);
    const Tensor p = randu({200}, seed + 100, 1, 9);
    const Ref r = reference(y, p);
    CHECK(mae(y, p) == doctest::Approx(r.mae).epsilon(1e-10));
    CHECK(rmse(y, p) == doctest::Approx(r.rmse).epsilon(1e-10));
    CHECK(pcc(y, p) == doctest::Approx(r.pcc).epsilon(1e-10));
    CHECK(r2(y, p) == doctest::Approx(r.r2).epsilon(1e-10));
    CHECK(kge(y, p) == doctest::Approx(r.kge).epsilon(1e-10));
    CHECK(mnse(y, p) == doctest::Approx(r.mnse).epsilon(1e-10));
  }
}

TEST_CASE("pcc ignores positive affine rescaling, kge does not") {
  const Tensor y = randu({64}, 5, 2, 6);
  const Tensor p = randu({64}, 6, 2, 6);
  Tensor q(p.shape());
  for (size_t i = 0; i < p.size(); ++i) q[i] = 3.0 * p[i] + 1.5;
  CHECK(pcc(y, q) == doctest::Approx(pcc(y, p)).epsilon(1e-10));
  CHECK(std::fabs(kge(y, q) - kge(y, p)) > 1e-3);
}

TEST_CASE("pcc bounded, r2 and mnse capped at one") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor y = randu({50}, 900 + seed, -3, 3);
    const Tensor p = randu({50}, 700 + seed, -3, 3);
    const double c = pcc(y, p);
    CHECK(c >= -1.0 - 1e-12);
    CHECK(c <= 1.0 + 1e-12);
    CHECK(r2(y, p) <= 1.0 + 1e-12);
    CHECK(mnse(y, p) <= 1.0 + 1e-12);
    CHECK(kge(y, p) <= 1.0 + 1e-12);
  }
}

TEST_CASE("flat reference flags instead of throwing") {
  const Tensor y = vec({4, 4, 4, 4});
  const Tensor p = vec({4, 5, 3, 4});
  const MetricSuite s = metric_suite(y, p);
  CHECK(s.flat_reference);
  CHECK(std::isnan(s.pcc));
  CHECK(std::isnan(s.r2));
  CHECK(std::isnan(s.kge));
  CHECK(std::isnan(s.mnse));
  CHECK(s.mae == doctest::Approx(0.5));
  CHECK(s.rmse == doctest::Approx(std::sqrt(0.5)));
}

TEST_CASE("zero-mean reference disables the kge bias ratio") {
  const Tensor y = vec({-1, 0, 1});
  const Tensor p = vec({-2, 1, 1});
  CHECK(std::isnan(kge(y, p)));
  CHECK(metric_suite(y, p).zero_mean_reference);
  CHECK_FALSE(std::isnan(pcc(y, p)));
}

TEST_CASE("pnse counts nodes above the threshold") {
  // Two nodes, four samples, one-step horizon. Node 0 perfect, node 1 awful.
  Tensor y({4, 2, 1}), p({4, 2, 1});
  for (size_t s = 0; s < 4; ++s) {
    y.at({s, 0, 0}) = double(s);
    p.at({s, 0, 0}) = double(s);
    y.at({s, 1, 0}) = double(s);
    p.at({s, 1, 0}) = 10.0 - double(s);
  }
  CHECK(pnse(y, p) == doctest::Approx(0.5));
  CHECK(pnse(y, p, 0.999) == doctest::Approx(0.5));  // perfect node still passes
  CHECK(pnse(y, y) == doctest::Approx(1.0));
}

TEST_CASE("pnse on flat nodes accepts only perfect forecasts") {
  Tensor y({3, 2, 2}), p({3, 2, 2});
  for (size_t s = 0; s < 3; ++s) {
    for (size_t h = 0; h < 2; ++h) {
      y.at({s, 0, h}) = 7.0;
      p.at({s, 0, h}) = 7.0;
      y.at({s, 1, h}) = 7.0;
      p.at({s, 1, h}) = 7.0 + double(s);
    }
  }
  CHECK(pnse(y, p) == doctest::Approx(0.5));
}

TEST_CASE("pnse threshold can demand near-perfect nodes") {
  Tensor y({16, 2, 1}), p({16, 2, 1});
  Rng rng(42);
  for (size_t s = 0; s < 16; ++s) {
    const double base = rng.uniform(0, 10);
    y.at({s, 0, 0}) = base;
    p.at({s, 0, 0}) = base + 0.01;  // tiny error, NSE near 1
    y.at({s, 1, 0}) = base;
    p.at({s, 1, 0}) = base + rng.uniform(-3, 3);  // noisy, NSE well below 0.9
  }
  CHECK(pnse(y, p, 0.0) >= 0.5);
  CHECK(pnse(y, p, 0.95) == doctest::Approx(0.5));
}

TEST_CASE("per-horizon suites track horizon-dependent error growth") {
  const size_t S = 6, N = 3, H = 4;
  Tensor y({S, N, H}), p({S, N, H});
  Rng rng(9);
  for (size_t s = 0; s < S; ++s)
    for (size_t n = 0; n < N; ++n)
      for (size_t h = 0; h < H; ++h) {
        const double base = rng.uniform(0, 5);
        y.at({s, n, h}) = base;
        p.at({s, n, h}) = base + 0.1 * double(h + 1) * (rng.uniform(0, 1) < 0.5 ? -1 : 1);
      }
  const auto rows = per_horizon_suite(y, p);
  REQUIRE(rows.size() == H);
  for (size_t h = 0; h < H; ++h)
    CHECK(rows[h].mae == doctest::Approx(0.1 * double(h + 1)).epsilon(1e-10));
  CHECK(rows[0].mae < rows[H - 1].mae);
}

TEST_CASE("metrics csv format and determinism") {
  const Tensor y = randu({5, 3, 4}, 21, 0, 8);
  const Tensor p = randu({5, 3, 4}, 22, 0, 8);
  const auto rows = per_horizon_suite(y, p);
  const std::string path = "metrics_out.csv";
  write_metrics_csv(path, rows);
  const std::string first = slurp(path);
  write_metrics_csv(path, rows);
  CHECK(slurp(path) == first);
  CHECK(first.rfind("horizon,mae,rmse,pcc,r2,kge,mnse,pnse\n", 0) == 0);
  size_t lines = 0;
  for (char c : first)
    if (c == '\n') ++lines;
  CHECK(lines == rows.size() + 1);
  CHECK(first.find("\n1,") != std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("shape mismatch and empty inputs are rejected") {
  CHECK_THROWS_AS(mae(vec({1, 2}), vec({1, 2, 3})), ShapeError);
  CHECK_THROWS_AS(metric_suite(Tensor({0}), Tensor({0})), ShapeError);
  CHECK_THROWS_AS(pnse(vec({1, 2}), vec({1, 2})), ShapeError);
  CHECK_THROWS_AS(per_horizon_suite(vec({1, 2}), vec({1, 2})), ShapeError);
}
