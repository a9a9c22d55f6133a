#include "stb/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "stb/common.hpp"

namespace stb {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

void check_aligned(const Tensor& y, const Tensor& yhat) {
  if (y.shape() != yhat.shape()) {
    throw ShapeError("metric inputs differ: " + shape_str(y.shape()) + " vs " +
                     shape_str(yhat.shape()));
  }
  if (y.size() == 0) throw ShapeError("metric inputs are empty");
}

struct Moments {
  double mean_y = 0, mean_p = 0;
  double var_y = 0, var_p = 0;  // population variance
  double cov = 0;
  double sum_abs_err = 0, sum_sq_err = 0;
  double sum_abs_dev = 0, sum_sq_dev = 0;  // |y - mean_y|, (y - mean_y)^2
  size_t n = 0;
};

Moments moments(const Tensor& y, const Tensor& yhat) {
  Moments m;
  m.n = y.size();
  for (size_t i = 0; i < m.n; ++i) {
    m.mean_y += y[i];
    m.mean_p += yhat[i];
  }
  m.mean_y /= double(m.n);
  m.mean_p /= double(m.n);
  for (size_t i = 0; i < m.n; ++i) {
    const double dy = y[i] - m.mean_y;
    const double dp = yhat[i] - m.mean_p;
    const double e = yhat[i] - y[i];
    m.var_y += dy * dy;
    m.var_p += dp * dp;
    m.cov += dy * dp;
    m.sum_abs_err += std::fabs(e);
    m.sum_sq_err += e * e;
    m.sum_abs_dev += std::fabs(dy);
    m.sum_sq_dev += dy * dy;
  }
  m.var_y /= double(m.n);
  m.var_p /= double(m.n);
  m.cov /= double(m.n);
  return m;
}

double pcc_of(const Moments& m) {
  const double denom = std::sqrt(m.var_y) * std::sqrt(m.var_p);
  if (denom == 0) return kNan;
  return m.cov / denom;
}

double r2_of(const Moments& m) {
  if (m.sum_sq_dev == 0) return kNan;
  return 1.0 - m.sum_sq_err / m.sum_sq_dev;
}

double kge_of(const Moments& m) {
  if (m.var_y == 0 || m.var_p == 0 || m.mean_y == 0) return kNan;
  const double r = pcc_of(m);
  const double alpha = std::sqrt(m.var_p) / std::sqrt(m.var_y);
  const double beta = m.mean_p / m.mean_y;
  const double a = r - 1.0, b = alpha - 1.0, c = beta - 1.0;
  return 1.0 - std::sqrt(a * a + b * b + c * c);
}

double mnse_of(const Moments& m) {
  if (m.sum_abs_dev == 0) return kNan;
  return 1.0 - m.sum_abs_err / m.sum_abs_dev;
}

}  // namespace

double mae(const Tensor& y, const Tensor& yhat) {
  check_aligned(y, yhat);
  double s = 0;
  for (size_t i = 0; i < y.size(); ++i) s += std::fabs(yhat[i] - y[i]);
  return s / double(y.size());
}

double rmse(const Tensor& y, const Tensor& yhat) {
  check_aligned(y, yhat);
  double s = 0;
  for (size_t i = 0; i < y.size(); ++i) {
    const double e = yhat[i] - y[i];
    s += e * e;
  }
  return std::sqrt(s / double(y.size()));
}

double pcc(const Tensor& y, const Tensor& yhat) {
  check_aligned(y, yhat);
  return pcc_of(moments(y, yhat));
}

double r2(const Tensor& y, const Tensor& yhat) {
  check_aligned(y, yhat);
  return r2_of(moments(y, yhat));
}

double kge(const Tensor& y, const Tensor& yhat) {
  check_aligned(y, yhat);
  return kge_of(moments(y, yhat));
}

double mnse(const Tensor& y, const Tensor& yhat) {
  check_aligned(y, yhat);
  return mnse_of(moments(y, yhat));
}

double pnse(const Tensor& y, const Tensor& yhat, double threshold) {
  check_aligned(y, yhat);
  if (y.rank() < 2) throw ShapeError("pnse needs [..., N, H], got " + shape_str(y.shape()));
  const size_t n_nodes = y.dim(y.rank() - 2);
  const size_t horizon = y.dim(y.rank() - 1);
  const size_t lead = y.size() / (n_nodes * horizon);

  size_t passing = 0;
  for (size_t node = 0; node < n_nodes; ++node) {
    double mean = 0;
    const size_t cells = lead * horizon;
    for (size_t b = 0; b < lead; ++b)
      for (size_t h = 0; h < horizon; ++h)
        mean += y[(b * n_nodes + node) * horizon + h];
    mean /= double(cells);
    double sq_err = 0, sq_dev = 0;
    for (size_t b = 0; b < lead; ++b) {
      for (size_t h = 0; h < horizon; ++h) {
        const size_t i = (b * n_nodes + node) * horizon + h;
        const double e = yhat[i] - y[i];
        const double d = y[i] - mean;
        sq_err += e * e;
        sq_dev += d * d;
      }
    }
    if (sq_dev == 0) {
      // Flat node: only a perfect forecast counts.
      if (sq_err == 0 && threshold < 1.0) ++passing;
      continue;
    }
    if (1.0 - sq_err / sq_dev > threshold) ++passing;
  }
  return double(passing) / double(n_nodes);
}

MetricSuite metric_suite(const Tensor& y, const Tensor& yhat,
                         double pnse_threshold) {
  check_aligned(y, yhat);
  const Moments m = moments(y, yhat);
  MetricSuite s;
  s.mae = m.sum_abs_err / double(m.n);
  s.rmse = std::sqrt(m.sum_sq_err / double(m.n));
  s.pcc = pcc_of(m);
  s.r2 = r2_of(m);
  s.kge = kge_of(m);
  s.mnse = mnse_of(m);
  s.pnse = y.rank() >= 2 ? pnse(y, yhat, pnse_threshold) : kNan;
  s.flat_reference = m.var_y == 0;
  s.zero_mean_reference = m.mean_y == 0;
  return s;
}

MetricSuite metric_suite_masked(const Tensor& y, const Tensor& yhat,
                                const std::vector<uint8_t>& keep,
                                double pnse_threshold) {
  check_aligned(y, yhat);
  if (keep.size() != y.size())
    throw ShapeError(strf("mask has %zu cells, tensors have %zu", keep.size(),
                          y.size()));
  size_t kept = 0;
  for (uint8_t k : keep) kept += k != 0;
  if (kept == 0) throw ValidationError("mask removes every cell");

  Shape flat_shape{kept};
  Tensor ys(flat_shape), ps(flat_shape);
  size_t w = 0;
  for (size_t i = 0; i < y.size(); ++i) {
    if (!keep[i]) continue;
    ys[w] = y[i];
    ps[w] = yhat[i];
    ++w;
  }
  const Moments m = moments(ys, ps);
  MetricSuite s;
  s.mae = m.sum_abs_err / double(m.n);
  s.rmse = std::sqrt(m.sum_sq_err / double(m.n));
  s.pcc = pcc_of(m);
  s.r2 = r2_of(m);
  s.kge = kge_of(m);
  s.mnse = mnse_of(m);
  s.flat_reference = m.var_y == 0;
  s.zero_mean_reference = m.mean_y == 0;

  s.pnse = kNan;
  if (y.rank() >= 2) {
    const size_t n_nodes = y.dim(y.rank() - 2);
    const size_t horizon = y.dim(y.rank() - 1);
    const size_t lead = y.size() / (n_nodes * horizon);
    size_t passing = 0, scored = 0;
    for (size_t node = 0; node < n_nodes; ++node) {
      double mean = 0;
      size_t cells = 0;
      for (size_t b = 0; b < lead; ++b)
        for (size_t h = 0; h < horizon; ++h) {
          const size_t i = (b * n_nodes + node) * horizon + h;
          if (!keep[i]) continue;
          mean += y[i];
          ++cells;
        }
      if (cells == 0) continue;
      mean /= double(cells);
      double sq_err = 0, sq_dev = 0;
      for (size_t b = 0; b < lead; ++b)
        for (size_t h = 0; h < horizon; ++h) {
          const size_t i = (b * n_nodes + node) * horizon + h;
          if (!keep[i]) continue;
          const double e = yhat[i] - y[i];
          const double d = y[i] - mean;
          sq_err += e * e;
          sq_dev += d * d;
        }
      ++scored;
      if (sq_dev == 0) {
        if (sq_err == 0 && pnse_threshold < 1.0) ++passing;
      } else if (1.0 - sq_err / sq_dev > pnse_threshold) {
        ++passing;
      }
    }
    if (scored > 0) s.pnse = double(passing) / double(scored);
  }
  return s;
}

std::vector<MetricSuite> per_horizon_suite(const Tensor& y, const Tensor& yhat,
                                           double pnse_threshold) {
  check_aligned(y, yhat);
  if (y.rank() < 2) throw ShapeError("per-horizon metrics need [..., N, H], got " + shape_str(y.shape()));
  const size_t horizon = y.dim(y.rank() - 1);
  const size_t rows = y.size() / horizon;
  Shape slice_shape(y.shape().begin(), y.shape().end() - 1);

  std::vector<MetricSuite> out;
  out.reserve(horizon);
  for (size_t h = 0; h < horizon; ++h) {
    Tensor ys(slice_shape), ps(slice_shape);
    for (size_t r = 0; r < rows; ++r) {
      ys[r] = y[r * horizon + h];
      ps[r] = yhat[r * horizon + h];
    }
    MetricSuite s = metric_suite(ys, ps, pnse_threshold);
    // Node scores need a horizon axis; treat the single step as H=1.
    Shape node_shape = slice_shape;
    node_shape.push_back(1);
    s.pnse = pnse(ys.reshaped(node_shape), ps.reshaped(node_shape),
                  pnse_threshold);
    out.push_back(s);
  }
  return out;
}

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricSuite>& rows) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw ValidationError("cannot open for writing: " + path);
  std::fprintf(f, "horizon,mae,rmse,pcc,r2,kge,mnse,pnse\n");
  for (size_t h = 0; h < rows.size(); ++h) {
    const MetricSuite& s = rows[h];
    std::fprintf(f, "%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", h + 1,
                 s.mae, s.rmse, s.pcc, s.r2, s.kge, s.mnse, s.pnse);
  }
  std::fclose(f);
}

}  // namespace stb
