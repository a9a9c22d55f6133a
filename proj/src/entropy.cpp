#include "stb/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace stb {

namespace {

double shannon(const std::vector<double>& p) {
  double h = 0.0;
  for (double q : p)
    if (q > 0.0) h -= q * std::log(q);
  return h;
}

}  // namespace

double spatial_entropy(const SparseGraph& g) {
  const std::vector<double> s = g.strengths();
  double total = 0.0;
  for (double v : s) total += v;
  if (total <= 0.0)
    throw ValidationError("spatial entropy undefined: total edge weight is 0");
  std::vector<double> p(s.size());
  for (size_t i = 0; i < s.size(); ++i) p[i] = s[i] / total;
  return shannon(p);
}

double temporal_entropy(const Tensor& x, size_t window, size_t bins,
                        size_t feature) {
  if (x.rank() != 3)
    throw ShapeError(strf("series must be [N x T x F], got %s",
                          shape_str(x.shape()).c_str()));
  const size_t N = x.dim(0), T = x.dim(1), F = x.dim(2);
  if (feature >= F)
    throw ShapeError(strf("feature %zu out of range %zu", feature, F));
  if (window == 0 || window > T) {
    throw ValidationError(strf("window %zu outside series length %zu", window,
                               T));
  }
  if (bins < 2) throw ValidationError("histogram needs at least 2 bins");

  double acc = 0.0;
  std::vector<double> counts(bins);
  for (size_t i = 0; i < N; ++i) {
    double lo = x.at({i, T - window, feature});
    double hi = lo;
    for (size_t t = T - window; t < T; ++t) {
      const double v = x.at({i, t, feature});
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi <= lo) continue;  // constant node contributes 0
    std::fill(counts.begin(), counts.end(), 0.0);
    const double scale = static_cast<double>(bins) / (hi - lo);
    for (size_t t = T - window; t < T; ++t) {
      const double v = x.at({i, t, feature});
      size_t b = static_cast<size_t>((v - lo) * scale);
      if (b >= bins) b = bins - 1;  // max value lands in the top bin
      counts[b] += 1.0;
    }
    for (double& c : counts) c /= static_cast<double>(window);
    acc += shannon(counts);
  }
  return acc / static_cast<double>(N);
}

EntropyReport mismatch_report(const SparseGraph& g, const Tensor& x,
                              const std::vector<size_t>& windows, size_t bins,
                              size_t feature) {
  if (windows.empty())
    throw ValidationError("mismatch report needs at least one window");
  EntropyReport r;
  r.h_spatial = spatial_entropy(g);
  r.windows = windows;
  r.n_nodes = g.n_nodes();
  r.bins = bins;
  double best = 0.0;
  for (size_t i = 0; i < windows.size(); ++i) {
    const double ht = temporal_entropy(x, windows[i], bins, feature);
    r.h_temporal.push_back(ht);
    const double mm = std::abs(r.h_spatial - ht);
    r.mismatch.push_back(mm);
    if (i == 0 || mm < best) {
      best = mm;
      r.recommended_window = windows[i];
    }
  }
  return r;
}

void write_entropy_csv(const EntropyReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError(strf("cannot write '%s'", path.c_str()));
  out << "window,h_spatial,h_temporal,mismatch,n_nodes\n";
  for (size_t i = 0; i < r.windows.size(); ++i) {
    out << r.windows[i] << ',' << strf("%.12g", r.h_spatial) << ','
        << strf("%.12g", r.h_temporal[i]) << ','
        << strf("%.12g", r.mismatch[i]) << ',' << r.n_nodes << '\n';
  }
}

}  // namespace stb
