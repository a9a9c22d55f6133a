#include "stb/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace stb {

namespace {

using EMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using MapCM = Eigen::Map<const EMat>;

Tape* same_tape(const char* op, std::initializer_list<Var> vs) {
  Tape* t = nullptr;
  for (const Var& v : vs) {
    if (!v.valid()) throw ShapeError(strf("%s: null operand", op));
    if (!t) t = v.tape();
    if (v.tape() != t)
      throw ShapeError(strf("%s: operands on different tapes", op));
  }
  return t;
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (!shape_eq(a.shape(), b.shape())) {
    throw ShapeError(strf("%s: shape mismatch %s vs %s", op,
                          shape_str(a.shape()).c_str(),
                          shape_str(b.shape()).c_str()));
  }
}

size_t last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

size_t lead_count(const Shape& s) {
  size_t n = 1;
  for (size_t i = 0; i + 1 < s.size(); ++i) n *= s[i];
  return n;
}

}  // namespace

Var Tape::record(const char* op, Tensor value, BackwardFn fn) {
  if (!value.all_finite()) {
    std::string where = context_.empty() ? "" : strf(" in %s", context_.c_str());
    throw NumericError(
        strf("operation '%s' produced non-finite values%s", op, where.c_str()));
  }
  max_elems_ = std::max(max_elems_, value.size());
  nodes_.push_back(Node{std::move(value), Tensor(), false, std::move(fn)});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_acc(size_t id) {
  Node& n = nodes_[id];
  if (!n.grad_set) {
    n.grad = Tensor::zeros(n.value.shape());
    n.grad_set = true;
  }
  return n.grad;
}

Tensor Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad_set) return n.grad;
  return Tensor::zeros(n.value.shape());
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this)
    throw ShapeError("backward: loss is not on this tape");
  if (loss.value().size() != 1) {
    throw ShapeError(strf("backward: loss must be scalar, got %s",
                          shape_str(loss.shape()).c_str()));
  }
  grad_acc(loss.id())[0] += 1.0;
  for (size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad_set && n.fn) n.fn(*this, n.grad);
  }
}

// ---- elementwise -------------------------------------------------------

Var add(Var a, Var b) {
  Tape* t = same_tape("add", {a, b});
  require_same_shape("add", a, b);
  Tensor out(a.shape());
  const Tensor &av = a.value(), &bv = b.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const size_t ia = a.id(), ib = b.id();
  return t->record("add", std::move(out), [ia, ib](Tape& tp, const Tensor& g) {
    Tensor &ga = tp.grad_acc(ia), &gb = tp.grad_acc(ib);
    for (size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  Tape* t = same_tape("sub", {a, b});
  require_same_shape("sub", a, b);
  Tensor out(a.shape());
  const Tensor &av = a.value(), &bv = b.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const size_t ia = a.id(), ib = b.id();
  return t->record("sub", std::move(out), [ia, ib](Tape& tp, const Tensor& g) {
    Tensor &ga = tp.grad_acc(ia), &gb = tp.grad_acc(ib);
    for (size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape* t = same_tape("mul", {a, b});
  require_same_shape("mul", a, b);
  Tensor out(a.shape());
  const Tensor &av = a.value(), &bv = b.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const size_t ia = a.id(), ib = b.id();
  return t->record("mul", std::move(out), [ia, ib](Tape& tp, const Tensor& g) {
    const Tensor &av = tp.value(ia), &bv = tp.value(ib);
    Tensor &ga = tp.grad_acc(ia), &gb = tp.grad_acc(ib);
    for (size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * bv[i];
      gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double c) {
  Tape* t = same_tape("scale", {a});
  Tensor out(a.shape());
  const Tensor& av = a.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  const size_t ia = a.id();
  return t->record("scale", std::move(out), [ia, c](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad_acc(ia);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
  });
}

Var add_rowvec(Var x, Var b) {
  Tape* t = same_tape("add_rowvec", {x, b});
  const size_t d = last_dim(x.shape());
  if (b.shape().size() != 1 || b.shape()[0] != d) {
    throw ShapeError(strf("add_rowvec: bias %s incompatible with %s",
                          shape_str(b.shape()).c_str(),
                          shape_str(x.shape()).c_str()));
  }
  const size_t rows = lead_count(x.shape());
  Tensor out(x.shape());
  const Tensor &xv = x.value(), &bv = b.value();
  for (size_t r = 0; r < rows; ++r)
    for (size_t j = 0; j < d; ++j) out[r * d + j] = xv[r * d + j] + bv[j];
  const size_t ix = x.id(), ib = b.id();
  return t->record("add_rowvec", std::move(out),
                   [ix, ib, rows, d](Tape& tp, const Tensor& g) {
                     Tensor &gx = tp.grad_acc(ix), &gb = tp.grad_acc(ib);
                     for (size_t r = 0; r < rows; ++r)
                       for (size_t j = 0; j < d; ++j) {
                         gx[r * d + j] += g[r * d + j];
                         gb[j] += g[r * d + j];
                       }
                   });
}

Var relu(Var a) {
  Tape* t = same_tape("relu", {a});
  Tensor out(a.shape());
  const Tensor& av = a.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  const size_t ia = a.id();
  return t->record("relu", std::move(out), [ia](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(ia);
    Tensor& ga = tp.grad_acc(ia);
    for (size_t i = 0; i < g.size(); ++i)
      if (av[i] > 0.0) ga[i] += g[i];
  });
}

Var sigmoid(Var a) {
  Tape* t = same_tape("sigmoid", {a});
  Tensor out(a.shape());
  const Tensor& av = a.value();
  for (size_t i = 0; i < out.size(); ++i) {
    const double x = av[i];
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                      : std::exp(x) / (1.0 + std::exp(x));
  }
  const size_t ia = a.id();
  const size_t io = t->node_count();  // id this record() will assign
  return t->record("sigmoid", std::move(out),
                   [ia, io](Tape& tp, const Tensor& g) {
                     const Tensor& y = tp.value(io);
                     Tensor& ga = tp.grad_acc(ia);
                     for (size_t i = 0; i < g.size(); ++i)
                       ga[i] += g[i] * y[i] * (1.0 - y[i]);
                   });
}

// ---- linear algebra ----------------------------------------------------

Var matmul(Var a, Var b) {
  Tape* t = same_tape("matmul", {a, b});
  const Shape &sa = a.shape(), &sb = b.shape();
  if (sa.size() < 2) {
    throw ShapeError(strf("matmul: lhs must have rank >= 2, got %s",
                          shape_str(sa).c_str()));
  }
  const size_t m = sa[sa.size() - 2], k = sa[sa.size() - 1];
  const bool shared_rhs = sb.size() == 2;
  if (shared_rhs) {
    if (sb[0] != k) {
      throw ShapeError(strf("matmul: inner dims differ, %s x %s",
                            shape_str(sa).c_str(), shape_str(sb).c_str()));
    }
  } else {
    if (sb.size() != sa.size() ||
        !std::equal(sa.begin(), sa.end() - 2, sb.begin()) ||
        sb[sb.size() - 2] != k) {
      throw ShapeError(strf("matmul: incompatible shapes %s x %s",
                            shape_str(sa).c_str(), shape_str(sb).c_str()));
    }
  }
  const size_t n = sb[sb.size() - 1];
  const size_t batch = lead_count(sa) / m;

  Shape out_shape(sa.begin(), sa.end() - 1);
  out_shape.push_back(n);
  Tensor out(out_shape);

  const Tensor &av = a.value(), &bv = b.value();
  if (shared_rhs) {
    MapCM A(av.data(), batch * m, k);
    MapCM B(bv.data(), k, n);
    MapM Y(out.data(), batch * m, n);
    Y.noalias() = A * B;
  } else {
    for (size_t s = 0; s < batch; ++s) {
      MapCM A(av.data() + s * m * k, m, k);
      MapCM B(bv.data() + s * k * n, k, n);
      MapM Y(out.data() + s * m * n, m, n);
      Y.noalias() = A * B;
    }
  }

  const size_t ia = a.id(), ib = b.id();
  return t->record(
      "matmul", std::move(out),
      [ia, ib, m, k, n, batch, shared_rhs](Tape& tp, const Tensor& g) {
        const Tensor &av = tp.value(ia), &bv = tp.value(ib);
        Tensor &ga = tp.grad_acc(ia), &gb = tp.grad_acc(ib);
        if (shared_rhs) {
          MapCM A(av.data(), batch * m, k);
          MapCM B(bv.data(), k, n);
          MapCM G(g.data(), batch * m, n);
          MapM GA(ga.data(), batch * m, k);
          MapM GB(gb.data(), k, n);
          GA.noalias() += G * B.transpose();
          GB.noalias() += A.transpose() * G;
        } else {
          for (size_t s = 0; s < batch; ++s) {
            MapCM A(av.data() + s * m * k, m, k);
            MapCM B(bv.data() + s * k * n, k, n);
            MapCM G(g.data() + s * m * n, m, n);
            MapM GA(ga.data() + s * m * k, m, k);
            MapM GB(gb.data() + s * k * n, k, n);
            GA.noalias() += G * B.transpose();
            GB.noalias() += A.transpose() * G;
          }
        }
      });
}

Var transpose_last2(Var a) {
  Tape* t = same_tape("transpose_last2", {a});
  const Shape& s = a.shape();
  if (s.size() < 2) {
    throw ShapeError(strf("transpose_last2: rank >= 2 required, got %s",
                          shape_str(s).c_str()));
  }
  const size_t p = s[s.size() - 2], q = s[s.size() - 1];
  const size_t batch = lead_count(s) / p;
  Shape out_shape = s;
  std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
  Tensor out(out_shape);
  const Tensor& av = a.value();
  for (size_t b = 0; b < batch; ++b) {
    const double* src = av.data() + b * p * q;
    double* dst = out.data() + b * p * q;
    for (size_t i = 0; i < p; ++i)
      for (size_t j = 0; j < q; ++j) dst[j * p + i] = src[i * q + j];
  }
  const size_t ia = a.id();
  return t->record("transpose_last2", std::move(out),
                   [ia, p, q, batch](Tape& tp, const Tensor& g) {
                     Tensor& ga = tp.grad_acc(ia);
                     for (size_t b = 0; b < batch; ++b) {
                       const double* src = g.data() + b * p * q;
                       double* dst = ga.data() + b * p * q;
                       for (size_t j = 0; j < q; ++j)
                         for (size_t i = 0; i < p; ++i)
                           dst[i * q + j] += src[j * p + i];
                     }
                   });
}

Var reshape(Var a, Shape s) {
  Tape* t = same_tape("reshape", {a});
  Tensor out = a.value().reshaped(std::move(s));
  const size_t ia = a.id();
  return t->record("reshape", std::move(out),
                   [ia](Tape& tp, const Tensor& g) {
                     Tensor& ga = tp.grad_acc(ia);
                     for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                   });
}

Var broadcast_to(Var a, Shape target) {
  Tape* t = same_tape("broadcast_to", {a});
  const Shape& src = a.shape();
  const size_t R = target.size(), r = src.size();
  if (r > R) {
    throw ShapeError(strf("broadcast_to: source rank %zu exceeds target %s", r,
                          shape_str(target).c_str()));
  }
  // Right-aligned strides into the source; 0 marks a broadcast axis.
  std::vector<size_t> strides(R, 0);
  {
    size_t stride = 1;
    for (size_t i = r; i-- > 0;) {
      const size_t od = target[R - r + i];
      if (src[i] == od) {
        strides[R - r + i] = stride;
      } else if (src[i] != 1) {
        throw ShapeError(strf("broadcast_to: cannot broadcast %s to %s",
                              shape_str(src).c_str(),
                              shape_str(target).c_str()));
      }
      stride *= src[i];
    }
  }
  Tensor out(target);
  const Tensor& av = a.value();
  std::vector<size_t> idx(R, 0);
  size_t src_off = 0;
  for (size_t flat = 0; flat < out.size(); ++flat) {
    out[flat] = av[src_off];
    // odometer increment
    for (size_t d = R; d-- > 0;) {
      idx[d]++;
      src_off += strides[d];
      if (idx[d] < target[d]) break;
      src_off -= strides[d] * target[d];
      idx[d] = 0;
      if (d == 0) break;
    }
  }
  const size_t ia = a.id();
  const Shape tgt = target;
  return t->record(
      "broadcast_to", std::move(out),
      [ia, strides, tgt](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_acc(ia);
        const size_t R = tgt.size();
        std::vector<size_t> idx(R, 0);
        size_t src_off = 0;
        for (size_t flat = 0; flat < g.size(); ++flat) {
          ga[src_off] += g[flat];
          for (size_t d = R; d-- > 0;) {
            idx[d]++;
            src_off += strides[d];
            if (idx[d] < tgt[d]) break;
            src_off -= strides[d] * tgt[d];
            idx[d] = 0;
            if (d == 0) break;
          }
        }
      });
}

Var concat_last(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_last: empty part list");
  Tape* t = parts[0].tape();
  const Shape& s0 = parts[0].shape();
  if (s0.empty()) throw ShapeError("concat_last: scalar operands unsupported");
  size_t total_d = 0;
  std::vector<size_t> widths;
  for (const Var& p : parts) {
    same_tape("concat_last", {parts[0], p});
    const Shape& s = p.shape();
    if (s.size() != s0.size() ||
        !std::equal(s.begin(), s.end() - 1, s0.begin())) {
      throw ShapeError(strf("concat_last: ragged shapes %s vs %s",
                            shape_str(s0).c_str(), shape_str(s).c_str()));
    }
    widths.push_back(s.back());
    total_d += s.back();
  }
  const size_t rows = lead_count(s0);
  Shape out_shape = s0;
  out_shape.back() = total_d;
  Tensor out(out_shape);
  size_t col0 = 0;
  for (size_t p = 0; p < parts.size(); ++p) {
    const Tensor& pv = parts[p].value();
    const size_t d = widths[p];
    for (size_t r = 0; r < rows; ++r)
      for (size_t j = 0; j < d; ++j)
        out[r * total_d + col0 + j] = pv[r * d + j];
    col0 += d;
  }
  std::vector<size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return t->record(
      "concat_last", std::move(out),
      [ids, widths, rows, total_d](Tape& tp, const Tensor& g) {
        size_t col0 = 0;
        for (size_t p = 0; p < ids.size(); ++p) {
          Tensor& gp = tp.grad_acc(ids[p]);
          const size_t d = widths[p];
          for (size_t r = 0; r < rows; ++r)
            for (size_t j = 0; j < d; ++j)
              gp[r * d + j] += g[r * total_d + col0 + j];
          col0 += d;
        }
      });
}

Var slice_last(Var a, size_t lo, size_t hi) {
  Tape* t = same_tape("slice_last", {a});
  const Shape& s = a.shape();
  const size_t d = last_dim(s);
  if (s.empty() || lo >= hi || hi > d) {
    throw ShapeError(strf("slice_last: invalid range [%zu, %zu) for %s", lo,
                          hi, shape_str(s).c_str()));
  }
  const size_t rows = lead_count(s);
  const size_t w = hi - lo;
  Shape out_shape = s;
  out_shape.back() = w;
  Tensor out(out_shape);
  const Tensor& av = a.value();
  for (size_t r = 0; r < rows; ++r)
    for (size_t j = 0; j < w; ++j) out[r * w + j] = av[r * d + lo + j];
  const size_t ia = a.id();
  return t->record("slice_last", std::move(out),
                   [ia, lo, w, d, rows](Tape& tp, const Tensor& g) {
                     Tensor& ga = tp.grad_acc(ia);
                     for (size_t r = 0; r < rows; ++r)
                       for (size_t j = 0; j < w; ++j)
                         ga[r * d + lo + j] += g[r * w + j];
                   });
}

// ---- normalization and attention pieces ---------------------------------

Var softmax_last(Var a) {
  Tape* t = same_tape("softmax_last", {a});
  const size_t d = last_dim(a.shape());
  if (d < 1) throw ShapeError("softmax_last: empty last dimension");
  const size_t rows = lead_count(a.shape());
  Tensor out(a.shape());
  const Tensor& av = a.value();
  for (size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * d;
    double* y = out.data() + r * d;
    double mx = x[0];
    for (size_t j = 1; j < d; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (size_t j = 0; j < d; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    for (size_t j = 0; j < d; ++j) y[j] /= sum;
  }
  const size_t ia = a.id();
  const size_t io = t->node_count();
  return t->record("softmax_last", std::move(out),
                   [ia, io, rows, d](Tape& tp, const Tensor& g) {
                     const Tensor& y = tp.value(io);
                     Tensor& ga = tp.grad_acc(ia);
                     for (size_t r = 0; r < rows; ++r) {
                       double dot = 0.0;
                       for (size_t j = 0; j < d; ++j)
                         dot += g[r * d + j] * y[r * d + j];
                       for (size_t j = 0; j < d; ++j)
                         ga[r * d + j] +=
                             y[r * d + j] * (g[r * d + j] - dot);
                     }
                   });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape* t = same_tape("layer_norm", {x, gain, bias});
  if (eps <= 0.0) throw ShapeError("layer_norm: eps must be positive");
  const size_t d = last_dim(x.shape());
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw ShapeError(strf("layer_norm: gain/bias %s,%s incompatible with %s",
                          shape_str(gain.shape()).c_str(),
                          shape_str(bias.shape()).c_str(),
                          shape_str(x.shape()).c_str()));
  }
  const size_t rows = lead_count(x.shape());
  Tensor out(x.shape());
  const Tensor &xv = x.value(), &gv = gain.value(), &bv = bias.value();
  for (size_t r = 0; r < rows; ++r) {
    const double* xi = xv.data() + r * d;
    double* y = out.data() + r * d;
    double mean = 0.0;
    for (size_t j = 0; j < d; ++j) mean += xi[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (size_t j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (size_t j = 0; j < d; ++j)
      y[j] = gv[j] * ((xi[j] - mean) * inv) + bv[j];
  }
  const size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return t->record(
      "layer_norm", std::move(out),
      [ix, ig, ib, rows, d, eps](Tape& tp, const Tensor& g) {
        const Tensor &xv = tp.value(ix), &gv = tp.value(ig);
        Tensor &gx = tp.grad_acc(ix), &gg = tp.grad_acc(ig),
               &gb = tp.grad_acc(ib);
        std::vector<double> xhat(d), dxhat(d);
        for (size_t r = 0; r < rows; ++r) {
          const double* xi = xv.data() + r * d;
          const double* gi = g.data() + r * d;
          double mean = 0.0;
          for (size_t j = 0; j < d; ++j) mean += xi[j];
          mean /= static_cast<double>(d);
          double var = 0.0;
          for (size_t j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
          var /= static_cast<double>(d);
          const double inv = 1.0 / std::sqrt(var + eps);
          double m1 = 0.0, m2 = 0.0;
          for (size_t j = 0; j < d; ++j) {
            xhat[j] = (xi[j] - mean) * inv;
            dxhat[j] = gi[j] * gv[j];
            m1 += dxhat[j];
            m2 += dxhat[j] * xhat[j];
            gg[j] += gi[j] * xhat[j];
            gb[j] += gi[j];
          }
          m1 /= static_cast<double>(d);
          m2 /= static_cast<double>(d);
          for (size_t j = 0; j < d; ++j)
            gx.data()[r * d + j] += inv * (dxhat[j] - m1 - xhat[j] * m2);
        }
      });
}

// ---- reductions ----------------------------------------------------------

Var sum_all(Var a) {
  Tape* t = same_tape("sum_all", {a});
  const Tensor& av = a.value();
  double s = 0.0;
  for (size_t i = 0; i < av.size(); ++i) s += av[i];
  const size_t ia = a.id();
  return t->record("sum_all", Tensor::scalar(s),
                   [ia](Tape& tp, const Tensor& g) {
                     Tensor& ga = tp.grad_acc(ia);
                     for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
                   });
}

Var mean_all(Var a) {
  Tape* t = same_tape("mean_all", {a});
  const Tensor& av = a.value();
  const double n = static_cast<double>(av.size());
  double s = 0.0;
  for (size_t i = 0; i < av.size(); ++i) s += av[i];
  const size_t ia = a.id();
  return t->record("mean_all", Tensor::scalar(s / n),
                   [ia, n](Tape& tp, const Tensor& g) {
                     Tensor& ga = tp.grad_acc(ia);
                     for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[0] / n;
                   });
}

Var sum_squares(Var a) {
  Tape* t = same_tape("sum_squares", {a});
  const Tensor& av = a.value();
  double s = 0.0;
  for (size_t i = 0; i < av.size(); ++i) s += av[i] * av[i];
  const size_t ia = a.id();
  return t->record("sum_squares", Tensor::scalar(s),
                   [ia](Tape& tp, const Tensor& g) {
                     const Tensor& av = tp.value(ia);
                     Tensor& ga = tp.grad_acc(ia);
                     for (size_t i = 0; i < ga.size(); ++i)
                       ga[i] += 2.0 * g[0] * av[i];
                   });
}

Var mean_abs(Var a) {
  Tape* t = same_tape("mean_abs", {a});
  const Tensor& av = a.value();
  const double n = static_cast<double>(av.size());
  double s = 0.0;
  for (size_t i = 0; i < av.size(); ++i) s += std::abs(av[i]);
  const size_t ia = a.id();
  return t->record("mean_abs", Tensor::scalar(s / n),
                   [ia, n](Tape& tp, const Tensor& g) {
                     const Tensor& av = tp.value(ia);
                     Tensor& ga = tp.grad_acc(ia);
                     for (size_t i = 0; i < ga.size(); ++i) {
                       const double sgn =
                           av[i] > 0.0 ? 1.0 : (av[i] < 0.0 ? -1.0 : 0.0);
                       ga[i] += g[0] * sgn / n;
                     }
                   });
}

// ---- gathers --------------------------------------------------------------

Var gather_rows(Var table, const std::vector<size_t>& rows) {
  Tape* t = same_tape("gather_rows", {table});
  const Shape& s = table.shape();
  if (s.size() != 2) {
    throw ShapeError(strf("gather_rows: table must be rank 2, got %s",
                          shape_str(s).c_str()));
  }
  const size_t R = s[0], d = s[1];
  Tensor out({rows.size(), d});
  const Tensor& tv = table.value();
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= R) {
      throw ShapeError(
          strf("gather_rows: index %zu out of range %zu", rows[i], R));
    }
    for (size_t j = 0; j < d; ++j) out[i * d + j] = tv[rows[i] * d + j];
  }
  const size_t it = table.id();
  return t->record("gather_rows", std::move(out),
                   [it, rows, d](Tape& tp, const Tensor& g) {
                     Tensor& gt = tp.grad_acc(it);
                     for (size_t i = 0; i < rows.size(); ++i)
                       for (size_t j = 0; j < d; ++j)
                         gt[rows[i] * d + j] += g[i * d + j];
                   });
}

Var pair_dot(Var h, const std::vector<std::pair<int, int>>& pairs) {
  Tape* t = same_tape("pair_dot", {h});
  const Shape& s = h.shape();
  if (s.size() != 2) {
    throw ShapeError(
        strf("pair_dot: embedding must be rank 2, got %s", shape_str(s).c_str()));
  }
  const size_t N = s[0], d = s[1];
  Tensor out({pairs.size()});
  const Tensor& hv = h.value();
  for (size_t p = 0; p < pairs.size(); ++p) {
    const size_t u = static_cast<size_t>(pairs[p].first);
    const size_t v = static_cast<size_t>(pairs[p].second);
    if (u >= N || v >= N) {
      throw ShapeError(strf("pair_dot: pair (%d, %d) out of range %zu",
                            pairs[p].first, pairs[p].second, N));
    }
    double dot = 0.0;
    for (size_t j = 0; j < d; ++j) dot += hv[u * d + j] * hv[v * d + j];
    out[p] = dot;
  }
  const size_t ih = h.id();
  return t->record("pair_dot", std::move(out),
                   [ih, pairs, d](Tape& tp, const Tensor& g) {
                     const Tensor& hv = tp.value(ih);
                     Tensor& gh = tp.grad_acc(ih);
                     for (size_t p = 0; p < pairs.size(); ++p) {
                       const size_t u = static_cast<size_t>(pairs[p].first);
                       const size_t v = static_cast<size_t>(pairs[p].second);
                       for (size_t j = 0; j < d; ++j) {
                         gh[u * d + j] += g[p] * hv[v * d + j];
                         gh[v * d + j] += g[p] * hv[u * d + j];
                       }
                     }
                   });
}

}  // namespace stb
