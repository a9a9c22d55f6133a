#include "stb/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace stb {

namespace {

double eval_loss(ParamStore& params, const LossFn& f) {
  Tape tape;
  Workspace ws(tape, params);
  Var loss = f(tape, ws);
  if (loss.size() != 1)
    throw ShapeError("grad_check: loss function must return a scalar");
  const double v = loss.value()[0];
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
  return v;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
}

}  // namespace

GradCheckResult grad_check(ParamStore& params, const LossFn& f, double eps,
                           size_t coord_limit, size_t probes,
                           uint64_t probe_seed) {
  if (eps < 1e-7 || eps > 1e-3)
    throw ConfigError(strf("grad_check: eps %g outside [1e-7, 1e-3]", eps));

  std::vector<double> analytic;
  {
    Tape tape;
    Workspace ws(tape, params);
    Var loss = f(tape, ws);
    if (loss.size() != 1)
      throw ShapeError("grad_check: loss function must return a scalar");
    tape.backward(loss);
    analytic = ws.grad_flat();
  }

  const std::vector<double> theta = params.flatten();
  const size_t P = theta.size();
  GradCheckResult result;

  auto coord_name = [&](size_t flat) {
    size_t off = 0;
    for (size_t i = 0; i < params.count(); ++i) {
      const auto& e = params.entry(i);
      if (flat < off + e.value.size())
        return strf("%s[%zu]", e.name.c_str(), flat - off);
      off += e.value.size();
    }
    return std::string("?");
  };

  if (P <= coord_limit) {
    std::vector<double> work = theta;
    for (size_t i = 0; i < P; ++i) {
      work[i] = theta[i] + eps;
      params.unflatten(work);
      const double up = eval_loss(params, f);
      work[i] = theta[i] - eps;
      params.unflatten(work);
      const double dn = eval_loss(params, f);
      work[i] = theta[i];
      const double numeric = (up - dn) / (2.0 * eps);
      const double err = rel_err(numeric, analytic[i]);
      if (err > result.max_rel_err) {
        result.max_rel_err = err;
        result.worst_coord = coord_name(i);
      }
      ++result.checked;
    }
    params.unflatten(theta);
    return result;
  }

  Rng rng(probe_seed);
  for (size_t p = 0; p < probes; ++p) {
    std::vector<double> dir(P);
    double norm = 0.0;
    for (size_t i = 0; i < P; ++i) {
      dir[i] = rng.normal();
      norm += dir[i] * dir[i];
    }
    norm = std::sqrt(norm);
    for (size_t i = 0; i < P; ++i) dir[i] /= norm;

    std::vector<double> work(P);
    for (size_t i = 0; i < P; ++i) work[i] = theta[i] + eps * dir[i];
    params.unflatten(work);
    const double up = eval_loss(params, f);
    for (size_t i = 0; i < P; ++i) work[i] = theta[i] - eps * dir[i];
    params.unflatten(work);
    const double dn = eval_loss(params, f);
    const double numeric = (up - dn) / (2.0 * eps);
    double dot = 0.0;
    for (size_t i = 0; i < P; ++i) dot += analytic[i] * dir[i];
    const double err = rel_err(numeric, dot);
    if (err > result.max_rel_err) {
      result.max_rel_err = err;
      result.worst_coord = strf("probe %zu", p);
    }
    ++result.checked;
  }
  params.unflatten(theta);
  return result;
}

}  // namespace stb
