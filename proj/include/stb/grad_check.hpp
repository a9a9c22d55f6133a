#pragma once

#include <functional>
#include <string>

#include "stb/param_store.hpp"

namespace stb {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_coord;  // "name[i]" or "probe k" in direction mode
  size_t checked = 0;       // coordinates or probe directions evaluated
};

// Scalar loss rebuilt from scratch on each call; must be deterministic.
using LossFn = std::function<Var(Tape&, Workspace&)>;

// Compares reverse-mode gradients against central finite differences
// (f(p+eps e) - f(p-eps e)) / 2eps. When the store holds at most
// `coord_limit` values every coordinate is checked; larger stores are
// checked on `probes` random unit directions instead (directional
// derivative vs. gradient dot product). Relative error uses
// |a-b| / max(1e-6, |a|, |b|).
GradCheckResult grad_check(ParamStore& params, const LossFn& f,
                           double eps = 1e-5, size_t coord_limit = 5000,
                           size_t probes = 32, uint64_t probe_seed = 1234);

}  // namespace stb
