#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "stb/autodiff.hpp"
#include "stb/tensor.hpp"

namespace stb {

// Named parameter tensors with deterministic iteration order (insertion
// order). The flat view backs the optimizer, gradient checks, and
// checkpoints; round-trip flatten -> unflatten is the identity.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
  };

  // Registers a parameter initialized uniform in [-1/sqrt(fan_in),
  // +1/sqrt(fan_in)] from a substream derived from (rng seed, name), so the
  // values do not depend on creation order. If the name already exists
  // (checkpoint load) the stored values are kept and only the shape is
  // validated.
  Tensor& create(const std::string& name, Shape shape, size_t fan_in,
                 const Rng& rng);
  // Same registration rules, constant fill (layer-norm gains, biases).
  Tensor& create_const(const std::string& name, Shape shape, double v);
  // Raw registration used by checkpoint loading.
  Tensor& put(const std::string& name, Tensor value);

  bool has(const std::string& name) const;
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;

  size_t count() const { return entries_.size(); }
  const Entry& entry(size_t i) const { return entries_[i]; }
  Entry& entry(size_t i) { return entries_[i]; }

  size_t total_size() const;
  std::vector<double> flatten() const;
  void unflatten(const std::vector<double>& flat);

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// Per-tape view of a ParamStore. Parameters become tape inputs on first use
// (so unused parameters never touch the tape and keep exactly-zero
// gradients), and gradients are read back by name after backward().
class Workspace {
 public:
  Workspace(Tape& tape, ParamStore& params) : tape_(&tape), params_(&params) {}

  Var operator[](const std::string& name);
  bool used(const std::string& name) const;

  // Gradient of one parameter (zeros if unused this pass).
  Tensor grad(const std::string& name) const;
  // Gradients in flat ParamStore order; unused entries contribute zeros.
  std::vector<double> grad_flat() const;

  Tape& tape() { return *tape_; }
  ParamStore& params() { return *params_; }

 private:
  Tape* tape_;
  ParamStore* params_;
  std::unordered_map<std::string, Var> cache_;
};

}  // namespace stb
