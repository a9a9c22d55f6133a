#include "stb/param_store.hpp"

#include <cmath>

namespace stb {

Tensor& ParamStore::create(const std::string& name, Shape shape, size_t fan_in,
                           const Rng& rng) {
  auto it = index_.find(name);
  if (it != index_.end()) {
    Tensor& existing = entries_[it->second].value;
    if (!shape_eq(existing.shape(), shape)) {
      throw ShapeError(strf("parameter '%s' exists with shape %s, wanted %s",
                            name.c_str(), shape_str(existing.shape()).c_str(),
                            shape_str(shape).c_str()));
    }
    return existing;
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Rng local = rng.fork(fnv1a(name));
  Tensor t(std::move(shape));
  for (size_t i = 0; i < t.size(); ++i) t[i] = local.uniform(-bound, bound);
  return put(name, std::move(t));
}

Tensor& ParamStore::create_const(const std::string& name, Shape shape,
                                 double v) {
  auto it = index_.find(name);
  if (it != index_.end()) {
    Tensor& existing = entries_[it->second].value;
    if (!shape_eq(existing.shape(), shape)) {
      throw ShapeError(strf("parameter '%s' exists with shape %s, wanted %s",
                            name.c_str(), shape_str(existing.shape()).c_str(),
                            shape_str(shape).c_str()));
    }
    return existing;
  }
  return put(name, Tensor::full(std::move(shape), v));
}

Tensor& ParamStore::put(const std::string& name, Tensor value) {
  auto it = index_.find(name);
  if (it != index_.end()) {
    entries_[it->second].value = std::move(value);
    return entries_[it->second].value;
  }
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{name, std::move(value)});
  return entries_.back().value;
}

bool ParamStore::has(const std::string& name) const {
  return index_.count(name) > 0;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end())
    throw ShapeError(strf("unknown parameter '%s'", name.c_str()));
  return entries_[it->second].value;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw ShapeError(strf("unknown parameter '%s'", name.c_str()));
  return entries_[it->second].value;
}

size_t ParamStore::total_size() const {
  size_t n = 0;
  for (const Entry& e : entries_) n += e.value.size();
  return n;
}

std::vector<double> ParamStore::flatten() const {
  std::vector<double> flat;
  flat.reserve(total_size());
  for (const Entry& e : entries_)
    flat.insert(flat.end(), e.value.data(), e.value.data() + e.value.size());
  return flat;
}

void ParamStore::unflatten(const std::vector<double>& flat) {
  if (flat.size() != total_size()) {
    throw ShapeError(strf("flat parameter vector has %zu values, store holds %zu",
                          flat.size(), total_size()));
  }
  size_t off = 0;
  for (Entry& e : entries_) {
    for (size_t i = 0; i < e.value.size(); ++i) e.value[i] = flat[off + i];
    off += e.value.size();
  }
}

Var Workspace::operator[](const std::string& name) {
  auto it = cache_.find(name);
  if (it != cache_.end()) return it->second;
  Var v = tape_->input(params_->get(name));
  cache_.emplace(name, v);
  return v;
}

bool Workspace::used(const std::string& name) const {
  return cache_.count(name) > 0;
}

Tensor Workspace::grad(const std::string& name) const {
  auto it = cache_.find(name);
  if (it == cache_.end()) return Tensor::zeros(params_->get(name).shape());
  return tape_->grad(it->second);
}

std::vector<double> Workspace::grad_flat() const {
  std::vector<double> flat;
  flat.reserve(params_->total_size());
  for (size_t i = 0; i < params_->count(); ++i) {
    const auto& e = params_->entry(i);
    Tensor g = grad(e.name);
    flat.insert(flat.end(), g.data(), g.data() + g.size());
  }
  return flat;
}

}  // namespace stb
