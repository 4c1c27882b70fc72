#include "warpcore/nn/param_store.hpp"

#include "warpcore/error.hpp"

namespace warpcore::nn {

Tensor& ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw Error(ErrorKind::kInvalidParams, "duplicate parameter " + name);
  index_[name] = entries_.size();
  names_.push_back(name);
  entries_.emplace_back(name, std::move(value));
  return entries_.back().second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorKind::kInvalidParams, "unknown parameter " + name);
  return entries_[it->second].second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorKind::kInvalidParams, "unknown parameter " + name);
  return entries_[it->second].second;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

ParamStore ParamStore::zeros_like() const {
  ParamStore out;
  for (const auto& [name, t] : entries_) out.add(name, Tensor(t.shape()));
  return out;
}

void ParamStore::accumulate(const ParamStore& other) {
  for (const auto& [name, t] : other.entries_) {
    Tensor& dst = at(name);
    if (dst.shape() != t.shape()) throw Error(ErrorKind::kShapeMismatch, "shape of " + name);
    for (std::size_t i = 0; i < t.size(); ++i) dst[i] += t[i];
  }
}

void ParamStore::scale(double s) {
  for (auto& [name, t] : entries_) {
    for (double& v : t.values()) v *= s;
  }
}

bool ParamStore::all_finite() const {
  for (const auto& [name, t] : entries_) {
    if (!t.all_finite()) return false;
  }
  return true;
}

}  // namespace warpcore::nn
