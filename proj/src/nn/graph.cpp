#include "warpcore/nn/graph.hpp"

#include "warpcore/error.hpp"

namespace warpcore::nn {

Var Graph::constant(Tensor value) {
  nodes_.push_back({std::move(value), false, {}});
  return {static_cast<int>(nodes_.size()) - 1};
}

Var Graph::input(Tensor value) {
  nodes_.push_back({std::move(value), true, {}});
  return {static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(const ParamStore& store, const std::string& name) {
  if (auto it = params_.find(name); it != params_.end()) return {it->second};
  Tensor copy(store.at(name).shape(), store.at(name).storage());
  const Var v = input(std::move(copy));
  params_[name] = v.id;
  return v;
}

Var Graph::record(Tensor value, const std::vector<Var>& parents, BackwardFn fn) {
  const int id = static_cast<int>(nodes_.size());
  bool needs = false;
  for (Var p : parents) {
    if (p.id < 0 || p.id >= id) throw Error(ErrorKind::kGraphCycle, "parent does not precede node");
    needs = needs || nodes_[static_cast<std::size_t>(p.id)].requires_grad;
  }
  nodes_.push_back({std::move(value), needs, needs ? std::move(fn) : BackwardFn{}});
  return {id};
}

std::span<double> Graph::grad(Var v) { return nodes_.at(static_cast<std::size_t>(v.id)).value.grad(); }

std::span<const double> Graph::grad_view(Var v) const {
  return static_cast<const Tensor&>(nodes_.at(static_cast<std::size_t>(v.id)).value).grad();
}

void Graph::backward(Var root) {
  Tensor& r = nodes_.at(static_cast<std::size_t>(root.id)).value;
  if (r.size() != 1) throw Error(ErrorKind::kShapeMismatch, "backward needs a scalar root");
  for (auto& n : nodes_) n.value.drop_grad();
  r.grad()[0] = 1.0;
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || !n.backward) continue;
    // Nodes never reached from the root keep an unallocated gradient.
    if (static_cast<const Tensor&>(n.value).grad().empty()) continue;
    n.backward(*this, id);
  }
}

ParamStore Graph::param_grads(const ParamStore& store) const {
  ParamStore out = store.zeros_like();
  for (const auto& [name, id] : params_) {
    if (!out.contains(name)) continue;
    const auto g = static_cast<const Tensor&>(nodes_[static_cast<std::size_t>(id)].value).grad();
    if (g.empty()) continue;
    Tensor& dst = out.at(name);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] = g[i];
  }
  return out;
}

}  // namespace warpcore::nn
