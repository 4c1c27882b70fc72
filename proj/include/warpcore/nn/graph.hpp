#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "warpcore/nn/param_store.hpp"
#include "warpcore/nn/tensor.hpp"

namespace warpcore::nn {

/// Handle to a node of a Graph.
struct Var {
  int id = -1;
};

/// Tape of operations for reverse-mode differentiation. Nodes are appended in
/// evaluation order, so parents always precede their children and backward()
/// is a single reverse sweep. Not thread-safe; use one graph per thread.
class Graph {
 public:
  /// Called during backward with the node's own id; accumulates into the
  /// parents' gradients.
  using BackwardFn = std::function<void(Graph&, int)>;

  Var constant(Tensor value);
  /// Leaf that receives a gradient.
  Var input(Tensor value);
  /// Leaf bound to store[name]; repeated calls return the same node.
  Var param(const ParamStore& store, const std::string& name);

  /// Appends an op node. requires_grad is inherited from the parents.
  /// Throws GraphCycle if a parent does not precede the new node.
  Var record(Tensor value, const std::vector<Var>& parents, BackwardFn fn);

  const Tensor& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  bool requires_grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).requires_grad; }
  /// Gradient buffer of v, allocated (zeroed) on first use.
  std::span<double> grad(Var v);
  std::span<double> grad(int id) { return grad(Var{id}); }
  std::span<const double> grad_view(Var v) const;

  /// Seeds d(root)/d(root) = 1 and propagates. root must hold one value.
  void backward(Var root);

  /// Gradients for every entry of `store`; zero for parameters the graph
  /// never touched.
  ParamStore param_grads(const ParamStore& store) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::map<std::string, int> params_;
};

}  // namespace warpcore::nn
