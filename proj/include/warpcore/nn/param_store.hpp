#pragma once

#include <map>
#include <string>
#include <vector>

#include "warpcore/nn/tensor.hpp"

namespace warpcore::nn {

/// Named trainable tensors. Iteration follows insertion order.
class ParamStore {
 public:
  /// Throws InvalidParams on duplicate names.
  Tensor& add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  /// Throws InvalidParams for unknown names.
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;
  const std::vector<std::string>& names() const { return names_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

  /// Same names and shapes, all zero.
  ParamStore zeros_like() const;
  /// this += other, entry by entry (names must match).
  void accumulate(const ParamStore& other);
  void scale(double s);
  bool all_finite() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::vector<std::string> names_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace warpcore::nn
