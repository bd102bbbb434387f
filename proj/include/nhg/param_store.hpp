// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nhg/tensor.hpp"

#include <set>
#include <string>
#include <utility>
#include <vector>

namespace nhg {

struct ParamGroup {
  std::string name;
  std::vector<std::pair<std::string, Tensor>> tensors;

  Tensor& at(const std::string& tensor_name);
  const Tensor& at(const std::string& tensor_name) const;
  Tensor* find(const std::string& tensor_name);
  const Tensor* find(const std::string& tensor_name) const;
};

// Ordered collection of named parameter groups. Insertion order is the
// iteration, serialization and optimizer order.
class ParamStore {
 public:
  ParamGroup& add_group(const std::string& name);
  Tensor& add(const std::string& group, const std::string& tensor, Tensor value);

  bool has_group(const std::string& name) const { return find_group(name) != nullptr; }
  ParamGroup& group(const std::string& name);
  const ParamGroup& group(const std::string& name) const;
  ParamGroup* find_group(const std::string& name);
  const ParamGroup* find_group(const std::string& name) const;

  Tensor& at(const std::string& group, const std::string& tensor);
  const Tensor& at(const std::string& group, const std::string& tensor) const;
  Tensor* find(const std::string& group, const std::string& tensor);

  std::vector<ParamGroup>& groups() { return groups_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }
  std::set<std::string> group_names() const;

  // Same layout with every value zero, restricted to groups not in `exclude`.
  ParamStore zeros_like(const std::set<std::string>& exclude = {}) const;
  // Replace (or add) `name` with a copy of the group from `source`.
  void copy_group_from(const ParamStore& source, const std::string& name);
  // Copy of the listed groups only, in this store's order.
  ParamStore subset(const std::set<std::string>& names) const;

  void set_zero();
  // this += other over groups present in both, matched by name.
  void add_scaled(const ParamStore& other, double scale = 1.0);
  void scale(double factor);
  double squared_norm() const;
  std::size_t parameter_count() const;
  bool all_finite() const;

 private:
  std::vector<ParamGroup> groups_;
};

bool bit_equal(const ParamGroup& a, const ParamGroup& b);
bool bit_equal(const ParamStore& a, const ParamStore& b);

}  // namespace nhg
