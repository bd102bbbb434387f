// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "nhg/param_store.hpp"

#include <stdexcept>

namespace nhg {

Tensor* ParamGroup::find(const std::string& tensor_name) {
  for (auto& [n, t] : tensors) {
    if (n == tensor_name) return &t;
  }
  return nullptr;
}

const Tensor* ParamGroup::find(const std::string& tensor_name) const {
  return const_cast<ParamGroup*>(this)->find(tensor_name);
}

Tensor& ParamGroup::at(const std::string& tensor_name) {
  if (Tensor* t = find(tensor_name)) return *t;
  throw std::out_of_range("group '" + name + "' has no tensor '" + tensor_name + "'");
}

const Tensor& ParamGroup::at(const std::string& tensor_name) const {
  return const_cast<ParamGroup*>(this)->at(tensor_name);
}

ParamGroup& ParamStore::add_group(const std::string& name) {
  if (has_group(name)) throw std::invalid_argument("duplicate parameter group '" + name + "'");
  groups_.push_back(ParamGroup{name, {}});
  return groups_.back();
}

Tensor& ParamStore::add(const std::string& group_name, const std::string& tensor, Tensor value) {
  ParamGroup* g = find_group(group_name);
  if (g == nullptr) g = &add_group(group_name);
  if (g->find(tensor) != nullptr) {
    throw std::invalid_argument("duplicate tensor '" + group_name + "/" + tensor + "'");
  }
  g->tensors.emplace_back(tensor, std::move(value));
  return g->tensors.back().second;
}

ParamGroup* ParamStore::find_group(const std::string& name) {
  for (auto& g : groups_) {
    if (g.name == name) return &g;
  }
  return nullptr;
}

const ParamGroup* ParamStore::find_group(const std::string& name) const {
  return const_cast<ParamStore*>(this)->find_group(name);
}

ParamGroup& ParamStore::group(const std::string& name) {
  if (ParamGroup* g = find_group(name)) return *g;
  throw std::out_of_range("no parameter group '" + name + "'");
}

const ParamGroup& ParamStore::group(const std::string& name) const {
  return const_cast<ParamStore*>(this)->group(name);
}

Tensor& ParamStore::at(const std::string& g, const std::string& t) { return group(g).at(t); }

const Tensor& ParamStore::at(const std::string& g, const std::string& t) const {
  return group(g).at(t);
}

Tensor* ParamStore::find(const std::string& g, const std::string& t) {
  ParamGroup* grp = find_group(g);
  return grp == nullptr ? nullptr : grp->find(t);
}

std::set<std::string> ParamStore::group_names() const {
  std::set<std::string> names;
  for (const auto& g : groups_) names.insert(g.name);
  return names;
}

ParamStore ParamStore::zeros_like(const std::set<std::string>& exclude) const {
  ParamStore out;
  for (const auto& g : groups_) {
    if (exclude.count(g.name)) continue;
    auto& dst = out.add_group(g.name);
    for (const auto& [n, t] : g.tensors) dst.tensors.emplace_back(n, Tensor(t.shape()));
  }
  return out;
}

void ParamStore::copy_group_from(const ParamStore& source, const std::string& name) {
  const ParamGroup& src = source.group(name);
  if (ParamGroup* dst = find_group(name)) {
    *dst = src;
  } else {
    groups_.push_back(src);
  }
}

ParamStore ParamStore::subset(const std::set<std::string>& names) const {
  ParamStore out;
  for (const auto& g : groups_) {
    if (names.count(g.name)) out.groups_.push_back(g);
  }
  return out;
}

void ParamStore::set_zero() {
  for (auto& g : groups_) {
    for (auto& [n, t] : g.tensors) t.fill(0.0);
  }
}

void ParamStore::add_scaled(const ParamStore& other, double scale) {
  for (auto& g : groups_) {
    const ParamGroup* og = other.find_group(g.name);
    if (og == nullptr) continue;
    for (auto& [n, t] : g.tensors) {
      const Tensor& o = og->at(n);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] += scale * o[i];
    }
  }
}

void ParamStore::scale(double factor) {
  for (auto& g : groups_) {
    for (auto& [n, t] : g.tensors) {
      for (double& v : t.values()) v *= factor;
    }
  }
}

double ParamStore::squared_norm() const {
  double s = 0.0;
  for (const auto& g : groups_) {
    for (const auto& [n, t] : g.tensors) {
      for (double v : t.values()) s += v * v;
    }
  }
  return s;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& g : groups_) {
    for (const auto& [name, t] : g.tensors) n += t.size();
  }
  return n;
}

bool ParamStore::all_finite() const {
  for (const auto& g : groups_) {
    for (const auto& [n, t] : g.tensors) {
      if (!t.all_finite()) return false;
    }
  }
  return true;
}

bool bit_equal(const ParamGroup& a, const ParamGroup& b) {
  if (a.name != b.name || a.tensors.size() != b.tensors.size()) return false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    if (a.tensors[i].first != b.tensors[i].first) return false;
    if (!bit_equal(a.tensors[i].second, b.tensors[i].second)) return false;
  }
  return true;
}

bool bit_equal(const ParamStore& a, const ParamStore& b) {
  if (a.groups().size() != b.groups().size()) return false;
  for (std::size_t i = 0; i < a.groups().size(); ++i) {
    if (!bit_equal(a.groups()[i], b.groups()[i])) return false;
  }
  return true;
}

}  // namespace nhg
