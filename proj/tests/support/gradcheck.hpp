// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nhg/layers.hpp"
#include "nhg/param_store.hpp"
#include "nhg/tape.hpp"

#include <cmath>
#include <functional>
#include <set>
#include <string>

namespace nhg::test {

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

// Relative error with a small floor so entries whose true gradient is ~0
// are judged on absolute error.
inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Analytic gradients of `graph` against central differences of `value`
// for every entry of the `trainable` groups. `floor` bounds the relative
// error denominator from below.
inline GradCheck grad_check(ParamStore store, const std::function<Tape::Var(Binder&)>& graph,
                            const std::function<double(const ParamStore&)>& value,
                            const std::set<std::string>& trainable, double step = 1e-5,
                            double floor = 1e-6) {
  std::set<std::string> frozen;
  for (const auto& g : store.group_names()) {
    if (!trainable.count(g)) frozen.insert(g);
  }
  ParamStore grads = store.zeros_like(frozen);
  {
    Tape tape;
    Binder b(tape, store, &grads);
    tape.backward(graph(b));
  }
  GradCheck out;
  for (const auto& g : store.groups()) {
    if (!trainable.count(g.name)) continue;
    for (const auto& [name, tensor] : g.tensors) {
      for (std::size_t i = 0; i < tensor.size(); ++i) {
        double& x = store.at(g.name, name)[i];
        const double saved = x;
        x = saved + step;
        const double up = value(store);
        x = saved - step;
        const double down = value(store);
        x = saved;
        const double numeric = (up - down) / (2 * step);
        const double analytic = grads.at(g.name, name)[i];
        const double e = rel_error(analytic, numeric, floor);
        ++out.checked;
        if (e > out.max_rel_error) {
          out.max_rel_error = e;
          out.worst = g.name + "/" + name + "[" + std::to_string(i) + "] analytic " +
                      std::to_string(analytic) + " numeric " + std::to_string(numeric);
        }
      }
    }
  }
  return out;
}

}  // namespace nhg::test
