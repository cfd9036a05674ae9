#pragma once

// Central finite-difference oracle for loss_and_grads.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "amrforge/model.hpp"
#include "amrforge/rng.hpp"

namespace amrforge::testing {

/// Larger, less uniform weights than the training init so that every
/// parameter family has gradients well above round-off.
inline Parameters spread_parameters(Parameters p, Rng& rng) {
  for (auto& [name, m] : p) {
    const bool gain = name.ends_with(".gain");
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      m.data()[k] = gain ? 1.0 + 0.2 * rng.normal() : 0.3 * rng.normal();
    }
  }
  return p;
}

struct GradReport {
  std::size_t families = 0;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  std::string worst_name;
};

/// Samples `per_family` coordinates from each parameter family among those
/// the batch touches (nonzero analytic gradient) and compares against
/// (L(x+h) - L(x-h)) / 2h.
inline GradReport check_gradients(Parameters p, const ModelSpec& spec, const std::vector<Example>& batch,
                                  std::size_t per_family, double h, Rng& rng,
                                  const AdapterState* adapters = nullptr) {
  const auto analytic = loss_and_grads(p, spec, batch, adapters);
  std::map<std::string, std::vector<std::pair<std::string, Eigen::Index>>> touched;
  for (const auto& [name, g] : analytic.grads) {
    for (Eigen::Index k = 0; k < g.size(); ++k) {
      if (g.data()[k] != 0.0) touched[parameter_family(name)].emplace_back(name, k);
    }
  }
  GradReport report;
  std::set<std::string> families;
  for (const auto& [name, _] : p) families.insert(parameter_family(name));
  for (const auto& family : families) {
    auto& pool = touched[family];
    if (pool.empty()) {
      report.max_rel_error = 1.0;
      report.worst_name = family + " (no gradient)";
      continue;
    }
    ++report.families;
    for (std::size_t s = 0; s < per_family; ++s) {
      const auto& [name, k] = pool[rng.below(pool.size())];
      double& x = p.at(name).data()[k];
      const double saved = x;
      x = saved + h;
      const double up = loss_and_grads(p, spec, batch, adapters).loss;
      x = saved - h;
      const double down = loss_and_grads(p, spec, batch, adapters).loss;
      x = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double exact = analytic.grads.at(name).data()[k];
      const double rel = std::abs(numeric - exact) / std::max(std::abs(numeric), std::abs(exact));
      ++report.coordinates;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_name = name;
      }
    }
  }
  return report;
}

}  // namespace amrforge::testing
