#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "cofedmid/model.hpp"

namespace cofedmid::testing {

inline Sample RandomSample(const ModelSpec& spec, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Sample s;
  s.x.resize(spec.input_dim);
  for (double& v : s.x) v = normal(rng);
  s.label = static_cast<int>(
      std::uniform_int_distribution<std::size_t>(0, spec.num_classes - 1)(rng));
  return s;
}

inline ParamVector RandomParams(const ModelSpec& spec, std::mt19937_64& rng, double scale = 0.5) {
  std::normal_distribution<double> normal(0.0, scale);
  ParamVector p(spec.ParamCount());
  for (double& v : p) v = normal(rng);
  return p;
}

// Central differences of f at p.
inline ParamVector NumericGradient(const std::function<double(const ParamVector&)>& f,
                                   ParamVector p, double h = 1e-6) {
  ParamVector g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + h;
    const double up = f(p);
    p[i] = orig - h;
    const double down = f(p);
    p[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Largest per-coordinate relative error |a - b| / max(|a|, |b|, floor). The
// floor keeps coordinates that are zero up to rounding from dominating.
inline double MaxRelativeError(const ParamVector& a, const ParamVector& b, double floor = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace cofedmid::testing
