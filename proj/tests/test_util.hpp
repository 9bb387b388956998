/* Copyright 2026 The iterfeed Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef ITERFEED_TESTS_TEST_UTIL_HPP_
#define ITERFEED_TESTS_TEST_UTIL_HPP_

#include <functional>
#include <string>
#include <vector>

#include "iterfeed/nn.hpp"
#include "iterfeed/rng.hpp"

namespace iterfeed::testing {

// Central-difference gradient check against the analytic gradients that
// loss(true) accumulated. Samples entries from each named parameter and
// returns the worst relative error seen.
inline double fd_max_rel_err(ParameterStore<double>& store,
                             const std::vector<std::string>& names,
                             const std::function<double(bool)>& loss,
                             double step, int samples_per_param,
                             std::uint64_t seed = 7) {
  store.zero_grads();
  loss(true);
  Rng rng(seed);
  double worst = 0.0;
  for (const auto& name : names) {
    Parameter<double>* p = store.find(name);
    if (p == nullptr) throw DataError("fd check: no parameter " + name);
    std::int64_t n = p->size();
    int samples = samples_per_param < n ? samples_per_param
                                        : static_cast<int>(n);
    for (int s = 0; s < samples; ++s) {
      std::int64_t i = samples_per_param < n
                           ? static_cast<std::int64_t>(rng.below(n))
                           : s;
      double keep = p->value[i];
      p->value[i] = keep + step;
      double lp = loss(false);
      p->value[i] = keep - step;
      double lm = loss(false);
      p->value[i] = keep;
      double fd = (lp - lm) / (2.0 * step);
      double an = p->grad[i];
      double denom = std::max({std::fabs(fd), std::fabs(an), 1e-8});
      double rel = std::fabs(fd - an) / denom;
      if (std::fabs(fd) < 1e-10 && std::fabs(an) < 1e-10) rel = 0.0;
      if (rel > worst) worst = rel;
    }
  }
  return worst;
}

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(-scale, scale);
  return t;
}

template <class S>
Tensor<S> random_tensor_s(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<S> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<S>(rng.uniform(-scale, scale));
  return t;
}

}  // namespace iterfeed::testing

#endif  // ITERFEED_TESTS_TEST_UTIL_HPP_
