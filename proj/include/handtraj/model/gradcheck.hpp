#pragma once

#include <string>
#include <vector>

#include "handtraj/model/train.hpp"

namespace handtraj::model {

struct GroupCheck {
  std::string name;
  std::size_t checked = 0;  // coordinates compared
  double analytic_norm = 0;
  double rel_error = 0;     // |a - fd| / max(|a|, |fd|) over the checked coordinates
};

// Compares the analytic gradient of the mean batch loss computed by `model`
// against central differences evaluated in float64 at the same parameter
// values. Groups larger than `max_per_group` are sampled with `seed`.
template <typename Real>
std::vector<GroupCheck> gradient_check(const HandModel<Real>& model, std::span<const Example* const> batch,
                                       std::uint64_t noise_seed, std::size_t max_per_group, double step,
                                       std::uint64_t seed);

}  // namespace handtraj::model
