#pragma once

#include <functional>
#include <string>
#include <vector>

#include "acl/tensor.hpp"

namespace acl {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t worst_coord = -1;
};

// Compares the analytic gradients already stored in each parameter against
// central differences (f(x+eps) - f(x-eps)) / 2eps per coordinate. loss_fn
// must re-evaluate the loss from the parameters' current values and must not
// disturb their gradients. Relative error uses max(|analytic|, |numeric|) as
// denominator, 0 when both vanish. Throws ContractError on a non-finite loss.
GradCheckReport finite_difference_check(const std::function<double()>& loss_fn,
                                        const std::vector<Parameter*>& params, double epsilon = 1e-5);

}  // namespace acl
