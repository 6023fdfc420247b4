#include "acl/gradcheck.hpp"

#include <cmath>

#include "acl/errors.hpp"

namespace acl {

GradCheckReport finite_difference_check(const std::function<double()>& loss_fn,
                                        const std::vector<Parameter*>& params, double epsilon) {
  GradCheckReport report;
  for (Parameter* p : params) {
    for (size_t j = 0; j < p->value.data.size(); ++j) {
      const double saved = p->value.data[j];
      p->value.data[j] = saved + epsilon;
      const double plus = loss_fn();
      p->value.data[j] = saved - epsilon;
      const double minus = loss_fn();
      p->value.data[j] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus))
        throw ContractError("finite_difference_check: non-finite loss while perturbing '" + p->name + "'");
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double analytic = p->value.grad[j];
      const double mag = std::max(std::abs(analytic), std::abs(numeric));
      const double err = mag < 1e-10 ? 0.0 : std::abs(analytic - numeric) / mag;
      if (err > report.max_rel_err) {
        report.max_rel_err = err;
        report.worst_param = p->name;
        report.worst_coord = static_cast<int64_t>(j);
      }
    }
  }
  return report;
}

}  // namespace acl
