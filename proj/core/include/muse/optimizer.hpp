#pragma once

#include <cstdint>

#include "muse/tensor.hpp"

namespace muse {

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// One Adam update with bias correction for (1-based) `step`. Gradients for
/// names absent from `grads` leave those parameters and moments untouched.
template <typename Real>
void adam_step(ParameterSet<Real>& params, const GradientMap<Real>& grads, double lr, std::int64_t step,
               const AdamOptions& options = {});

}  // namespace muse
