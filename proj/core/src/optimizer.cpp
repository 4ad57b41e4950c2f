#include "muse/optimizer.hpp"

#include <cmath>

namespace muse {

template <typename Real>
void adam_step(ParameterSet<Real>& params, const GradientMap<Real>& grads, double lr, std::int64_t step,
               const AdamOptions& options)
{
    if (step < 1) throw InvalidArgument("adam_step: step must be >= 1");
    for (const auto& [name, grad] : grads) {
        if (!params.contains(name)) throw InvalidArgument("adam_step: gradient for unknown parameter '" + name + "'");
        if (grad.shape() != params.at(name).shape()) {
            throw InvalidArgument("adam_step: gradient shape " + to_string(grad.shape()) + " does not match parameter '"
                                  + name + "' " + to_string(params.at(name).shape()));
        }
    }
    const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(step));
    for (const auto& [name, grad] : grads) {
        Tensor<Real>& w = params.at(name);
        Tensor<Real>& m = params.first_moment(name);
        Tensor<Real>& v = params.second_moment(name);
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double g = grad[i];
            const double mi = options.beta1 * m[i] + (1.0 - options.beta1) * g;
            const double vi = options.beta2 * v[i] + (1.0 - options.beta2) * g * g;
            m[i] = static_cast<Real>(mi);
            v[i] = static_cast<Real>(vi);
            w[i] = static_cast<Real>(w[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + options.epsilon));
        }
    }
}

template void adam_step<float>(ParameterSet<float>&, const GradientMap<float>&, double, std::int64_t, const AdamOptions&);
template void adam_step<double>(ParameterSet<double>&, const GradientMap<double>&, double, std::int64_t,
                                const AdamOptions&);

}  // namespace muse
