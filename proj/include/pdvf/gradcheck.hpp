#pragma once

#include "pdvf/tensor.hpp"

#include <functional>

namespace pdvf {

// Central finite-difference check of analytic parameter gradients, double
// precision. `loss` must populate params' gradient slots (e.g. via a tape
// backward) and return the scalar loss. Returns the worst relative error
// max(|g_fd - g_an|) / max(1, |g_fd|, |g_an|) over all parameter entries.
inline double gradcheck(ParamSetD& params,
                        const std::function<double(ParamSetD&)>& loss,
                        double h = 1e-6) {
    params.zero_grads();
    (void)loss(params);
    std::vector<MatD> analytic;
    for (const auto& t : params.tensors()) analytic.push_back(t.grad);
    params.zero_grads();

    double worst = 0.0;
    for (size_t ti = 0; ti < params.size(); ++ti) {
        auto& t = params.tensors()[ti];
        for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
            for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
                double orig = t.value(r, c);
                t.value(r, c) = orig + h;
                double lp = loss(params);
                params.zero_grads();
                t.value(r, c) = orig - h;
                double lm = loss(params);
                params.zero_grads();
                t.value(r, c) = orig;
                double fd = (lp - lm) / (2.0 * h);
                double an = analytic[ti](r, c);
                double denom = std::max({1.0, std::abs(fd), std::abs(an)});
                worst = std::max(worst, std::abs(fd - an) / denom);
            }
        }
    }
    return worst;
}

}  // namespace pdvf
