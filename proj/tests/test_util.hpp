#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "adlab/nn.hpp"
#include "adlab/world.hpp"

namespace adlab::test {

// Central finite differences over every entry of every parameter.
// Returns the worst relative error; `loss_fn` must be a pure function of
// the current parameter values.
struct FdReport {
    double worst_rel_err = 0.0;
    std::string worst_param;
    size_t checked = 0;
};

inline FdReport finite_difference_check(ParamSet& params,
                                        const std::function<double()>& loss_fn,
                                        const std::function<void()>& grad_fn,
                                        double h = 1e-5) {
    params.zero_grads();
    grad_fn();
    FdReport report;
    for (auto& [name, p] : params) {
        for (size_t i = 0; i < p.value.size(); ++i) {
            double* v = p.value.data() + i;
            const double saved = *v;
            *v = saved + h;
            double up = loss_fn();
            *v = saved - h;
            double down = loss_fn();
            *v = saved;
            double numeric = (up - down) / (2.0 * h);
            double analytic = p.grad.data()[i];
            double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
            double rel = std::abs(numeric - analytic) / scale;
            report.checked += 1;
            if (rel > report.worst_rel_err) {
                report.worst_rel_err = rel;
                report.worst_param = name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return report;
}

// true if any relu pre-activation sits within `margin` of its kink, which
// would poison a finite-difference comparison
inline bool tape_near_relu_kink(const MlpSpec& spec, const MlpTape& tape,
                                double margin = 1e-4) {
    for (size_t l = 0; l < spec.layers.size(); ++l) {
        if (spec.layers[l].act != Activation::kRelu) continue;
        for (double z : tape.pre[l])
            if (std::abs(z) < margin) return true;
    }
    return false;
}

// Small, fast world for unit tests.
inline WorldConfig tiny_world_config(uint64_t seed = 7) {
    WorldConfig c;
    c.num_users = 60;
    c.num_ads = 90;
    c.num_campaigns = 5;
    c.latent_dim = 4;
    c.num_quality_events = 3;
    c.base_quality_logits = {-2.2, -2.6, -2.6};
    c.projections_per_latent = 2;
    c.buckets_per_projection = 8;
    c.seed = seed;
    return c;
}

}  // namespace adlab::test
