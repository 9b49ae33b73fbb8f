#pragma once

#include <algorithm>
#include <cmath>

#include "adlab/errors.hpp"

namespace adlab {

// Clamp applied to every probability entering a log.
inline constexpr double kProbEps = 1e-7;

struct LossGrad {
    double loss;
    double grad;  // d loss / d prediction
};

inline double clamp_prob(double p) {
    return std::clamp(p, kProbEps, 1.0 - kProbEps);
}

// -[y ln p + (1-y) ln(1-p)] with a hard 0/1 label.
inline LossGrad binary_ce_loss(double p, double y) {
    p = clamp_prob(p);
    double loss = -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    double grad = -y / p + (1.0 - y) / (1.0 - p);
    return {loss, grad};
}

// Same cross entropy against a soft target in [0,1]; minimized at p == target.
inline LossGrad soft_label_ce_loss(double p, double target) {
    p = clamp_prob(p);
    double loss = -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
    double grad = -target / p + (1.0 - target) / (1.0 - p);
    return {loss, grad};
}

// (label - pred)^2, gradient w.r.t. pred.
inline LossGrad mse_loss(double pred, double label) {
    if (!std::isfinite(pred) || !std::isfinite(label))
        throw DataError("mse_loss: non-finite input");
    double diff = label - pred;
    return {diff * diff, -2.0 * diff};
}

}  // namespace adlab
