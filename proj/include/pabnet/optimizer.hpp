#pragma once

#include <cstdint>
#include <vector>

#include "pabnet/tensor.hpp"

namespace pabnet {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// First/second moment buffers, one pair per parameter array.
struct AdamState {
    std::int64_t t = 0;
    std::vector<Vec> m;
    std::vector<Vec> v;
};

// Bias-corrected Adam update applied in place. State buffers are allocated
// on first use and must keep matching shapes afterwards.
void adam_step(const std::vector<Vec*>& params, const std::vector<const Vec*>& grads,
               AdamState& state, const AdamConfig& config);

}  // namespace pabnet
