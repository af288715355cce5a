#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>

#include "taiyi/error.hpp"

namespace taiyi {

// Linear warmup from 0 to base_lr over [0, warmup_steps], then cosine decay
// to exactly 0 at total_steps.
inline double lr_schedule(size_t step, size_t warmup_steps, size_t total_steps, double base_lr) {
    if (warmup_steps > total_steps) throw Error("lr_schedule: warmup exceeds total steps");
    if (step > total_steps) {
        throw Error("lr_schedule: step " + std::to_string(step) + " past total " +
                    std::to_string(total_steps));
    }
    if (step < warmup_steps) {
        return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    }
    if (step == total_steps) return 0.0;
    const double progress = static_cast<double>(step - warmup_steps) /
                            static_cast<double>(total_steps - warmup_steps);
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace taiyi
