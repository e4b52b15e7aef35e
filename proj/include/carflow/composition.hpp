#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "carflow/core.hpp"

namespace carflow {

/// round(penetration * n) `tech` vehicles at uniformly random positions,
/// the rest Ordinary.
inline std::vector<VehicleClass> compose_queue(std::size_t n, double penetration, VehicleClass tech, Rng& rng) {
    if (n == 0) throw ConfigError("queue size must be positive");
    if (!(penetration >= 0.0 && penetration <= 1.0)) throw ConfigError("penetration must lie in [0, 1]");
    const auto count = static_cast<std::size_t>(std::lround(penetration * static_cast<double>(n)));
    std::vector<VehicleClass> out(n, VehicleClass::Ordinary);
    if (count == 0) return out;
    if (count == n) {
        std::fill(out.begin(), out.end(), tech);
        return out;
    }
    std::vector<std::size_t> slots(n);
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    std::shuffle(slots.begin(), slots.end(), rng);
    for (std::size_t i = 0; i < count; ++i) out[slots[i]] = tech;
    return out;
}

/// `pattern` repeated cyclically to length n.
inline std::vector<VehicleClass> repeat_pattern(const std::vector<VehicleClass>& pattern, std::size_t n) {
    if (pattern.empty()) throw ConfigError("queue pattern must not be empty");
    std::vector<VehicleClass> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = pattern[i % pattern.size()];
    return out;
}

} // namespace carflow
