#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fr/errors.hpp"

namespace fr {

// Piecewise-constant activation-rate schedule over training epochs.
// Milestones are (fraction of total epochs, rate) pairs; the first must be
// at fraction 0 and fractions must be strictly increasing.
struct RateSchedule {
    struct Milestone {
        double fraction;
        double rate;
    };
    std::vector<Milestone> milestones;
    std::size_t total_epochs = 0;
};

// Parses "0:1.0,0.25:0.8,0.5:0.6,0.75:0.4". Throws ConfigError on malformed
// input or invariant violations.
RateSchedule parse_rate_schedule(std::string_view text, std::size_t total_epochs);

// Step-function lookup: the rate of the last milestone whose
// fraction * total_epochs <= epoch. No interpolation.
double rate_at(const RateSchedule& schedule, std::size_t epoch);

// Which convolutional layers participate in the backward pass this epoch.
struct FreezePlan {
    std::size_t epoch = 0;
    std::vector<std::size_t> active_layers;  // sorted, unique
    std::size_t l_a = 0;
    std::size_t l_i = 0;

    bool is_active(std::size_t layer) const;
};

// Draws l_a = round(rate * l_c) layers uniformly without replacement,
// deterministically from (seed, epoch). rate 1 activates all layers,
// rate 0 none. l_c == 0 yields an empty plan (dense-only nets).
FreezePlan plan_epoch(std::size_t l_c, double rate, std::uint64_t seed,
                      std::size_t epoch);

}  // namespace fr
