#include "fr/scheduler.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>

namespace fr {

RateSchedule parse_rate_schedule(std::string_view text, std::size_t total_epochs) {
    RateSchedule sched;
    sched.total_epochs = total_epochs;

    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = std::min(text.find(',', pos), text.size());
        const std::string_view entry = text.substr(pos, comma - pos);
        const std::size_t colon = entry.find(':');
        if (colon == std::string_view::npos)
            throw ConfigError("schedule entry '" + std::string(entry) +
                              "' is not fraction:rate");
        double fraction = 0.0, rate = 0.0;
        try {
            fraction = std::stod(std::string(entry.substr(0, colon)));
            rate = std::stod(std::string(entry.substr(colon + 1)));
        } catch (const std::exception&) {
            throw ConfigError("schedule entry '" + std::string(entry) +
                              "' has a non-numeric field");
        }
        sched.milestones.push_back({fraction, rate});
        if (comma == text.size()) break;
        pos = comma + 1;
    }

    if (sched.milestones.empty() || sched.milestones.front().fraction != 0.0)
        throw ConfigError("schedule must start with a milestone at fraction 0");
    for (std::size_t i = 0; i < sched.milestones.size(); ++i) {
        const auto& m = sched.milestones[i];
        if (m.fraction < 0.0 || m.fraction > 1.0)
            throw ConfigError("schedule fraction out of [0,1]");
        if (m.rate < 0.0 || m.rate > 1.0)
            throw ConfigError("schedule rate out of [0,1]");
        if (i > 0 && m.fraction <= sched.milestones[i - 1].fraction)
            throw ConfigError("schedule fractions must be strictly increasing");
    }
    return sched;
}

double rate_at(const RateSchedule& schedule, std::size_t epoch) {
    if (epoch >= schedule.total_epochs)
        throw DomainError("rate_at: epoch " + std::to_string(epoch) +
                          " beyond total " + std::to_string(schedule.total_epochs));
    double rate = schedule.milestones.front().rate;
    for (const auto& m : schedule.milestones) {
        if (m.fraction * static_cast<double>(schedule.total_epochs) <=
            static_cast<double>(epoch))
            rate = m.rate;
    }
    return rate;
}

bool FreezePlan::is_active(std::size_t layer) const {
    return std::binary_search(active_layers.begin(), active_layers.end(), layer);
}

FreezePlan plan_epoch(std::size_t l_c, double rate, std::uint64_t seed,
                      std::size_t epoch) {
    if (rate < 0.0 || rate > 1.0) throw DomainError("plan_epoch: rate out of [0,1]");

    FreezePlan plan;
    plan.epoch = epoch;
    if (l_c == 0) return plan;

    // round half up
    const std::size_t l_a = static_cast<std::size_t>(
        std::floor(rate * static_cast<double>(l_c) + 0.5));

    std::seed_seq seq{static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), 0x9e3779b9u};
    std::mt19937_64 rng(seq);

    std::vector<std::size_t> pool(l_c);
    for (std::size_t i = 0; i < l_c; ++i) pool[i] = i;
    // partial Fisher-Yates: the first l_a slots become the active set
    for (std::size_t i = 0; i < l_a; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, l_c - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    plan.active_layers.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(l_a));
    std::sort(plan.active_layers.begin(), plan.active_layers.end());
    plan.l_a = l_a;
    plan.l_i = l_c - l_a;
    return plan;
}

}  // namespace fr
