#pragma once

#include <cstdint>
#include <span>

#include "merf/numerics.hpp"

namespace merf {

struct PermResult {
    double observed_mean = 0.0;
    double p_value = 1.0;
    std::uint64_t resamples = 0;  // 2^n when exact, the Monte-Carlo count otherwise
    bool exact = false;
};

// One-sample one-tailed sign-flip test of mean > 0. Exhaustive over all 2^n
// sign patterns up to max_exact values; Monte Carlo with add-one smoothing
// beyond that, so a zero p-value can never reach Fisher's method. Ties count
// toward the tail (>=).
PermResult permutation_test_one_sample(std::span<const double> values, int max_exact,
                                       int mc_resamples, RngStream rng);

inline PermResult permutation_test_one_sample(std::span<const double> values, RngStream rng) {
    return permutation_test_one_sample(values, 20, 10000, std::move(rng));
}

// Fisher's method: survival of -2 sum(log p) under chi-square with 2k df.
// p-values in [0, 1e-15) are clamped to 1e-15 before the log.
double fisher_combine(std::span<const double> p_values);

}  // namespace merf
