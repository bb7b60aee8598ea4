#include "merf/stats.hpp"

#include <cmath>
#include <stdexcept>

namespace merf {

namespace {

// Sum with the sign pattern encoded in mask bit i; recomputed per pattern in
// a fixed order so exact ties with the observed sum compare reliably.
double signed_sum(std::span<const double> values, std::uint64_t mask) {
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i)
        s += (mask >> i) & 1u ? -values[i] : values[i];
    return s;
}

}  // namespace

PermResult permutation_test_one_sample(std::span<const double> values, int max_exact,
                                       int mc_resamples, RngStream rng) {
    const std::size_t n = values.size();
    if (n == 0) throw std::invalid_argument("permutation_test_one_sample: empty input");
    if (max_exact < 0 || max_exact > 62)
        throw std::invalid_argument("permutation_test_one_sample: max_exact out of range");
    if (mc_resamples < 1)
        throw std::invalid_argument("permutation_test_one_sample: mc_resamples must be >= 1");

    double observed_sum = 0.0;
    for (double v : values) observed_sum += v;

    PermResult res;
    res.observed_mean = observed_sum / static_cast<double>(n);

    if (n <= static_cast<std::size_t>(max_exact)) {
        const std::uint64_t total = 1ull << n;
        std::uint64_t tail = 0;
        for (std::uint64_t mask = 0; mask < total; ++mask)
            if (signed_sum(values, mask) >= observed_sum) ++tail;
        res.p_value = static_cast<double>(tail) / static_cast<double>(total);
        res.resamples = total;
        res.exact = true;
        return res;
    }

    std::uint64_t tail = 0;
    const std::size_t words = (n + 63) / 64;
    std::vector<std::uint64_t> bits(words);
    for (int r = 0; r < mc_resamples; ++r) {
        for (auto& w : bits) w = rng.next_u64();
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            s += (bits[i / 64] >> (i % 64)) & 1u ? -values[i] : values[i];
        if (s >= observed_sum) ++tail;
    }
    res.p_value = static_cast<double>(1 + tail) / static_cast<double>(1 + mc_resamples);
    res.resamples = static_cast<std::uint64_t>(mc_resamples);
    res.exact = false;
    return res;
}

double fisher_combine(std::span<const double> p_values) {
    if (p_values.empty()) throw std::invalid_argument("fisher_combine: empty input");
    constexpr double kClamp = 1e-15;
    double stat = 0.0;
    for (double p : p_values) {
        if (std::isnan(p) || p < 0.0 || p > 1.0)
            throw std::invalid_argument("fisher_combine: p-value outside [0, 1]");
        stat += -2.0 * std::log(std::max(p, kClamp));
    }
    return chi_square_survival(stat, 2 * static_cast<int>(p_values.size()));
}

}  // namespace merf
