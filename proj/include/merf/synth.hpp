#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "merf/dataset.hpp"
#include "merf/numerics.hpp"

namespace merf {

// Generator for clustered longitudinal data: y = f(x) + b_i + eps with a
// per-cluster random intercept b_i ~ N(0, sigma_b^2) and noise
// eps ~ N(0, sigma_e^2). Stands in for clinical data in recovery and
// protocol tests.
struct SynthConfig {
    std::size_t n_clusters = 50;
    std::size_t obs_min = 20;
    std::size_t obs_max = 20;  // draws uniformly in [obs_min, obs_max] per cluster
    std::size_t p = 5;         // >= 3
    double sigma_b = 2.0;
    double sigma_e = 1.0;
    enum class FixedFn { Linear, HajjemNonlinear, Constant };
    FixedFn fixed_fn = FixedFn::HajjemNonlinear;
    double constant_value = 0.0;
    double missing_rate = 0.0;  // applied to feature cells only, never targets
    std::optional<std::pair<double, double>> target_clip;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SynthTruth {
    std::map<std::string, double> b_true;
    double sigma_b2 = 0.0;
    double sigma_e2 = 0.0;
};

// f(x) for a feature row: Linear sums all features; HajjemNonlinear is
// 2*x0 + x1^2 + 4*[x2 > 0] + 2*log|x0|*x2 with |x0| clamped to >= 1e-6.
double fixed_fn_value(const SynthConfig& cfg, std::span<const double> x);

// Byte-identical output per config: every cluster draws from its own
// label-derived stream (count, intercept, then per visit: features, noise,
// missingness), so generation order never matters.
std::pair<LongitudinalDataset, SynthTruth> generate(const SynthConfig& cfg);

// Plausible "visit zero" per cluster: f at a fresh feature draw, plus the
// cluster's intercept and fresh noise. Enables the screening baseline on
// generated data.
std::vector<ClusterMeta> generate_screen_scores(const LongitudinalDataset& ds,
                                                const SynthTruth& truth, const SynthConfig& cfg,
                                                const RngStream& rng);

}  // namespace merf
