#include "merf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace merf {

namespace {

std::string cluster_label(std::size_t index, std::size_t n_clusters) {
    const std::size_t width = std::max<std::size_t>(2, std::to_string(n_clusters - 1).size());
    std::string digits = std::to_string(index);
    return "c" + std::string(width - digits.size(), '0') + digits;
}

}  // namespace

void SynthConfig::validate() const {
    if (n_clusters == 0) throw std::invalid_argument("SynthConfig: n_clusters must be positive");
    if (obs_min == 0 || obs_min > obs_max)
        throw std::invalid_argument("SynthConfig: bad obs_per_cluster range");
    if (p < 3) throw std::invalid_argument("SynthConfig: p must be >= 3");
    if (sigma_b < 0.0) throw std::invalid_argument("SynthConfig: sigma_b must be >= 0");
    if (!(sigma_e > 0.0)) throw std::invalid_argument("SynthConfig: sigma_e must be > 0");
    if (missing_rate < 0.0 || missing_rate >= 1.0)
        throw std::invalid_argument("SynthConfig: missing_rate must be in [0, 1)");
    if (target_clip && target_clip->first > target_clip->second)
        throw std::invalid_argument("SynthConfig: target_clip lo > hi");
}

double fixed_fn_value(const SynthConfig& cfg, std::span<const double> x) {
    switch (cfg.fixed_fn) {
        case SynthConfig::FixedFn::Constant:
            return cfg.constant_value;
        case SynthConfig::FixedFn::Linear: {
            double s = 0.0;
            for (double v : x) s += v;
            return s;
        }
        case SynthConfig::FixedFn::HajjemNonlinear: {
            const double a0 = std::max(std::fabs(x[0]), 1e-6);
            return 2.0 * x[0] + x[1] * x[1] + (x[2] > 0.0 ? 4.0 : 0.0) +
                   2.0 * std::log(a0) * x[2];
        }
    }
    throw std::logic_error("fixed_fn_value: bad fixed_fn");
}

std::pair<LongitudinalDataset, SynthTruth> generate(const SynthConfig& cfg) {
    cfg.validate();
    LongitudinalDataset ds;
    ds.p = cfg.p;
    ds.target_range = cfg.target_clip;
    SynthTruth truth;
    truth.sigma_b2 = cfg.sigma_b * cfg.sigma_b;
    truth.sigma_e2 = cfg.sigma_e * cfg.sigma_e;

    const RngStream master(cfg.seed, "synth");
    std::vector<double> x_row(cfg.p);
    for (std::size_t c = 0; c < cfg.n_clusters; ++c) {
        const std::string id = cluster_label(c, cfg.n_clusters);
        RngStream cs = master.fork("cluster/" + id);
        const std::size_t n_i = cfg.obs_min + cs.below(cfg.obs_max - cfg.obs_min + 1);
        const double b_i = cs.normal(0.0, cfg.sigma_b);
        truth.b_true[id] = b_i;
        for (std::size_t j = 0; j < n_i; ++j) {
            Observation o;
            o.cluster_id = id;
            o.visit_index = static_cast<int>(j);
            for (double& v : x_row) v = cs.normal();
            double y = fixed_fn_value(cfg, x_row) + b_i + cs.normal(0.0, cfg.sigma_e);
            if (cfg.target_clip) y = std::clamp(y, cfg.target_clip->first, cfg.target_clip->second);
            o.target = y;
            o.features.reserve(cfg.p);
            for (double v : x_row) {
                if (cfg.missing_rate > 0.0 && cs.bernoulli(cfg.missing_rate))
                    o.features.emplace_back(std::nullopt);
                else
                    o.features.emplace_back(v);
            }
            ds.observations.push_back(std::move(o));
        }
    }
    return {std::move(ds), std::move(truth)};
}

std::vector<ClusterMeta> generate_screen_scores(const LongitudinalDataset& ds,
                                                const SynthTruth& truth, const SynthConfig& cfg,
                                                const RngStream& rng) {
    std::vector<ClusterMeta> out;
    std::vector<double> x_row(cfg.p);
    for (const auto& [id, rows] : group_by_cluster(ds)) {
        (void)rows;
        const auto it = truth.b_true.find(id);
        if (it == truth.b_true.end())
            throw std::invalid_argument("generate_screen_scores: cluster '" + id +
                                        "' missing from truth");
        RngStream cs = rng.fork("screen/" + id);
        for (double& v : x_row) v = cs.normal();
        ClusterMeta meta;
        meta.cluster_id = id;
        meta.screen_score = fixed_fn_value(cfg, x_row) + it->second + cs.normal(0.0, cfg.sigma_e);
        out.push_back(std::move(meta));
    }
    return out;
}

}  // namespace merf
