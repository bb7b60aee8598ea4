#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "merf/numerics.hpp"

namespace merf {

// Missing feature cells keep an explicit marker (std::nullopt) until
// impute_missing replaces them; the -1 convention is a deliberate step,
// not a load-time default.
inline constexpr double kMissingSentinel = -1.0;

struct Observation {
    std::string cluster_id;
    int visit_index = 0;  // temporal order within the cluster
    std::vector<std::optional<double>> features;
    std::optional<double> target;
};

struct ClusterMeta {
    std::string cluster_id;
    std::optional<double> screen_score;
};

// Clustered repeated-measures table: every observation carries the same
// number of feature cells (p), and visit indices are unique per cluster.
struct LongitudinalDataset {
    std::vector<Observation> observations;
    std::size_t p = 0;
    std::vector<ClusterMeta> cluster_meta;
    std::optional<std::pair<double, double>> target_range;

    // Throws std::runtime_error on any structural invariant violation.
    void validate() const;

    std::optional<double> screen_score_for(const std::string& cluster_id) const;
};

// Observations CSV schema: header `cluster_id,visit,target,f0,...,f{p-1}`.
// Empty target cell = unlabelled row; empty or `NA` feature cell = missing.
// Metadata CSV schema: header `cluster_id,screen_score`.
LongitudinalDataset load_csv(const std::string& obs_path,
                             const std::optional<std::string>& meta_path = {});

std::string to_csv(const LongitudinalDataset& ds);
std::string meta_to_csv(const LongitudinalDataset& ds);
LongitudinalDataset parse_csv(const std::string& obs_text,
                              const std::optional<std::string>& meta_text = {});
void save_csv(const LongitudinalDataset& ds, const std::string& obs_path,
              const std::optional<std::string>& meta_path = {});

// Replaces every missing feature cell with the sentinel; targets untouched.
LongitudinalDataset impute_missing(LongitudinalDataset ds, double sentinel = kMissingSentinel);

// Keeps only observations with a target. Errors when nothing remains.
LongitudinalDataset filter_labeled(const LongitudinalDataset& ds);

// cluster_id -> observation indices, sorted ascending by visit_index.
// Errors on duplicate (cluster_id, visit_index).
std::map<std::string, std::vector<std::size_t>> group_by_cluster(const LongitudinalDataset& ds);

// New dataset containing the selected observations (metadata and feature
// count preserved).
LongitudinalDataset subset(const LongitudinalDataset& ds, const std::vector<std::size_t>& indices);

// Dense view for model fitting; requires labelled, imputed observations.
struct DesignData {
    Matrix x;  // N x p
    std::vector<double> y;
    std::vector<std::string> cluster_ids;
    std::vector<int> visits;
};
DesignData to_design(const LongitudinalDataset& ds);

// Feature matrix only (targets may be absent); requires imputed features.
Matrix feature_matrix(const LongitudinalDataset& ds);

}  // namespace merf
