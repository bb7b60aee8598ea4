#pragma once

#include <map>
#include <string>
#include <vector>

#include "merf/dataset.hpp"

namespace merf {

enum class BaselineKind { GroupMean, GroupMedian, PatientMean, PatientMedian, PatientScreen };

std::string baseline_name(BaselineKind kind);
BaselineKind baseline_from_name(const std::string& name);

struct BaselineModel {
    BaselineKind kind = BaselineKind::GroupMean;
    double group_value = 0.0;
    std::map<std::string, double> per_cluster_value;  // Patient kinds: training clusters
    std::map<std::string, double> screen_value;       // PatientScreen: clusters with metadata
};

// Group kinds summarize all training targets; Patient kinds summarize per
// cluster with the group statistic kept as an unseen-cluster fallback;
// PatientScreen copies the screening scores from metadata.
BaselineModel fit_baseline(BaselineKind kind, const LongitudinalDataset& train);

// Constant per (kind, cluster). PatientScreen errors for clusters without a
// screening score; Patient kinds fall back to the group value for clusters
// absent from training (fallback_count reports how many rows did).
std::vector<double> predict_baseline(const BaselineModel& m,
                                     const std::vector<std::string>& cluster_ids,
                                     std::size_t* fallback_count = nullptr);

double mean_of(const std::vector<double>& v);
double median_of(std::vector<double> v);  // even count: mean of the middle two

}  // namespace merf
