#include "merf/baselines.hpp"

#include <algorithm>
#include <stdexcept>

namespace merf {

std::string baseline_name(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::GroupMean: return "group_mean";
        case BaselineKind::GroupMedian: return "group_median";
        case BaselineKind::PatientMean: return "patient_mean";
        case BaselineKind::PatientMedian: return "patient_median";
        case BaselineKind::PatientScreen: return "patient_screen";
    }
    throw std::logic_error("baseline_name: bad kind");
}

BaselineKind baseline_from_name(const std::string& name) {
    if (name == "group_mean") return BaselineKind::GroupMean;
    if (name == "group_median") return BaselineKind::GroupMedian;
    if (name == "patient_mean") return BaselineKind::PatientMean;
    if (name == "patient_median") return BaselineKind::PatientMedian;
    if (name == "patient_screen") return BaselineKind::PatientScreen;
    throw std::invalid_argument("unknown baseline '" + name + "'");
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("mean_of: empty input");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median_of: empty input");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

BaselineModel fit_baseline(BaselineKind kind, const LongitudinalDataset& train) {
    std::vector<double> all_targets;
    std::map<std::string, std::vector<double>> by_cluster;
    for (const auto& o : train.observations) {
        if (!o.target) continue;
        all_targets.push_back(*o.target);
        by_cluster[o.cluster_id].push_back(*o.target);
    }
    if (all_targets.empty()) throw std::runtime_error("fit_baseline: no labelled observations");

    BaselineModel m;
    m.kind = kind;
    const bool use_median = (kind == BaselineKind::GroupMedian || kind == BaselineKind::PatientMedian);
    m.group_value = use_median ? median_of(all_targets) : mean_of(all_targets);

    if (kind == BaselineKind::PatientMean || kind == BaselineKind::PatientMedian) {
        for (const auto& [id, targets] : by_cluster)
            m.per_cluster_value[id] = use_median ? median_of(targets) : mean_of(targets);
    }
    if (kind == BaselineKind::PatientScreen) {
        for (const auto& meta : train.cluster_meta)
            if (meta.screen_score) m.screen_value[meta.cluster_id] = *meta.screen_score;
    }
    return m;
}

std::vector<double> predict_baseline(const BaselineModel& m,
                                     const std::vector<std::string>& cluster_ids,
                                     std::size_t* fallback_count) {
    std::vector<double> out;
    out.reserve(cluster_ids.size());
    std::size_t fallbacks = 0;
    for (const auto& id : cluster_ids) {
        switch (m.kind) {
            case BaselineKind::GroupMean:
            case BaselineKind::GroupMedian:
                out.push_back(m.group_value);
                break;
            case BaselineKind::PatientMean:
            case BaselineKind::PatientMedian: {
                const auto it = m.per_cluster_value.find(id);
                if (it != m.per_cluster_value.end()) {
                    out.push_back(it->second);
                } else {
                    out.push_back(m.group_value);
                    ++fallbacks;
                }
                break;
            }
            case BaselineKind::PatientScreen: {
                const auto it = m.screen_value.find(id);
                if (it == m.screen_value.end())
                    throw std::runtime_error("patient_screen: no screening score for cluster '" +
                                             id + "'");
                out.push_back(it->second);
                break;
            }
        }
    }
    if (fallback_count) *fallback_count = fallbacks;
    return out;
}

}  // namespace merf
