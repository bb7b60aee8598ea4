#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "merf/baselines.hpp"
#include "merf/dataset.hpp"
#include "merf/merf.hpp"
#include "merf/stats.hpp"

namespace merf {

enum class Scenario { RandomSplit, TimeSplit, UserSplit };

std::string scenario_name(Scenario s);
Scenario scenario_from_name(const std::string& name);

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

struct SplitPlan {
    Scenario scenario = Scenario::RandomSplit;
    std::vector<Fold> folds;
    std::uint64_t seed = 0;
};

// Single fold, |train| = floor(ratio * N) drawn uniformly without
// replacement over observations (unstratified).
SplitPlan make_random_split(const LongitudinalDataset& ds, double ratio, RngStream rng);

// Single fold: the k earliest visits of every cluster train, the rest test.
// Clusters with <= k observations contribute to training only.
SplitPlan make_time_split(const LongitudinalDataset& ds, int k = 3);

// One fold per cluster (sorted ids): that cluster tests, the rest train.
SplitPlan make_user_split(const LongitudinalDataset& ds);

double group_mae(std::span<const double> pred, std::span<const double> actual);

std::map<std::string, double> participant_mae(std::span<const double> pred,
                                              std::span<const double> actual,
                                              const std::vector<std::string>& cluster_ids);

// Per cluster: baseline MAE minus model MAE (positive = model better).
std::map<std::string, double> user_lift(const std::map<std::string, double>& pbl,
                                        const std::map<std::string, double>& model);

double worst_case_error(const std::map<std::string, double>& per_cluster_mae);

// ---------------------------------------------------------------------------
// Experiment runner
// ---------------------------------------------------------------------------

enum class ModelKind {
    GroupMean,
    GroupMedian,
    PatientMean,
    PatientMedian,
    PatientScreen,
    PlainForest,
    Merf,
};

std::string model_name(ModelKind kind);

std::vector<ModelKind> all_models();

// Scenario's designated personal baseline: PatientMean for the random
// split, PatientMedian for the time split, PatientScreen for the user split.
ModelKind default_pbl(Scenario s);

struct ParticipantErrors {
    std::map<std::string, double> per_cluster_mae;
    double group_mae = 0.0;
    std::map<std::string, int> n_test_per_cluster;
};

struct SeedResult {
    std::uint64_t seed = 0;
    std::map<std::string, double> group_mae_by_model;
    std::map<std::string, ParticipantErrors> participant_by_model;
    std::map<std::string, double> user_lift_by_cluster;
    double avg_user_lift = 0.0;
    double perm_p = 1.0;
    bool perm_exact = false;
    std::uint64_t perm_resamples = 0;
    int merf_rows_conditional = 0;
    int merf_rows_unconditional = 0;
    std::size_t baseline_fallback_rows = 0;
};

struct EvalReport {
    Scenario scenario = Scenario::RandomSplit;
    std::vector<std::string> models;
    std::string pbl_model;
    std::vector<SeedResult> seeds;
    double fisher_p = 1.0;
    bool perm_na_convention = false;  // user split: the one-tailed test is conventionally n/a
    double avg_pbl_err = 0.0;
    double avg_merf_err = 0.0;
    double avg_user_lift = 0.0;
    double wc_pbl_err = 0.0;
    double wc_merf_err = 0.0;
    std::map<std::string, double> avg_group_mae_by_model;
};

struct ExperimentOptions {
    double random_ratio = 0.7;
    int time_k = 3;
    std::optional<ModelKind> pbl_override;
    // grid for the plain forest, tuned once per experiment on the first
    // seed's first training fold; empty = skip tuning and use cfg.rf
    std::vector<RfHyperparams> rf_grid;
    int tune_folds = 3;
    int perm_max_exact = 20;
    int perm_mc_resamples = 10000;
    int n_threads = 0;
};

std::vector<RfHyperparams> default_rf_grid();

ExperimentOptions default_experiment_options();

// Fits every requested model on each fold's training rows, pools test
// predictions across folds, and reports group/participant errors, user
// lift against the scenario's personal baseline, per-seed permutation
// p-values, and the Fisher combination across seeds.
EvalReport run_experiment(const LongitudinalDataset& ds, Scenario scenario,
                          const std::vector<std::uint64_t>& seeds, const MerfConfig& cfg,
                          const std::vector<ModelKind>& models,
                          const ExperimentOptions& opts = default_experiment_options());

}  // namespace merf
