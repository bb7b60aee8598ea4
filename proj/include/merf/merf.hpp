#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "merf/dataset.hpp"
#include "merf/forest.hpp"
#include "merf/numerics.hpp"

namespace merf {

// Random-effect design: a per-cluster ones column (random intercept) or a
// subset of feature columns, optionally with an intercept column prepended.
struct RandomEffectSpec {
    enum class Kind { InterceptOnly, Columns };
    Kind kind = Kind::InterceptOnly;
    std::vector<std::size_t> columns;  // Columns only
    bool add_intercept = false;        // Columns only
    std::size_t q() const;
    void validate(std::size_t p) const;
};

struct MerfConfig {
    int max_iterations = 20;
    double gll_rel_tol = 1e-5;
    bool early_stop = true;
    RfHyperparams rf{};
    RandomEffectSpec re_spec{};
    double sigma2_init = 1.0;
    double d_init_scale = 1.0;
    void validate() const;
};

struct MerfModel {
    RandomForestModel forest;                          // fixed effect f
    std::map<std::string, std::vector<double>> b_hat;  // per-cluster random effects
    Matrix d_hat;                                      // q x q between-cluster covariance
    double sigma2_hat = 1.0;                           // within-cluster noise variance
    std::vector<double> gll_history;
    RandomEffectSpec re_spec;
};

// n_i x q random-effect design for one cluster's feature rows.
Matrix build_z(const Matrix& feature_rows, const RandomEffectSpec& spec);

// (Z D Z^T + sigma2 I)^-1. The direct path factorizes the n_i x n_i matrix;
// the Woodbury path works in q x q space and wins when n_i is large.
Matrix v_inverse_direct(const Matrix& z, const Matrix& d, double sigma2);
Matrix v_inverse_woodbury(const Matrix& z, const Matrix& d, double sigma2);
Matrix v_inverse(const Matrix& z, const Matrix& d, double sigma2);

struct ClusterBlock {
    std::string id;
    std::vector<std::size_t> rows;  // indices into the pooled design
    Matrix z;                       // n_i x q
};

struct MerfTrainingData {
    Matrix x;
    std::vector<double> y;
    std::vector<ClusterBlock> blocks;  // sorted by cluster id
    std::size_t total_rows() const { return y.size(); }
};

MerfTrainingData make_training_data(const LongitudinalDataset& ds, const RandomEffectSpec& spec);

// One EM expectation step: subtract the previous random effects from the
// targets, refit the forest on the adjusted targets, then refresh every
// b_hat from the new forest residuals using the previous-iteration
// variance components.
void e_step(MerfModel& state, const MerfTrainingData& td, const RfHyperparams& hp,
            const RngStream& rng, int n_threads = 0);

// One EM maximization step: updates sigma2_hat and d_hat from the current
// residuals and b_hat, using the previous-iteration variance components in
// the correction terms. d_hat is symmetrized and its diagonal floored;
// sigma2_hat is floored at 1e-12.
void m_step(MerfModel& state, const MerfTrainingData& td);

// Penalized-least-squares convergence criterion:
// sum_i eps_i' R_i^-1 eps_i + b_i' D^-1 b_i + log|D| + log|R_i|.
double compute_gll(const MerfModel& state, const MerfTrainingData& td);

MerfModel fit_merf(const LongitudinalDataset& ds, const MerfConfig& cfg, const RngStream& rng,
                   int n_threads = 0);

std::vector<double> predict_unconditional(const MerfModel& m, const Matrix& x);
std::vector<double> predict_conditional(const MerfModel& m, const Matrix& x,
                                        const std::string& cluster_id);

// Conditional for clusters seen in training, unconditional otherwise.
std::vector<double> predict(const MerfModel& m, const Matrix& x,
                            const std::optional<std::string>& cluster_id);

enum class PredictMode { Conditional, Unconditional };

struct RowPredictions {
    std::vector<double> values;
    std::vector<PredictMode> modes;
};

// Per-row dispatch for mixed-cluster inputs.
RowPredictions predict_rows(const MerfModel& m, const Matrix& x,
                            const std::vector<std::string>& cluster_ids);

}  // namespace merf
