#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "merf/numerics.hpp"

namespace merf {

struct RfHyperparams {
    int n_trees = 300;
    std::optional<int> max_depth{};     // unset = unlimited
    std::optional<int> max_features{};  // explicit count; unset applies the fraction rule
    double max_features_fraction = 1.0 / 3.0;
    int min_samples_split = 5;
    int min_samples_leaf = 2;
    bool bootstrap = true;

    // ceil(fraction * p) when no explicit count is set, clamped to [1, p].
    int resolved_max_features(std::size_t p) const;
    void validate(std::size_t p) const;
};

struct TreeNode {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;          // leaf mean
    std::int32_t n_samples = 0;  // training rows reaching the leaf (bootstrap counted)
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
};

struct RandomForestModel {
    std::vector<DecisionTree> trees;
    RfHyperparams hyperparams;
    std::size_t n_features = 0;
    double train_target_lo = 0.0;
    double train_target_hi = 0.0;
};

// Greedy variance-reduction CART. Split thresholds are midpoints between
// consecutive distinct sorted values; ties among equal-gain splits break to
// the lowest feature index, then the lowest threshold.
DecisionTree fit_tree(const Matrix& x, const std::vector<double>& y, const RfHyperparams& hp,
                      RngStream rng);

// Routes `feature <= threshold` to the left child.
double predict_tree(const DecisionTree& t, std::span<const double> row);

// One child stream per tree index, so results do not depend on fitting
// order or thread count.
RandomForestModel fit_forest(const Matrix& x, const std::vector<double>& y,
                             const RfHyperparams& hp, const RngStream& rng, int n_threads = 0);

std::vector<double> predict_forest(const RandomForestModel& m, const Matrix& x);

// k-fold CV over the grid; lowest mean validation MAE wins, ties break to
// the earliest grid position.
RfHyperparams tune_forest(const Matrix& x, const std::vector<double>& y,
                          const std::vector<RfHyperparams>& grid, int folds,
                          const RngStream& rng, int n_threads = 0);

// Runs fn(0..count-1) across up to n_threads workers (0 = hardware count).
// Items must be independent; used for per-tree and per-fold work.
void parallel_for(std::size_t count, int n_threads, const std::function<void(std::size_t)>& fn);

}  // namespace merf
