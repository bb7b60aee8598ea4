#include "merf/forest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace merf {

// ---------------------------------------------------------------------------
// Hyperparameters
// ---------------------------------------------------------------------------

int RfHyperparams::resolved_max_features(std::size_t p) const {
    if (p == 0) throw std::invalid_argument("resolved_max_features: p must be positive");
    int k = max_features ? *max_features
                         : static_cast<int>(std::ceil(max_features_fraction * static_cast<double>(p)));
    return std::clamp(k, 1, static_cast<int>(p));
}

void RfHyperparams::validate(std::size_t p) const {
    if (n_trees < 1) throw std::invalid_argument("hyperparams: n_trees must be >= 1");
    if (max_depth && *max_depth < 1) throw std::invalid_argument("hyperparams: max_depth must be >= 1");
    if (min_samples_split < 2) throw std::invalid_argument("hyperparams: min_samples_split must be >= 2");
    if (min_samples_leaf < 1) throw std::invalid_argument("hyperparams: min_samples_leaf must be >= 1");
    if (min_samples_leaf > min_samples_split)
        throw std::invalid_argument("hyperparams: min_samples_leaf must be <= min_samples_split");
    if (max_features && (*max_features < 1 || *max_features > static_cast<int>(p)))
        throw std::invalid_argument("hyperparams: max_features out of [1, p]");
    if (!(max_features_fraction > 0.0 && max_features_fraction <= 1.0))
        throw std::invalid_argument("hyperparams: max_features_fraction out of (0, 1]");
}

// ---------------------------------------------------------------------------
// Tree growing
//
// Each feature column is argsorted once per fit; node ranges share the sorted
// arrays and are partitioned consistently at every split, so a node scan is
// O(rows) per candidate feature with no re-sorting. Bootstrap resamples are
// carried as per-row integer weights, which is arithmetically identical to
// duplicating rows. The sort key is (value, y, row) so that fits are
// invariant under row permutations of the input.
// ---------------------------------------------------------------------------

namespace {

constexpr double kTinyVariance = 1e-12;

using ColumnOrder = std::vector<std::vector<std::int32_t>>;

ColumnOrder presort_columns(const Matrix& x, const std::vector<double>& y) {
    const std::size_t n = x.rows(), p = x.cols();
    ColumnOrder order(p);
    std::vector<std::int32_t> base(n);
    std::iota(base.begin(), base.end(), 0);
    for (std::size_t f = 0; f < p; ++f) {
        order[f] = base;
        std::sort(order[f].begin(), order[f].end(), [&](std::int32_t a, std::int32_t b) {
            const double xa = x(a, f), xb = x(b, f);
            if (xa != xb) return xa < xb;
            if (y[a] != y[b]) return y[a] < y[b];
            return a < b;
        });
    }
    return order;
}

struct NodeStats {
    double w = 0.0;    // weighted row count
    double wy = 0.0;   // weighted target sum
    double wy2 = 0.0;  // weighted target square sum
    double sse() const { return w > 0.0 ? wy2 - wy * wy / w : 0.0; }
};

class TreeGrower {
public:
    TreeGrower(const Matrix& x, const std::vector<double>& y, const ColumnOrder& sorted,
               const RfHyperparams& hp)
        : x_(x), y_(y), sorted_(sorted), hp_(hp), p_(x.cols()),
          mtry_(hp.resolved_max_features(x.cols())) {}

    DecisionTree grow(const std::vector<std::int32_t>& weights, RngStream& rng) {
        weights_ = &weights;
        idx_.assign(p_, {});
        for (std::size_t f = 0; f < p_; ++f) {
            idx_[f].reserve(sorted_[f].size());
            for (std::int32_t r : sorted_[f])
                if (weights[r] > 0) idx_[f].push_back(r);
        }
        tree_.nodes.clear();
        if (idx_.empty() || idx_[0].empty())
            throw std::invalid_argument("fit_tree: empty training set");
        NodeStats root = range_stats(0, idx_[0].size());
        build(0, idx_[0].size(), 0, root, rng);
        return std::move(tree_);
    }

private:
    NodeStats range_stats(std::size_t lo, std::size_t hi) const {
        NodeStats s;
        const auto& w = *weights_;
        for (std::size_t k = lo; k < hi; ++k) {
            const std::int32_t r = idx_[0][k];
            const double wr = w[r], yr = y_[r];
            s.w += wr;
            s.wy += wr * yr;
            s.wy2 += wr * yr * yr;
        }
        return s;
    }

    std::int32_t make_leaf(const NodeStats& st) {
        TreeNode leaf;
        leaf.value = st.wy / st.w;
        leaf.n_samples = static_cast<std::int32_t>(st.w + 0.5);
        tree_.nodes.push_back(leaf);
        return static_cast<std::int32_t>(tree_.nodes.size() - 1);
    }

    struct BestSplit {
        double gain = 0.0;
        std::int32_t feature = -1;
        double threshold = 0.0;
        NodeStats left, right;
    };

    void scan_feature(std::size_t f, std::size_t lo, std::size_t hi, const NodeStats& parent,
                      double min_gain, BestSplit& best) const {
        const auto& ord = idx_[f];
        const auto& w = *weights_;
        const double min_leaf = static_cast<double>(hp_.min_samples_leaf);
        NodeStats left;
        for (std::size_t k = lo; k + 1 < hi; ++k) {
            const std::int32_t r = ord[k];
            const double wr = w[r], yr = y_[r];
            left.w += wr;
            left.wy += wr * yr;
            left.wy2 += wr * yr * yr;
            const double xv = x_(r, f), xn = x_(ord[k + 1], f);
            if (!(xn > xv)) continue;  // only split between distinct values
            const double rw = parent.w - left.w;
            if (left.w < min_leaf || rw < min_leaf) continue;
            NodeStats right{rw, parent.wy - left.wy, parent.wy2 - left.wy2};
            const double gain = parent.sse() - left.sse() - right.sse();
            if (gain > min_gain && gain > best.gain) {
                best.gain = gain;
                best.feature = static_cast<std::int32_t>(f);
                best.threshold = 0.5 * (xv + xn);
                best.left = left;
                best.right = right;
            }
        }
    }

    std::int32_t build(std::size_t lo, std::size_t hi, int depth, const NodeStats& st,
                       RngStream& rng) {
        const double parent_sse = st.sse();
        const bool depth_capped = hp_.max_depth && depth >= *hp_.max_depth;
        if (hi - lo <= 1 || st.w < hp_.min_samples_split || depth_capped ||
            parent_sse <= kTinyVariance * std::max(1.0, st.wy2))
            return make_leaf(st);

        // sample candidate features without replacement; ascending order makes
        // equal-gain ties resolve to the lowest feature index
        feat_scratch_.resize(p_);
        std::iota(feat_scratch_.begin(), feat_scratch_.end(), 0);
        for (int i = 0; i < mtry_; ++i) {
            const std::size_t j = i + rng.below(p_ - i);
            std::swap(feat_scratch_[i], feat_scratch_[j]);
        }
        std::sort(feat_scratch_.begin(), feat_scratch_.begin() + mtry_);

        BestSplit best;
        const double min_gain = kTinyVariance * std::max(1.0, parent_sse);
        for (int c = 0; c < mtry_; ++c)
            scan_feature(feat_scratch_[c], lo, hi, st, min_gain, best);
        if (best.feature < 0) return make_leaf(st);

        // consistent stable partition of every feature's slice
        const std::size_t bf = static_cast<std::size_t>(best.feature);
        std::size_t mid = lo;
        for (std::size_t f = 0; f < p_; ++f) {
            part_scratch_.clear();
            std::size_t write = lo;
            for (std::size_t k = lo; k < hi; ++k) {
                const std::int32_t r = idx_[f][k];
                if (x_(r, bf) <= best.threshold)
                    idx_[f][write++] = r;
                else
                    part_scratch_.push_back(r);
            }
            std::copy(part_scratch_.begin(), part_scratch_.end(), idx_[f].begin() + write);
            mid = write;
        }

        const std::size_t node_id = tree_.nodes.size();
        TreeNode split;
        split.feature = best.feature;
        split.threshold = best.threshold;
        split.n_samples = static_cast<std::int32_t>(st.w + 0.5);
        tree_.nodes.push_back(split);
        const std::int32_t left_id = build(lo, mid, depth + 1, best.left, rng);
        const std::int32_t right_id = build(mid, hi, depth + 1, best.right, rng);
        tree_.nodes[node_id].left = left_id;
        tree_.nodes[node_id].right = right_id;
        return static_cast<std::int32_t>(node_id);
    }

    const Matrix& x_;
    const std::vector<double>& y_;
    const ColumnOrder& sorted_;
    const RfHyperparams& hp_;
    const std::size_t p_;
    const int mtry_;
    const std::vector<std::int32_t>* weights_ = nullptr;
    std::vector<std::vector<std::int32_t>> idx_;
    std::vector<std::int32_t> part_scratch_;
    std::vector<std::size_t> feat_scratch_;
    DecisionTree tree_;
};

void check_training_inputs(const Matrix& x, const std::vector<double>& y) {
    if (x.rows() == 0) throw std::invalid_argument("fit_tree: empty training set");
    if (x.rows() != y.size()) throw std::invalid_argument("fit_tree: x/y row mismatch");
    if (!x.all_finite()) throw std::invalid_argument("fit_tree: non-finite feature value");
    for (double v : y)
        if (!std::isfinite(v)) throw std::invalid_argument("fit_tree: non-finite target value");
}

}  // namespace

DecisionTree fit_tree(const Matrix& x, const std::vector<double>& y, const RfHyperparams& hp,
                      RngStream rng) {
    check_training_inputs(x, y);
    hp.validate(x.cols());
    const ColumnOrder sorted = presort_columns(x, y);
    TreeGrower grower(x, y, sorted, hp);
    std::vector<std::int32_t> weights(x.rows(), 1);
    return grower.grow(weights, rng);
}

double predict_tree(const DecisionTree& t, std::span<const double> row) {
    if (t.nodes.empty()) throw std::invalid_argument("predict_tree: empty tree");
    const TreeNode* node = &t.nodes[0];
    while (node->feature >= 0) {
        if (static_cast<std::size_t>(node->feature) >= row.size())
            throw std::invalid_argument("predict_tree: row has too few features");
        node = &t.nodes[row[node->feature] <= node->threshold ? node->left : node->right];
    }
    return node->value;
}

void parallel_for(std::size_t count, int n_threads, const std::function<void(std::size_t)>& fn) {
    int workers = n_threads;
    if (workers <= 0) {
        workers = static_cast<int>(std::thread::hardware_concurrency());
        if (workers <= 0) workers = 1;
    }
    workers = static_cast<int>(std::min<std::size_t>(workers, count));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

RandomForestModel fit_forest(const Matrix& x, const std::vector<double>& y,
                             const RfHyperparams& hp, const RngStream& rng, int n_threads) {
    check_training_inputs(x, y);
    hp.validate(x.cols());

    RandomForestModel model;
    model.hyperparams = hp;
    model.n_features = x.cols();
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    model.train_target_lo = *lo;
    model.train_target_hi = *hi;
    model.trees.resize(hp.n_trees);

    const ColumnOrder sorted = presort_columns(x, y);
    const std::size_t n = x.rows();

    std::vector<RngStream> streams;
    streams.reserve(hp.n_trees);
    for (int k = 0; k < hp.n_trees; ++k) streams.push_back(rng.fork("tree/" + std::to_string(k)));

    parallel_for(static_cast<std::size_t>(hp.n_trees), n_threads, [&](std::size_t k) {
        RngStream tree_rng = streams[k];
        std::vector<std::int32_t> weights(n, hp.bootstrap ? 0 : 1);
        if (hp.bootstrap)
            for (std::size_t d = 0; d < n; ++d) ++weights[tree_rng.below(n)];
        TreeGrower grower(x, y, sorted, hp);
        model.trees[k] = grower.grow(weights, tree_rng);
    });
    return model;
}

std::vector<double> predict_forest(const RandomForestModel& m, const Matrix& x) {
    if (m.trees.empty()) throw std::invalid_argument("predict_forest: model has no trees");
    if (x.rows() > 0 && x.cols() != m.n_features)
        throw std::runtime_error("predict_forest: input has " + std::to_string(x.cols()) +
                                 " features, model expects " + std::to_string(m.n_features));
    std::vector<double> out(x.rows(), 0.0);
    const double inv = 1.0 / static_cast<double>(m.trees.size());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double s = 0.0;
        const auto row = x.row_span(i);
        for (const auto& t : m.trees) s += predict_tree(t, row);
        out[i] = s * inv;
    }
    return out;
}

RfHyperparams tune_forest(const Matrix& x, const std::vector<double>& y,
                          const std::vector<RfHyperparams>& grid, int folds,
                          const RngStream& rng, int n_threads) {
    if (grid.empty()) throw std::invalid_argument("tune_forest: empty grid");
    if (folds < 2) throw std::invalid_argument("tune_forest: folds must be >= 2");
    const std::size_t n = x.rows();
    if (n < static_cast<std::size_t>(folds))
        throw std::invalid_argument("tune_forest: fewer rows than folds");
    for (const auto& hp : grid) hp.validate(x.cols());

    // shuffled round-robin fold assignment
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    RngStream fold_rng = rng.fork("folds");
    fold_rng.shuffle(perm.begin(), perm.end());
    std::vector<int> fold_of(n);
    for (std::size_t j = 0; j < n; ++j) fold_of[perm[j]] = static_cast<int>(j % folds);

    std::vector<double> total_mae(grid.size(), 0.0);
    for (int f = 0; f < folds; ++f) {
        std::vector<std::size_t> train_rows, val_rows;
        for (std::size_t i = 0; i < n; ++i)
            (fold_of[i] == f ? val_rows : train_rows).push_back(i);
        Matrix tx(train_rows.size(), x.cols());
        std::vector<double> ty(train_rows.size());
        for (std::size_t i = 0; i < train_rows.size(); ++i) {
            for (std::size_t j = 0; j < x.cols(); ++j) tx(i, j) = x(train_rows[i], j);
            ty[i] = y[train_rows[i]];
        }
        Matrix vx(val_rows.size(), x.cols());
        for (std::size_t i = 0; i < val_rows.size(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) vx(i, j) = x(val_rows[i], j);

        // one stream per fold, shared across grid entries: duplicated grid
        // entries then score identically and the earliest wins the tie
        const RngStream fit_rng = rng.fork("fold/" + std::to_string(f));
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const RandomForestModel m = fit_forest(tx, ty, grid[g], fit_rng, n_threads);
            const std::vector<double> pred = predict_forest(m, vx);
            double abs_sum = 0.0;
            for (std::size_t i = 0; i < val_rows.size(); ++i)
                abs_sum += std::fabs(pred[i] - y[val_rows[i]]);
            total_mae[g] += abs_sum / static_cast<double>(val_rows.size());
        }
    }

    std::size_t best = 0;
    for (std::size_t g = 1; g < grid.size(); ++g)
        if (total_mae[g] < total_mae[best]) best = g;
    return grid[best];
}

}  // namespace merf
