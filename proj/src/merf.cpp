#include "merf/merf.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace merf {

namespace {

// Above this cluster size the Woodbury identity (q x q work) replaces the
// direct n_i x n_i factorization.
constexpr std::size_t kDirectVInverseMax = 16;

constexpr double kSigma2Floor = 1e-12;
constexpr double kDiagFloor = 1e-12;

Matrix outer(const std::vector<double>& v) {
    Matrix m(v.size(), v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t j = 0; j < v.size(); ++j) m(i, j) = v[i] * v[j];
    return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Random-effect design
// ---------------------------------------------------------------------------

std::size_t RandomEffectSpec::q() const {
    if (kind == Kind::InterceptOnly) return 1;
    return columns.size() + (add_intercept ? 1 : 0);
}

void RandomEffectSpec::validate(std::size_t p) const {
    if (kind == Kind::InterceptOnly) return;
    if (q() == 0)
        throw std::invalid_argument("RandomEffectSpec: empty column set without intercept");
    std::set<std::size_t> seen;
    for (std::size_t c : columns) {
        if (c >= p)
            throw std::invalid_argument("RandomEffectSpec: feature index " + std::to_string(c) +
                                        " out of range (p = " + std::to_string(p) + ")");
        if (!seen.insert(c).second)
            throw std::invalid_argument("RandomEffectSpec: duplicate feature index");
    }
}

void MerfConfig::validate() const {
    if (max_iterations < 1) throw std::invalid_argument("MerfConfig: max_iterations must be >= 1");
    if (gll_rel_tol < 0.0) throw std::invalid_argument("MerfConfig: gll_rel_tol must be >= 0");
    if (!(sigma2_init > 0.0)) throw std::invalid_argument("MerfConfig: sigma2_init must be > 0");
    if (!(d_init_scale > 0.0)) throw std::invalid_argument("MerfConfig: d_init_scale must be > 0");
}

Matrix build_z(const Matrix& feature_rows, const RandomEffectSpec& spec) {
    const std::size_t n = feature_rows.rows();
    if (n == 0) throw std::invalid_argument("build_z: no rows");
    spec.validate(feature_rows.cols());
    const std::size_t q = spec.q();
    Matrix z(n, q);
    if (spec.kind == RandomEffectSpec::Kind::InterceptOnly) {
        for (std::size_t i = 0; i < n; ++i) z(i, 0) = 1.0;
        return z;
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t j = 0;
        if (spec.add_intercept) z(i, j++) = 1.0;
        for (std::size_t c : spec.columns) z(i, j++) = feature_rows(i, c);
    }
    return z;
}

// ---------------------------------------------------------------------------
// Covariance inverses
// ---------------------------------------------------------------------------

Matrix v_inverse_direct(const Matrix& z, const Matrix& d, double sigma2) {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("v_inverse: sigma2 must be > 0");
    Matrix v = z * d * z.transposed();
    for (std::size_t i = 0; i < v.rows(); ++i) v(i, i) += sigma2;
    return spd_inverse_jittered(v).inverse;
}

Matrix v_inverse_woodbury(const Matrix& z, const Matrix& d, double sigma2) {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("v_inverse: sigma2 must be > 0");
    const std::size_t n = z.rows();
    const double inv_s2 = 1.0 / sigma2;
    // (s2 I + Z D Z')^-1 = s2^-1 I - s2^-2 Z (D^-1 + s2^-1 Z'Z)^-1 Z'
    const Matrix zt = z.transposed();
    Matrix inner = spd_inverse_jittered(d).inverse;
    const Matrix ztz = zt * z;
    for (std::size_t i = 0; i < inner.rows(); ++i)
        for (std::size_t j = 0; j < inner.cols(); ++j) inner(i, j) += inv_s2 * ztz(i, j);
    const Matrix inner_inv = spd_inverse_jittered(inner).inverse;
    Matrix out = z * inner_inv * zt;
    out *= -inv_s2 * inv_s2;
    for (std::size_t i = 0; i < n; ++i) out(i, i) += inv_s2;
    return out;
}

Matrix v_inverse(const Matrix& z, const Matrix& d, double sigma2) {
    return z.rows() <= kDirectVInverseMax ? v_inverse_direct(z, d, sigma2)
                                          : v_inverse_woodbury(z, d, sigma2);
}

// ---------------------------------------------------------------------------
// Training data
// ---------------------------------------------------------------------------

MerfTrainingData make_training_data(const LongitudinalDataset& ds, const RandomEffectSpec& spec) {
    MerfTrainingData td;
    DesignData design = to_design(ds);
    td.x = std::move(design.x);
    td.y = std::move(design.y);
    for (const auto& [id, rows] : group_by_cluster(ds)) {
        ClusterBlock block;
        block.id = id;
        block.rows = rows;
        Matrix sub(rows.size(), td.x.cols());
        for (std::size_t k = 0; k < rows.size(); ++k)
            for (std::size_t j = 0; j < td.x.cols(); ++j) sub(k, j) = td.x(rows[k], j);
        block.z = build_z(sub, spec);
        td.blocks.push_back(std::move(block));
    }
    return td;
}

// ---------------------------------------------------------------------------
// EM steps
// ---------------------------------------------------------------------------

void e_step(MerfModel& state, const MerfTrainingData& td, const RfHyperparams& hp,
            const RngStream& rng, int n_threads) {
    // (i) remove the previous random effects from the targets
    std::vector<double> y_star = td.y;
    for (const auto& block : td.blocks) {
        const auto it = state.b_hat.find(block.id);
        if (it == state.b_hat.end()) continue;
        const std::vector<double> zb = matvec(block.z, it->second);
        for (std::size_t k = 0; k < block.rows.size(); ++k) y_star[block.rows[k]] -= zb[k];
    }

    // (ii) refit the fixed-effect forest on the adjusted targets
    state.forest = fit_forest(td.x, y_star, hp, rng, n_threads);

    // (iii) b_i = D Z' V^-1 (y_i - f(X_i)) with previous-iteration D, sigma2
    const std::vector<double> fitted = predict_forest(state.forest, td.x);
    for (const auto& block : td.blocks) {
        const std::size_t n_i = block.rows.size();
        std::vector<double> resid(n_i);
        for (std::size_t k = 0; k < n_i; ++k)
            resid[k] = td.y[block.rows[k]] - fitted[block.rows[k]];
        const Matrix vinv = v_inverse(block.z, state.d_hat, state.sigma2_hat);
        const std::vector<double> vr = matvec(vinv, resid);
        const std::vector<double> ztvr = matvec(block.z.transposed(), vr);
        state.b_hat[block.id] = matvec(state.d_hat, ztvr);
    }
}

void m_step(MerfModel& state, const MerfTrainingData& td) {
    const Matrix d_prev = state.d_hat;
    const double s2_prev = state.sigma2_hat;
    const std::size_t q = d_prev.rows();
    const std::size_t n_total = td.total_rows();
    const std::size_t m = td.blocks.size();
    if (m == 0) throw std::invalid_argument("m_step: no clusters");

    const std::vector<double> fitted = predict_forest(state.forest, td.x);
    double sigma_acc = 0.0;
    Matrix d_acc(q, q);
    for (const auto& block : td.blocks) {
        const std::size_t n_i = block.rows.size();
        const std::vector<double>& b = state.b_hat.at(block.id);
        const std::vector<double> zb = matvec(block.z, b);
        double sse = 0.0;
        for (std::size_t k = 0; k < n_i; ++k) {
            const double eps = td.y[block.rows[k]] - fitted[block.rows[k]] - zb[k];
            sse += eps * eps;
        }
        const Matrix vinv = v_inverse(block.z, d_prev, s2_prev);
        sigma_acc += sse + s2_prev * (static_cast<double>(n_i) - s2_prev * vinv.trace());
        const Matrix zt_vinv_z = block.z.transposed() * vinv * block.z;
        d_acc += outer(b) + d_prev - d_prev * zt_vinv_z * d_prev;
    }

    double sigma2 = sigma_acc / static_cast<double>(n_total);
    sigma2 = std::max(sigma2, kSigma2Floor);

    Matrix d_new = d_acc;
    d_new *= 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < q; ++i)
        for (std::size_t j = 0; j < i; ++j) {
            const double s = 0.5 * (d_new(i, j) + d_new(j, i));
            d_new(i, j) = d_new(j, i) = s;
        }
    for (std::size_t i = 0; i < q; ++i)
        if (d_new(i, i) < kDiagFloor) d_new(i, i) = kDiagFloor;

    if (!std::isfinite(sigma2) || !d_new.all_finite())
        throw std::runtime_error("m_step: non-finite variance-component update");
    state.sigma2_hat = sigma2;
    state.d_hat = std::move(d_new);
}

double compute_gll(const MerfModel& state, const MerfTrainingData& td) {
    const JitteredSpd d_inv = spd_inverse_jittered(state.d_hat);
    const double s2 = state.sigma2_hat;
    const std::vector<double> fitted = predict_forest(state.forest, td.x);
    double gll = 0.0;
    for (const auto& block : td.blocks) {
        const std::vector<double>& b = state.b_hat.at(block.id);
        const std::vector<double> zb = matvec(block.z, b);
        double sse = 0.0;
        for (std::size_t k = 0; k < block.rows.size(); ++k) {
            const double eps = td.y[block.rows[k]] - fitted[block.rows[k]] - zb[k];
            sse += eps * eps;
        }
        const std::vector<double> db = matvec(d_inv.inverse, b);
        gll += sse / s2 + dot(b, db) + d_inv.logdet +
               static_cast<double>(block.rows.size()) * std::log(s2);
    }
    return gll;
}

MerfModel fit_merf(const LongitudinalDataset& ds, const MerfConfig& cfg, const RngStream& rng,
                   int n_threads) {
    cfg.validate();
    const MerfTrainingData td = make_training_data(ds, cfg.re_spec);
    const std::size_t q = cfg.re_spec.q();

    MerfModel state;
    state.re_spec = cfg.re_spec;
    state.d_hat = Matrix::identity(q);
    state.d_hat *= cfg.d_init_scale;
    state.sigma2_hat = cfg.sigma2_init;
    for (const auto& block : td.blocks) state.b_hat[block.id] = std::vector<double>(q, 0.0);

    for (int r = 1; r <= cfg.max_iterations; ++r) {
        e_step(state, td, cfg.rf, rng.fork("em/iter/" + std::to_string(r)), n_threads);
        try {
            m_step(state, td);
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("EM iteration " + std::to_string(r) + ": " + e.what());
        }
        const double gll = compute_gll(state, td);
        if (!std::isfinite(gll))
            throw std::runtime_error("EM iteration " + std::to_string(r) + ": non-finite GLL");
        state.gll_history.push_back(gll);
        if (cfg.early_stop && r >= 2) {
            const double prev = state.gll_history[r - 2];
            const double rel = std::fabs(gll - prev) / (std::fabs(prev) + 1e-12);
            if (rel < cfg.gll_rel_tol) break;
        }
    }
    return state;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

std::vector<double> predict_unconditional(const MerfModel& m, const Matrix& x) {
    return predict_forest(m.forest, x);
}

std::vector<double> predict_conditional(const MerfModel& m, const Matrix& x,
                                        const std::string& cluster_id) {
    const auto it = m.b_hat.find(cluster_id);
    if (it == m.b_hat.end()) throw std::runtime_error("unknown cluster; use unconditional");
    std::vector<double> out = predict_forest(m.forest, x);
    if (x.rows() == 0) return out;
    const Matrix z = build_z(x, m.re_spec);
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] += dot(z.row_span(i), it->second);
    return out;
}

std::vector<double> predict(const MerfModel& m, const Matrix& x,
                            const std::optional<std::string>& cluster_id) {
    if (cluster_id && m.b_hat.count(*cluster_id)) return predict_conditional(m, x, *cluster_id);
    return predict_unconditional(m, x);
}

RowPredictions predict_rows(const MerfModel& m, const Matrix& x,
                            const std::vector<std::string>& cluster_ids) {
    if (x.rows() != cluster_ids.size())
        throw std::invalid_argument("predict_rows: cluster_ids length mismatch");
    RowPredictions out;
    out.values = predict_forest(m.forest, x);
    out.modes.assign(x.rows(), PredictMode::Unconditional);
    if (x.rows() == 0) return out;
    const Matrix z = build_z(x, m.re_spec);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto it = m.b_hat.find(cluster_ids[i]);
        if (it == m.b_hat.end()) continue;
        out.values[i] += dot(z.row_span(i), it->second);
        out.modes[i] = PredictMode::Conditional;
    }
    return out;
}

}  // namespace merf
