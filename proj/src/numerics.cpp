#include "merf/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace merf {

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) throw std::invalid_argument("Matrix::from_rows: ragged rows");
        std::size_t j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

double Matrix::trace() const {
    const std::size_t n = std::min(rows_, cols_);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (*this)(i, i);
    return s;
}

bool Matrix::all_finite() const {
    return std::all_of(v_.begin(), v_.end(), [](double x) { return std::isfinite(x); });
}

double Matrix::symmetry_gap() const {
    double g = 0.0;
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < i; ++j)
            g = std::max(g, std::fabs((*this)(i, j) - (*this)(j, i)));
    return g;
}

Matrix& Matrix::operator+=(const Matrix& o) {
    if (rows_ != o.rows_ || cols_ != o.cols_)
        throw std::invalid_argument("Matrix +=: shape mismatch");
    for (std::size_t k = 0; k < v_.size(); ++k) v_[k] += o.v_[k];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
    if (rows_ != o.rows_ || cols_ != o.cols_)
        throw std::invalid_argument("Matrix -=: shape mismatch");
    for (std::size_t k = 0; k < v_.size(); ++k) v_[k] -= o.v_[k];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& x : v_) x *= s;
    return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("Matrix *: shape mismatch");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    }
    return c;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) throw std::invalid_argument("matvec: shape mismatch");
    std::vector<double> y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row_span(i), x);
    return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("max_abs_diff: shape mismatch");
    double g = 0.0;
    for (std::size_t k = 0; k < a.data().size(); ++k)
        g = std::max(g, std::fabs(a.data()[k] - b.data()[k]));
    return g;
}

// ---------------------------------------------------------------------------
// Cholesky-based SPD kernels
// ---------------------------------------------------------------------------

namespace {

void check_spd_input(const Matrix& a) {
    if (a.rows() != a.cols() || a.rows() == 0)
        throw std::invalid_argument("cholesky: matrix must be square and nonempty");
    double scale = 0.0;
    for (double v : a.data()) scale = std::max(scale, std::fabs(v));
    if (a.symmetry_gap() > 1e-9 * std::max(1.0, scale))
        throw std::invalid_argument("cholesky: matrix is not symmetric within 1e-9");
}

}  // namespace

Matrix cholesky(const Matrix& a) {
    check_spd_input(a);
    const std::size_t n = a.rows();
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > 0.0))
            throw std::runtime_error("cholesky: matrix not positive definite (pivot " +
                                     std::to_string(j) + " = " + std::to_string(d) + ")");
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }
    return l;
}

namespace {

// Solves L L^T x = e_col for one unit vector, in place over scratch buffers.
void solve_llt_column(const Matrix& l, std::size_t col, std::vector<double>& w) {
    const std::size_t n = l.rows();
    // forward: L w = e_col
    for (std::size_t i = 0; i < n; ++i) {
        double s = (i == col) ? 1.0 : 0.0;
        for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * w[k];
        w[i] = s / l(i, i);
    }
    // backward: L^T x = w
    for (std::size_t ii = n; ii-- > 0;) {
        double s = w[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * w[k];
        w[ii] = s / l(ii, ii);
    }
}

Matrix inverse_from_cholesky(const Matrix& l) {
    const std::size_t n = l.rows();
    Matrix inv(n, n);
    std::vector<double> w(n);
    for (std::size_t j = 0; j < n; ++j) {
        solve_llt_column(l, j, w);
        for (std::size_t i = 0; i < n; ++i) inv(i, j) = w[i];
    }
    // the inverse of an SPD matrix is symmetric; remove roundoff skew
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) {
            const double m = 0.5 * (inv(i, j) + inv(j, i));
            inv(i, j) = inv(j, i) = m;
        }
    return inv;
}

double logdet_from_cholesky(const Matrix& l) {
    double s = 0.0;
    for (std::size_t i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
    return 2.0 * s;
}

}  // namespace

Matrix spd_inverse(const Matrix& a) { return inverse_from_cholesky(cholesky(a)); }

double logdet_spd(const Matrix& a) { return logdet_from_cholesky(cholesky(a)); }

JitteredSpd spd_inverse_jittered(const Matrix& a, double max_jitter) {
    double jitter = 0.0;
    for (;;) {
        Matrix aj = a;
        for (std::size_t i = 0; i < aj.rows(); ++i) aj(i, i) += jitter;
        try {
            const Matrix l = cholesky(aj);
            return {inverse_from_cholesky(l), logdet_from_cholesky(l), jitter};
        } catch (const std::runtime_error&) {
            if (jitter == 0.0) {
                jitter = 1e-12;
            } else if (jitter * 100.0 <= max_jitter) {
                jitter *= 100.0;
            } else {
                throw std::runtime_error("spd_inverse_jittered: matrix singular beyond jitter " +
                                         std::to_string(max_jitter));
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Regularized incomplete gamma / chi-square survival
// ---------------------------------------------------------------------------

namespace {

constexpr int kGammaMaxIter = 500;

// P(a, x) by series, valid for x < a + 1.
double gamma_p_series(double a, double x) {
    double ap = a;
    double term = 1.0 / a;
    double sum = term;
    for (int n = 0; n < kGammaMaxIter; ++n) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::fabs(term) < std::fabs(sum) * std::numeric_limits<double>::epsilon())
            break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Q(a, x) by modified Lentz continued fraction, valid for x >= a + 1.
double gamma_q_contfrac(double a, double x) {
    const double eps = std::numeric_limits<double>::epsilon();
    const double fpmin = std::numeric_limits<double>::min() / eps;
    double b = x + 1.0 - a;
    double c = 1.0 / fpmin;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kGammaMaxIter; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = b + an / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) <= eps) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double chi_square_survival(double x, int df) {
    if (df <= 0) throw std::invalid_argument("chi_square_survival: df must be positive");
    if (!(x >= 0.0)) throw std::invalid_argument("chi_square_survival: x must be >= 0");
    if (x == 0.0) return 1.0;
    const double a = 0.5 * df;
    const double xx = 0.5 * x;
    double q = (xx < a + 1.0) ? 1.0 - gamma_p_series(a, xx) : gamma_q_contfrac(a, xx);
    return std::clamp(q, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// RngStream
// ---------------------------------------------------------------------------

namespace {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_state(std::uint64_t seed, std::string_view label) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the label path
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return mix64(seed ^ mix64(h));
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::string label)
    : seed_(seed), label_(std::move(label)), engine_(derive_state(seed_, label_)) {}

RngStream RngStream::fork(std::string_view sub_label) const {
    std::string child = label_;
    child += '/';
    child += sub_label;
    return RngStream(seed_, std::move(child));
}

double RngStream::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("RngStream::below: n must be positive");
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
        const std::uint64_t r = next_u64();
        if (r >= threshold) return r % n;
    }
}

double RngStream::normal(double mean, double sd) {
    if (sd < 0.0) throw std::invalid_argument("RngStream::normal: sd must be >= 0");
    // u in (0, 1] so the log is finite
    const double u = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double v = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    const double z = std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * M_PI * v);
    return mean + sd * z;
}

std::vector<double> sample_normal(RngStream& rng, double mean, double sd, std::size_t count) {
    if (sd < 0.0) throw std::invalid_argument("sample_normal: sd must be >= 0");
    std::vector<double> out(count);
    for (double& x : out) x = rng.normal(mean, sd);
    return out;
}

}  // namespace merf
