#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace merf {

// ---------------------------------------------------------------------------
// Small dense matrices
//
// Everything in the mixed-model math is per-cluster sized (tens of rows at
// most), so a plain row-major container with O(n^3) factorizations is all
// that is needed.
// ---------------------------------------------------------------------------

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), v_(rows * cols, fill) {}

    static Matrix identity(std::size_t n);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return v_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return v_[i * cols_ + j]; }

    std::span<const double> row_span(std::size_t i) const {
        return {v_.data() + i * cols_, cols_};
    }
    std::span<double> row_span(std::size_t i) {
        return {v_.data() + i * cols_, cols_};
    }

    Matrix transposed() const;
    double trace() const;
    bool all_finite() const;
    // Max |a(i,j) - a(j,i)| over the lower triangle; 0 for perfectly symmetric.
    double symmetry_gap() const;

    const std::vector<double>& data() const { return v_; }
    std::vector<double>& data() { return v_; }

    Matrix& operator+=(const Matrix& o);
    Matrix& operator-=(const Matrix& o);
    Matrix& operator*=(double s);

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> v_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator*(double s, Matrix a);

std::vector<double> matvec(const Matrix& a, std::span<const double> x);
double dot(std::span<const double> a, std::span<const double> b);
double max_abs_diff(const Matrix& a, const Matrix& b);

// Lower Cholesky factor of an SPD matrix. Requires a square matrix that is
// symmetric to within 1e-9 (relative to its largest entry). Throws if a
// pivot is not strictly positive, naming the first failing pivot index.
Matrix cholesky(const Matrix& a);

// Inverse of an SPD matrix via its Cholesky factor.
Matrix spd_inverse(const Matrix& a);

// log(det(a)) for SPD a, computed from the Cholesky diagonal.
double logdet_spd(const Matrix& a);

// Inverse + logdet of a nearly-PSD matrix: retries the factorization with a
// growing diagonal jitter (1e-12, escalating x100 up to max_jitter) before
// giving up. Used where variance-component estimates may be floored to ~0.
struct JitteredSpd {
    Matrix inverse;
    double logdet = 0.0;
    double jitter = 0.0;  // 0 when the plain factorization succeeded
};
JitteredSpd spd_inverse_jittered(const Matrix& a, double max_jitter = 1e-6);

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

// P(chi^2_df > x), the upper tail of the chi-square distribution, via the
// regularized incomplete gamma function Q(df/2, x/2). Series expansion below
// the a+1 split, continued fraction above it.
double chi_square_survival(double x, int df);

// ---------------------------------------------------------------------------
// Deterministic seedable random streams
//
// A stream is identified by (master seed, label path). Forking with a label
// derives an independent child stream, so parallel consumers can be handed
// pre-derived streams and reproduce the serial results exactly. The engine
// is std::mt19937_64 whose raw output is fully specified by the standard;
// all distribution transforms are implemented here so draw sequences are
// identical across platforms and build configurations.
// ---------------------------------------------------------------------------

class RngStream {
public:
    RngStream(std::uint64_t seed, std::string label);

    RngStream fork(std::string_view sub_label) const;

    std::uint64_t seed() const { return seed_; }
    const std::string& label() const { return label_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform01();

    // Uniform integer in [0, n), rejection-debiased.
    std::uint64_t below(std::uint64_t n);

    bool bernoulli(double p) { return uniform01() < p; }

    // One normal draw (Box-Muller, two uniforms consumed per call).
    double normal(double mean = 0.0, double sd = 1.0);

    template <typename RandomIt>
    void shuffle(RandomIt first, RandomIt last) {
        using std::swap;
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            swap(first[i - 1], first[below(i)]);
        }
    }

private:
    std::uint64_t seed_;
    std::string label_;
    std::mt19937_64 engine_;
};

// count i.i.d. N(mean, sd^2) draws. sd = 0 degenerates to the mean; sd < 0
// is an error.
std::vector<double> sample_normal(RngStream& rng, double mean, double sd, std::size_t count);

}  // namespace merf
