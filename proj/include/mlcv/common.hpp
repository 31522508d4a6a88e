#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlcv {

using Vec = std::vector<double>;

// ---------------------------------------------------------------------------
// Error taxonomy. Every failure mode raised by the library derives from
// Error so callers can catch the whole family or individual kinds.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidInputError : Error { using Error::Error; };
struct InvalidArgumentError : Error { using Error::Error; };
struct InvalidDatasetError : Error { using Error::Error; };
struct InvalidArchitectureError : Error { using Error::Error; };
struct DegeneratePairError : Error { using Error::Error; };
struct DegenerateGeometryError : Error { using Error::Error; };
struct DegenerateFeatureError : Error { using Error::Error; };
struct DegenerateModelError : Error { using Error::Error; };
struct GridCoverageError : Error { using Error::Error; };
struct ResolutionError : Error { using Error::Error; };
struct MalformedInputError : Error { using Error::Error; };
struct SchemaError : Error { using Error::Error; };
struct InvariantViolationError : Error { using Error::Error; };
struct UnsupportedExportError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

struct SimulationDivergedError : Error {
    long step;
    explicit SimulationDivergedError(const std::string& msg, long step_index)
        : Error(msg + " (step " + std::to_string(step_index) + ")"), step(step_index) {}
};

// ---------------------------------------------------------------------------
// Small dense row-major matrix. Enough linear algebra for this toolkit;
// nothing here warrants an external BLAS.
// ---------------------------------------------------------------------------

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    Vec& data() { return data_; }
    const Vec& data() const { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vec data_;
};

// ---------------------------------------------------------------------------
// Vector helpers
// ---------------------------------------------------------------------------

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline double norm1(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += std::abs(x);
    return s;
}

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Pairwise (cascade) summation: deterministic and accurate regardless of
// how the caller chunks its data.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

// Wrap an angle to the canonical interval (-pi, pi].
inline double wrap_angle(double a) {
    const double two_pi = 2.0 * std::numbers::pi;
    a = std::remainder(a, two_pi);    // now in [-pi, pi]
    if (a <= -std::numbers::pi) a += two_pi;
    return a;
}

// Minimum-image difference for a coordinate with the given period.
inline double periodic_delta(double a, double b, double period) {
    double d = a - b;
    d -= period * std::round(d / period);
    return d;
}

// Numerically safe sigmoid; saturates cleanly for |z| up to ~1e3.
inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
inline double log1pexp(double x) {
    if (x > 36.0) return x + std::exp(-x);
    if (x < -36.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

inline double swish(double x) { return x * sigmoid(x); }

inline double swish_derivative(double x) {
    const double s = sigmoid(x);
    return s + x * s * (1.0 - s);
}

// Shortest-but-exact decimal for doubles: 17 significant digits round-trips.
inline std::string format_g17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// SplitMix64 — used to derive independent stream seeds from one master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    return splitmix64(master ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

}  // namespace mlcv
