#pragma once

// Metadynamics bias: an append-only list of Gaussian hills over CV space,
// with the well-tempered height schedule. Evaluation is exact summation
// over all hills by default; an optional uniform-grid cache (value and
// gradient stored per node, multilinear interpolation between nodes) keeps
// long runs affordable. Points outside the grid fall back to exact
// summation, so the cache never changes the domain.

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "mlcv/common.hpp"

namespace mlcv {

struct WellTemperedParams {
    double w0 = 1.0;                 // initial hill height (energy)
    Vec sigma;                        // per-CV hill widths
    double gamma = 8.0;              // bias factor, > 1
    long deposit_stride = 400;       // steps between hills
    std::vector<double> cv_period;   // per-CV period; 0 = non-periodic

    void validate(std::size_t dims) const {
        if (!(w0 > 0.0)) throw InvalidArgumentError("metad.w0 must be > 0");
        if (!(gamma > 1.0)) throw InvalidArgumentError("metad.gamma must be > 1");
        if (deposit_stride < 1) throw InvalidArgumentError("metad.deposit_stride must be >= 1");
        if (sigma.size() != dims)
            throw InvalidArgumentError("metad.sigma has " + std::to_string(sigma.size()) +
                                       " entries for " + std::to_string(dims) + " CVs");
        for (double s : sigma)
            if (!(s > 0.0)) throw InvalidArgumentError("metad.sigma entries must be > 0");
        if (!cv_period.empty() && cv_period.size() != dims)
            throw InvalidArgumentError("metad.cv_period size mismatch");
    }
};

// Well-tempered height of the next hill given the bias already present at
// the deposition point: w0 * exp(-V / ((gamma - 1) T)).
inline double wt_hill_height(double v_here, const WellTemperedParams& params,
                             double temperature) {
    if (v_here < 0.0) throw InvalidArgumentError("wt_hill_height: bias must be >= 0");
    return params.w0 * std::exp(-v_here / ((params.gamma - 1.0) * temperature));
}

struct Hill {
    Vec center;
    double height = 0.0;
    Vec widths;
    long step = 0;   // deposit step index
};

class BiasPotential {
public:
    BiasPotential() = default;
    explicit BiasPotential(std::size_t dims, std::vector<double> cv_period = {})
        : dims_(dims), period_(std::move(cv_period)) {
        if (!period_.empty() && period_.size() != dims_)
            throw InvalidArgumentError("bias: cv_period size mismatch");
    }

    std::size_t dims() const { return dims_; }
    const std::vector<Hill>& hills() const { return hills_; }
    const std::vector<double>& periods() const { return period_; }

    void append(Hill h) {
        if (h.center.size() != dims_ || h.widths.size() != dims_)
            throw InvalidInputError("bias: hill dimensionality mismatch");
        if (grid_) grid_->add(h);
        hills_.push_back(std::move(h));
    }

    double delta(double a, double b, std::size_t d) const {
        const double per = period_.empty() ? 0.0 : period_[d];
        return per > 0.0 ? periodic_delta(a, b, per) : a - b;
    }

    // V(s) and dV/ds from exact summation over hills [0, count).
    std::pair<double, Vec> evaluate_exact(std::span<const double> s, std::size_t count) const {
        if (s.size() != dims_) throw InvalidInputError("bias: CV point dimensionality mismatch");
        double v = 0.0;
        Vec g(dims_, 0.0);
        Vec dd(dims_);
        for (std::size_t k = 0; k < count; ++k) {
            const Hill& h = hills_[k];
            double expo = 0.0;
            for (std::size_t d = 0; d < dims_; ++d) {
                dd[d] = delta(s[d], h.center[d], d);
                expo += dd[d] * dd[d] / (2.0 * h.widths[d] * h.widths[d]);
            }
            if (expo > 45.0) continue;   // exp(-45) ~ 3e-20: below double resolution here
            const double e = h.height * std::exp(-expo);
            v += e;
            for (std::size_t d = 0; d < dims_; ++d)
                g[d] -= e * dd[d] / (h.widths[d] * h.widths[d]);
        }
        return {v, std::move(g)};
    }

    std::pair<double, Vec> evaluate(std::span<const double> s) const {
        if (grid_ && grid_->contains(s)) return grid_->interpolate(s);
        return evaluate_exact(s, hills_.size());
    }

    double value(std::span<const double> s) const { return evaluate(s).first; }

    // Enable the uniform-grid cache. Bounds must cover the region the run
    // will actually visit; outside points fall back to exact summation.
    void enable_grid(const Vec& lo, const Vec& hi, const std::vector<std::size_t>& npoints) {
        grid_.emplace(*this, lo, hi, npoints);
        for (const Hill& h : hills_) grid_->add(h);
    }

    bool grid_enabled() const { return grid_.has_value(); }

private:
    // Uniform-grid cache. Non-periodic dims span [lo, hi] with n nodes
    // (spacing (hi-lo)/(n-1)); periodic dims span one period [lo, lo+P)
    // with n nodes (spacing P/n) and node indices wrapping mod n.
    class Grid {
    public:
        Grid(const BiasPotential& owner, const Vec& lo, const Vec& hi,
             const std::vector<std::size_t>& npoints)
            : owner_(&owner), lo_(lo), hi_(hi), n_(npoints) {
            const std::size_t d = owner.dims();
            if (lo.size() != d || hi.size() != d || npoints.size() != d)
                throw InvalidArgumentError("bias grid: bounds dimensionality mismatch");
            std::size_t total = 1;
            spacing_.resize(d);
            periodic_.resize(d);
            for (std::size_t i = 0; i < d; ++i) {
                if (n_[i] < 2) throw InvalidArgumentError("bias grid: need >= 2 points per dim");
                if (!(hi[i] > lo[i])) throw InvalidArgumentError("bias grid: hi must exceed lo");
                const double per = owner.period_.empty() ? 0.0 : owner.period_[i];
                periodic_[i] = per > 0.0;
                if (periodic_[i]) {
                    if (std::abs((hi[i] - lo[i]) - per) > 1e-9 * per)
                        throw InvalidArgumentError(
                            "bias grid: periodic dimension must span exactly one period");
                    spacing_[i] = per / static_cast<double>(n_[i]);
                } else {
                    spacing_[i] = (hi[i] - lo[i]) / static_cast<double>(n_[i] - 1);
                }
                total *= n_[i];
            }
            value_.assign(total, 0.0);
            grad_.assign(d, Vec(total, 0.0));
        }

        bool contains(std::span<const double> s) const {
            for (std::size_t i = 0; i < s.size(); ++i)
                if (!periodic_[i] && (s[i] < lo_[i] || s[i] > hi_[i])) return false;
            return true;
        }

        // Add one hill to every grid node within its support
        // (|delta| <= sqrt(90) sigma, where exp(-45) vanishes in double).
        void add(const Hill& h) {
            const std::size_t d = lo_.size();
            std::vector<long> first(d), count(d);
            std::vector<Vec> expo(d), dd(d);
            for (std::size_t i = 0; i < d; ++i) {
                const double cut = std::sqrt(90.0) * h.widths[i];
                const long n = static_cast<long>(n_[i]);
                long a, b;
                if (periodic_[i]) {
                    double c = h.center[i] - lo_[i];
                    const double per = n * spacing_[i];
                    c -= per * std::floor(c / per);   // into [0, per)
                    a = static_cast<long>(std::floor((c - cut) / spacing_[i]));
                    b = static_cast<long>(std::ceil((c + cut) / spacing_[i]));
                    if (b - a + 1 >= n) {
                        a = 0;
                        b = n - 1;
                    }
                } else {
                    a = std::max<long>(
                        0, static_cast<long>(std::floor((h.center[i] - cut - lo_[i]) / spacing_[i])));
                    b = std::min<long>(n - 1, static_cast<long>(std::ceil(
                                                  (h.center[i] + cut - lo_[i]) / spacing_[i])));
                    if (b < a) return;   // support entirely outside the grid
                }
                first[i] = a;
                count[i] = b - a + 1;
                expo[i].resize(count[i]);
                dd[i].resize(count[i]);
                for (long j = 0; j < count[i]; ++j) {
                    const double x = lo_[i] + spacing_[i] * static_cast<double>(a + j);
                    const double del = owner_->delta(x, h.center[i], i);
                    dd[i][j] = del;
                    expo[i][j] = std::exp(-del * del / (2.0 * h.widths[i] * h.widths[i]));
                }
            }
            std::vector<long> idx(d, 0);
            for (;;) {
                double e = h.height;
                for (std::size_t i = 0; i < d; ++i) e *= expo[i][idx[i]];
                std::size_t flat = 0;
                for (std::size_t i = 0; i < d; ++i) {
                    const long n = static_cast<long>(n_[i]);
                    long node = first[i] + idx[i];
                    if (periodic_[i]) node = ((node % n) + n) % n;
                    flat = flat * n_[i] + static_cast<std::size_t>(node);
                }
                value_[flat] += e;
                for (std::size_t i = 0; i < d; ++i)
                    grad_[i][flat] -= e * dd[i][idx[i]] / (h.widths[i] * h.widths[i]);
                std::size_t carry = d;
                while (carry-- > 0) {
                    if (++idx[carry] < count[carry]) break;
                    idx[carry] = 0;
                    if (carry == 0) return;
                }
            }
        }

        std::pair<double, Vec> interpolate(std::span<const double> s) const {
            const std::size_t d = lo_.size();
            std::vector<std::size_t> node_lo(d), node_hi(d);
            Vec frac(d);
            for (std::size_t i = 0; i < d; ++i) {
                const std::size_t n = n_[i];
                if (periodic_[i]) {
                    const double per = n * spacing_[i];
                    double t = s[i] - lo_[i];
                    t -= per * std::floor(t / per);   // into [0, per)
                    const double u = t / spacing_[i];
                    std::size_t c = static_cast<std::size_t>(u);
                    if (c >= n) c = n - 1;
                    node_lo[i] = c;
                    node_hi[i] = (c + 1) % n;
                    frac[i] = u - static_cast<double>(c);
                } else {
                    const double u = (s[i] - lo_[i]) / spacing_[i];
                    std::size_t c = static_cast<std::size_t>(std::max(0.0, u));
                    if (c >= n - 1) c = n - 2;
                    node_lo[i] = c;
                    node_hi[i] = c + 1;
                    frac[i] = u - static_cast<double>(c);
                }
            }
            double v = 0.0;
            Vec g(d, 0.0);
            const std::size_t corners = std::size_t{1} << d;
            for (std::size_t mask = 0; mask < corners; ++mask) {
                double wgt = 1.0;
                std::size_t flat = 0;
                for (std::size_t i = 0; i < d; ++i) {
                    const bool hi_side = (mask >> i) & 1U;
                    wgt *= hi_side ? frac[i] : (1.0 - frac[i]);
                    flat = flat * n_[i] + (hi_side ? node_hi[i] : node_lo[i]);
                }
                v += wgt * value_[flat];
                for (std::size_t i = 0; i < d; ++i) g[i] += wgt * grad_[i][flat];
            }
            return {v, std::move(g)};
        }

    private:
        const BiasPotential* owner_;
        Vec lo_, hi_, spacing_;
        std::vector<std::size_t> n_;
        std::vector<bool> periodic_;
        Vec value_;
        std::vector<Vec> grad_;
    };

    std::size_t dims_ = 1;
    std::vector<double> period_;
    std::vector<Hill> hills_;
    std::optional<Grid> grid_;
};

// Deposit one hill at CV point s, with the well-tempered height computed
// from the bias already present there.
inline void deposit_hill(BiasPotential& bias, const Vec& s, const WellTemperedParams& params,
                         double temperature, long step = 0) {
    if (s.size() != bias.dims()) throw InvalidInputError("deposit_hill: dimension mismatch");
    if (!all_finite(s)) throw InvalidInputError("deposit_hill: non-finite CV point");
    const double v_here = bias.value(s);
    bias.append(Hill{s, wt_hill_height(v_here, params, temperature), params.sigma, step});
}

// --- HILLS text format --------------------------------------------------------
// One line per hill: step center_1..d sigma_1..d height biasfactor

inline void write_hills(const std::string& path, const BiasPotential& bias, double gamma) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    for (const Hill& h : bias.hills()) {
        f << h.step;
        for (double c : h.center) f << ' ' << format_g17(c);
        for (double w : h.widths) f << ' ' << format_g17(w);
        f << ' ' << format_g17(h.height) << ' ' << format_g17(gamma) << "\n";
    }
    if (!f) throw IoError("write failed: " + path);
}

struct HillsFile {
    BiasPotential bias;
    double gamma = 0.0;
};

inline HillsFile read_hills(const std::string& path, std::size_t dims,
                            std::vector<double> cv_period = {}) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path);
    HillsFile out;
    out.bias = BiasPotential(dims, std::move(cv_period));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        Hill h;
        h.center.resize(dims);
        h.widths.resize(dims);
        double gamma;
        ss >> h.step;
        for (double& c : h.center) ss >> c;
        for (double& w : h.widths) ss >> w;
        ss >> h.height >> gamma;
        if (!ss)
            throw MalformedInputError(path + ": bad HILLS line " + std::to_string(lineno));
        out.gamma = gamma;
        out.bias.append(std::move(h));
    }
    return out;
}

}  // namespace mlcv
