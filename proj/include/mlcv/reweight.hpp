#pragma once

// Free-energy recovery from biased trajectories. Two estimators:
//   - the time-independent estimator (Tiwary-Parrinello): per-frame weights
//     exp(beta (V(s_i, t_i) - c(t_i))) with c(t) from CV-space integrals,
//   - last-bias reweighting: weights proportional to exp(beta V_final(s_i)).
// Plus the quadrature reference surface used as ground truth on the toy
// potentials. Everything is log-sum-exp stabilized and uses pairwise
// summation so results do not depend on evaluation chunking.

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mlcv/bias.hpp"
#include "mlcv/common.hpp"
#include "mlcv/langevin.hpp"
#include "mlcv/potentials.hpp"

namespace mlcv {

// Uniform product grid over CV space for the c(t) integrals.
struct ReweightGrid {
    Vec lo, hi;
    std::vector<std::size_t> npoints;

    std::size_t total() const {
        std::size_t t = 1;
        for (std::size_t n : npoints) t *= n;
        return t;
    }

    Vec point(std::size_t flat) const {
        Vec s(npoints.size());
        for (std::size_t d = npoints.size(); d-- > 0;) {
            const std::size_t i = flat % npoints[d];
            flat /= npoints[d];
            s[d] = npoints[d] == 1 ? lo[d]
                                   : lo[d] + (hi[d] - lo[d]) * static_cast<double>(i) /
                                         static_cast<double>(npoints[d] - 1);
        }
        return s;
    }

    bool contains(std::span<const double> s) const {
        for (std::size_t d = 0; d < s.size(); ++d)
            if (s[d] < lo[d] || s[d] > hi[d]) return false;
        return true;
    }
};

// Default grid: visited CV range padded by 3 sigma, 400 points per dimension.
inline ReweightGrid default_reweight_grid(const Trajectory& traj, const Vec& sigma,
                                          std::size_t points_per_dim = 400) {
    if (traj.cv_series.empty() || traj.cv_series.front().empty())
        throw InvalidInputError("reweight grid: trajectory has no CV series");
    const std::size_t d = traj.cv_series.front().size();
    ReweightGrid g;
    g.lo.assign(d, 0.0);
    g.hi.assign(d, 0.0);
    for (std::size_t k = 0; k < d; ++k) {
        double lo = traj.cv_series.front()[k], hi = lo;
        for (const Vec& s : traj.cv_series) {
            lo = std::min(lo, s[k]);
            hi = std::max(hi, s[k]);
        }
        g.lo[k] = lo - 3.0 * sigma[k];
        g.hi[k] = hi + 3.0 * sigma[k];
        g.npoints.push_back(points_per_dim);
    }
    if (g.total() > 2'000'000)
        throw InvalidArgumentError("reweight grid too large; reduce points per dimension");
    return g;
}

namespace detail {

inline double logsumexp(std::span<const double> a) {
    double mx = a[0];
    for (double v : a) mx = std::max(mx, v);
    Vec shifted(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) shifted[i] = std::exp(a[i] - mx);
    return mx + std::log(pairwise_sum(shifted));
}

// Normalize log-weights in place into probabilities summing to 1.
inline Vec normalize_log_weights(const Vec& logw) {
    double mx = logw[0];
    for (double v : logw) mx = std::max(mx, v);
    Vec w(logw.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(logw[i] - mx);
    const double total = pairwise_sum(w);
    for (double& v : w) v /= total;
    return w;
}

}  // namespace detail

// --- Tiwary time-independent estimator ----------------------------------------

inline Vec tiwary_weights(const Trajectory& traj, const BiasPotential& bias,
                          const WellTemperedParams& wt, double temperature,
                          const ReweightGrid& grid) {
    if (traj.size() == 0) throw InvalidInputError("tiwary_weights: empty trajectory");
    if (traj.bias_at_frame.size() != traj.size())
        throw InvalidInputError("tiwary_weights: trajectory lacks bias values");
    for (const Vec& s : traj.cv_series)
        if (!grid.contains(s))
            throw GridCoverageError("tiwary_weights: frame CV outside the c(t) grid");

    const double beta = 1.0 / temperature;
    const double gfac = wt.gamma / (wt.gamma - 1.0);
    const double ofac = 1.0 / (wt.gamma - 1.0);

    // Running V on the grid, updated hill by hill; c at epoch m uses hills
    // [0, m). Epoch 0 (no hills) has c = 0 exactly.
    const std::size_t npts = grid.total();
    Vec v_grid(npts, 0.0);
    std::vector<Vec> points(npts);
    for (std::size_t i = 0; i < npts; ++i) points[i] = grid.point(i);

    const auto& hills = bias.hills();
    Vec c_epoch(hills.size() + 1, 0.0);
    Vec num(npts), den(npts);
    for (std::size_t m = 0; m < hills.size(); ++m) {
        const Hill& h = hills[m];
        for (std::size_t i = 0; i < npts; ++i) {
            double expo = 0.0;
            for (std::size_t d = 0; d < h.center.size(); ++d) {
                const double dd = bias.delta(points[i][d], h.center[d], d);
                expo += dd * dd / (2.0 * h.widths[d] * h.widths[d]);
            }
            if (expo <= 45.0) v_grid[i] += h.height * std::exp(-expo);
        }
        for (std::size_t i = 0; i < npts; ++i) {
            num[i] = beta * gfac * v_grid[i];
            den[i] = beta * ofac * v_grid[i];
        }
        c_epoch[m + 1] = temperature * (detail::logsumexp(num) - detail::logsumexp(den));
    }

    // Frame at step t belongs to the epoch of the last hill with step <= t.
    Vec logw(traj.size());
    for (std::size_t i = 0; i < traj.size(); ++i) {
        std::size_t epoch = 0;
        while (epoch < hills.size() && hills[epoch].step <= traj.steps[i]) ++epoch;
        logw[i] = beta * (traj.bias_at_frame[i] - c_epoch[epoch]);
    }
    return detail::normalize_log_weights(logw);
}

// --- last-bias reweighting -------------------------------------------------------

inline Vec lastbias_weights(const Trajectory& traj, const BiasPotential& bias,
                            double temperature) {
    if (traj.size() == 0) throw InvalidInputError("lastbias_weights: empty trajectory");
    const double beta = 1.0 / temperature;
    Vec logw(traj.size());
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const Vec& s = traj.cv_series[i];
        logw[i] = beta * bias.evaluate_exact(s, bias.hills().size()).first;
    }
    return detail::normalize_log_weights(logw);
}

// --- weighted free-energy histograms ---------------------------------------------

struct BinSpec {
    Vec lo, hi;
    std::vector<std::size_t> nbins;

    std::size_t total() const {
        std::size_t t = 1;
        for (std::size_t n : nbins) t *= n;
        return t;
    }
};

struct Fes {
    BinSpec bins;
    Vec f;                        // free energy per bin; meaningful iff defined
    std::vector<bool> defined;
    std::vector<std::size_t> count;

    double center(std::size_t dim, std::size_t index) const {
        const double w = (bins.hi[dim] - bins.lo[dim]) / static_cast<double>(bins.nbins[dim]);
        return bins.lo[dim] + (static_cast<double>(index) + 0.5) * w;
    }

    std::vector<std::size_t> unflatten(std::size_t flat) const {
        std::vector<std::size_t> idx(bins.nbins.size());
        for (std::size_t d = bins.nbins.size(); d-- > 0;) {
            idx[d] = flat % bins.nbins[d];
            flat /= bins.nbins[d];
        }
        return idx;
    }
};

inline Fes build_fes(const std::vector<Vec>& points, const Vec& weights, const BinSpec& bins,
                     double temperature) {
    if (points.size() != weights.size())
        throw InvalidInputError("build_fes: points/weights length mismatch");
    if (points.empty()) throw InvalidInputError("build_fes: empty input");
    const double wsum = pairwise_sum(weights);
    if (std::abs(wsum - 1.0) > 1e-9)
        throw InvalidInputError("build_fes: weights must be normalized (sum = " +
                                format_g17(wsum) + ")");
    const std::size_t d = bins.nbins.size();

    Fes fes;
    fes.bins = bins;
    fes.f.assign(bins.total(), 0.0);
    fes.defined.assign(bins.total(), false);
    fes.count.assign(bins.total(), 0);
    Vec wbin(bins.total(), 0.0);

    for (std::size_t i = 0; i < points.size(); ++i) {
        std::size_t flat = 0;
        for (std::size_t k = 0; k < d; ++k) {
            const double x = points[i][k];
            if (x < bins.lo[k] || x > bins.hi[k])
                throw InvalidInputError("build_fes: point outside bin range in dim " +
                                        std::to_string(k) + " (value " + format_g17(x) + ")");
            const double width = (bins.hi[k] - bins.lo[k]) / static_cast<double>(bins.nbins[k]);
            std::size_t b = static_cast<std::size_t>((x - bins.lo[k]) / width);
            if (b >= bins.nbins[k]) b = bins.nbins[k] - 1;   // right edge
            flat = flat * bins.nbins[k] + b;
        }
        wbin[flat] += weights[i];
        fes.count[flat] += 1;
    }

    double fmin = std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t b = 0; b < wbin.size(); ++b) {
        if (wbin[b] > 0.0) {
            fes.f[b] = -temperature * std::log(wbin[b]);
            fes.defined[b] = true;
            fmin = std::min(fmin, fes.f[b]);
            any = true;
        }
    }
    if (!any) throw InvalidInputError("build_fes: all bins empty");
    for (std::size_t b = 0; b < wbin.size(); ++b)
        if (fes.defined[b]) fes.f[b] -= fmin;
    return fes;
}

// --- quadrature reference surface --------------------------------------------------

// F over the `along` coordinates by marginalizing exp(-U/T) over the rest
// with the trapezoid rule; Richardson (n vs 2n) guards the resolution.
// Evaluated at the same bin centers build_fes uses, so surfaces compare
// bin-for-bin.
inline Fes reference_fes(const ToyPotential& pot, const std::vector<std::size_t>& along,
                         const BinSpec& bins, double temperature,
                         std::size_t quad_points = 256) {
    if (along.size() != bins.nbins.size())
        throw InvalidArgumentError("reference_fes: along/bins mismatch");
    std::vector<std::size_t> ortho;
    for (std::size_t i = 0; i < pot.dim(); ++i)
        if (std::find(along.begin(), along.end(), i) == along.end()) ortho.push_back(i);

    // Integration range per orthogonal dim.
    auto ortho_range = [&](std::size_t dim) -> std::pair<double, double> {
        const double per = pot.period(dim);
        if (per > 0.0) return {-std::numbers::pi, std::numbers::pi};
        if (const auto* h = std::get_if<HarmonicND>(&pot.kind())) {
            const double span = std::sqrt(80.0 * temperature / h->k);
            return {-span, span};
        }
        if (std::holds_alternative<DoubleWell1D>(pot.kind())) return {-3.0, 3.0};
        throw InvalidArgumentError("reference_fes: unbounded orthogonal coordinate");
    };

    auto compute = [&](std::size_t nq) {
        Fes fes;
        fes.bins = bins;
        fes.f.assign(bins.total(), 0.0);
        fes.defined.assign(bins.total(), true);
        fes.count.assign(bins.total(), 0);
        Vec q(pot.dim(), 0.0);
        for (std::size_t flat = 0; flat < bins.total(); ++flat) {
            const auto idx = fes.unflatten(flat);
            for (std::size_t k = 0; k < along.size(); ++k) q[along[k]] = fes.center(k, idx[k]);
            // Recursive trapezoid over the orthogonal dims.
            std::function<double(std::size_t)> integrate = [&](std::size_t level) -> double {
                if (level == ortho.size()) return std::exp(-pot.energy(q) / temperature);
                const auto [lo, hi] = ortho_range(ortho[level]);
                const bool periodic = pot.period(ortho[level]) > 0.0;
                const double hstep = (hi - lo) / static_cast<double>(nq);
                double total = 0.0;
                // periodic: uniform sum over [lo, hi); open: trapezoid
                const std::size_t count = periodic ? nq : nq + 1;
                for (std::size_t i = 0; i < count; ++i) {
                    q[ortho[level]] = lo + hstep * static_cast<double>(i);
                    double f = integrate(level + 1);
                    if (!periodic && (i == 0 || i == nq)) f *= 0.5;
                    total += f;
                }
                return total * hstep;
            };
            const double z = integrate(0);
            fes.f[flat] = -temperature * std::log(z);
        }
        double fmin = *std::min_element(fes.f.begin(), fes.f.end());
        for (double& v : fes.f) v -= fmin;
        return fes;
    };

    if (ortho.empty()) return compute(1);   // F = U - min(U), no quadrature involved

    Fes coarse = compute(quad_points);
    Fes fine = compute(2 * quad_points);
    double worst = 0.0;
    for (std::size_t b = 0; b < coarse.f.size(); ++b)
        worst = std::max(worst, std::abs(coarse.f[b] - fine.f[b]));
    if (worst > 1e-3 * temperature)
        throw ResolutionError("reference_fes: quadrature not converged (Richardson gap " +
                              format_g17(worst) + " T); increase quad_points");
    return fine;
}

// --- comparison helpers ---------------------------------------------------------

struct FesComparison {
    double rms = 0.0;
    double max_abs = 0.0;
    std::size_t bins_compared = 0;
};

// Compare over bins defined in both surfaces with reference F below fmax.
inline FesComparison compare_fes(const Fes& estimate, const Fes& reference, double fmax) {
    if (estimate.f.size() != reference.f.size())
        throw InvalidInputError("compare_fes: bin layout mismatch");
    FesComparison out;
    double sq = 0.0;
    for (std::size_t b = 0; b < estimate.f.size(); ++b) {
        if (!estimate.defined[b] || !reference.defined[b]) continue;
        if (reference.f[b] >= fmax) continue;
        const double d = estimate.f[b] - reference.f[b];
        sq += d * d;
        out.max_abs = std::max(out.max_abs, std::abs(d));
        ++out.bins_compared;
    }
    if (out.bins_compared > 0) out.rms = std::sqrt(sq / static_cast<double>(out.bins_compared));
    return out;
}

// --- FES CSV ----------------------------------------------------------------------

inline void write_fes_csv(const std::string& path, const Fes& fes,
                          const std::vector<std::string>& dim_names) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    for (std::size_t d = 0; d < dim_names.size(); ++d) f << dim_names[d] << ',';
    f << "F,count\n";
    for (std::size_t b = 0; b < fes.f.size(); ++b) {
        const auto idx = fes.unflatten(b);
        for (std::size_t d = 0; d < idx.size(); ++d) f << format_g17(fes.center(d, idx[d])) << ',';
        if (fes.defined[b]) f << format_g17(fes.f[b]);
        f << ',' << fes.count[b] << "\n";
    }
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace mlcv
