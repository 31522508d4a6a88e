#pragma once

// Analytic model landscapes with exact gradients, in units of kB*T0.
//
// The torus landscape stands in for a Ramachandran-like surface: wells are
// inverted periodic (von Mises style) Gaussians, exactly 2*pi periodic in
// both angles and smooth everywhere, so gradient checks hold on the seam.

#include <string>
#include <variant>
#include <vector>

#include "mlcv/common.hpp"

namespace mlcv {

struct DoubleWell1D {
    double a = 6.0;   // barrier height: U(0) = a, minima at x = +-1
};

struct TorusWell {
    double phi = 0.0;
    double psi = 0.0;
    double depth = 1.0;   // in kB*T0
    double width = 0.6;   // radians
};

struct RamaTorus2D {
    std::vector<TorusWell> wells;
};

struct HarmonicND {
    double k = 1.0;
    std::size_t dim = 1;
};

// Default torus: a deep beta-analog, an intermediate alphaR-analog and a
// shallow alphaL-analog, with a slow phi barrier and fast psi relaxation.
inline RamaTorus2D default_rama_torus() {
    return RamaTorus2D{{
        {-2.5, 2.6, 7.0, 0.6},   // beta-analog
        {-1.4, -1.0, 6.0, 0.6},  // alphaR-analog
        {1.0, 1.2, 4.0, 0.6},    // alphaL-analog
    }};
}

class ToyPotential {
public:
    using Kind = std::variant<DoubleWell1D, RamaTorus2D, HarmonicND>;

    explicit ToyPotential(Kind kind) : kind_(std::move(kind)) {}

    static ToyPotential double_well(double a = 6.0) { return ToyPotential(DoubleWell1D{a}); }
    static ToyPotential rama_torus(RamaTorus2D t = default_rama_torus()) {
        return ToyPotential(std::move(t));
    }
    static ToyPotential harmonic(double k = 1.0, std::size_t dim = 1) {
        return ToyPotential(HarmonicND{k, dim});
    }

    std::size_t dim() const {
        if (std::holds_alternative<DoubleWell1D>(kind_)) return 1;
        if (std::holds_alternative<RamaTorus2D>(kind_)) return 2;
        return std::get<HarmonicND>(kind_).dim;
    }

    // Period of coordinate i, or 0 when not periodic.
    double period(std::size_t) const {
        return std::holds_alternative<RamaTorus2D>(kind_) ? 2.0 * std::numbers::pi : 0.0;
    }

    bool periodic() const { return std::holds_alternative<RamaTorus2D>(kind_); }

    const Kind& kind() const { return kind_; }

    double energy(std::span<const double> q) const {
        check(q);
        if (const auto* dw = std::get_if<DoubleWell1D>(&kind_)) {
            const double t = q[0] * q[0] - 1.0;
            return dw->a * t * t;
        }
        if (const auto* h = std::get_if<HarmonicND>(&kind_)) {
            double s = 0.0;
            for (double x : q) s += x * x;
            return 0.5 * h->k * s;
        }
        const auto& torus = std::get<RamaTorus2D>(kind_);
        double u = 0.0;
        for (const auto& w : torus.wells) {
            const double iw2 = 1.0 / (w.width * w.width);
            const double e = std::exp((std::cos(q[0] - w.phi) - 1.0) * iw2) *
                             std::exp((std::cos(q[1] - w.psi) - 1.0) * iw2);
            u -= w.depth * e;
        }
        return u;
    }

    // Energy and dU/dq.
    std::pair<double, Vec> energy_gradient(std::span<const double> q) const {
        check(q);
        Vec g(q.size(), 0.0);
        if (const auto* dw = std::get_if<DoubleWell1D>(&kind_)) {
            const double t = q[0] * q[0] - 1.0;
            g[0] = 4.0 * dw->a * q[0] * t;
            return {dw->a * t * t, std::move(g)};
        }
        if (const auto* h = std::get_if<HarmonicND>(&kind_)) {
            double s = 0.0;
            for (std::size_t i = 0; i < q.size(); ++i) {
                s += q[i] * q[i];
                g[i] = h->k * q[i];
            }
            return {0.5 * h->k * s, std::move(g)};
        }
        const auto& torus = std::get<RamaTorus2D>(kind_);
        double u = 0.0;
        for (const auto& w : torus.wells) {
            const double iw2 = 1.0 / (w.width * w.width);
            const double dphi = q[0] - w.phi;
            const double dpsi = q[1] - w.psi;
            const double e = std::exp((std::cos(dphi) - 1.0) * iw2) *
                             std::exp((std::cos(dpsi) - 1.0) * iw2);
            u -= w.depth * e;
            // dU/dphi = depth * e * sin(dphi) / width^2
            g[0] += w.depth * e * std::sin(dphi) * iw2;
            g[1] += w.depth * e * std::sin(dpsi) * iw2;
        }
        return {u, std::move(g)};
    }

private:
    void check(std::span<const double> q) const {
        if (q.size() != dim())
            throw InvalidInputError("potential: got " + std::to_string(q.size()) +
                                    " coordinates, expected " + std::to_string(dim()));
    }

    Kind kind_;
};

}  // namespace mlcv
