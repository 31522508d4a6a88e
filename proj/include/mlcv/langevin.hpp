#pragma once

// Langevin dynamics via the BAOAB splitting. Reduced units: kB = 1.
// One force evaluation per step (the closing half-kick force is reused to
// open the next step); one Gaussian draw per coordinate per step.

#include <functional>
#include <random>

#include "mlcv/common.hpp"
#include "mlcv/potentials.hpp"

namespace mlcv {

struct LangevinParams {
    double dt = 0.005;
    double friction = 1.0;
    double temperature = 1.0;
    double mass = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(dt > 0.0)) throw InvalidArgumentError("langevin.dt must be > 0");
        if (!(friction > 0.0)) throw InvalidArgumentError("langevin.friction must be > 0");
        if (!(temperature >= 0.0)) throw InvalidArgumentError("langevin.temperature must be >= 0");
        if (!(mass > 0.0)) throw InvalidArgumentError("langevin.mass must be > 0");
    }
};

// Coordinate trajectory with the per-frame CV values and instantaneous
// bias needed for reweighting. Parallel arrays, one entry per saved frame.
struct Trajectory {
    std::vector<Vec> frames;
    std::vector<Vec> cv_series;       // empty rows when no CVs were tracked
    Vec bias_at_frame;                // V(s(t), t); zero for unbiased runs
    std::vector<long> steps;

    std::size_t size() const { return frames.size(); }
};

class LangevinIntegrator {
public:
    // force(q) must return the total force (-dU/dq plus any extra terms).
    using ForceFn = std::function<Vec(const Vec&)>;

    LangevinIntegrator(LangevinParams params, Vec q0, ForceFn force)
        : p_(params),
          q_(std::move(q0)),
          v_(q_.size(), 0.0),
          force_fn_(std::move(force)),
          rng_(derive_seed(params.seed, 0x55)),
          gauss_(0.0, 1.0) {
        p_.validate();
        c1_ = std::exp(-p_.friction * p_.dt);
        c2_ = std::sqrt((1.0 - c1_ * c1_) * p_.temperature / p_.mass);
        f_ = force_fn_(q_);
        check_finite();
    }

    const Vec& q() const { return q_; }
    const Vec& v() const { return v_; }
    Vec& q() { return q_; }
    Vec& v() { return v_; }
    long step_index() const { return step_; }

    // Re-evaluate the cached force (after the force field changed, e.g. a
    // hill was deposited, or after an exchange moved the coordinates).
    void refresh_force() { f_ = force_fn_(q_); }

    void step() {
        const double half_dt = 0.5 * p_.dt;
        for (std::size_t i = 0; i < q_.size(); ++i) {
            v_[i] += half_dt * f_[i] / p_.mass;   // B
            q_[i] += half_dt * v_[i];             // A
        }
        for (std::size_t i = 0; i < q_.size(); ++i)   // O
            v_[i] = c1_ * v_[i] + c2_ * gauss_(rng_);
        for (std::size_t i = 0; i < q_.size(); ++i) q_[i] += half_dt * v_[i];   // A
        f_ = force_fn_(q_);
        for (std::size_t i = 0; i < q_.size(); ++i) v_[i] += half_dt * f_[i] / p_.mass;   // B
        ++step_;
        check_finite();
    }

private:
    void check_finite() {
        for (double x : q_)
            if (!std::isfinite(x) || std::abs(x) > 1e6)
                throw SimulationDivergedError("coordinates diverged", step_);
        if (!all_finite(f_))
            throw SimulationDivergedError("non-finite force", step_);
    }

    LangevinParams p_;
    Vec q_, v_, f_;
    ForceFn force_fn_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> gauss_;
    double c1_ = 0.0, c2_ = 0.0;
    long step_ = 0;
};

// Plain unbiased run; wraps periodic coordinates into (-pi, pi] when saving.
inline Trajectory run_unbiased(const ToyPotential& pot, const LangevinParams& lp, long steps,
                               long save_stride, const Vec& q0) {
    if (steps < 1) throw InvalidArgumentError("steps must be >= 1");
    if (save_stride < 1) throw InvalidArgumentError("save_stride must be >= 1");

    LangevinIntegrator integ(lp, q0, [&](const Vec& q) {
        auto [u, g] = pot.energy_gradient(q);
        if (!std::isfinite(u)) throw SimulationDivergedError("non-finite energy", 0);
        for (double& x : g) x = -x;
        return g;
    });

    Trajectory traj;
    auto wrap = [&]() {
        if (!pot.periodic()) return;
        for (std::size_t i = 0; i < integ.q().size(); ++i)
            if (pot.period(i) > 0.0) integ.q()[i] = wrap_angle(integ.q()[i]);
    };
    auto save = [&](long step) {
        traj.frames.push_back(integ.q());
        traj.cv_series.emplace_back();
        traj.bias_at_frame.push_back(0.0);
        traj.steps.push_back(step);
    };
    wrap();
    save(0);
    for (long s = 1; s <= steps; ++s) {
        integ.step();
        wrap();
        if (s % save_stride == 0) save(s);
    }
    return traj;
}

}  // namespace mlcv
