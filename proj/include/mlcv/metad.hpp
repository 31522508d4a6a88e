#pragma once

// Well-tempered metadynamics driver: Langevin dynamics with biasing forces
// pulled back through the CV gradients, hills deposited on a fixed stride.
//
// Multi-walker runs share one append-only hill list. Execution is chunked
// at read_stride: within a chunk each walker sees its own new hills
// immediately and everyone else's as of the last chunk barrier; at the
// barrier per-walker deposits merge into the shared list in walker order.
// That schedule is deterministic, so the optional thread parallelism is
// bit-identical to the sequential round-robin.

#include <memory>
#include <thread>
#include <vector>

#include "mlcv/bias.hpp"
#include "mlcv/colvar.hpp"
#include "mlcv/langevin.hpp"
#include "mlcv/potentials.hpp"

namespace mlcv {

struct BiasGridSpec {
    Vec lo, hi;
    std::vector<std::size_t> npoints;
};

struct MetadRunConfig {
    long steps = 0;
    long save_stride = 100;
    long read_stride = 0;              // 0 -> use deposit_stride
    bool parallel = false;             // thread the walkers (same results)
    std::optional<BiasGridSpec> grid;  // enable the bias grid cache
};

struct MultiwalkerResult {
    std::vector<Trajectory> trajectories;
    BiasPotential shared_bias;
};

namespace detail {

class MetadWalker {
public:
    MetadWalker(const ToyPotential& pot, const std::vector<CollectiveVariable>& cvs,
                const LangevinParams& lp, const WellTemperedParams& wt,
                const std::optional<BiasGridSpec>& grid, const Vec& q0)
        : pot_(pot),
          cvs_(cvs),
          wt_(wt),
          snap_(cvs.size(), wt.cv_period),
          pending_(cvs.size(), wt.cv_period),
          temperature_(lp.temperature) {
        if (grid) snap_.enable_grid(grid->lo, grid->hi, grid->npoints);
        integ_ = std::make_unique<LangevinIntegrator>(lp, q0, [this](const Vec& q) {
            return total_force(q);
        });
        wrap();
    }

    // Advance `n` steps; collect deposits into `new_hills` for the merge.
    void advance(long n, long save_stride, Trajectory& traj, std::vector<Hill>& new_hills) {
        for (long i = 0; i < n; ++i) {
            integ_->step();
            wrap();
            ++local_step_;
            if (local_step_ % wt_.deposit_stride == 0) {
                const Vec s = cv_point(integ_->q());
                const double v_here = bias_value(s);
                Hill h{s, wt_hill_height(v_here, wt_, temperature_), wt_.sigma, local_step_};
                pending_.append(h);
                new_hills.push_back(std::move(h));
                integ_->refresh_force();
            }
            if (local_step_ % save_stride == 0) save(traj);
        }
    }

    // Pull hills [seen_, shared.size()) into the snapshot and drop the
    // pending list (its hills are part of the shared list by now).
    void refresh(const std::vector<Hill>& shared) {
        for (std::size_t k = seen_; k < shared.size(); ++k) snap_.append(shared[k]);
        seen_ = shared.size();
        pending_ = BiasPotential(cvs_.size(), wt_.cv_period);
        integ_->refresh_force();
    }

    void save_initial(Trajectory& traj) { save(traj); }

    Vec cv_point(const Vec& q) const {
        Frame f{q, local_step_};
        Vec s(cvs_.size());
        for (std::size_t d = 0; d < cvs_.size(); ++d) s[d] = cvs_[d].value(f);
        return s;
    }

    double bias_value(const Vec& s) const {
        return snap_.value(s) + pending_.evaluate_exact(s, pending_.hills().size()).first;
    }

    long local_step() const { return local_step_; }

private:
    void wrap() {
        if (!pot_.periodic()) return;
        for (std::size_t i = 0; i < integ_->q().size(); ++i)
            if (pot_.period(i) > 0.0) integ_->q()[i] = wrap_angle(integ_->q()[i]);
    }

    Vec total_force(const Vec& q) const {
        auto [u, g] = pot_.energy_gradient(q);
        if (!std::isfinite(u)) throw SimulationDivergedError("non-finite energy", local_step_);
        Vec force(q.size());
        for (std::size_t i = 0; i < q.size(); ++i) force[i] = -g[i];
        Frame f{q, local_step_};
        Vec s(cvs_.size());
        std::vector<CVValue> cvv(cvs_.size());
        for (std::size_t d = 0; d < cvs_.size(); ++d) {
            cvv[d] = cvs_[d].value_and_gradient(f);
            s[d] = cvv[d].value;
        }
        const auto [vs, dvds] = eval_bias(s);
        (void)vs;
        for (std::size_t d = 0; d < cvs_.size(); ++d)
            axpy(-dvds[d], cvv[d].gradient, force);
        return force;
    }

    std::pair<double, Vec> eval_bias(const Vec& s) const {
        auto [v1, g1] = snap_.evaluate(s);
        auto [v2, g2] = pending_.evaluate_exact(s, pending_.hills().size());
        for (std::size_t d = 0; d < g1.size(); ++d) g1[d] += g2[d];
        return {v1 + v2, std::move(g1)};
    }

    void save(Trajectory& traj) {
        const Vec& q = integ_->q();
        const Vec s = cv_point(q);
        traj.frames.push_back(q);
        traj.bias_at_frame.push_back(bias_value(s));
        traj.cv_series.push_back(s);
        traj.steps.push_back(local_step_);
    }

    const ToyPotential& pot_;
    const std::vector<CollectiveVariable>& cvs_;
    WellTemperedParams wt_;
    BiasPotential snap_;      // shared prefix (may be grid-cached)
    BiasPotential pending_;   // own hills since the last barrier (exact)
    std::size_t seen_ = 0;
    double temperature_;
    long local_step_ = 0;
    std::unique_ptr<LangevinIntegrator> integ_;
};

}  // namespace detail

inline MultiwalkerResult multiwalker_run(const ToyPotential& pot,
                                         const std::vector<CollectiveVariable>& cvs,
                                         const std::vector<LangevinParams>& lps,
                                         const WellTemperedParams& wt, const MetadRunConfig& cfg,
                                         const std::vector<Vec>& q0s) {
    if (cvs.empty() || cvs.size() > 3)
        throw InvalidArgumentError("metadynamics supports 1 to 3 CVs, got " +
                                   std::to_string(cvs.size()));
    wt.validate(cvs.size());
    if (lps.empty()) throw InvalidArgumentError("need at least one walker");
    if (lps.size() != q0s.size())
        throw InvalidArgumentError("walker parameter and start-point counts differ");
    for (std::size_t i = 0; i < lps.size(); ++i)
        for (std::size_t j = i + 1; j < lps.size(); ++j)
            if (lps[i].seed == lps[j].seed)
                throw InvalidArgumentError("walker seeds must be distinct");
    if (cfg.steps < 1) throw InvalidArgumentError("steps must be >= 1");
    if (cfg.save_stride < 1) throw InvalidArgumentError("save_stride must be >= 1");
    const long read_stride = cfg.read_stride > 0 ? cfg.read_stride : wt.deposit_stride;

    const std::size_t n = lps.size();
    std::vector<std::unique_ptr<detail::MetadWalker>> walkers;
    MultiwalkerResult out;
    out.shared_bias = BiasPotential(cvs.size(), wt.cv_period);
    out.trajectories.resize(n);
    for (std::size_t w = 0; w < n; ++w) {
        walkers.push_back(std::make_unique<detail::MetadWalker>(pot, cvs, lps[w], wt, cfg.grid,
                                                                q0s[w]));
        walkers[w]->save_initial(out.trajectories[w]);
    }

    std::vector<std::vector<Hill>> chunk_hills(n);
    for (long done = 0; done < cfg.steps;) {
        const long chunk = std::min(read_stride, cfg.steps - done);
        if (cfg.parallel && n > 1) {
            std::vector<std::thread> threads;
            std::vector<std::exception_ptr> errors(n);
            for (std::size_t w = 0; w < n; ++w) {
                threads.emplace_back([&, w] {
                    try {
                        walkers[w]->advance(chunk, cfg.save_stride, out.trajectories[w],
                                            chunk_hills[w]);
                    } catch (...) {
                        errors[w] = std::current_exception();
                    }
                });
            }
            for (auto& t : threads) t.join();
            for (auto& e : errors)
                if (e) std::rethrow_exception(e);
        } else {
            for (std::size_t w = 0; w < n; ++w)
                walkers[w]->advance(chunk, cfg.save_stride, out.trajectories[w], chunk_hills[w]);
        }
        // Barrier: merge deposits in walker order, then refresh snapshots.
        for (std::size_t w = 0; w < n; ++w) {
            for (Hill& h : chunk_hills[w]) out.shared_bias.append(std::move(h));
            chunk_hills[w].clear();
        }
        for (std::size_t w = 0; w < n; ++w) walkers[w]->refresh(out.shared_bias.hills());
        done += chunk;
    }
    return out;
}

inline std::pair<Trajectory, BiasPotential> run_metadynamics(
    const ToyPotential& pot, const std::vector<CollectiveVariable>& cvs,
    const LangevinParams& lp, const WellTemperedParams& wt, long steps, long save_stride,
    const Vec& q0, const std::optional<BiasGridSpec>& grid = std::nullopt) {
    MetadRunConfig cfg;
    cfg.steps = steps;
    cfg.save_stride = save_stride;
    cfg.grid = grid;
    MultiwalkerResult res = multiwalker_run(pot, cvs, {lp}, wt, cfg, {q0});
    return {std::move(res.trajectories[0]), std::move(res.shared_bias)};
}

// --- bias exchange -------------------------------------------------------------

struct WalkerState {
    Vec q;
    Vec v;
};

struct ExchangeDecision {
    bool accepted = false;
    double delta = 0.0;   // energy difference entering the Metropolis rule
};

// Metropolis swap of two walkers biased along (possibly) different CVs.
// Delta = [V_i(s_i(q_j)) + V_j(s_j(q_i))] - [V_i(s_i(q_i)) + V_j(s_j(q_j))];
// accepted with probability min(1, exp(-Delta/T)). Velocities travel with
// the coordinates (both walkers share the same temperature).
inline ExchangeDecision bias_exchange_swap(WalkerState& wi, WalkerState& wj,
                                           const BiasPotential& bias_i,
                                           const BiasPotential& bias_j,
                                           const std::vector<CollectiveVariable>& cvs_i,
                                           const std::vector<CollectiveVariable>& cvs_j,
                                           double temperature, std::mt19937_64& rng) {
    auto cv_point = [](const std::vector<CollectiveVariable>& cvs, const Vec& q) {
        Frame f{q, 0};
        Vec s(cvs.size());
        for (std::size_t d = 0; d < cvs.size(); ++d) s[d] = cvs[d].value(f);
        return s;
    };
    const double vii = bias_i.value(cv_point(cvs_i, wi.q));
    const double vij = bias_i.value(cv_point(cvs_i, wj.q));
    const double vjj = bias_j.value(cv_point(cvs_j, wj.q));
    const double vji = bias_j.value(cv_point(cvs_j, wi.q));
    ExchangeDecision d;
    d.delta = (vij + vji) - (vii + vjj);
    const double acc = std::min(1.0, std::exp(-d.delta / temperature));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    d.accepted = u(rng) < acc;
    if (d.accepted) {
        std::swap(wi.q, wj.q);
        std::swap(wi.v, wj.v);
    }
    return d;
}

}  // namespace mlcv
