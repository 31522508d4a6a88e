#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "mlcv/metad.hpp"
#include "mlcv/transitions.hpp"

using namespace mlcv;

TEST_CASE("toy potential values and gradients") {
    SECTION("double well") {
        const ToyPotential p = ToyPotential::double_well(6.0);
        CHECK(p.energy(Vec{1.0}) == 0.0);
        CHECK(p.energy(Vec{-1.0}) == 0.0);
        CHECK(p.energy(Vec{0.0}) == Catch::Approx(6.0));
    }
    SECTION("harmonic") {
        const ToyPotential p = ToyPotential::harmonic(3.0);
        auto [u, g] = p.energy_gradient(Vec{2.0});
        CHECK(u == Catch::Approx(6.0));
        CHECK(g[0] == Catch::Approx(6.0));
    }
    SECTION("torus periodicity") {
        const ToyPotential p = ToyPotential::rama_torus();
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> u(-3.0, 3.0);
        for (int rep = 0; rep < 50; ++rep) {
            const double phi = u(rng), psi = u(rng);
            const double base = p.energy(Vec{phi, psi});
            CHECK(std::abs(p.energy(Vec{phi + 2 * std::numbers::pi, psi}) - base) <= 1e-12);
            CHECK(std::abs(p.energy(Vec{phi, psi - 2 * std::numbers::pi}) - base) <= 1e-12);
        }
    }
    SECTION("gradients match finite differences") {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> u(-2.5, 2.5);
        const std::vector<ToyPotential> pots{ToyPotential::double_well(4.0),
                                             ToyPotential::harmonic(2.0, 2),
                                             ToyPotential::rama_torus()};
        for (const auto& p : pots) {
            for (int rep = 0; rep < 40; ++rep) {
                Vec q(p.dim());
                for (double& x : q) x = u(rng);
                auto [e, g] = p.energy_gradient(q);
                for (std::size_t k = 0; k < q.size(); ++k) {
                    Vec qp = q, qm = q;
                    qp[k] += 1e-6;
                    qm[k] -= 1e-6;
                    const double fd = (p.energy(qp) - p.energy(qm)) / 2e-6;
                    CHECK(std::abs(fd - g[k]) / std::max({std::abs(fd), std::abs(g[k]), 1.0}) <=
                          1e-6);
                }
            }
        }
    }
}

TEST_CASE("baoab basics") {
    SECTION("zero temperature, zero force, zero velocity: frozen") {
        LangevinParams lp;
        lp.temperature = 0.0;
        lp.dt = 0.01;
        LangevinIntegrator integ(lp, Vec{0.7}, [](const Vec&) { return Vec{0.0}; });
        for (int s = 0; s < 100; ++s) integ.step();
        CHECK(integ.q()[0] == 0.7);
    }
    SECTION("equipartition on the harmonic oscillator") {
        const ToyPotential p = ToyPotential::harmonic(1.0);
        LangevinParams lp;
        lp.dt = 0.01;
        lp.friction = 1.0;
        lp.temperature = 1.0;
        lp.seed = 2024;
        const Trajectory t = run_unbiased(p, lp, 1'000'000, 10, Vec{0.0});
        double var = 0.0, mean = 0.0;
        for (const Vec& f : t.frames) mean += f[0];
        mean /= static_cast<double>(t.size());
        for (const Vec& f : t.frames) var += (f[0] - mean) * (f[0] - mean);
        var /= static_cast<double>(t.size());
        CHECK(var > 0.95);
        CHECK(var < 1.05);
        // mean within 3 standard errors of zero (correlation-inflated)
        const double se = std::sqrt(var / static_cast<double>(t.size())) * 15.0;
        CHECK(std::abs(mean) < 3.0 * se);
    }
    SECTION("large friction decorrelates the velocity in one step") {
        LangevinParams lp;
        lp.dt = 0.01;
        lp.friction = 1000.0;
        lp.temperature = 1.0;
        lp.seed = 7;
        const ToyPotential p = ToyPotential::harmonic(1.0);
        LangevinIntegrator integ(lp, Vec{0.0}, [&](const Vec& q) {
            auto [e, g] = p.energy_gradient(q);
            return Vec{-g[0]};
        });
        std::vector<double> vs;
        for (int s = 0; s < 100000; ++s) {
            integ.step();
            vs.push_back(integ.v()[0]);
        }
        double m = 0.0;
        for (double v : vs) m += v;
        m /= static_cast<double>(vs.size());
        double c0 = 0.0, c1 = 0.0;
        for (std::size_t i = 0; i + 1 < vs.size(); ++i) {
            c0 += (vs[i] - m) * (vs[i] - m);
            c1 += (vs[i] - m) * (vs[i + 1] - m);
        }
        CHECK(std::abs(c1 / c0) < 0.01);
    }
    SECTION("save stride bookkeeping") {
        const ToyPotential p = ToyPotential::harmonic(1.0);
        LangevinParams lp;
        lp.seed = 1;
        const Trajectory t = run_unbiased(p, lp, 500, 500, Vec{0.0});
        CHECK(t.size() == 2);   // initial frame plus one
        CHECK(t.steps.front() == 0);
        CHECK(t.steps.back() == 500);
    }
    SECTION("deep well at low temperature never escapes") {
        const ToyPotential p = ToyPotential::double_well(6.0);
        LangevinParams lp;
        lp.temperature = 0.5;
        lp.seed = 11;
        const Trajectory t = run_unbiased(p, lp, 100'000, 10, Vec{-1.0});
        const std::vector<BasinCore> cores{{{-1.0}, 0.35}, {{1.0}, 0.35}};
        const TransitionCounts c = count_transitions(t, cores);
        CHECK(c.transitions(0, 1) == 0);
    }
}

TEST_CASE("well-tempered hill height schedule") {
    WellTemperedParams wt;
    wt.w0 = 1.0;
    wt.gamma = 8.0;
    wt.sigma = {0.1};
    CHECK(wt_hill_height(0.0, wt, 1.0) == 1.0);
    CHECK(wt_hill_height(7.0, wt, 1.0) == Catch::Approx(std::exp(-1.0)));
    WellTemperedParams huge = wt;
    huge.gamma = 1e12;
    CHECK(wt_hill_height(25.0, huge, 1.0) == Catch::Approx(1.0));
}

TEST_CASE("hill deposition") {
    WellTemperedParams wt;
    wt.w0 = 1.0;
    wt.gamma = 8.0;
    wt.sigma = {0.2};

    SECTION("first hill lands at exactly w0") {
        BiasPotential bias(1);
        deposit_hill(bias, Vec{0.3}, wt, 1.0);
        REQUIRE(bias.hills().size() == 1);
        CHECK(bias.hills()[0].height == 1.0);
    }
    SECTION("pinned point: strictly decreasing heights, bounded by (0, w0]") {
        BiasPotential bias(1);
        for (int k = 0; k < 50; ++k) deposit_hill(bias, Vec{0.0}, wt, 1.0);
        for (std::size_t k = 1; k < 50; ++k) {
            CHECK(bias.hills()[k].height < bias.hills()[k - 1].height);
            CHECK(bias.hills()[k].height > 0.0);
            CHECK(bias.hills()[k].height <= wt.w0);
        }
    }
    SECTION("far-apart deposits both land near w0") {
        BiasPotential bias(1);
        deposit_hill(bias, Vec{0.0}, wt, 1.0);
        deposit_hill(bias, Vec{10.0 * wt.sigma[0]}, wt, 1.0);
        CHECK(bias.hills()[1].height >= wt.w0 * (1.0 - 1e-12));
    }
    SECTION("dimension mismatch") {
        BiasPotential bias(2);
        CHECK_THROWS_AS(deposit_hill(bias, Vec{0.0}, wt, 1.0), InvalidInputError);
    }
}

TEST_CASE("bias evaluation") {
    SECTION("no hills") {
        BiasPotential bias(2);
        auto [v, g] = bias.evaluate(Vec{0.1, 0.2});
        CHECK(v == 0.0);
        CHECK(g[0] == 0.0);
        CHECK(g[1] == 0.0);
    }
    SECTION("hill center: value = height, zero gradient") {
        BiasPotential bias(2);
        bias.append(Hill{{0.5, -0.5}, 0.8, {0.2, 0.3}, 0});
        auto [v, g] = bias.evaluate(Vec{0.5, -0.5});
        CHECK(v == Catch::Approx(0.8));
        CHECK(std::abs(g[0]) <= 1e-15);
        CHECK(std::abs(g[1]) <= 1e-15);
    }
    SECTION("gradient matches finite differences on random hill sets") {
        std::mt19937_64 rng(17);
        std::uniform_real_distribution<double> u(-1.5, 1.5);
        std::uniform_real_distribution<double> uh(0.1, 1.0);
        BiasPotential bias(2);
        for (int k = 0; k < 40; ++k)
            bias.append(Hill{{u(rng), u(rng)}, uh(rng), {0.25, 0.4}, k});
        for (int rep = 0; rep < 50; ++rep) {
            const Vec s{u(rng), u(rng)};
            auto [v, g] = bias.evaluate(s);
            for (std::size_t d = 0; d < 2; ++d) {
                Vec sp = s, sm = s;
                sp[d] += 1e-6;
                sm[d] -= 1e-6;
                const double fd = (bias.value(sp) - bias.value(sm)) / 2e-6;
                CHECK(std::abs(fd - g[d]) / std::max({std::abs(fd), std::abs(g[d]), 1.0}) <= 1e-6);
            }
        }
    }
    SECTION("periodic kernel wraps exactly") {
        const double period = 2.0 * std::numbers::pi;
        BiasPotential bias(1, {period});
        bias.append(Hill{{3.0}, 1.0, {0.4}, 0});
        std::mt19937_64 rng(23);
        std::uniform_real_distribution<double> u(-3.1, 3.1);
        for (int rep = 0; rep < 50; ++rep) {
            const double s = u(rng);
            CHECK(std::abs(bias.value(Vec{s}) - bias.value(Vec{s + period})) <= 1e-12);
        }
    }
}

TEST_CASE("bias grid cache tracks exact summation") {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> uh(0.2, 1.0);

    BiasPotential exact(1, {2.0 * std::numbers::pi});
    BiasPotential cached(1, {2.0 * std::numbers::pi});
    // spacing sigma/10
    cached.enable_grid(Vec{-std::numbers::pi}, Vec{std::numbers::pi}, {315});
    for (int k = 0; k < 60; ++k) {
        Hill h{{u(rng) * 3.0}, uh(rng), {0.2}, k};
        exact.append(h);
        cached.append(h);
    }
    for (int rep = 0; rep < 200; ++rep) {
        const Vec s{u(rng) * 3.1};
        const double ve = exact.value(s);
        const double vc = cached.value(s);
        CHECK(std::abs(ve - vc) <= 5e-3 * std::max(1.0, ve));
    }
    // outside the grid: exact fallback, zero error
    BiasPotential part(1);
    part.enable_grid(Vec{-1.0}, Vec{1.0}, {201});
    part.append(Hill{{0.9}, 1.0, {0.2}, 0});
    CHECK(part.value(Vec{1.5}) == part.evaluate_exact(Vec{1.5}, 1).first);
}

TEST_CASE("hills file round trip") {
    BiasPotential bias(2, {0.0, 2.0 * std::numbers::pi});
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int k = 0; k < 25; ++k)
        bias.append(Hill{{u(rng), u(rng)}, 0.3 + 0.1 * k, {0.15, 0.25}, 10 * k});
    write_hills("hills_test.txt", bias, 8.0);
    const HillsFile back = read_hills("hills_test.txt", 2, {0.0, 2.0 * std::numbers::pi});
    CHECK(back.gamma == 8.0);
    REQUIRE(back.bias.hills().size() == 25);
    for (std::size_t k = 0; k < 25; ++k) {
        CHECK(back.bias.hills()[k].center == bias.hills()[k].center);
        CHECK(back.bias.hills()[k].height == bias.hills()[k].height);
        CHECK(back.bias.hills()[k].step == bias.hills()[k].step);
    }
    std::remove("hills_test.txt");
}

namespace {

WellTemperedParams dw_wt() {
    WellTemperedParams wt;
    wt.w0 = 1.0;
    wt.gamma = 8.0;
    wt.sigma = {0.1};
    wt.deposit_stride = 400;
    return wt;
}

std::vector<CollectiveVariable> raw_cv() {
    std::vector<CollectiveVariable> cvs;
    cvs.push_back(CollectiveVariable::raw_coordinate(0, false));
    return cvs;
}

}  // namespace

TEST_CASE("metadynamics run plumbing") {
    const ToyPotential p = ToyPotential::double_well(6.0);
    LangevinParams lp;
    lp.seed = 5;

    SECTION("no deposits within budget: identical to the unbiased run") {
        WellTemperedParams wt = dw_wt();
        wt.deposit_stride = 100000;   // beyond the budget below
        auto [traj, bias] = run_metadynamics(p, raw_cv(), lp, wt, 2000, 100, Vec{-1.0});
        CHECK(bias.hills().empty());
        const Trajectory ref = run_unbiased(p, lp, 2000, 100, Vec{-1.0});
        REQUIRE(traj.size() == ref.size());
        for (std::size_t i = 0; i < traj.size(); ++i) CHECK(traj.frames[i] == ref.frames[i]);
    }
    SECTION("more than three CVs rejected") {
        std::vector<CollectiveVariable> cvs;
        for (int k = 0; k < 4; ++k) cvs.push_back(CollectiveVariable::raw_coordinate(0, false));
        CHECK_THROWS_AS(run_metadynamics(p, cvs, lp, dw_wt(), 100, 10, Vec{-1.0}),
                        InvalidArgumentError);
    }
    SECTION("hill deposit count follows the stride") {
        auto [traj, bias] = run_metadynamics(p, raw_cv(), lp, dw_wt(), 4000, 400, Vec{-1.0});
        CHECK(bias.hills().size() == 10);
        CHECK(traj.size() == 11);
        CHECK(all_finite(traj.bias_at_frame));
    }
}

TEST_CASE("metadynamics accelerates double-well hopping") {
    const ToyPotential p = ToyPotential::double_well(6.0);
    LangevinParams lp;
    lp.seed = 2718;
    lp.temperature = 0.5;
    const std::vector<BasinCore> cores{{{-1.0}, 0.3}, {{1.0}, 0.3}};

    WellTemperedParams wt = dw_wt();
    wt.sigma = {0.1};
    auto [traj, bias] = run_metadynamics(p, raw_cv(), lp, wt, 500'000, 100, Vec{-1.0});
    const TransitionCounts biased = count_transitions(traj, cores);
    const std::size_t biased_crossings = biased.transitions(0, 1) + biased.transitions(1, 0);

    const Trajectory ref = run_unbiased(p, lp, 500'000, 100, Vec{-1.0});
    const TransitionCounts unbiased = count_transitions(ref, cores);
    const std::size_t unbiased_crossings = unbiased.transitions(0, 1) + unbiased.transitions(1, 0);

    CHECK(biased_crossings >= 10);
    CHECK(unbiased_crossings <= 1);

    // well-tempered convergence: late hills are strongly tempered
    const auto& hills = bias.hills();
    const std::size_t tail = hills.size() / 10;
    double mean_tail = 0.0;
    for (std::size_t k = hills.size() - tail; k < hills.size(); ++k) mean_tail += hills[k].height;
    mean_tail /= static_cast<double>(tail);
    CHECK(mean_tail < 0.2 * wt.w0);
}

TEST_CASE("multi-walker shared bias") {
    const ToyPotential p = ToyPotential::double_well(6.0);
    WellTemperedParams wt = dw_wt();
    wt.deposit_stride = 50;

    SECTION("one walker reproduces the single-walker driver bit for bit") {
        LangevinParams lp;
        lp.seed = 33;
        auto [traj, bias] = run_metadynamics(p, raw_cv(), lp, wt, 5000, 100, Vec{-1.0});
        MetadRunConfig cfg;
        cfg.steps = 5000;
        cfg.save_stride = 100;
        const MultiwalkerResult multi = multiwalker_run(p, raw_cv(), {lp}, wt, cfg, {Vec{-1.0}});
        REQUIRE(multi.trajectories.size() == 1);
        REQUIRE(multi.trajectories[0].size() == traj.size());
        for (std::size_t i = 0; i < traj.size(); ++i)
            CHECK(multi.trajectories[0].frames[i] == traj.frames[i]);
        CHECK(multi.shared_bias.hills().size() == bias.hills().size());
    }
    SECTION("four walkers: all deposits land in the shared list") {
        std::vector<LangevinParams> lps(4);
        for (int w = 0; w < 4; ++w) lps[w].seed = 100 + w;
        MetadRunConfig cfg;
        cfg.steps = 2000;
        cfg.save_stride = 500;
        const std::vector<Vec> q0s(4, Vec{-1.0});
        const MultiwalkerResult multi = multiwalker_run(p, raw_cv(), lps, wt, cfg, q0s);
        CHECK(multi.shared_bias.hills().size() == 4 * (2000 / wt.deposit_stride));
    }
    SECTION("parallel walkers match the sequential schedule bit for bit") {
        std::vector<LangevinParams> lps(3);
        for (int w = 0; w < 3; ++w) lps[w].seed = 55 + w;
        MetadRunConfig cfg;
        cfg.steps = 3000;
        cfg.save_stride = 300;
        const std::vector<Vec> q0s(3, Vec{-1.0});
        MetadRunConfig par = cfg;
        par.parallel = true;
        const MultiwalkerResult a = multiwalker_run(p, raw_cv(), lps, wt, cfg, q0s);
        const MultiwalkerResult b = multiwalker_run(p, raw_cv(), lps, wt, par, q0s);
        for (std::size_t w = 0; w < 3; ++w) {
            REQUIRE(a.trajectories[w].size() == b.trajectories[w].size());
            for (std::size_t i = 0; i < a.trajectories[w].size(); ++i)
                CHECK(a.trajectories[w].frames[i] == b.trajectories[w].frames[i]);
        }
        REQUIRE(a.shared_bias.hills().size() == b.shared_bias.hills().size());
        for (std::size_t k = 0; k < a.shared_bias.hills().size(); ++k)
            CHECK(a.shared_bias.hills()[k].center == b.shared_bias.hills()[k].center);
    }
    SECTION("duplicate walker seeds rejected") {
        std::vector<LangevinParams> lps(2);
        lps[0].seed = lps[1].seed = 9;
        MetadRunConfig cfg;
        cfg.steps = 100;
        CHECK_THROWS_AS(multiwalker_run(p, raw_cv(), lps, wt, cfg, {Vec{-1.0}, Vec{1.0}}),
                        InvalidArgumentError);
    }
    SECTION("shared bias reaches the far well sooner than a lone walker") {
        auto first_arrival = [&](const Trajectory& t) {
            for (std::size_t i = 0; i < t.size(); ++i)
                if (std::abs(t.frames[i][0] - 1.0) < 0.3) return t.steps[i];
            return std::numeric_limits<long>::max();
        };
        MetadRunConfig cfg;
        cfg.steps = 100'000;
        cfg.save_stride = 50;
        long lone_best = std::numeric_limits<long>::max();
        for (int seed = 0; seed < 3; ++seed) {
            LangevinParams lp;
            lp.seed = 1000 + seed;
            lp.temperature = 0.5;
            const MultiwalkerResult solo =
                multiwalker_run(p, raw_cv(), {lp}, wt, cfg, {Vec{-1.0}});
            lone_best = std::min(lone_best, first_arrival(solo.trajectories[0]));
        }
        std::vector<LangevinParams> lps(4);
        for (int w = 0; w < 4; ++w) {
            lps[w].seed = 2000 + w;
            lps[w].temperature = 0.5;
        }
        const MultiwalkerResult multi =
            multiwalker_run(p, raw_cv(), lps, wt, cfg, std::vector<Vec>(4, Vec{-1.0}));
        long multi_first = std::numeric_limits<long>::max();
        for (const auto& t : multi.trajectories)
            multi_first = std::min(multi_first, first_arrival(t));
        CHECK(multi_first < lone_best);
    }
}

TEST_CASE("bias exchange swaps") {
    std::vector<CollectiveVariable> cv = raw_cv();
    std::mt19937_64 rng(202);

    SECTION("identical biases always swap") {
        BiasPotential b(1);
        b.append(Hill{{0.0}, 1.0, {0.3}, 0});
        for (int rep = 0; rep < 20; ++rep) {
            WalkerState wi{{-0.5}, {0.1}};
            WalkerState wj{{0.5}, {-0.2}};
            const ExchangeDecision d = bias_exchange_swap(wi, wj, b, b, cv, cv, 1.0, rng);
            CHECK(d.accepted);
            CHECK(wi.q[0] == 0.5);
            CHECK(wj.q[0] == -0.5);
            CHECK(wi.v[0] == -0.2);
        }
    }
    SECTION("zero bias always swaps") {
        BiasPotential empty(1);
        WalkerState wi{{-1.0}, {0.0}};
        WalkerState wj{{1.0}, {0.0}};
        const ExchangeDecision d = bias_exchange_swap(wi, wj, empty, empty, cv, cv, 1.0, rng);
        CHECK(d.delta == 0.0);
        CHECK(d.accepted);
    }
    SECTION("acceptance rate follows the Metropolis rule") {
        BiasPotential bi(1);
        bi.append(Hill{{1.0}, 2.0, {0.5}, 0});
        BiasPotential bj(1);
        const double vii = bi.value(Vec{0.0});
        const double vij = bi.value(Vec{1.0});
        const double expected = std::min(1.0, std::exp(-((vij - vii) / 1.0)));
        std::size_t accepted = 0;
        const std::size_t trials = 10000;
        for (std::size_t t = 0; t < trials; ++t) {
            WalkerState wi{{0.0}, {0.0}};
            WalkerState wj{{1.0}, {0.0}};
            if (bias_exchange_swap(wi, wj, bi, bj, cv, cv, 1.0, rng).accepted) ++accepted;
        }
        const double rate = static_cast<double>(accepted) / static_cast<double>(trials);
        CHECK(std::abs(rate - expected) <= 0.02);
    }
}

TEST_CASE("transition counting") {
    auto mk_traj = [](std::initializer_list<double> xs) {
        Trajectory t;
        long s = 0;
        for (double x : xs) {
            t.frames.push_back(Vec{x});
            t.steps.push_back(s++);
            t.cv_series.emplace_back();
            t.bias_at_frame.push_back(0.0);
        }
        return t;
    };
    const std::vector<BasinCore> cores{{{-1.0}, 0.2}, {{1.0}, 0.2}};

    SECTION("A -> B -> A: two transitions, one round trip") {
        const Trajectory t = mk_traj({-1.0, -0.5, 0.0, 1.0, 0.3, -1.05});
        const TransitionCounts c = count_transitions(t, cores);
        CHECK(c.transitions(0, 1) == 1);
        CHECK(c.transitions(1, 0) == 1);
        CHECK(c.round_trips(0, 1) == 1);
        CHECK(c.visits[0] == 2);
        CHECK(c.visits[1] == 1);
    }
    SECTION("touching the gap between cores does not count") {
        const Trajectory t = mk_traj({-1.0, -0.4, 0.0, 0.6, -1.0, 0.7, -0.95});
        const TransitionCounts c = count_transitions(t, cores);
        CHECK(c.transitions(0, 1) == 0);
        CHECK(c.round_trips(0, 1) == 0);
    }
    SECTION("overlapping cores rejected") {
        const std::vector<BasinCore> bad{{{-0.1}, 0.2}, {{0.1}, 0.2}};
        const Trajectory t = mk_traj({0.0});
        CHECK_THROWS_AS(count_transitions(t, bad), InvalidArgumentError);
    }
    SECTION("periodic metric") {
        const std::vector<BasinCore> pc{{{-3.0}, 0.3}, {{3.0}, 0.3}};
        Trajectory t = mk_traj({-3.1, 3.1});
        // with the period, -3.1 and 3.1 are ~0.08 apart; cores overlap
        CHECK_THROWS_AS(count_transitions(t, pc, {2.0 * std::numbers::pi}),
                        InvalidArgumentError);
    }
}
