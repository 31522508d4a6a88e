#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "mlcv/colvar.hpp"
#include "mlcv/metad.hpp"
#include "mlcv/reweight.hpp"

using namespace mlcv;

namespace {

Trajectory synthetic_traj(const std::vector<double>& cvs, const std::vector<double>& bias) {
    Trajectory t;
    for (std::size_t i = 0; i < cvs.size(); ++i) {
        t.frames.push_back(Vec{cvs[i]});
        t.cv_series.push_back(Vec{cvs[i]});
        t.bias_at_frame.push_back(bias.empty() ? 0.0 : bias[i]);
        t.steps.push_back(static_cast<long>(i));
    }
    return t;
}

WellTemperedParams wt1d() {
    WellTemperedParams wt;
    wt.w0 = 1.0;
    wt.gamma = 8.0;
    wt.sigma = {0.1};
    wt.deposit_stride = 200;
    return wt;
}

void check_normalized(const Vec& w) {
    for (double x : w) REQUIRE(x >= 0.0);
    CHECK(std::abs(pairwise_sum(w) - 1.0) <= 1e-12);
}

}  // namespace

TEST_CASE("zero bias gives uniform weights from both estimators") {
    const Trajectory t = synthetic_traj({-1.0, -0.5, 0.0, 0.5, 1.0}, {});
    const BiasPotential empty(1);

    const Vec lb = lastbias_weights(t, empty, 1.0);
    check_normalized(lb);
    for (double w : lb) CHECK(w == Catch::Approx(0.2).margin(1e-14));

    ReweightGrid grid{{-2.0}, {2.0}, {101}};
    const Vec tw = tiwary_weights(t, empty, wt1d(), 1.0, grid);
    check_normalized(tw);
    for (double w : tw) CHECK(w == Catch::Approx(0.2).margin(1e-14));
}

TEST_CASE("last-bias weight ratios follow exp(beta V)") {
    const double T = 0.7;
    BiasPotential bias(1);
    bias.append(Hill{{0.0}, T * std::log(2.0), {0.25}, 0});
    // frame 0 at the hill center (V = T ln 2), frame 1 far away (V ~ 0)
    const Trajectory t = synthetic_traj({0.0, 40.0}, {});
    const Vec w = lastbias_weights(t, bias, T);
    check_normalized(w);
    CHECK(w[0] / w[1] == Catch::Approx(2.0).margin(1e-12));
}

TEST_CASE("adding a near-constant offset to the final bias changes nothing") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    BiasPotential bias(1);
    for (int k = 0; k < 10; ++k) bias.append(Hill{{u(rng)}, 0.4, {0.3}, k});
    BiasPotential shifted = bias;
    shifted.append(Hill{{0.0}, 5.0, {1e9}, 10});   // flat over the visited range

    std::vector<double> pts;
    for (int i = 0; i < 20; ++i) pts.push_back(u(rng));
    const Trajectory t = synthetic_traj(pts, {});
    const Vec a = lastbias_weights(t, bias, 1.0);
    const Vec b = lastbias_weights(t, shifted, 1.0);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == Catch::Approx(b[i]).margin(1e-12));
}

TEST_CASE("tiwary: frames after the last hill with equal bias get equal weight") {
    BiasPotential bias(1);
    bias.append(Hill{{0.0}, 1.0, {0.5}, 10});
    bias.append(Hill{{0.2}, 0.8, {0.5}, 20});
    Trajectory t;
    for (int i = 0; i < 4; ++i) {
        t.frames.push_back(Vec{0.1});
        t.cv_series.push_back(Vec{0.1});
        t.bias_at_frame.push_back(bias.value(Vec{0.1}));
        t.steps.push_back(100 + i);   // all after both hills
    }
    ReweightGrid grid{{-3.0}, {3.0}, {201}};
    const Vec w = tiwary_weights(t, bias, wt1d(), 1.0, grid);
    check_normalized(w);
    for (double x : w) CHECK(x == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("tiwary: grid must cover the visited range") {
    const Trajectory t = synthetic_traj({0.0, 5.0}, {});
    const BiasPotential empty(1);
    ReweightGrid grid{{-1.0}, {1.0}, {51}};
    CHECK_THROWS_AS(tiwary_weights(t, empty, wt1d(), 1.0, grid), GridCoverageError);
}

TEST_CASE("fes from exact Boltzmann samples matches the harmonic reference") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> g(0.0, 1.0);   // Boltzmann for U = q^2/2, T = 1
    const std::size_t n = 1'000'000;
    std::vector<Vec> pts(n);
    for (auto& p : pts) p = Vec{g(rng)};
    const Vec w(n, 1.0 / static_cast<double>(n));

    BinSpec bins{{-6.0}, {6.0}, {120}};
    const Fes est = build_fes(pts, w, bins, 1.0);
    const Fes ref = reference_fes(ToyPotential::harmonic(1.0), {0}, bins, 1.0);

    for (std::size_t b = 0; b < est.f.size(); ++b) {
        if (!est.defined[b]) continue;
        const double c = est.center(0, b);
        if (std::abs(c) > 2.0) continue;
        CHECK(std::abs(est.f[b] - ref.f[b]) <= 0.1);
    }
}

TEST_CASE("uniform samples give a flat fes") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t n = 1'000'000;
    std::vector<Vec> pts(n);
    for (auto& p : pts) p = Vec{u(rng)};
    const Vec w(n, 1.0 / static_cast<double>(n));
    const Fes est = build_fes(pts, w, BinSpec{{0.0}, {1.0}, {10}}, 1.0);
    for (std::size_t b = 0; b < est.f.size(); ++b) {
        REQUIRE(est.defined[b]);
        CHECK(est.f[b] <= 0.05);
    }
}

TEST_CASE("fes bookkeeping") {
    SECTION("single occupied bin") {
        const std::vector<Vec> pts{Vec{0.55}};
        const Fes est = build_fes(pts, Vec{1.0}, BinSpec{{0.0}, {1.0}, {10}}, 1.0);
        for (std::size_t b = 0; b < est.f.size(); ++b) {
            if (b == 5) {
                CHECK(est.defined[b]);
                CHECK(est.f[b] == 0.0);
            } else {
                CHECK(!est.defined[b]);
            }
        }
    }
    SECTION("point outside the bins") {
        const std::vector<Vec> pts{Vec{2.0}};
        CHECK_THROWS_AS(build_fes(pts, Vec{1.0}, BinSpec{{0.0}, {1.0}, {10}}, 1.0),
                        InvalidInputError);
    }
    SECTION("unnormalized weights rejected") {
        const std::vector<Vec> pts{Vec{0.5}, Vec{0.6}};
        CHECK_THROWS_AS(build_fes(pts, Vec{1.0, 1.0}, BinSpec{{0.0}, {1.0}, {10}}, 1.0),
                        InvalidInputError);
    }
    SECTION("fes csv writes undefined bins as empty fields") {
        const std::vector<Vec> pts{Vec{0.55}};
        const Fes est = build_fes(pts, Vec{1.0}, BinSpec{{0.0}, {1.0}, {2}}, 1.0);
        write_fes_csv("fes_test.csv", est, {"q"});
        std::ifstream f("fes_test.csv");
        std::string header, l1, l2;
        std::getline(f, header);
        std::getline(f, l1);
        std::getline(f, l2);
        CHECK(header == "q,F,count");
        CHECK(l1 == "0.25,,0");
        CHECK(l2.find("0.75,0,1") == 0);
        std::remove("fes_test.csv");
    }
}

TEST_CASE("reference fes") {
    SECTION("harmonic: exactly the potential, shifted over the grid") {
        BinSpec bins{{-2.0}, {2.0}, {21}};
        const ToyPotential p = ToyPotential::harmonic(2.0);
        const Fes ref = reference_fes(p, {0}, bins, 1.0);
        double umin = 1e300;
        for (std::size_t b = 0; b < ref.f.size(); ++b)
            umin = std::min(umin, p.energy(Vec{ref.center(0, b)}));
        for (std::size_t b = 0; b < ref.f.size(); ++b) {
            const double q = ref.center(0, b);
            CHECK(ref.f[b] == Catch::Approx(q * q - umin).margin(1e-12));
        }
    }
    SECTION("double well: identity with the potential, shifted over the grid") {
        BinSpec bins{{-1.5}, {1.5}, {30}};
        const ToyPotential p = ToyPotential::double_well(6.0);
        const Fes ref = reference_fes(p, {0}, bins, 1.0);
        double umin = 1e300;
        for (std::size_t b = 0; b < ref.f.size(); ++b)
            umin = std::min(umin, p.energy(Vec{ref.center(0, b)}));
        for (std::size_t b = 0; b < ref.f.size(); ++b) {
            const double q = ref.center(0, b);
            CHECK(ref.f[b] == Catch::Approx(p.energy(Vec{q}) - umin).margin(1e-9));
        }
    }
    SECTION("torus marginal over psi: basin gap stable under grid doubling") {
        BinSpec bins{{-std::numbers::pi}, {std::numbers::pi}, {72}};
        const ToyPotential p = ToyPotential::rama_torus();
        const Fes a = reference_fes(p, {0}, bins, 1.0, 128);
        const Fes b = reference_fes(p, {0}, bins, 1.0, 256);
        double worst = 0.0;
        for (std::size_t k = 0; k < a.f.size(); ++k)
            worst = std::max(worst, std::abs(a.f[k] - b.f[k]));
        CHECK(worst <= 1e-3);
    }
}

TEST_CASE("estimators agree with each other and the oracle on a converged run") {
    const ToyPotential p = ToyPotential::double_well(6.0);
    LangevinParams lp;
    lp.seed = 31415;
    WellTemperedParams wt = wt1d();

    std::vector<CollectiveVariable> cvs;
    cvs.push_back(CollectiveVariable::raw_coordinate(0, false));
    auto [traj, bias] = run_metadynamics(p, cvs, lp, wt, 800'000, 20, Vec{-1.0});

    const ReweightGrid grid = default_reweight_grid(traj, wt.sigma);
    const Vec tw = tiwary_weights(traj, bias, wt, 1.0, grid);
    const Vec lw = lastbias_weights(traj, bias, 1.0);
    check_normalized(tw);
    check_normalized(lw);

    std::vector<Vec> pts(traj.frames.begin(), traj.frames.end());
    double qlo = pts[0][0], qhi = qlo;
    for (const Vec& q : pts) {
        qlo = std::min(qlo, q[0]);
        qhi = std::max(qhi, q[0]);
    }
    BinSpec bins{{qlo - 1e-9}, {qhi + 1e-9}, {50}};
    const Fes ft = build_fes(pts, tw, bins, 1.0);
    const Fes fl = build_fes(pts, lw, bins, 1.0);
    const Fes ref = reference_fes(p, {0}, bins, 1.0);

    const FesComparison agree = compare_fes(ft, fl, 5.0);
    INFO("tiwary vs lastbias: max " << agree.max_abs << " over " << agree.bins_compared);
    CHECK(agree.bins_compared > 10);
    CHECK(agree.max_abs <= 0.3);

    const FesComparison vs_ref_t = compare_fes(ft, ref, 5.0);
    const FesComparison vs_ref_l = compare_fes(fl, ref, 5.0);
    INFO("tiwary vs ref rms " << vs_ref_t.rms << ", lastbias vs ref rms " << vs_ref_l.rms);
    CHECK(vs_ref_t.rms <= 1.0);
    CHECK(vs_ref_l.rms <= 1.0);
}
