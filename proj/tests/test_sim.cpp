#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "qsrnet/errors.hpp"
#include "qsrnet/matrix.hpp"
#include "qsrnet/network.hpp"
#include "qsrnet/riccati.hpp"
#include "qsrnet/sim.hpp"

using namespace qsrnet;

namespace {

double shape_energy(DistKind kind, double hi, double dt) {
    const long n = std::lround(hi / dt);
    double prev = l2_disturbance(kind, 0.0);
    prev *= prev;
    double acc = 0.0;
    for (long k = 1; k <= n; ++k) {
        double cur = l2_disturbance(kind, k * dt);
        cur *= cur;
        acc += 0.5 * dt * (prev + cur);
        prev = cur;
    }
    return acc;
}

DisturbanceProfile constant_profile(int channels, DistKind kind, double scale) {
    DisturbanceProfile dist;
    dist.kind.assign(channels, kind);
    dist.scale.assign(channels, scale);
    return dist;
}

SwitchingSignal constant_signal(double horizon, int mode = 0) {
    SwitchingSignal sig;
    sig.events.push_back({0.0, mode});
    sig.horizon = horizon;
    return sig;
}

/// One unstable plant/gain pair: x' = 0.2x + u_p, y_c = -0.5 u_c, loop
/// closed through [[0, -1],[1, 0]] so that A_cl = 0.7.
NetworkSpec unstable_pair() {
    Matrix A(1, 1), B(1, 1), K(1, 1), H(2, 2);
    A(0, 0) = 0.2;
    B(0, 0) = 1.0;
    K(0, 0) = -0.5;
    H(0, 1) = -1.0;
    H(1, 0) = 1.0;
    NetworkSpec spec;
    spec.agents = {Agent::dynamic({A, B}), Agent::static_gain(K)};
    spec.modes = {{1, H}};
    return spec;
}

/// Nine-vehicle formation closed-loop family plus its spec.
struct Fleet {
    NetworkSpec spec;
    ClosedLoopFamily fam;
};

Fleet fleet(uint64_t seed) {
    Fleet f;
    f.spec = uav_network(seed);
    f.fam = closed_loop_family(f.spec).value();
    return f;
}

}  // namespace

TEST_CASE("disturbance shapes have unit energy and match closed forms") {
    const double c1 = std::sqrt(4.0 / 3.0);
    const double c2 = std::sqrt(2.0 / std::numbers::pi);
    CHECK(l2_disturbance(DistKind::Bump, 0.0) == 0.0);
    CHECK(l2_disturbance(DistKind::Bump, 1.0) ==
          doctest::Approx(c1 * std::exp(-1.0)).epsilon(1e-14));
    CHECK(l2_disturbance(DistKind::Sinc, 0.0) == doctest::Approx(c2).epsilon(1e-14));
    CHECK(std::abs(l2_disturbance(DistKind::Sinc, std::numbers::pi)) < 1e-15);
    CHECK(l2_disturbance(DistKind::Decay, 0.0) == 1.0);
    CHECK(l2_disturbance(DistKind::Decay, 1.0) == 0.5);

    CHECK(shape_energy(DistKind::Bump, 60.0, 1e-3) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(shape_energy(DistKind::Sinc, 2e4, 1e-3) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(shape_energy(DistKind::Decay, 1e4, 1e-3) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("random disturbance profiles are deterministic per seed") {
    DisturbanceProfile a = random_disturbance(9, 20);
    DisturbanceProfile b = random_disturbance(9, 20);
    REQUIRE(a.channels() == 20);
    CHECK(a.kind == b.kind);
    CHECK(a.scale == std::vector<double>(20, 1.0));
    bool all_same = true;
    for (int c = 1; c < 20; ++c) all_same = all_same && a.kind[c] == a.kind[0];
    CHECK_FALSE(all_same);
    CHECK_THROWS_AS(a.value(20, 0.0), InvalidArgument);
}

TEST_CASE("switching generator respects dwell, modes, and determinism") {
    SwitchingSignal sig = gen_switching(2, 180.0, 15, 4, 1.0);
    REQUIRE(sig.events.size() == 16);
    CHECK(sig.events.front().t == 0.0);
    CHECK(sig.horizon == 180.0);
    for (size_t k = 0; k < sig.events.size(); ++k) {
        CHECK(sig.events[k].mode >= 0);
        CHECK(sig.events[k].mode < 4);
        if (k == 0) continue;
        CHECK(sig.events[k].t - sig.events[k - 1].t >= 1.0 - 1e-9);
        CHECK(sig.events[k].t < 180.0);
        CHECK(sig.events[k].mode != sig.events[k - 1].mode);
    }
    CHECK_NOTHROW(sig.validate(1.0 - 1e-9));

    SwitchingSignal again = gen_switching(2, 180.0, 15, 4, 1.0);
    REQUIRE(again.events.size() == sig.events.size());
    for (size_t k = 0; k < sig.events.size(); ++k) {
        CHECK(again.events[k].t == sig.events[k].t);
        CHECK(again.events[k].mode == sig.events[k].mode);
    }
    SwitchingSignal other = gen_switching(3, 180.0, 15, 4, 1.0);
    bool differs = false;
    for (size_t k = 1; k < other.events.size(); ++k)
        differs = differs || other.events[k].t != sig.events[k].t;
    CHECK(differs);

    SwitchingSignal still = gen_switching(4, 10.0, 0, 1, 1.0);
    REQUIRE(still.events.size() == 1);
    CHECK(still.events[0].t == 0.0);
    CHECK(still.events[0].mode == 0);

    CHECK_THROWS_AS(gen_switching(1, 10.0, 10, 4, 1.0), InvalidArgument);
    CHECK_THROWS_AS(gen_switching(1, 10.0, 3, 1, 1.0), InvalidArgument);
    CHECK_THROWS_AS(gen_switching(1, -5.0, 3, 4, 1.0), InvalidArgument);
    CHECK_THROWS_AS(gen_switching(1, 10.0, 3, 4, 0.0), InvalidArgument);
}

TEST_CASE("switching signal validation rejects malformed schedules") {
    SwitchingSignal ok;
    ok.events = {{0.0, 0}, {1.0, 1}, {2.0, 0}};
    ok.horizon = 10.0;
    CHECK_NOTHROW(ok.validate(1.0));
    CHECK_THROWS_AS(ok.validate(1.5), InvalidArgument);

    SwitchingSignal bad = ok;
    bad.events[0].t = 0.5;
    CHECK_THROWS_AS(bad.validate(0.0), InvalidArgument);

    bad = ok;
    bad.events[2].t = 0.5;
    CHECK_THROWS_AS(bad.validate(0.0), InvalidArgument);

    bad = ok;
    bad.events[2].t = 12.0;
    CHECK_THROWS_AS(bad.validate(0.0), InvalidArgument);

    bad = ok;
    bad.events[1].mode = -1;
    CHECK_THROWS_AS(bad.validate(0.0), InvalidArgument);

    bad = ok;
    bad.horizon = 0.0;
    CHECK_THROWS_AS(bad.validate(0.0), InvalidArgument);

    bad = ok;
    bad.events.clear();
    CHECK_THROWS_AS(bad.validate(0.0), InvalidArgument);

    SwitchingSignal steps;
    steps.events = {{0.0, 2}, {5.0, 0}, {9.0, 1}};
    steps.horizon = 12.0;
    CHECK(steps.mode_at(0.0) == 2);
    CHECK(steps.mode_at(4.999) == 2);
    CHECK(steps.mode_at(5.0) == 0);
    CHECK(steps.mode_at(7.0) == 0);
    CHECK(steps.mode_at(9.0) == 1);
    CHECK(steps.mode_at(11.9) == 1);
}

TEST_CASE("integrator reproduces the free exponential at the protocol step") {
    Matrix A(1, 1), B(1, 1);
    A(0, 0) = -1.0;
    B(0, 0) = 1.0;
    TrajectoryRecord rec =
        simulate(StateSpace{A, B}, constant_profile(1, DistKind::Decay, 0.0), 1.0 / 24, 5.0, {1.0});
    REQUIRE(rec.samples() == 121);
    double worst = 0.0;
    for (int k = 0; k < rec.samples(); ++k) {
        worst = std::max(worst, std::abs(rec.x(k, 0) - std::exp(-rec.t[k])));
        CHECK(rec.u(k, 0) == 0.0);
        CHECK(rec.y(k, 0) == rec.x(k, 0));
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("forced response matches the closed-form convolution") {
    // x' = -x + f1 from rest has x(t) = c1 t^3 e^-t / 3.
    Matrix A(1, 1), B(1, 1);
    A(0, 0) = -1.0;
    B(0, 0) = 1.0;
    TrajectoryRecord rec =
        simulate(StateSpace{A, B}, constant_profile(1, DistKind::Bump, 1.0), 1.0 / 24, 10.0, {0.0});
    const double c1 = std::sqrt(4.0 / 3.0);
    double worst = 0.0;
    for (int k = 0; k < rec.samples(); ++k) {
        const double t = rec.t[k];
        worst = std::max(worst, std::abs(rec.x(k, 0) - c1 * t * t * t * std::exp(-t) / 3.0));
        CHECK(rec.u(k, 0) == doctest::Approx(c1 * t * t * std::exp(-t)).epsilon(1e-14));
    }
    CHECK(worst <= 1e-5);
}

TEST_CASE("zero disturbance and zero state yield the zero record") {
    Fleet f = fleet(13);
    SimResult sim = simulate(f.fam, constant_signal(2.0), constant_profile(144, DistKind::Decay, 0.0),
                             1.0 / 24, std::vector<double>(108, 0.0));
    REQUIRE(sim.network.samples() == 49);
    CHECK_FALSE(sim.diverged);
    CHECK(max_abs(sim.network.x) == 0.0);
    CHECK(max_abs(sim.network.y) == 0.0);
    CHECK(max_abs(sim.network.u) == 0.0);
    CHECK(max_abs(sim.agent_u) == 0.0);
}

TEST_CASE("closed-loop records satisfy the interconnection identities") {
    Fleet f = fleet(11);
    SwitchingSignal sig = gen_switching(3, 10.0, 2, 4, 1.0);
    DisturbanceProfile dist = random_disturbance(5, 144);
    for (int c = 0; c < 36; ++c) dist.scale[c] = 1000.0;
    SimResult sim = simulate(f.fam, sig, dist, 1.0 / 24, std::vector<double>(108, 0.0));
    REQUIRE_FALSE(sim.diverged);
    const int N = sim.network.samples();
    REQUIRE(N == 241);
    REQUIRE(sim.network.y.cols == 144);
    REQUIRE(sim.agent_u.cols == 144);

    // Mode schedule follows the snapped events.
    for (size_t ev = 1; ev < sig.events.size(); ++ev) {
        const int k = static_cast<int>(std::llround(sig.events[ev].t * 24.0));
        CHECK(sim.network.mode[k] == sig.events[ev].mode);
        CHECK(sim.network.mode[k - 1] == sig.events[ev - 1].mode);
    }

    for (int k : {0, 57, 191, N - 1}) {
        const int m = sim.network.mode[k];
        // Plant outputs are the plant states.
        for (int c = 0; c < 108; ++c) CHECK(sim.network.y(k, c) == sim.network.x(k, c));
        // Gain inputs e_c + Hc x and outputs K u_c.
        Matrix xk(108, 1), uck(108, 1);
        for (int c = 0; c < 108; ++c) xk(c, 0) = sim.network.x(k, c);
        Matrix hx = f.fam.Hc[m] * xk;
        for (int c = 0; c < 108; ++c) {
            const double expect = sim.network.u(k, 36 + c) + hx(c, 0);
            CHECK(sim.agent_u(k, 36 + c) ==
                  doctest::Approx(expect).epsilon(1e-10).scale(1.0 + std::abs(expect)));
            uck(c, 0) = sim.agent_u(k, 36 + c);
        }
        Matrix yc = f.fam.K * uck;
        for (int c = 0; c < 36; ++c) {
            CHECK(sim.network.y(k, 108 + c) ==
                  doctest::Approx(yc(c, 0)).epsilon(1e-10).scale(1.0 + std::abs(yc(c, 0))));
            // Plant inputs are exogenous minus the fed-back gain outputs.
            CHECK(sim.agent_u(k, c) == sim.network.u(k, c) - sim.network.y(k, 108 + c));
        }
    }

    // Per-agent slices agree with the stacked record.
    TrajectoryRecord plant = agent_view(sim, f.spec, 0);
    REQUIRE(plant.x.cols == 12);
    REQUIRE(plant.y.cols == 12);
    REQUIRE(plant.u.cols == 4);
    for (int k : {0, 100}) {
        for (int c = 0; c < 12; ++c) {
            CHECK(plant.x(k, c) == sim.network.x(k, c));
            CHECK(plant.y(k, c) == sim.network.y(k, c));
        }
        for (int c = 0; c < 4; ++c) CHECK(plant.u(k, c) == sim.agent_u(k, c));
    }
    TrajectoryRecord gain = agent_view(sim, f.spec, 9);
    REQUIRE(gain.x.cols == 0);
    REQUIRE(gain.y.cols == 4);
    REQUIRE(gain.u.cols == 12);
    for (int c = 0; c < 4; ++c) CHECK(gain.y(5, c) == sim.network.y(5, 108 + c));
    for (int c = 0; c < 12; ++c) CHECK(gain.u(5, c) == sim.agent_u(5, 36 + c));
    CHECK(gain.mode == sim.network.mode);
    CHECK_THROWS_AS(agent_view(sim, f.spec, -1), InvalidArgument);
    CHECK_THROWS_AS(agent_view(sim, f.spec, 18), InvalidArgument);
}

TEST_CASE("state divergence is recorded and truncates the record") {
    NetworkSpec spec = unstable_pair();
    ClosedLoopFamily fam = closed_loop_family(spec).value();
    REQUIRE(fam.Acl[0](0, 0) == doctest::Approx(0.7));
    SimResult sim = simulate(fam, constant_signal(60.0), constant_profile(2, DistKind::Decay, 0.0),
                             1.0 / 24, {1.0});
    CHECK(sim.diverged);
    CHECK(sim.divergence_time > 39.0);
    CHECK(sim.divergence_time < 40.0);
    REQUIRE(sim.network.samples() < 60 * 24 + 1);
    CHECK(sim.network.t.back() == doctest::Approx(sim.divergence_time));
    const double last = sim.network.x(sim.network.samples() - 1, 0);
    CHECK(std::isfinite(last));
    CHECK(std::abs(last) > 1e12);

    CHECK_THROWS_AS(simulate(fam, constant_signal(60.0), constant_profile(1, DistKind::Decay, 0.0),
                             1.0 / 24, {1.0}),
                    InvalidArgument);
    SwitchingSignal bad = constant_signal(60.0, 3);
    CHECK_THROWS_AS(simulate(fam, bad, constant_profile(2, DistKind::Decay, 0.0), 1.0 / 24, {1.0}),
                    InvalidArgument);
}

TEST_CASE("state error is the pointwise norm") {
    TrajectoryRecord rec;
    rec.t = {0.0, 0.5, 1.0};
    rec.x = Matrix(3, 2);
    rec.x(0, 0) = 3.0;
    rec.x(0, 1) = 4.0;
    rec.x(2, 0) = -1.0;
    rec.x(2, 1) = 1.0;
    std::vector<double> err = state_error(rec);
    REQUIRE(err.size() == 3);
    CHECK(err[0] == 5.0);
    CHECK(err[1] == 0.0);
    CHECK(err[2] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(state_error(rec, 0, 1)[0] == 3.0);
    CHECK(state_error(rec, 1, 2)[0] == 4.0);
    CHECK_THROWS_AS(state_error(rec, -1, 2), InvalidArgument);
    CHECK_THROWS_AS(state_error(rec, 0, 3), InvalidArgument);
    CHECK_THROWS_AS(state_error(rec, 2, 1), InvalidArgument);
}

TEST_CASE("empirical gain bounds pass and fail correctly") {
    const int N = 101;
    TrajectoryRecord rec;
    rec.u = Matrix(N, 1);
    rec.y = Matrix(N, 1);
    for (int k = 0; k < N; ++k) {
        rec.t.push_back(0.1 * k);
        rec.u(k, 0) = l2_disturbance(DistKind::Decay, 0.1 * k);
        rec.y(k, 0) = 2.0 * rec.u(k, 0);
    }
    GainReport bad = empirical_gain(rec, 1.0, 0.0);
    CHECK_FALSE(bad.passed);
    CHECK(bad.worst_violation > 0.0);
    CHECK(bad.gain_estimate == doctest::Approx(2.0).epsilon(1e-12));
    GainReport good = empirical_gain(rec, 2.01, 0.0);
    CHECK(good.passed);
    CHECK(good.worst_violation <= 0.0);

    TrajectoryRecord quiet;
    quiet.u = Matrix(N, 1);
    quiet.y = Matrix(N, 1);
    for (int k = 0; k < N; ++k) {
        quiet.t.push_back(0.1 * k);
        quiet.y(k, 0) = 0.5;
    }
    GainReport vs_beta = empirical_gain(quiet, 1e6, 10.0);
    CHECK(vs_beta.passed);
    CHECK(vs_beta.gain_estimate == 0.0);
    GainReport broke = empirical_gain(quiet, 1e6, 1.0);
    CHECK_FALSE(broke.passed);
    CHECK(broke.worst_time > 4.0 - 1e-9);

    TrajectoryRecord silent;
    silent.t = {0.0, 0.1, 0.2};
    silent.u = Matrix(3, 1);
    silent.y = Matrix(3, 1);
    GainReport zero = empirical_gain(silent, 0.0, 0.0);
    CHECK(zero.passed);
    CHECK(zero.worst_violation == 0.0);

    TrajectoryRecord one;
    one.t = {0.0};
    one.u = Matrix(1, 1);
    one.y = Matrix(1, 1);
    CHECK_THROWS_AS(empirical_gain(one, 1.0, 0.0), InvalidArgument);
    CHECK_THROWS_AS(empirical_gain(rec, -1.0, 0.0), InvalidArgument);
}

TEST_CASE("grid refinement leaves the formation scenario's tail unchanged") {
    Fleet f = fleet(21);
    SwitchingSignal sig = gen_switching(21, 180.0, 15, 4, 1.0);
    DisturbanceProfile dist = random_disturbance(22, 144);
    for (int c = 0; c < 36; ++c) dist.scale[c] = 1000.0;
    const std::vector<double> x0(108, 0.0);

    SimResult coarse = simulate(f.fam, sig, dist, 1.0 / 24, x0);
    SimResult fine = simulate(f.fam, sig, dist, 1.0 / 48, x0);
    REQUIRE_FALSE(coarse.diverged);
    REQUIRE_FALSE(fine.diverged);
    REQUIRE(coarse.network.samples() == 4321);
    REQUIRE(fine.network.samples() == 8641);

    std::vector<double> e1 = state_error(coarse.network);
    std::vector<double> e2 = state_error(fine.network);
    const double peak = *std::max_element(e1.begin(), e1.end());
    CHECK(peak > 0.0);
    CHECK(peak < 1e9);
    CHECK(std::abs(e1.back() - e2.back()) < 0.01 * e2.back());
}
