#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "gprl/envs.hpp"
#include "gprl/error.hpp"

using namespace gprl;

namespace {

double step1(Dynamics const& d, State& s, double a)
{
    double const act[1] = {a};
    return d.step(s, act);
}

} // namespace

TEST_CASE("mountain car examples")
{
    MountainCar mc;
    State goal{{0.6, 3.0}, Absorption::Goal};
    auto const before = goal;
    CHECK(step1(mc, goal, -1.0) == 0.0);
    CHECK(goal == before);

    // Hand-stepped update near the goal.
    State near{{0.59, 7.0}, Absorption::None};
    double const v = std::clamp(0.07 + 0.001 - 0.0025 * std::cos(3 * 0.59), -0.07, 0.07);
    double const p = std::min(0.59 + v, 0.6);
    CHECK(step1(mc, near, 1.0) == 0.0);
    CHECK(near.x[0] == doctest::Approx(p).epsilon(1e-15));
    CHECK(near.absorbed == Absorption::Goal);

    State mid{{-0.5, 0.0}, Absorption::None};
    CHECK(step1(mc, mid, 0.0) == -1.0);

    State wall{{-1.2, -5.0}, Absorption::None};
    step1(mc, wall, -1.0);
    CHECK(wall.x[0] == -1.2);
    CHECK(wall.x[1] == 0.0);
}

TEST_CASE("mountain car clamps actions and stays in bounds")
{
    MountainCar mc;
    Rng rng(1);
    for (int i = 0; i < 2000; ++i) {
        auto s = mc.sample_start(rng);
        s.x[1] = uniform(rng, -7.0, 7.0);
        auto t = s;
        double const a = uniform(rng, 1.0, 50.0);
        CHECK(step1(mc, s, a) == step1(mc, t, 1.0));
        CHECK(s == t);
        REQUIRE(s.x[0] >= -1.2);
        REQUIRE(s.x[0] <= 0.6);
        REQUIRE(std::abs(s.x[1]) <= mc.max_velocity() + 1e-12);
    }
}

TEST_CASE("cart-pole examples")
{
    CartPole cp;
    State zero{{0, 0, 0, 0}, Absorption::None};
    CHECK(step1(cp, zero, 0.0) == 0.0);
    CHECK(zero.x == std::vector<double>{0, 0, 0, 0});

    State off{{0.3, 0, 1.0, 0}, Absorption::None};
    CHECK(step1(cp, off, 0.0) == -0.1);

    State tilt{{0.71, 0, 0, 0}, Absorption::None};
    CHECK(step1(cp, tilt, 0.0) == -1.0);
    CHECK(tilt.absorbed == Absorption::Failure);
    auto const frozen = tilt;
    for (int i = 0; i < 20; ++i) {
        CHECK(step1(cp, tilt, 10.0) == -1.0);
        CHECK(tilt == frozen);
    }
}

TEST_CASE("rewards take only the enumerated values")
{
    MountainCar mc;
    CartPole cp;
    Rng rng(2);
    std::set<double> mcr;
    std::set<double> cpr;
    for (int e = 0; e < 50; ++e) {
        auto s = mc.sample_start(rng);
        auto c = cp.sample_start(rng);
        for (int t = 0; t < 100; ++t) {
            mcr.insert(step1(mc, s, uniform(rng, -1, 1)));
            cpr.insert(step1(cp, c, uniform(rng, -10, 10)));
        }
    }
    for (double r : mcr) CHECK((r == 0.0 || r == -1.0));
    for (double r : cpr) CHECK((r == 0.0 || r == -0.1 || r == -1.0));
}

TEST_CASE("goal absorption is permanent")
{
    MountainCar mc;
    State s{{0.55, 7.0}, Absorption::None};
    while (s.absorbed != Absorption::Goal) step1(mc, s, 1.0);
    auto const fixed = s;
    for (int i = 0; i < 10; ++i) {
        CHECK(step1(mc, s, -1.0) == 0.0);
        CHECK(s == fixed);
    }
}

TEST_CASE("rk4 accuracy")
{
    auto const same = rk4_integrate([](auto const&, std::array<double, 2>& d) { d = {0.0, 0.0}; },
                                    std::array<double, 2>{1.5, -2.0}, 0.3);
    CHECK(same == std::array<double, 2>{1.5, -2.0});

    auto const e = rk4_integrate([](std::array<double, 1> const& y, std::array<double, 1>& d) { d = y; },
                                 std::array<double, 1>{1.0}, 0.1);
    CHECK(std::abs(e[0] - std::exp(0.1)) < 1e-7);

    std::array<double, 2> y{1.0, 0.0};
    for (int i = 0; i < 1000; ++i) {
        y = rk4_integrate(
            [](std::array<double, 2> const& s, std::array<double, 2>& d) {
                d = {s[1], -s[0]};
            },
            y, 0.01);
    }
    double const energy = 0.5 * (y[0] * y[0] + y[1] * y[1]);
    CHECK(std::abs(energy - 0.5) / 0.5 < 1e-4);

    // Dynamic-size overload agrees with the fixed-size one.
    auto const dyn = rk4_integrate(
        [](std::span<double const> s, std::span<double> d, void*) { d[0] = s[0]; }, nullptr,
        std::vector<double>{1.0}, 0.1);
    CHECK(dyn[0] == e[0]);
    CHECK_THROWS_AS((void)rk4_integrate([](std::span<double const>, std::span<double>, void*) {}, nullptr,
                                        std::vector<double>{1.0}, 0.0),
                    UsageError);
}

TEST_CASE("start sampling")
{
    MountainCar mc;
    CartPole cp;
    Rng a(3);
    Rng b(3);
    CHECK(sample_starts(mc, 1, a) == sample_starts(mc, 1, b));

    Rng rng(4);
    auto const starts = sample_starts(mc, 10000, rng);
    double mean = 0.0;
    for (auto const& s : starts) {
        mean += s.x[0];
        REQUIRE(s.x[1] == 0.0);
    }
    mean /= 10000.0;
    CHECK(std::abs(mean + 0.3) < 0.02);

    for (auto const& s : sample_starts(cp, 10000, rng)) {
        REQUIRE(std::abs(s.x[0]) <= 0.7);
        REQUIRE(std::abs(s.x[2]) <= 2.4);
        REQUIRE(s.x[1] == 0.0);
        REQUIRE(s.x[3] == 0.0);
    }
    CHECK_THROWS_AS((void)sample_starts(mc, 0, rng), UsageError);
}

TEST_CASE("history window")
{
    std::vector<std::vector<double>> obs;
    for (int t = 0; t < 40; ++t) obs.push_back(std::vector<double>(6, static_cast<double>(t)));
    auto const w0 = history_window(obs, 0);
    CHECK(w0 == obs.back());
    auto const w2 = history_window(obs, 2);
    REQUIRE(w2.size() == 18);
    CHECK(w2[0] == 37.0);
    CHECK(w2[17] == 39.0);
    CHECK(history_window(obs, 30).size() == 186);

    std::vector<std::vector<double>> constant(5, {1.0, 2.0});
    auto const c = history_window(constant, 3);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == (i % 2 == 0 ? 1.0 : 2.0));
    CHECK_THROWS_AS((void)history_window(constant, 5), UsageError);
}

TEST_CASE("environment factory")
{
    CHECK(make_environment("mc")->state_dim() == 2);
    CHECK(make_environment("cpb")->state_dim() == 4);
    CHECK_THROWS_AS((void)make_environment("ib"), UsageError);
    MountainCar mc;
    State bad{{0.0}, Absorption::None};
    CHECK_THROWS_AS(step1(mc, bad, 0.0), InputShapeError);
}
