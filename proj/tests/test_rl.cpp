#include <doctest.h>

#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "gprl/envs.hpp"
#include "gprl/error.hpp"
#include "gprl/rl.hpp"

using namespace gprl;

namespace {

// One-dimensional toy: x moves by the action, reward is a fixed constant or
// a function of the state.
class Toy final : public Dynamics {
public:
    explicit Toy(double reward, double scale = 1.0) : reward_(reward), scale_(scale) {}
    std::size_t state_dim() const override { return 1; }
    std::size_t action_dim() const override { return 1; }
    double step(State& s, std::span<double const> a) const override
    {
        s.x[0] += std::clamp(a[0], -1.0, 1.0);
        return scale_ * (reward_ - std::abs(s.x[0]));
    }

private:
    double reward_;
    double scale_;
};

class Constant final : public Dynamics {
public:
    explicit Constant(double r) : r_(r) {}
    std::size_t state_dim() const override { return 1; }
    std::size_t action_dim() const override { return 1; }
    double step(State&, std::span<double const>) const override { return r_; }

private:
    double r_;
};

std::vector<std::string> const kX{"x"};

Policy policy(std::string const& text, double lo = -1.0, double hi = 1.0)
{
    return Policy{{parse_tree(text, kX)}, {lo}, {hi}};
}

RolloutConfig config(std::vector<State> starts, std::size_t T, double q)
{
    RolloutConfig c;
    c.horizon = T;
    c.q = q;
    c.starts = std::move(starts);
    c.action_low = {-1.0};
    c.action_high = {1.0};
    return c;
}

WorldModel random_model(Rng& rng)
{
    WorldModel m;
    m.state_dim = 2;
    m.action_dim = 1;
    for (int i = 0; i < 2; ++i) {
        Regressor r{Mlp({3, 5, 1}, Activation::Tanh), Normalization::identity(3), Normalization::identity(1)};
        r.net.initialize(rng);
        for (auto& p : r.net.params()) p *= 0.3;
        m.delta_models.push_back(r);
    }
    m.reward_model = {Mlp({5, 4, 1}, Activation::Tanh), Normalization::identity(5), Normalization::identity(1)};
    m.reward_model.net.initialize(rng);
    return m;
}

} // namespace

TEST_CASE("discount values")
{
    CHECK(std::abs(discount_for(200, 0.05) - std::pow(0.05, 1.0 / 199.0)) < 1e-12);
    CHECK(std::abs(discount_for(100, 0.05) - std::pow(0.05, 1.0 / 99.0)) < 1e-12);
    CHECK(std::round(discount_for(200, 0.05) * 1000) / 1000 == 0.985);
    CHECK(std::round(discount_for(100, 0.05) * 100) / 100 == 0.97);
    CHECK(discount_for(50, 1.0) == 1.0);
    CHECK_THROWS_AS((void)discount_for(1, 0.5), UsageError);
    CHECK_THROWS_AS((void)discount_for(10, 1.5), UsageError);
}

TEST_CASE("rollout return closed forms")
{
    State s{{0.0}, Absorption::None};
    auto const p = policy("x");
    CHECK(rollout_return(Constant(0.0), p, s, 100, 0.9) == 0.0);
    CHECK(rollout_return(Constant(-1.0), p, s, 100, 1.0) == -100.0);
    double const g = 0.97;
    double const closed = -(1.0 - std::pow(g, 100)) / (1.0 - g);
    CHECK(std::abs(rollout_return(Constant(-1.0), p, s, 100, g) - closed) < 1e-9);
}

TEST_CASE("fitness algebra")
{
    auto const p = policy("0.5 - x");
    std::vector<State> starts{{{0.3}, Absorption::None}, {{-2.0}, Absorption::None}, {{1.1}, Absorption::None}};
    auto const cfg = config(starts, 30, 0.2);
    double const gm = cfg.gamma();

    auto one = config({starts[0]}, 30, 0.2);
    CHECK(fitness(Toy(1.0), p, one) == rollout_return(Toy(1.0), p, starts[0], 30, gm));

    double mean = 0.0;
    for (auto const& s : starts) mean += rollout_return(Toy(1.0), p, s, 30, gm) / 3.0;
    CHECK(fitness(Toy(1.0), p, cfg) == doctest::Approx(mean).epsilon(1e-14));

    // Scaling every reward by a power of two scales the return exactly.
    CHECK(fitness(Toy(1.0, 2.0), p, cfg) == 2.0 * fitness(Toy(1.0), p, cfg));

    // Constant reward with gamma 1 gives T * r whatever the policy does.
    auto flat = config(starts, 40, 1.0);
    CHECK(fitness(Constant(-0.25), p, flat) == -10.0);
    CHECK(fitness(Constant(-0.25), policy("x * 100.0"), flat) == -10.0);

    // Two starts with returns -10 and -20 average to -15.
    struct Two final : Dynamics {
        std::size_t state_dim() const override { return 1; }
        std::size_t action_dim() const override { return 1; }
        double step(State& s, std::span<double const>) const override { return s.x[0]; }
    };
    auto two = config({{{-5.0}, Absorption::None}, {{-10.0}, Absorption::None}}, 2, 1.0);
    CHECK(fitness(Two{}, p, two) == -15.0);

    // Adding a constant to every reward shifts fitness by the same amount for all
    // policies, so their ranking is unchanged.
    auto const q = policy("x * 0.5");
    double const fp = fitness(Toy(1.0), p, cfg);
    double const fq = fitness(Toy(1.0), q, cfg);
    double const fp2 = fitness(Toy(4.0), p, cfg);
    double const fq2 = fitness(Toy(4.0), q, cfg);
    CHECK((fp < fq) == (fp2 < fq2));
    CHECK(fp2 - fp == doctest::Approx(fq2 - fq).epsilon(1e-12));
}

TEST_CASE("clamping makes pre-clamped policies fixed points")
{
    std::vector<State> starts{{{0.3}, Absorption::None}, {{-2.0}, Absorption::None}};
    auto const cfg = config(starts, 25, 0.5);
    auto const wide = Policy{{parse_tree("x * 7.0", kX)}, {-100.0}, {100.0}};
    auto const clamped = policy("x * 7.0");
    CHECK(fitness(Toy(0.0), wide, cfg) == fitness(Toy(0.0), clamped, cfg));
}

TEST_CASE("non-finite actions map to bounds and raise the flag")
{
    double const lo[1] = {-1.0};
    double const hi[1] = {1.0};
    Controller nan_ctl = [](auto, std::span<double> a) { a[0] = std::numeric_limits<double>::quiet_NaN(); };
    Controller inf_ctl = [](auto, std::span<double> a) { a[0] = std::numeric_limits<double>::infinity(); };
    Controller low_ctl = [](auto, std::span<double> a) { a[0] = -1.0; };
    Controller high_ctl = [](auto, std::span<double> a) { a[0] = 1.0; };
    State s{{0.0}, Absorption::None};
    auto const rn = rollout(Toy(0.0), nan_ctl, s, 5, 1.0, lo, hi);
    auto const ri = rollout(Toy(0.0), inf_ctl, s, 5, 1.0, lo, hi);
    CHECK(rn.nonfinite_action);
    CHECK(ri.nonfinite_action);
    CHECK(rn.ret == rollout(Toy(0.0), low_ctl, s, 5, 1.0, lo, hi).ret);
    CHECK(ri.ret == rollout(Toy(0.0), high_ctl, s, 5, 1.0, lo, hi).ret);
    CHECK(!rollout(Toy(0.0), low_ctl, s, 5, 1.0, lo, hi).nonfinite_action);
}

TEST_CASE("rho_dot drives the mountain car home")
{
    MountainCar mc;
    Rng rng(21);
    auto const starts = sample_starts(mc, 100, rng);
    auto const p = Policy{{parse_tree("rho_dot", mc.variable_names())}, {-1.0}, {1.0}};
    double const g = discount_for(200, 0.05);
    double const fail_bound = -(1.0 - std::pow(g, 200)) / (1.0 - g);
    for (auto const& s : starts) {
        double const lo[1] = {-1.0};
        double const hi[1] = {1.0};
        auto const r = rollout(mc, controller_of(p), s, 200, g, lo, hi);
        REQUIRE(r.final.absorbed == Absorption::Goal);
        REQUIRE(r.ret > fail_bound);
    }
}

TEST_CASE("evaluate_real")
{
    MountainCar mc;
    Rng rng(22);
    RolloutConfig cfg = config(sample_starts(mc, 10, rng), 200, 0.05);
    CHECK(evaluate_real(ParetoArchive{}, mc, cfg).empty());
    ParetoArchive a;
    a.offer({Policy{{parse_tree("rho_dot", mc.variable_names())}, {-1.0}, {1.0}}, -40.0, 1});
    auto const rows = evaluate_real(a, mc, cfg);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].model_penalty == 40.0);
    CHECK(rows[0].real_penalty < 200.0);
    CHECK(rows[0].expressions == std::vector<std::string>{"rho_dot"});
}

TEST_CASE("teacher gradient matches central differences")
{
    Rng rng(23);
    auto const m = random_model(rng);
    double const lo[1] = {-1.0};
    double const hi[1] = {1.0};
    auto t = make_teacher(m, lo, hi, {4, 3}, rng);
    auto p = flatten_params(t);
    for (auto& v : p) v += uniform(rng, -0.5, 0.5);
    assign_params(t, p);
    RolloutConfig cfg = config({{{0.2, -0.1}, Absorption::None}, {{-0.4, 0.3}, Absorption::None}}, 8, 0.5);
    ModelStepOptions opts;
    opts.clamp_to_data = false;

    std::vector<double> grad;
    double const obj = teacher_objective_gradient(t, m, opts, nullptr, cfg, grad);
    CHECK(obj == doctest::Approx(-fitness(ModelDynamics(m, opts), t.controller(), cfg)).epsilon(1e-12));
    REQUIRE(grad.size() == p.size());
    double const h = 1e-6;
    std::vector<double> scratch;
    for (std::size_t i = 0; i < p.size(); ++i) {
        auto tp = t;
        auto tm = t;
        auto pp = p;
        auto pm = p;
        pp[i] += h;
        pm[i] -= h;
        assign_params(tp, pp);
        assign_params(tm, pm);
        double const fd = (teacher_objective_gradient(tp, m, opts, nullptr, cfg, scratch)
                           - teacher_objective_gradient(tm, m, opts, nullptr, cfg, scratch))
                          / (2 * h);
        REQUIRE(std::abs(fd - grad[i]) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("teacher basics")
{
    Rng rng(24);
    auto const m = random_model(rng);
    RolloutConfig cfg = config({{{0.2, -0.1}, Absorption::None}}, 10, 0.5);
    TeacherConfig tc;
    tc.epochs = 0;
    tc.hill_climb_iterations = 0;
    tc.hidden = {4};
    auto const a = train_teacher(m, {}, nullptr, cfg, tc);
    double const lo[1] = {-1.0};
    double const hi[1] = {1.0};
    CHECK(a.report.initial_fitness == a.report.final_fitness);

    // Actions stay inside the bounds for any input.
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> s{uniform(rng, -1e3, 1e3), uniform(rng, -1e3, 1e3)};
        double act[1];
        a.policy.act(s, act);
        REQUIRE(act[0] >= lo[0]);
        REQUIRE(act[0] <= hi[0]);
    }

    nlohmann::json j = a.policy;
    CHECK(j.at("role") == "teacher");
    auto const back = j.get<TeacherPolicy>();
    CHECK(flatten_params(back) == flatten_params(a.policy));

    // Training does not make the model fitness worse.
    tc.epochs = 20;
    tc.hill_climb_iterations = 20;
    auto const b = train_teacher(m, {}, nullptr, cfg, tc);
    CHECK(b.report.final_fitness >= b.report.initial_fitness);
}

TEST_CASE("imitation data and regression fitness")
{
    Rng rng(25);
    auto const m = random_model(rng);
    double const lo[1] = {-2.0};
    double const hi[1] = {2.0};
    auto const t = make_teacher(m, lo, hi, {4}, rng);
    ModelDynamics dyn(m, {.clamp_to_data = false});
    std::vector<State> one{{{0.1, 0.1}, Absorption::None}};
    CHECK(make_imitation_dataset(t, dyn, one, 10).size() == 10);
    std::vector<State> three(3, one[0]);
    auto const d = make_imitation_dataset(t, dyn, three, 7);
    CHECK(d.size() == 21);
    for (std::size_t i = 0; i < d.size(); ++i) {
        REQUIRE(d.actions(i, 0) >= -2.0);
        REQUIRE(d.actions(i, 0) <= 2.0);
    }

    ImitationDataset c{Matrix(4, 1), Matrix(4, 1)};
    for (std::size_t i = 0; i < 4; ++i) {
        c.states(i, 0) = static_cast<double>(i);
        c.actions(i, 0) = 0.5;
    }
    CHECK(regression_fitness(policy("0.5"), c) == 0.0);
    CHECK(regression_fitness(policy("0.0"), c) == -0.25);
    // Outputs are clamped before comparison.
    CHECK(regression_fitness(policy("x * 100.0 + 0.5", -1.0, 0.5), c) == 0.0);
}
