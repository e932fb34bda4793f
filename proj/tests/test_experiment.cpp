#include <doctest.h>

#include <nlohmann/json.hpp>

#include "gprl/error.hpp"
#include "gprl/experiment.hpp"

using namespace gprl;

TEST_CASE("profiles")
{
    auto const mc = default_config("mc", "desk");
    CHECK(mc.rollout.horizon == 200);
    CHECK(mc.rollout.train_starts == 30);
    CHECK(mc.ga.population_size == 100);
    CHECK(mc.imitation.starts * mc.imitation.horizon == 7000);
    auto const cpb = default_config("cpb", "paper");
    CHECK(cpb.rollout.horizon == 100);
    CHECK(cpb.ga.population_size == 1000);
    CHECK(cpb.regress_ga.population_size == 10000);
    CHECK(cpb.imitation.starts * cpb.imitation.horizon == 70000);
    CHECK_THROWS_AS((void)default_config("ib", "desk"), UsageError);
    CHECK_THROWS_AS((void)default_config("mc", "huge"), UsageError);
}

TEST_CASE("overrides")
{
    auto c = default_config("mc", "desk");
    auto const ga_seed = c.ga.seed;
    apply_overrides(nlohmann::json::parse(R"({"seed": 7, "ga": {"generations": 3, "limits": {"max_depth": 4}}})"), c);
    CHECK(c.seed == 7);
    CHECK(c.ga.generations == 3);
    CHECK(c.ga.limits.max_depth == 4);
    CHECK(c.ga.population_size == 100);
    CHECK(c.ga.seed != ga_seed);

    auto d = default_config("mc", "desk");
    CHECK_THROWS_AS(apply_overrides(nlohmann::json::parse(R"({"ga": {"generatoins": 3}})"), d), UsageError);
    CHECK_THROWS_AS(apply_overrides(nlohmann::json::parse(R"({"ga": {"generations": "many"}})"), d), UsageError);
    CHECK_THROWS_AS(apply_overrides(nlohmann::json::parse("[1]"), d), UsageError);

    // Serialized config round-trips through the override path.
    nlohmann::json const j = c;
    auto e = default_config("cpb", "paper");
    apply_overrides(j, e);
    CHECK(nlohmann::json(e) == j);
}

TEST_CASE("collection")
{
    MountainCar mc;
    CartPole cp;
    DatasetConfig dc;
    dc.samples = 1234;
    auto const a = collect_dataset(mc, dc, 5);
    CHECK(a.size() == 1234);
    CHECK(a.provenance.env == "mc");
    auto const b = collect_dataset(mc, dc, 5);
    CHECK(a.rows == b.rows);

    auto const c = collect_dataset(cp, dc, 5);
    CHECK(c.provenance.sampler == "random_walk");
    // Rows chain within an episode; every chain is at most episode_length long.
    std::size_t run = 1;
    for (std::size_t i = 1; i < c.size(); ++i) {
        run = c.rows[i].s == c.rows[i - 1].sn ? run + 1 : 1;
        REQUIRE(run <= dc.episode_length);
        REQUIRE(std::abs(c.rows[i].a[0]) <= 10.0);
    }
    dc.samples = 0;
    CHECK_THROWS_AS((void)collect_dataset(mc, dc, 5), UsageError);
}

TEST_CASE("start streams are separate and seeded")
{
    MountainCar mc;
    CHECK(training_starts(mc, 5, 1) == training_starts(mc, 5, 1));
    CHECK(training_starts(mc, 5, 1) != evaluation_starts(mc, 5, 1));
}

TEST_CASE("archive rows parse back with environment names")
{
    CartPole cp;
    std::vector<ArchiveRow> rows{{3, -2.0, std::nullopt, {"theta * 15.0"}}};
    auto const a = archive_from_rows(rows, cp);
    REQUIRE(a.size() == 1);
    CHECK(a.slots().begin()->first == 3);
    rows[0].expressions.push_back("rho");
    CHECK_THROWS_AS((void)archive_from_rows(rows, cp), DataError);
}

TEST_CASE("a tiny end-to-end run in both modes")
{
    auto cfg = default_config("mc", "desk");
    apply_overrides(nlohmann::json::parse(R"({
        "dataset": {"samples": 400},
        "model": {"delta": {"epochs": 3}, "reward": {"epochs": 3}},
        "rollout": {"train_starts": 2},
        "ga": {"population_size": 12, "generations": 2},
        "regress_ga": {"population_size": 12, "generations": 2},
        "teacher": {"epochs": 1, "restarts": 1, "hill_climb_iterations": 2},
        "imitation": {"starts": 2}
    })"),
                    cfg);
    MountainCar mc;
    auto const data = collect_dataset(mc, cfg.dataset, cfg.seed);
    auto const built = build_world_model(data, cfg.model);
    auto const run = run_experiment(cfg, {&mc, &built.model, nullptr});
    CHECK(run.result.generations_run == 2);
    CHECK(!run.result.archive.empty());

    auto const rc = make_rollout(mc, training_starts(mc, 2, cfg.seed), cfg.rollout.horizon, cfg.rollout.q);
    auto const teacher = train_teacher(built.model, cfg.model_step, &mc, rc, cfg.teacher);
    cfg.mode = Mode::Regress;
    auto const reg = run_experiment(cfg, {&mc, &built.model, &teacher.policy});
    CHECK(!reg.result.archive.empty());
    for (auto const& [c, ind] : reg.result.archive.slots()) CHECK(ind.fitness <= 0.0);

    CHECK_THROWS_AS((void)run_experiment(cfg, {&mc, &built.model, nullptr}), UsageError);
}

TEST_CASE("teachers beat the simple baselines")
{
    for (std::string const name : {"mc", "cpb"}) {
        auto const cfg = default_config(name, "desk");
        auto const env = make_environment(name);
        auto const data = collect_dataset(*env, cfg.dataset, cfg.seed);
        auto const built = build_world_model(data, cfg.model);
        auto const train = make_rollout(*env, training_starts(*env, cfg.rollout.train_starts, cfg.seed),
                                        cfg.rollout.horizon, cfg.rollout.q);
        auto const teacher = train_teacher(built.model, cfg.model_step, env.get(), train, cfg.teacher);
        double const hi = env->action_high()[0];
        Controller const zero = [](auto, std::span<double> a) { a[0] = 0.0; };
        Controller const push = [hi](auto, std::span<double> a) { a[0] = hi; };
        if (name == "mc") {
            ModelDynamics dyn(built.model, cfg.model_step, env.get());
            double const base = -fitness(dyn, zero, train);
            CHECK(-teacher.report.final_fitness <= 0.8 * base);
        } else {
            auto const eval = make_rollout(*env, evaluation_starts(*env, cfg.rollout.eval_starts, cfg.seed),
                                           cfg.rollout.horizon, cfg.rollout.q);
            CHECK(fitness(*env, teacher.policy.controller(), eval) > fitness(*env, push, eval));
        }
    }
}
