#include "gprl/experiment.hpp"

#include <algorithm>
#include <chrono>

#include <nlohmann/json.hpp>

#include "gprl/error.hpp"

namespace gprl {

NLOHMANN_JSON_SERIALIZE_ENUM(Activation, {{Activation::Relu, "relu"}, {Activation::Tanh, "tanh"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Optimizer, {{Optimizer::VarioEta, "vario_eta"}, {Optimizer::Sgd, "sgd"}})
NLOHMANN_JSON_SERIALIZE_ENUM(RewardSource, {{RewardSource::Learned, "learned"}, {RewardSource::Analytic, "analytic"}})
NLOHMANN_JSON_SERIALIZE_ENUM(TeacherMethod, {{TeacherMethod::Bptt, "bptt"}, {TeacherMethod::HillClimb, "hill_climb"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Mode, {{Mode::Gprl, "gprl"}, {Mode::Regress, "regress"}})

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DatasetConfig, samples, episode_length, walk_scale)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RolloutSettings, horizon, q, train_starts, eval_starts)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ImitationSettings, starts, horizon)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TreeLimits, max_depth, max_genes, max_complexity)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ComplexityWeights, variable, terminal, basic, division, logical, unary, conditional,
                                   comparison)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ModelStepOptions, clamp_to_data, reward)

// Seeds of the sub-configurations are derived from the experiment seed and never
// serialized, so a single --seed pins everything.
namespace {

enum SeedStream : std::uint64_t {
    kDatasetStream = 1,
    kTrainStartStream,
    kEvalStartStream,
    kSplitStream,
    kDeltaStream,
    kRewardStream,
    kTeacherStream,
    kImitationStream,
    kGaStream,
    kRegressGaStream,
};

} // namespace

void to_json(nlohmann::json& j, TrainConfig const& c)
{
    j = {{"hidden", c.hidden},         {"activation", c.activation}, {"optimizer", c.optimizer},
         {"epochs", c.epochs},         {"patience", c.patience},     {"batch_size", c.batch_size},
         {"learning_rate", c.learning_rate}, {"epsilon", c.epsilon}, {"variance_decay", c.variance_decay}};
}

void from_json(nlohmann::json const& j, TrainConfig& c)
{
    j.at("hidden").get_to(c.hidden);
    j.at("activation").get_to(c.activation);
    j.at("optimizer").get_to(c.optimizer);
    j.at("epochs").get_to(c.epochs);
    j.at("patience").get_to(c.patience);
    j.at("batch_size").get_to(c.batch_size);
    j.at("learning_rate").get_to(c.learning_rate);
    j.at("epsilon").get_to(c.epsilon);
    j.at("variance_decay").get_to(c.variance_decay);
}

void to_json(nlohmann::json& j, WorldModelConfig const& c) { j = {{"delta", c.delta}, {"reward", c.reward}}; }

void from_json(nlohmann::json const& j, WorldModelConfig& c)
{
    j.at("delta").get_to(c.delta);
    j.at("reward").get_to(c.reward);
}

void to_json(nlohmann::json& j, GAConfig const& c)
{
    j = {{"population_size", c.population_size},
         {"generations", c.generations},
         {"crossover_ratio", c.crossover_ratio},
         {"reproduction_ratio", c.reproduction_ratio},
         {"auto_cancel_ratio", c.auto_cancel_ratio},
         {"terminal_mutation_ratio", c.terminal_mutation_ratio},
         {"new_random_ratio", c.new_random_ratio},
         {"tournament_size", c.tournament_size},
         {"grow_min_depth", c.grow_min_depth},
         {"grow_max_depth", c.grow_max_depth},
         {"const_low", c.const_low},
         {"const_high", c.const_high},
         {"limits", c.limits},
         {"weights", c.weights},
         {"threads", c.threads},
         {"wall_clock_seconds", c.wall_clock_seconds},
         {"patience", c.patience}};
}

void from_json(nlohmann::json const& j, GAConfig& c)
{
    j.at("population_size").get_to(c.population_size);
    j.at("generations").get_to(c.generations);
    j.at("crossover_ratio").get_to(c.crossover_ratio);
    j.at("reproduction_ratio").get_to(c.reproduction_ratio);
    j.at("auto_cancel_ratio").get_to(c.auto_cancel_ratio);
    j.at("terminal_mutation_ratio").get_to(c.terminal_mutation_ratio);
    j.at("new_random_ratio").get_to(c.new_random_ratio);
    j.at("tournament_size").get_to(c.tournament_size);
    j.at("grow_min_depth").get_to(c.grow_min_depth);
    j.at("grow_max_depth").get_to(c.grow_max_depth);
    j.at("const_low").get_to(c.const_low);
    j.at("const_high").get_to(c.const_high);
    j.at("limits").get_to(c.limits);
    j.at("weights").get_to(c.weights);
    j.at("threads").get_to(c.threads);
    j.at("wall_clock_seconds").get_to(c.wall_clock_seconds);
    j.at("patience").get_to(c.patience);
}

void to_json(nlohmann::json& j, TeacherConfig const& c)
{
    j = {{"method", c.method},
         {"hidden", c.hidden},
         {"epochs", c.epochs},
         {"learning_rate", c.learning_rate},
         {"gradient_clip", c.gradient_clip},
         {"restarts", c.restarts},
         {"hill_climb_iterations", c.hill_climb_iterations},
         {"hill_climb_sigma", c.hill_climb_sigma}};
}

void from_json(nlohmann::json const& j, TeacherConfig& c)
{
    j.at("method").get_to(c.method);
    j.at("hidden").get_to(c.hidden);
    j.at("epochs").get_to(c.epochs);
    j.at("learning_rate").get_to(c.learning_rate);
    j.at("gradient_clip").get_to(c.gradient_clip);
    j.at("restarts").get_to(c.restarts);
    j.at("hill_climb_iterations").get_to(c.hill_climb_iterations);
    j.at("hill_climb_sigma").get_to(c.hill_climb_sigma);
}

void to_json(nlohmann::json& j, ExperimentConfig const& c)
{
    j = {{"schema_version", kSchemaVersion},
         {"env", c.env},
         {"profile", c.profile},
         {"seed", c.seed},
         {"mode", c.mode},
         {"dataset", c.dataset},
         {"model", c.model},
         {"model_step", c.model_step},
         {"rollout", c.rollout},
         {"ga", c.ga},
         {"regress_ga", c.regress_ga},
         {"teacher", c.teacher},
         {"imitation", c.imitation}};
}

namespace {

void reject_unknown(nlohmann::json const& patch, nlohmann::json const& base, std::string const& path)
{
    for (auto const& [key, value] : patch.items()) {
        if (!base.contains(key)) {
            throw UsageError("config: unknown key '" + path + key + "'");
        }
        if (value.is_object() && base.at(key).is_object()) {
            reject_unknown(value, base.at(key), path + key + ".");
        }
    }
}

void resolve_seeds(ExperimentConfig& c)
{
    c.model.split_seed = derive_seed(c.seed, kSplitStream);
    c.model.delta.seed = derive_seed(c.seed, kDeltaStream);
    c.model.reward.seed = derive_seed(c.seed, kRewardStream);
    c.teacher.seed = derive_seed(c.seed, kTeacherStream);
    c.ga.seed = derive_seed(c.seed, kGaStream);
    c.regress_ga.seed = derive_seed(c.seed, kRegressGaStream);
}

} // namespace

void apply_overrides(nlohmann::json const& j, ExperimentConfig& c)
{
    if (!j.is_object()) {
        throw UsageError("config: expected a JSON object");
    }
    nlohmann::json base = c;
    reject_unknown(j, base, "");
    base.merge_patch(j);
    try {
        c.env = base.at("env").get<std::string>();
        c.profile = base.at("profile").get<std::string>();
        c.seed = base.at("seed").get<std::uint64_t>();
        base.at("mode").get_to(c.mode);
        base.at("dataset").get_to(c.dataset);
        base.at("model").get_to(c.model);
        base.at("model_step").get_to(c.model_step);
        base.at("rollout").get_to(c.rollout);
        base.at("ga").get_to(c.ga);
        base.at("regress_ga").get_to(c.regress_ga);
        base.at("teacher").get_to(c.teacher);
        base.at("imitation").get_to(c.imitation);
    } catch (nlohmann::json::exception const& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
    resolve_seeds(c);
}

ExperimentConfig default_config(std::string const& env, std::string const& profile)
{
    if (env != "mc" && env != "cpb") {
        throw UsageError("unknown environment '" + env + "' (expected mc or cpb)");
    }
    if (profile != "paper" && profile != "desk") {
        throw UsageError("unknown profile '" + profile + "' (expected paper or desk)");
    }
    ExperimentConfig c;
    c.env = env;
    c.profile = profile;
    bool const paper = profile == "paper";
    bool const mc = env == "mc";

    c.dataset.samples = 10000;
    c.dataset.episode_length = 100;
    c.model.delta.hidden = {10, 10, 10};
    c.model.reward.hidden = {10, 10, 10};

    c.rollout.horizon = mc ? 200 : 100;
    c.rollout.q = 0.05;
    c.rollout.train_starts = paper ? 1000 : 30;
    c.rollout.eval_starts = paper ? 1000 : 100;

    c.ga.population_size = paper ? (mc ? 100 : 1000) : 100;
    c.ga.generations = paper ? 1000 : 100;
    c.regress_ga.population_size = paper ? (mc ? 1000 : 10000) : 100;
    c.regress_ga.generations = paper ? 1000 : 100;

    // 70,000 imitation samples in the paper profile, a tenth in desk.
    c.imitation.horizon = c.rollout.horizon;
    c.imitation.starts = (paper ? 70000 : 7000) / c.imitation.horizon;

    resolve_seeds(c);
    return c;
}

TransitionDataset collect_dataset(Environment const& env, DatasetConfig const& cfg, std::uint64_t seed)
{
    if (cfg.samples == 0 || cfg.episode_length == 0) {
        throw UsageError("collect: samples and episode length must be positive");
    }
    Rng rng = make_rng(seed, kDatasetStream);
    auto const low = env.action_low();
    auto const high = env.action_high();
    auto const ad = env.action_dim();
    bool const walk = env.name() == "cpb";

    TransitionDataset d;
    d.provenance = {std::string(env.name()), walk ? "random_walk" : "random_action", seed, cfg.samples};
    d.rows.reserve(cfg.samples);
    std::vector<double> a(ad);
    while (d.rows.size() < cfg.samples) {
        State s = env.sample_start(rng);
        std::fill(a.begin(), a.end(), 0.0);
        for (std::size_t t = 0; t < cfg.episode_length && d.rows.size() < cfg.samples; ++t) {
            for (std::size_t i = 0; i < ad; ++i) {
                a[i] = walk ? std::clamp(a[i] + uniform(rng, -2.0, 2.0) * cfg.walk_scale, low[i], high[i])
                            : uniform(rng, low[i], high[i]);
            }
            Transition row{s.x, a, {}, 0.0};
            row.r = env.step(s, a);
            row.sn = s.x;
            d.rows.push_back(std::move(row));
        }
    }
    return d;
}

std::vector<State> training_starts(Environment const& env, std::size_t n, std::uint64_t seed)
{
    Rng rng = make_rng(seed, kTrainStartStream);
    return sample_starts(env, n, rng);
}

std::vector<State> evaluation_starts(Environment const& env, std::size_t n, std::uint64_t seed)
{
    Rng rng = make_rng(seed, kEvalStartStream);
    return sample_starts(env, n, rng);
}

RolloutConfig make_rollout(Environment const& env, std::vector<State> starts, std::size_t horizon, double q)
{
    RolloutConfig r;
    r.horizon = horizon;
    r.q = q;
    r.starts = std::move(starts);
    r.action_low = env.action_low();
    r.action_high = env.action_high();
    r.validate();
    (void)r.gamma();
    return r;
}

PolicyShape policy_shape(Environment const& env)
{
    return {env.state_dim(), env.action_low(), env.action_high()};
}

ParetoArchive archive_from_rows(std::span<ArchiveRow const> rows, Environment const& env)
{
    auto const names = env.variable_names();
    ParetoArchive archive;
    for (auto const& row : rows) {
        if (row.expressions.size() != env.action_dim()) {
            throw DataError("archive row of complexity " + std::to_string(row.complexity) + " has "
                            + std::to_string(row.expressions.size()) + " expressions, environment '"
                            + std::string(env.name()) + "' needs " + std::to_string(env.action_dim()));
        }
        Policy p{{}, env.action_low(), env.action_high()};
        for (auto const& e : row.expressions) {
            p.trees.push_back(parse_tree(e, names));
        }
        archive.offer({p, row.model_fitness, complexity_of(p)});
    }
    return archive;
}

ExperimentRun run_experiment(ExperimentConfig const& cfg, RunInputs const& in, GenerationObserver const& observer)
{
    if (in.env == nullptr || in.model == nullptr) {
        throw UsageError("run: needs an environment and a world model");
    }
    if (in.model->state_dim != in.env->state_dim() || in.model->action_dim != in.env->action_dim()) {
        throw DataError("run: world model dimensions do not match environment '" + std::string(in.env->name()) + "'");
    }
    auto const started = std::chrono::steady_clock::now();
    ModelDynamics const dyn(*in.model, cfg.model_step, in.env);
    auto const shape = policy_shape(*in.env);
    ExperimentRun out;

    if (cfg.mode == Mode::Gprl) {
        auto const rcfg = make_rollout(*in.env, training_starts(*in.env, cfg.rollout.train_starts, cfg.seed),
                                       cfg.rollout.horizon, cfg.rollout.q);
        FitnessFn const f = [&dyn, &rcfg](Policy const& p) { return fitness(dyn, p, rcfg); };
        out.result = run_gprl(cfg.ga, shape, f, observer);
    } else {
        if (in.teacher == nullptr) {
            throw UsageError("run: regress mode needs a teacher policy (see train-teacher)");
        }
        Rng rng = make_rng(cfg.seed, kImitationStream);
        auto const starts = sample_starts(*in.env, cfg.imitation.starts, rng);
        auto const data = make_imitation_dataset(*in.teacher, dyn, starts, cfg.imitation.horizon);
        FitnessFn const f = [&data](Policy const& p) { return regression_fitness(p, data); };
        out.result = run_gprl(cfg.regress_ga, shape, f, observer);
    }
    std::chrono::duration<double> const elapsed = std::chrono::steady_clock::now() - started;
    out.seconds = elapsed.count();
    return out;
}

} // namespace gprl
