// gprl: collect -> train-model -> [train-teacher] -> run -> eval.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gprl/error.hpp"
#include "gprl/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gprl;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

struct Common {
    std::string env;
    std::string profile;
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string mode;
    std::string out;
    std::size_t threads = 0;
};

std::string read_file(fs::path const& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in) {
        throw DataError("cannot open '" + p.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(fs::path const& p, std::string const& text)
{
    if (p.has_parent_path()) {
        fs::create_directories(p.parent_path());
    }
    std::ofstream out(p, std::ios::binary);
    if (!out || !(out << text) || !out.flush()) {
        throw DataError("cannot write '" + p.string() + "'");
    }
}

json read_json(fs::path const& p)
{
    try {
        return json::parse(read_file(p));
    } catch (json::parse_error const& e) {
        throw DataError("'" + p.string() + "' is not valid JSON: " + e.what());
    }
}

fs::path meta_path(fs::path const& p) { return fs::path(p.string() + ".meta.json"); }

ExperimentConfig load_config(Common const& c)
{
    json file = json::object();
    if (!c.config_path.empty()) {
        file = read_json(c.config_path);
    }
    std::string env = !c.env.empty() ? c.env : file.value("env", std::string("mc"));
    std::string profile = !c.profile.empty() ? c.profile : file.value("profile", std::string("desk"));
    auto cfg = default_config(env, profile);
    file.erase("env");
    file.erase("profile");
    file.erase("schema_version");
    if (c.seed) {
        file["seed"] = *c.seed;
    }
    if (!c.mode.empty()) {
        file["mode"] = c.mode;
    }
    if (c.threads > 0) {
        file["ga"]["threads"] = c.threads;
        file["regress_ga"]["threads"] = c.threads;
    }
    apply_overrides(file, cfg);
    return cfg;
}

json meta(ExperimentConfig const& cfg, std::string const& command)
{
    return {{"schema_version", kSchemaVersion}, {"command", command}, {"config", cfg}};
}

WorldModel load_model(fs::path const& p)
{
    try {
        return read_json(p).get<WorldModel>();
    } catch (json::exception const& e) {
        throw DataError("'" + p.string() + "' is not a world model: " + e.what());
    }
}

TeacherPolicy load_teacher(fs::path const& p)
{
    try {
        return read_json(p).get<TeacherPolicy>();
    } catch (json::exception const& e) {
        throw DataError("'" + p.string() + "' is not a teacher policy: " + e.what());
    }
}

void require(std::string const& path, std::string const& what, std::string const& producer)
{
    if (path.empty()) {
        throw UsageError("missing --" + what + " (produce one with `gprl " + producer + "`)");
    }
    if (!fs::exists(path)) {
        throw DataError(what + " '" + path + "' not found (produce it with `gprl " + producer + "`)");
    }
}

json report_json(TrainReport const& r)
{
    return {{"name", r.name},
            {"train_mse", r.train_mse},
            {"validation_mse", r.validation_mse},
            {"generalization_mse", r.generalization_mse},
            {"generalization_r2", r.generalization_r2},
            {"epochs_run", r.epochs_run},
            {"best_epoch", r.best_epoch}};
}

RolloutConfig training_rollout(ExperimentConfig const& cfg, Environment const& env)
{
    return make_rollout(env, training_starts(env, cfg.rollout.train_starts, cfg.seed), cfg.rollout.horizon,
                        cfg.rollout.q);
}

TrainedTeacher fit_teacher(ExperimentConfig const& cfg, Environment const& env, WorldModel const& model)
{
    return train_teacher(model, cfg.model_step, &env, training_rollout(cfg, env), cfg.teacher);
}

json teacher_report(TeacherReport const& r)
{
    return {{"initial_model_penalty", -r.initial_fitness},
            {"final_model_penalty", -r.final_fitness},
            {"restarts_used", r.restarts_used},
            {"diverged", r.diverged}};
}

int cmd_collect(Common const& c, std::size_t samples)
{
    auto cfg = load_config(c);
    if (samples > 0) {
        cfg.dataset.samples = samples;
    }
    if (c.out.empty()) throw UsageError("collect: --out is required");
    auto env = make_environment(cfg.env);
    auto const data = collect_dataset(*env, cfg.dataset, cfg.seed);
    std::ostringstream ss;
    write_jsonl(ss, data);
    write_file(c.out, ss.str());
    auto m = meta(cfg, "collect");
    m["provenance"] = {{"env", data.provenance.env},
                       {"sampler", data.provenance.sampler},
                       {"seed", data.provenance.seed},
                       {"size", data.provenance.size}};
    write_file(meta_path(c.out), m.dump(2) + "\n");
    std::cout << "wrote " << data.size() << " transitions to " << c.out << "\n";
    return 0;
}

int cmd_train_model(Common const& c, std::string const& dataset_path)
{
    auto cfg = load_config(c);
    require(dataset_path, "dataset", "collect");
    if (c.out.empty()) throw UsageError("train-model: --out is required");
    std::ifstream in(dataset_path);
    auto data = read_jsonl(in);
    if (fs::exists(meta_path(dataset_path))) {
        auto const p = read_json(meta_path(dataset_path)).value("provenance", json::object());
        data.provenance.env = p.value("env", std::string{});
        data.provenance.sampler = p.value("sampler", std::string{});
        data.provenance.seed = p.value("seed", std::uint64_t{0});
    }
    data.provenance.size = data.size();
    auto env = make_environment(cfg.env);
    if (!data.provenance.env.empty() && data.provenance.env != cfg.env) {
        throw DataError("dataset was collected on '" + data.provenance.env + "', not '" + cfg.env + "'");
    }
    if (data.state_dim() != env->state_dim() || data.action_dim() != env->action_dim()) {
        throw DataError("dataset dimensions do not match environment '" + cfg.env + "'");
    }
    BuiltWorldModel built;
    try {
        built = build_world_model(data, cfg.model);
    } catch (DivergenceError const& e) {
        throw DivergenceError(std::string("train-model: ") + e.what());
    }
    write_file(c.out, json(built.model).dump() + "\n");
    auto m = meta(cfg, "train-model");
    json reports = json::array();
    for (auto const& r : built.report.delta_reports) reports.push_back(report_json(r));
    m["report"] = {{"delta_models", reports},
                   {"reward_model", report_json(built.report.reward_report)},
                   {"train_rows", built.report.train_rows},
                   {"validation_rows", built.report.validation_rows},
                   {"generalization_rows", built.report.generalization_rows}};
    write_file(meta_path(c.out), m.dump(2) + "\n");
    for (auto const& r : built.report.delta_reports) {
        std::printf("%-10s generalization MSE %.4g  R^2 %.4f  (best epoch %zu)\n", r.name.c_str(),
                    r.generalization_mse, r.generalization_r2, r.best_epoch);
    }
    auto const& r = built.report.reward_report;
    std::printf("%-10s generalization MSE %.4g  R^2 %.4f  (best epoch %zu)\n", r.name.c_str(), r.generalization_mse,
                r.generalization_r2, r.best_epoch);
    return 0;
}

int cmd_train_teacher(Common const& c, std::string const& model_path)
{
    auto cfg = load_config(c);
    require(model_path, "model", "train-model");
    if (c.out.empty()) throw UsageError("train-teacher: --out is required");
    auto env = make_environment(cfg.env);
    auto const model = load_model(model_path);
    auto const trained = fit_teacher(cfg, *env, model);
    write_file(c.out, json(trained.policy).dump() + "\n");
    auto m = meta(cfg, "train-teacher");
    m["model"] = model_path;
    m["report"] = teacher_report(trained.report);
    write_file(meta_path(c.out), m.dump(2) + "\n");
    std::printf("teacher model penalty %.4f (initial %.4f)\n", -trained.report.final_fitness,
                -trained.report.initial_fitness);
    return 0;
}

void write_run(fs::path const& dir, ExperimentConfig const& cfg, Environment const& env, ExperimentRun const& run,
               json manifest)
{
    auto const names = env.variable_names();
    auto const rows = archive_rows(run.result.archive, names);
    std::ostringstream csv;
    write_archive_csv(csv, rows);
    write_file(dir / "archive.csv", csv.str());
    for (auto const& m : run.result.archive.front()) {
        write_file(dir / "policies" / ("complexity_" + std::to_string(m.complexity) + ".txt"),
                   format_policy(m.policy, names));
    }
    manifest["schema_version"] = kSchemaVersion;
    manifest["command"] = "run";
    manifest["env"] = cfg.env;
    manifest["mode"] = cfg.mode == Mode::Gprl ? "gprl" : "regress";
    manifest["seed"] = cfg.seed;
    manifest["config"] = cfg;
    manifest["wall_seconds"] = run.seconds;
    manifest["generations_run"] = run.result.generations_run;
    manifest["stop_reason"] = run.result.stop_reason;
    manifest["front_size"] = rows.size();
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

int cmd_run(Common const& c, std::string const& model_path, std::string const& teacher_path)
{
    auto cfg = load_config(c);
    require(model_path, "model", "train-model");
    if (c.out.empty()) throw UsageError("run: --out (run directory) is required");
    auto env = make_environment(cfg.env);
    auto const model = load_model(model_path);
    json manifest{{"model", model_path}};
    std::optional<TeacherPolicy> teacher;
    if (cfg.mode == Mode::Regress) {
        if (!teacher_path.empty()) {
            require(teacher_path, "teacher", "train-teacher");
            teacher = load_teacher(teacher_path);
            manifest["teacher"] = teacher_path;
        } else {
            auto trained = fit_teacher(cfg, *env, model);
            teacher = trained.policy;
            write_file(fs::path(c.out) / "teacher.json", json(*teacher).dump() + "\n");
            manifest["teacher"] = (fs::path(c.out) / "teacher.json").string();
            manifest["teacher_report"] = teacher_report(trained.report);
        }
    }
    auto const run = run_experiment(cfg, {env.get(), &model, teacher ? &*teacher : nullptr},
                                    [](std::size_t gen, auto, ParetoArchive const& a) {
                                        if (gen % 10 == 0) {
                                            std::fprintf(stderr, "generation %zu: front size %zu\n", gen,
                                                         a.front().size());
                                        }
                                    });
    write_run(c.out, cfg, *env, run, std::move(manifest));
    std::printf("%-10s %-14s %s\n", "complexity", "model_fitness", "expression");
    for (auto const& m : run.result.archive.front()) {
        std::printf("%-10d %-14.6g %s\n", m.complexity, m.fitness,
                    format_tree(m.policy.trees.front(), env->variable_names()).c_str());
    }
    return 0;
}

struct LoadedRun {
    json manifest;
    ParetoArchive archive;
};

LoadedRun load_run(fs::path const& dir, Environment const& env)
{
    if (!fs::exists(dir / "manifest.json") || !fs::exists(dir / "archive.csv")) {
        throw DataError("'" + dir.string() + "' is not a run directory (produce one with `gprl run`)");
    }
    LoadedRun r;
    r.manifest = read_json(dir / "manifest.json");
    auto const env_name = r.manifest.value("env", std::string{});
    if (env_name != env.name()) {
        throw DataError("run '" + dir.string() + "' was made on '" + env_name + "', refusing to evaluate it on '"
                        + std::string(env.name()) + "'");
    }
    std::ifstream in(dir / "archive.csv");
    auto const rows = read_archive_csv(in);
    r.archive = archive_from_rows(rows, env);
    return r;
}

int cmd_eval(Common const& c, std::vector<std::string> const& runs)
{
    auto cfg = load_config(c);
    if (runs.empty()) throw UsageError("eval: at least one --archive run directory is required");
    if (c.out.empty()) throw UsageError("eval: --out is required");
    auto env = make_environment(cfg.env);
    auto const rcfg = make_rollout(*env, evaluation_starts(*env, cfg.rollout.eval_starts, cfg.seed),
                                   cfg.rollout.horizon, cfg.rollout.q);
    std::vector<PenaltyCurve> curves;
    json per_run = json::array();
    for (auto const& dir : runs) {
        auto const loaded = load_run(dir, *env);
        auto const table = evaluate_real(loaded.archive, *env, rcfg);
        std::ostringstream csv;
        write_evaluation_csv(csv, table);
        per_run.push_back({{"run", dir}, {"evaluation", csv.str()}});
        PenaltyCurve curve;
        for (auto const& row : table) curve.emplace_back(row.complexity, row.real_penalty);
        curves.push_back(std::move(curve));
    }
    auto const squashed = squash_curves(curves);
    std::ostringstream out;
    write_squashed_csv(out, squashed);
    write_file(c.out, out.str());
    auto m = meta(cfg, "eval");
    m["runs"] = per_run;
    write_file(meta_path(c.out), m.dump(2) + "\n");
    std::cout << out.str();
    return 0;
}

int cmd_pareto_export(Common const& c, std::vector<std::string> const& runs)
{
    auto cfg = load_config(c);
    if (runs.size() != 1) throw UsageError("pareto-export: exactly one --archive run directory is required");
    auto env = make_environment(cfg.env);
    auto const loaded = load_run(runs.front(), *env);
    std::ostringstream out;
    auto const names = env->variable_names();
    for (auto const& m : loaded.archive.front()) {
        out << "# complexity " << m.complexity << ", model penalty " << -m.fitness << "\n";
        out << format_policy(m.policy, names) << "\n";
    }
    if (c.out.empty()) {
        std::cout << out.str();
    } else {
        write_file(c.out, out.str());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Genetic programming for interpretable RL policies on learned world models"};
    app.require_subcommand(1);
    Common common;
    std::size_t samples = 0;
    std::string dataset;
    std::string model;
    std::string teacher;
    std::vector<std::string> archives;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--env", common.env, "Environment")->check(CLI::IsMember({"mc", "cpb"}));
        sub->add_option("--profile", common.profile, "Default profile")->check(CLI::IsMember({"paper", "desk"}));
        sub->add_option("--config", common.config_path, "JSON overrides")->check(CLI::ExistingFile);
        sub->add_option("--seed", common.seed, "Experiment seed");
        sub->add_option("--out", common.out, "Output path");
        sub->add_option("--threads", common.threads, "Fitness evaluation threads");
    };

    auto* collect = app.add_subcommand("collect", "Collect a transition dataset from the true dynamics");
    add_common(collect);
    collect->add_option("--samples", samples, "Number of transitions");

    auto* train_model = app.add_subcommand("train-model", "Fit the world model to a dataset");
    add_common(train_model);
    train_model->add_option("--dataset", dataset, "JSONL dataset from collect");

    auto* train_teacher_cmd = app.add_subcommand("train-teacher", "Train the neural teacher on a world model");
    add_common(train_teacher_cmd);
    train_teacher_cmd->add_option("--model", model, "World model from train-model");

    auto* run = app.add_subcommand("run", "Evolve policies (gprl) or imitate the teacher (regress)");
    add_common(run);
    run->add_option("--mode", common.mode, "gprl or regress")->check(CLI::IsMember({"gprl", "regress"}));
    run->add_option("--model", model, "World model from train-model");
    run->add_option("--teacher", teacher, "Teacher from train-teacher (regress mode; trained if absent)");

    auto* eval = app.add_subcommand("eval", "Evaluate run fronts on the true dynamics and squash them");
    add_common(eval);
    eval->add_option("--archive", archives, "Run directory (repeatable)");

    auto* pareto = app.add_subcommand("pareto-export", "Print the front of a run as policy text");
    add_common(pareto);
    pareto->add_option("--archive", archives, "Run directory");

    try {
        app.parse(argc, argv);
    } catch (CLI::ParseError const& e) {
        int const code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*collect) return cmd_collect(common, samples);
        if (*train_model) return cmd_train_model(common, dataset);
        if (*train_teacher_cmd) return cmd_train_teacher(common, model);
        if (*run) return cmd_run(common, model, teacher);
        if (*eval) return cmd_eval(common, archives);
        if (*pareto) return cmd_pareto_export(common, archives);
    } catch (UsageError const& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (InputShapeError const& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (std::exception const& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
