#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gprl/envs.hpp"
#include "gprl/genetics.hpp"
#include "gprl/rl.hpp"
#include "gprl/worldmodel.hpp"

namespace gprl {

inline constexpr int kSchemaVersion = 1;

struct DatasetConfig {
    std::size_t samples = 10000;
    std::size_t episode_length = 100;
    /// Cart-pole random walk: a' = clamp(a + U[-2, 2] * walk_scale).
    double walk_scale = 1.0;
};

struct RolloutSettings {
    std::size_t horizon = 200;
    double q = 0.05;
    std::size_t train_starts = 30;
    std::size_t eval_starts = 100;
};

struct ImitationSettings {
    std::size_t starts = 35;
    std::size_t horizon = 200;
};

enum class Mode : std::uint8_t { Gprl, Regress };

struct ExperimentConfig {
    std::string env = "mc";
    std::string profile = "desk";
    std::uint64_t seed = 1;
    Mode mode = Mode::Gprl;
    DatasetConfig dataset;
    WorldModelConfig model;
    ModelStepOptions model_step;
    RolloutSettings rollout;
    GAConfig ga;
    GAConfig regress_ga;
    TeacherConfig teacher;
    ImitationSettings imitation;
};

/// Defaults for "mc"/"cpb" under the "paper" or "desk" profile. Throws UsageError otherwise.
[[nodiscard]] ExperimentConfig default_config(std::string const& env, std::string const& profile);

void to_json(nlohmann::json& j, ExperimentConfig const& c);
/// Keys present in `j` override the fields of `c`; unknown keys are rejected.
void apply_overrides(nlohmann::json const& j, ExperimentConfig& c);

/// Random-action (mc) or random-walk (cpb) episodes from sampled starts until
/// `samples` transitions exist. Absorbed transitions are kept.
[[nodiscard]] TransitionDataset collect_dataset(Environment const& env, DatasetConfig const& cfg, std::uint64_t seed);

/// Seeded start sets. Training and evaluation draw from separate streams.
[[nodiscard]] std::vector<State> training_starts(Environment const& env, std::size_t n, std::uint64_t seed);
[[nodiscard]] std::vector<State> evaluation_starts(Environment const& env, std::size_t n, std::uint64_t seed);

[[nodiscard]] RolloutConfig make_rollout(Environment const& env, std::vector<State> starts, std::size_t horizon,
                                         double q);

/// Everything a run needs besides the config itself.
struct RunInputs {
    Environment const* env = nullptr;
    WorldModel const* model = nullptr;
    TeacherPolicy const* teacher = nullptr; // regress mode only
};

struct ExperimentRun {
    RunResult result;
    double seconds = 0.0;
};

/// GPRL mode scores on model rollouts; regress mode scores imitation of the teacher
/// on model trajectories.
[[nodiscard]] ExperimentRun run_experiment(ExperimentConfig const& cfg, RunInputs const& in,
                                           GenerationObserver const& observer = {});

[[nodiscard]] PolicyShape policy_shape(Environment const& env);

/// Rebuilds an archive from exported rows; expressions are parsed with the
/// environment's variable names. Throws ParseError/TypeError on bad text.
[[nodiscard]] ParetoArchive archive_from_rows(std::span<ArchiveRow const> rows, Environment const& env);

} // namespace gprl
