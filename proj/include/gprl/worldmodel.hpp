#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gprl/envs.hpp"
#include "gprl/regressor.hpp"

namespace gprl {

struct Transition {
    std::vector<double> s;
    std::vector<double> a;
    std::vector<double> sn;
    double r = 0.0;

    friend bool operator==(Transition const&, Transition const&) = default;
};

struct Provenance {
    std::string env;
    std::string sampler;
    std::uint64_t seed = 0;
    std::size_t size = 0;
};

struct TransitionDataset {
    std::vector<Transition> rows;
    Provenance provenance;

    [[nodiscard]] std::size_t size() const noexcept { return rows.size(); }
    [[nodiscard]] std::size_t state_dim() const { return rows.empty() ? 0 : rows.front().s.size(); }
    [[nodiscard]] std::size_t action_dim() const { return rows.empty() ? 0 : rows.front().a.size(); }

    /// Throws UsageError if empty or rows disagree on dimensions.
    void validate() const;
};

/// One JSON object per line: {"s":[...],"a":[...],"sn":[...],"r":x}.
void write_jsonl(std::ostream& out, TransitionDataset const& d);
[[nodiscard]] TransitionDataset read_jsonl(std::istream& in);

struct DatasetSplit {
    TransitionDataset train;
    TransitionDataset validation;
    TransitionDataset generalization;
};

/// Seeded shuffle into 80/10/10 blocks (validation and generalization get floor(n/10),
/// the remainder trains). Throws UsageError for fewer than 10 rows.
[[nodiscard]] DatasetSplit split_dataset(TransitionDataset const& d, Rng& rng);

enum class RewardSource : std::uint8_t { Learned, Analytic };

/// Approximate step function: one delta regressor per state variable, plus a reward
/// regressor over (s, a, s').
struct WorldModel {
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;
    std::vector<Regressor> delta_models;
    Regressor reward_model;
    /// Ranges seen in the training split; model_step clamps into them when enabled.
    std::vector<double> state_min;
    std::vector<double> state_max;
    std::vector<double> action_min;
    std::vector<double> action_max;
    double reward_min = 0.0;
    double reward_max = 0.0;
    Provenance provenance;

    /// s' = s + predicted deltas, r = reward_model(s, a, s').
    void predict(std::span<double const> s, std::span<double const> a, std::span<double> next, double& reward) const;
};

struct WorldModelReport {
    std::vector<TrainReport> delta_reports;
    TrainReport reward_report;
    std::size_t train_rows = 0;
    std::size_t validation_rows = 0;
    std::size_t generalization_rows = 0;
};

struct WorldModelConfig {
    TrainConfig delta;
    TrainConfig reward;
    std::uint64_t split_seed = 1;
};

struct BuiltWorldModel {
    WorldModel model;
    WorldModelReport report;
};

[[nodiscard]] BuiltWorldModel build_world_model(TransitionDataset const& d, WorldModelConfig const& config);

/// Per-variable supervised problems: inputs (s, a), targets s' - s for variable i.
[[nodiscard]] Supervised delta_problem(TransitionDataset const& d, std::size_t variable);
[[nodiscard]] Supervised reward_problem(TransitionDataset const& d);

struct ModelStepOptions {
    /// Clamp predicted states and rewards to the ranges observed in training data.
    bool clamp_to_data = true;
    RewardSource reward = RewardSource::Learned;
};

/// Dynamics adapter over a trained world model. With RewardSource::Analytic the
/// reward comes from `env.reward_of(s')` instead of the reward regressor.
class ModelDynamics final : public Dynamics {
public:
    ModelDynamics(WorldModel const& model, ModelStepOptions options = {}, Environment const* env = nullptr);

    [[nodiscard]] std::size_t state_dim() const override { return model_->state_dim; }
    [[nodiscard]] std::size_t action_dim() const override { return model_->action_dim; }
    double step(State& state, std::span<double const> action) const override;

    [[nodiscard]] WorldModel const& model() const noexcept { return *model_; }
    [[nodiscard]] ModelStepOptions const& options() const noexcept { return options_; }

private:
    WorldModel const* model_;
    ModelStepOptions options_;
    Environment const* env_;
};

/// Single model step on raw vectors (no clamping, learned reward).
struct ModelStepResult {
    std::vector<double> next;
    double reward = 0.0;
};
[[nodiscard]] ModelStepResult model_step(WorldModel const& m, std::span<double const> s, std::span<double const> a);

void to_json(nlohmann::json& j, WorldModel const& m);
void from_json(nlohmann::json const& j, WorldModel& m);

} // namespace gprl
