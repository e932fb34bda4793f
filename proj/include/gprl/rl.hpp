#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gprl/envs.hpp"
#include "gprl/expr.hpp"
#include "gprl/genetics.hpp"
#include "gprl/regressor.hpp"
#include "gprl/worldmodel.hpp"

namespace gprl {

/// gamma = q^(1/(T-1)): the last of T rewards is weighted by q. Throws UsageError for
/// T <= 1 or q outside [0, 1].
[[nodiscard]] double discount_for(std::size_t horizon, double q);

/// Anything that maps a state to an action vector.
using Controller = std::function<void(std::span<double const> state, std::span<double> action)>;

[[nodiscard]] Controller controller_of(Policy const& policy);

struct RolloutConfig {
    std::size_t horizon = 200;
    double q = 0.05;
    std::vector<State> starts;
    /// Per-start weights; empty means 1 for every start.
    std::vector<double> weights;
    /// Action bounds applied before every step.
    std::vector<double> action_low;
    std::vector<double> action_high;

    [[nodiscard]] double gamma() const { return discount_for(horizon, q); }
    /// Throws UsageError when the config cannot be rolled out.
    void validate() const;
};

struct RolloutResult {
    double ret = 0.0;
    /// Some controller output was NaN or infinite and got replaced by a bound.
    bool nonfinite_action = false;
    State final;
};

/// R = sum_{k<T} gamma^k r_k. Actions are clamped to [low, high]; a non-finite output
/// becomes high for +inf and low otherwise, and sets the flag.
[[nodiscard]] RolloutResult rollout(Dynamics const& dynamics, Controller const& controller, State start,
                                    std::size_t horizon, double gamma, std::span<double const> low,
                                    std::span<double const> high);

[[nodiscard]] double rollout_return(Dynamics const& dynamics, Policy const& policy, State const& start,
                                    std::size_t horizon, double gamma);

/// F = (1/|S|) sum_s w_s R(s).
[[nodiscard]] double fitness(Dynamics const& dynamics, Controller const& controller, RolloutConfig const& cfg);
[[nodiscard]] double fitness(Dynamics const& dynamics, Policy const& policy, RolloutConfig const& cfg);
[[nodiscard]] inline double penalty(Dynamics const& dynamics, Policy const& policy, RolloutConfig const& cfg)
{
    return -fitness(dynamics, policy, cfg);
}

struct EvaluationRow {
    int complexity = 0;
    double model_penalty = 0.0;
    double real_penalty = 0.0;
    std::vector<std::string> expressions;
};

/// Re-scores every front member on the real dynamics (fresh starts in `cfg`).
[[nodiscard]] std::vector<EvaluationRow> evaluate_real(ParetoArchive const& archive, Environment const& env,
                                                       RolloutConfig const& cfg);

void write_evaluation_csv(std::ostream& out, std::span<EvaluationRow const> rows);

/// Neural reference policy: per action dimension a tanh MLP whose output u is mapped
/// to mid + half_width * tanh(u), so actions always lie inside the bounds.
struct TeacherPolicy {
    std::vector<Regressor> nets;
    std::vector<double> low;
    std::vector<double> high;

    [[nodiscard]] std::size_t action_dim() const noexcept { return nets.size(); }
    void act(std::span<double const> state, std::span<double> action) const;
    [[nodiscard]] Controller controller() const;
};

void to_json(nlohmann::json& j, TeacherPolicy const& t);
void from_json(nlohmann::json const& j, TeacherPolicy& t);

enum class TeacherMethod : std::uint8_t { Bptt, HillClimb };

struct TeacherConfig {
    TeacherMethod method = TeacherMethod::Bptt;
    std::vector<std::size_t> hidden{10, 10};
    std::size_t epochs = 600;
    double learning_rate = 0.01;
    double gradient_clip = 1.0;
    /// Independent initializations; the best by model fitness is kept.
    std::size_t restarts = 3;
    /// Accept-if-better Gaussian parameter search run after gradient training.
    std::size_t hill_climb_iterations = 200;
    double hill_climb_sigma = 0.1;
    std::uint64_t seed = 1;
};

struct TeacherReport {
    double initial_fitness = 0.0;
    double final_fitness = 0.0;
    std::size_t restarts_used = 0;
    std::size_t diverged = 0;
};

struct TrainedTeacher {
    TeacherPolicy policy;
    TeacherReport report;
};

/// Untrained teacher with input scaling taken from the world model's training data.
[[nodiscard]] TeacherPolicy make_teacher(WorldModel const& model, std::span<double const> low,
                                         std::span<double const> high, std::vector<std::size_t> const& hidden,
                                         Rng& rng);

/// Maximizes the model fitness by gradient ascent through the unrolled model rollout.
/// With epochs = 0 and no hill climbing the initialization is returned unchanged.
[[nodiscard]] TrainedTeacher train_teacher(WorldModel const& model, ModelStepOptions const& options,
                                           Environment const* env, RolloutConfig const& cfg,
                                           TeacherConfig const& tc);

/// Returns -F of the teacher on the model and writes its gradient w.r.t. the
/// flattened teacher parameters. `env` is needed only for the analytic reward.
double teacher_objective_gradient(TeacherPolicy const& teacher, WorldModel const& model,
                                  ModelStepOptions const& options, Environment const* env, RolloutConfig const& cfg,
                                  std::vector<double>& gradient);

[[nodiscard]] std::vector<double> flatten_params(TeacherPolicy const& t);
void assign_params(TeacherPolicy& t, std::span<double const> flat);

struct ImitationDataset {
    Matrix states;
    Matrix actions;

    [[nodiscard]] std::size_t size() const noexcept { return states.rows; }
};

/// Rolls the teacher on `dynamics` for `horizon` steps from every start and records
/// (state, action) before each step.
[[nodiscard]] ImitationDataset make_imitation_dataset(TeacherPolicy const& teacher, Dynamics const& dynamics,
                                                      std::span<State const> starts, std::size_t horizon);

/// -sum over action dimensions of the MSE between clamped policy outputs and teacher actions.
[[nodiscard]] double regression_fitness(Policy const& policy, ImitationDataset const& data);

} // namespace gprl
