#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gprl/expr.hpp"
#include "gprl/random.hpp"

namespace gprl {

struct GAConfig {
    std::size_t population_size = 100;
    std::size_t generations = 100;

    double crossover_ratio = 0.45;
    double reproduction_ratio = 0.05;
    double auto_cancel_ratio = 0.1;
    double terminal_mutation_ratio = 0.1;
    double new_random_ratio = 0.3;
    std::size_t tournament_size = 3;

    int grow_min_depth = 1;
    int grow_max_depth = 5;
    double const_low = -20.0;
    double const_high = 20.0;
    TreeLimits limits;
    ComplexityWeights weights;

    std::uint64_t seed = 1;
    /// Worker threads for fitness evaluation; results never depend on this.
    std::size_t threads = 1;
    /// Optional stopping criteria; 0 disables.
    double wall_clock_seconds = 0.0;
    std::size_t patience = 0;

    /// Throws UsageError on inconsistent settings.
    void validate() const;
};

/// What a policy looks like for a given problem.
struct PolicyShape {
    std::size_t num_variables = 1;
    std::vector<double> low;
    std::vector<double> high;

    [[nodiscard]] std::size_t action_dim() const noexcept { return low.size(); }
};

struct ScoredIndividual {
    Policy policy;
    double fitness = 0.0;
    int complexity = 0;
};

/// Higher is better. Must be deterministic and safe to call concurrently.
using FitnessFn = std::function<double(Policy const&)>;

/// Fitness assigned when evaluation throws or returns a non-finite value.
inline constexpr double kWorstFitness = std::numeric_limits<double>::lowest();

/// Best individual seen so far for each complexity level.
class ParetoArchive {
public:
    /// Replaces the slot for `ind.complexity` if empty or strictly worse. Returns true on change.
    bool offer(ScoredIndividual const& ind);

    [[nodiscard]] std::map<int, ScoredIndividual> const& slots() const noexcept { return slots_; }
    [[nodiscard]] std::size_t size() const noexcept { return slots_.size(); }
    [[nodiscard]] bool empty() const noexcept { return slots_.empty(); }

    /// Non-dominated members in increasing complexity; fitness strictly increases along the list.
    [[nodiscard]] std::vector<ScoredIndividual> front() const;

private:
    std::map<int, ScoredIndividual> slots_;
};

/// Draws k individuals uniformly with replacement and returns the index of the fittest
/// (ties: lower complexity, then lower index). Throws UsageError on empty input or k = 0.
[[nodiscard]] std::size_t tournament_select(std::span<ScoredIndividual const> population, std::size_t k, Rng& rng);

/// Subtree crossover on one randomly chosen action dimension. Cut points must agree
/// in type; offspring breaking the limits trigger up to 10 redraws, after which the
/// parents are returned unchanged.
[[nodiscard]] std::pair<Policy, Policy> crossover(Policy const& a, Policy const& b, Rng& rng,
                                                  TreeLimits const& limits = {}, ComplexityWeights const& weights = {});

/// Gaussian terminal mutation: each float constant z becomes z + 0.1 |z| N(0, 1).
[[nodiscard]] Policy mutate_terminals(Policy const& p, Rng& rng);

[[nodiscard]] bool within_limits(Policy const& p, TreeLimits const& limits, ComplexityWeights const& weights = {});

/// Grow-initialized policy satisfying the configured limits.
[[nodiscard]] Policy random_policy(Rng& rng, PolicyShape const& shape, GAConfig const& config);

/// Scores policies (in parallel when config.threads > 1), in input order.
[[nodiscard]] std::vector<ScoredIndividual> score_all(std::vector<Policy> policies, FitnessFn const& fitness,
                                                      GAConfig const& config);

/// Bucket sizes for one generation: floor(N * ratio) each.
struct Buckets {
    std::size_t crossover = 0;
    std::size_t reproduction = 0;
    std::size_t auto_cancel = 0;
    std::size_t terminal_mutation = 0;
    std::size_t new_random = 0;
    /// Copies spawned per adjusted individual (N * r_a).
    std::size_t adjust_copies = 0;
};

[[nodiscard]] Buckets bucket_sizes(GAConfig const& config);

struct GenerationStats {
    std::size_t crossover = 0;
    std::size_t reproduction = 0;
    std::size_t canceled = 0;
    std::size_t adjusted = 0;
    std::size_t fresh = 0;
    std::size_t evaluations = 0;
};

/// One pass of the generational loop: crossover, reproduction, auto-cancelation,
/// terminal adjustment, fresh individuals. Every scored individual is offered to the archive.
[[nodiscard]] std::vector<ScoredIndividual> evolve_generation(std::span<ScoredIndividual const> population,
                                                              FitnessFn const& fitness, GAConfig const& config,
                                                              PolicyShape const& shape, ParetoArchive& archive,
                                                              std::size_t generation, GenerationStats* stats = nullptr);

using GenerationObserver
    = std::function<void(std::size_t generation, std::span<ScoredIndividual const> population, ParetoArchive const&)>;

struct RunResult {
    ParetoArchive archive;
    std::size_t generations_run = 0;
    std::string stop_reason;
};

/// Random initial population, then evolve_generation until a stopping criterion fires.
/// The observer sees generation 0 (initial population) and every later generation.
[[nodiscard]] RunResult run_gprl(GAConfig const& config, PolicyShape const& shape, FitnessFn const& fitness,
                                 GenerationObserver const& observer = {});

struct SquashedRow {
    int complexity = 0;
    double median = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::size_t runs = 0;
};

/// Penalties of one run's front members, as (complexity, penalty).
using PenaltyCurve = std::vector<std::pair<int, double>>;

/// For each run, the cumulative best (lowest) penalty over increasing complexity;
/// then median/min/max across runs at every integer complexity from the smallest to
/// the largest present. Runs without a member at or below a complexity are skipped there.
[[nodiscard]] std::vector<SquashedRow> squash_curves(std::span<PenaltyCurve const> runs);

[[nodiscard]] std::vector<SquashedRow> squash_fronts(std::span<ParetoArchive const> archives,
                                                     std::function<double(Policy const&)> const& penalty);

struct ArchiveRow {
    int complexity = 0;
    double model_fitness = 0.0;
    std::optional<double> real_penalty;
    std::vector<std::string> expressions;
};

/// CSV: complexity,model_fitness,real_penalty,expression_per_dim. Expressions of a
/// multi-output policy are joined with "; " inside one quoted field.
void write_archive_csv(std::ostream& out, std::span<ArchiveRow const> rows);
[[nodiscard]] std::vector<ArchiveRow> read_archive_csv(std::istream& in);

[[nodiscard]] std::vector<ArchiveRow> archive_rows(ParetoArchive const& archive, std::span<std::string const> names = {});

void write_squashed_csv(std::ostream& out, std::span<SquashedRow const> rows);

} // namespace gprl
