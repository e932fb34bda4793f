#include "gprl/genetics.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include "gprl/error.hpp"

namespace gprl {

void GAConfig::validate() const
{
    for (double r : {crossover_ratio, reproduction_ratio, auto_cancel_ratio, terminal_mutation_ratio, new_random_ratio}) {
        if (!(r >= 0.0 && r <= 1.0)) {
            throw UsageError("GA ratios must lie in [0, 1]");
        }
    }
    double const sum
        = crossover_ratio + reproduction_ratio + auto_cancel_ratio + terminal_mutation_ratio + new_random_ratio;
    if (sum > 1.0 + 1e-12) {
        throw UsageError("GA ratios sum to more than 1");
    }
    if (population_size == 0) {
        throw UsageError("population size must be positive");
    }
    if (tournament_size == 0) {
        throw UsageError("tournament size must be positive");
    }
    if (grow_min_depth < 0 || grow_max_depth < grow_min_depth || grow_max_depth > limits.max_depth) {
        throw UsageError("need 0 <= grow_min_depth <= grow_max_depth <= max_depth");
    }
}

bool ParetoArchive::offer(ScoredIndividual const& ind)
{
    auto [it, inserted] = slots_.try_emplace(ind.complexity, ind);
    if (inserted) {
        return true;
    }
    if (ind.fitness > it->second.fitness) {
        it->second = ind;
        return true;
    }
    return false;
}

std::vector<ScoredIndividual> ParetoArchive::front() const
{
    std::vector<ScoredIndividual> out;
    for (auto const& [complexity, ind] : slots_) {
        if (out.empty() || ind.fitness > out.back().fitness) {
            out.push_back(ind);
        }
    }
    return out;
}

namespace {

// Strict "a is preferred over b": fitter, then simpler.
bool preferred(ScoredIndividual const& a, ScoredIndividual const& b)
{
    if (a.fitness != b.fitness) {
        return a.fitness > b.fitness;
    }
    return a.complexity < b.complexity;
}

// Indices of the population ordered best-first, ties by index.
std::vector<std::size_t> ranking(std::span<ScoredIndividual const> pop)
{
    std::vector<std::size_t> idx(pop.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return preferred(pop[a], pop[b]); });
    return idx;
}

double safe_fitness(FitnessFn const& fitness, Policy const& p)
{
    try {
        double const f = fitness(p);
        return std::isfinite(f) ? f : kWorstFitness;
    } catch (...) {
        return kWorstFitness;
    }
}

} // namespace

std::size_t tournament_select(std::span<ScoredIndividual const> population, std::size_t k, Rng& rng)
{
    if (population.empty()) {
        throw UsageError("tournament_select: empty population");
    }
    if (k == 0) {
        throw UsageError("tournament_select: tournament size must be >= 1");
    }
    std::size_t best = uniform_index(rng, population.size());
    for (std::size_t draw = 1; draw < k; ++draw) {
        auto const c = uniform_index(rng, population.size());
        if (preferred(population[c], population[best]) || (!preferred(population[best], population[c]) && c < best)) {
            best = c;
        }
    }
    return best;
}

bool within_limits(Policy const& p, TreeLimits const& limits, ComplexityWeights const& weights)
{
    std::size_t genes = 0;
    for (auto const& t : p.trees) {
        if (t.depth() > limits.max_depth) {
            return false;
        }
        genes += t.size();
    }
    return genes <= limits.max_genes && complexity_of(p, weights) <= limits.max_complexity;
}

std::pair<Policy, Policy> crossover(Policy const& a, Policy const& b, Rng& rng, TreeLimits const& limits,
                                    ComplexityWeights const& weights)
{
    if (a.action_dim() != b.action_dim() || a.action_dim() == 0) {
        throw UsageError("crossover: parents differ in action dimension");
    }
    auto const dim = uniform_index(rng, a.action_dim());
    Tree const& ta = a.trees[dim];
    Tree const& tb = b.trees[dim];
    for (int attempt = 0; attempt < 10; ++attempt) {
        auto const cut_a = uniform_index(rng, ta.size());
        auto const want = ta.type_at(cut_a);
        std::vector<std::size_t> compatible;
        for (std::size_t j = 0; j < tb.size(); ++j) {
            if (tb.type_at(j) == want) {
                compatible.push_back(j);
            }
        }
        if (compatible.empty()) {
            continue;
        }
        auto const cut_b = compatible[uniform_index(rng, compatible.size())];
        Policy ca = a;
        Policy cb = b;
        ca.trees[dim] = ta.splice(cut_a, tb, cut_b);
        cb.trees[dim] = tb.splice(cut_b, ta, cut_a);
        if (within_limits(ca, limits, weights) && within_limits(cb, limits, weights)) {
            return {std::move(ca), std::move(cb)};
        }
    }
    return {a, b};
}

Policy mutate_terminals(Policy const& p, Rng& rng)
{
    Policy out = p;
    for (auto& t : out.trees) {
        t = t.map_constants([&](double z) { return z + 0.1 * std::abs(z) * standard_normal(rng); });
    }
    return out;
}

Policy random_policy(Rng& rng, PolicyShape const& shape, GAConfig const& config)
{
    GrowSpec const spec{shape.num_variables, config.const_low, config.const_high};
    for (;;) {
        Policy p{{}, shape.low, shape.high};
        for (std::size_t d = 0; d < shape.action_dim(); ++d) {
            p.trees.push_back(grow(rng, config.grow_min_depth, config.grow_max_depth, ValueType::Float, spec));
        }
        if (within_limits(p, config.limits, config.weights)) {
            return p;
        }
    }
}

std::vector<ScoredIndividual> score_all(std::vector<Policy> policies, FitnessFn const& fitness, GAConfig const& config)
{
    std::vector<ScoredIndividual> out(policies.size());
    auto work = [&](std::size_t i) {
        out[i].fitness = safe_fitness(fitness, policies[i]);
        out[i].complexity = complexity_of(policies[i], config.weights);
        out[i].policy = std::move(policies[i]);
    };
    std::size_t const threads = std::min<std::size_t>(std::max<std::size_t>(config.threads, 1), policies.size());
    if (threads <= 1) {
        for (std::size_t i = 0; i < policies.size(); ++i) work(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (auto i = next.fetch_add(1); i < policies.size(); i = next.fetch_add(1)) {
                work(i);
            }
        });
    }
    pool.clear();
    return out;
}

Buckets bucket_sizes(GAConfig const& config)
{
    auto const n = static_cast<double>(config.population_size);
    auto bucket = [n](double r) { return static_cast<std::size_t>(std::floor(n * r + 1e-9)); };
    return {bucket(config.crossover_ratio),         bucket(config.reproduction_ratio),
            bucket(config.auto_cancel_ratio),       bucket(config.terminal_mutation_ratio),
            bucket(config.new_random_ratio),        bucket(config.auto_cancel_ratio)};
}

namespace {

// Stream ids keep each kind of draw independent of the others.
enum Stream : std::uint64_t { kCrossover = 1, kReproduction, kAdjust, kFresh, kInit };

Rng slot_rng(GAConfig const& config, std::size_t generation, Stream stream, std::size_t slot)
{
    return make_rng(config.seed, (std::uint64_t{generation} << 8U) | stream, slot);
}

} // namespace

std::vector<ScoredIndividual> evolve_generation(std::span<ScoredIndividual const> population, FitnessFn const& fitness,
                                                GAConfig const& config, PolicyShape const& shape,
                                                ParetoArchive& archive, std::size_t generation, GenerationStats* stats)
{
    if (population.empty()) {
        throw UsageError("evolve_generation: empty population");
    }
    auto const b = bucket_sizes(config);
    std::size_t const n = config.population_size;
    GenerationStats local;

    std::vector<ScoredIndividual> next;
    next.reserve(n);
    std::vector<Policy> unscored;

    // Crossover of tournament winners.
    for (std::size_t slot = 0; unscored.size() < b.crossover; slot += 2) {
        Rng rng = slot_rng(config, generation, kCrossover, slot);
        auto const& pa = population[tournament_select(population, config.tournament_size, rng)];
        auto const& pb = population[tournament_select(population, config.tournament_size, rng)];
        auto [ca, cb] = crossover(pa.policy, pb.policy, rng, config.limits, config.weights);
        unscored.push_back(std::move(ca));
        if (unscored.size() < b.crossover) {
            unscored.push_back(std::move(cb));
        }
    }
    local.crossover = unscored.size();

    // Reproduction keeps the winner's score.
    for (std::size_t slot = 0; slot < b.reproduction; ++slot) {
        Rng rng = slot_rng(config, generation, kReproduction, slot);
        next.push_back(population[tournament_select(population, config.tournament_size, rng)]);
    }
    local.reproduction = b.reproduction;

    // Auto-cancelation of the best individuals.
    auto const order = ranking(population);
    for (std::size_t k = 0; k < b.auto_cancel && k < order.size(); ++k) {
        Policy p = population[order[k]].policy;
        for (auto& t : p.trees) {
            t = auto_cancel(t);
        }
        unscored.push_back(std::move(p));
    }
    local.canceled = std::min(b.auto_cancel, order.size());

    // Terminal adjustment: best individual per complexity level, N*r_a Gaussian copies each.
    std::vector<std::size_t> level_best;
    {
        std::map<int, std::size_t> best_at;
        for (auto i : order) {
            best_at.try_emplace(population[i].complexity, i);
        }
        for (auto const& [c, i] : best_at) {
            if (b.terminal_mutation > 0 && b.adjust_copies > 0) {
                bool has_constant = false;
                for (auto const& t : population[i].policy.trees) {
                    has_constant = has_constant || t.count_constants() > 0;
                }
                if (has_constant) {
                    level_best.push_back(i);
                }
            }
        }
    }
    std::vector<Policy> copies;
    copies.reserve(level_best.size() * b.adjust_copies);
    for (std::size_t l = 0; l < level_best.size(); ++l) {
        for (std::size_t c = 0; c < b.adjust_copies; ++c) {
            Rng rng = slot_rng(config, generation, kAdjust, l * b.adjust_copies + c);
            copies.push_back(mutate_terminals(population[level_best[l]].policy, rng));
        }
    }
    auto scored_copies = score_all(std::move(copies), fitness, config);
    local.evaluations += scored_copies.size();
    std::vector<ScoredIndividual> improved;
    for (std::size_t l = 0; l < level_best.size(); ++l) {
        auto const first = scored_copies.begin() + static_cast<std::ptrdiff_t>(l * b.adjust_copies);
        auto const best = std::min_element(first, first + static_cast<std::ptrdiff_t>(b.adjust_copies),
                                           [](auto const& x, auto const& y) { return preferred(x, y); });
        if (best->fitness > population[level_best[l]].fitness) {
            improved.push_back(*best);
        }
    }
    for (auto const& c : scored_copies) {
        archive.offer(c);
    }
    std::stable_sort(improved.begin(), improved.end(), preferred);
    if (improved.size() > b.terminal_mutation) {
        improved.resize(b.terminal_mutation);
    }
    local.adjusted = improved.size();

    // Fresh individuals fill the rest (at least the r_n bucket).
    std::size_t const taken = unscored.size() + next.size() + improved.size();
    std::size_t const fresh = std::max(b.new_random, n > taken ? n - taken : 0);
    for (std::size_t slot = 0; slot < fresh; ++slot) {
        Rng rng = slot_rng(config, generation, kFresh, slot);
        unscored.push_back(random_policy(rng, shape, config));
    }
    local.fresh = fresh;

    local.evaluations += unscored.size();
    auto scored = score_all(std::move(unscored), fitness, config);
    for (auto const& s : scored) {
        archive.offer(s);
    }

    std::vector<ScoredIndividual> out;
    out.reserve(scored.size() + next.size() + improved.size());
    // Crossover offspring first, then reproduction, canceled, adjusted, fresh.
    auto const n_cx = local.crossover;
    out.insert(out.end(), std::make_move_iterator(scored.begin()),
               std::make_move_iterator(scored.begin() + static_cast<std::ptrdiff_t>(n_cx)));
    out.insert(out.end(), std::make_move_iterator(next.begin()), std::make_move_iterator(next.end()));
    auto const canceled_end = scored.begin() + static_cast<std::ptrdiff_t>(n_cx + local.canceled);
    out.insert(out.end(), std::make_move_iterator(scored.begin() + static_cast<std::ptrdiff_t>(n_cx)),
               std::make_move_iterator(canceled_end));
    out.insert(out.end(), std::make_move_iterator(improved.begin()), std::make_move_iterator(improved.end()));
    out.insert(out.end(), std::make_move_iterator(canceled_end), std::make_move_iterator(scored.end()));
    if (stats != nullptr) {
        *stats = local;
    }
    return out;
}

RunResult run_gprl(GAConfig const& config, PolicyShape const& shape, FitnessFn const& fitness,
                   GenerationObserver const& observer)
{
    config.validate();
    if (shape.action_dim() == 0 || shape.high.size() != shape.low.size()) {
        throw UsageError("run_gprl: policy shape needs matching, non-empty action bounds");
    }
    auto const started = std::chrono::steady_clock::now();
    RunResult result;

    std::vector<Policy> initial;
    initial.reserve(config.population_size);
    for (std::size_t slot = 0; slot < config.population_size; ++slot) {
        Rng rng = slot_rng(config, 0, kInit, slot);
        initial.push_back(random_policy(rng, shape, config));
    }
    auto population = score_all(std::move(initial), fitness, config);
    for (auto const& ind : population) {
        result.archive.offer(ind);
    }
    if (observer) {
        observer(0, population, result.archive);
    }

    std::size_t stale = 0;
    result.stop_reason = "generations";
    for (std::size_t gen = 1; gen <= config.generations; ++gen) {
        if (config.wall_clock_seconds > 0.0) {
            std::chrono::duration<double> const elapsed = std::chrono::steady_clock::now() - started;
            if (elapsed.count() >= config.wall_clock_seconds) {
                result.stop_reason = "wall_clock";
                break;
            }
        }
        // Cheap change detection: compare slot fitnesses before and after.
        std::vector<std::pair<int, double>> before;
        for (auto const& [c, ind] : result.archive.slots()) before.emplace_back(c, ind.fitness);

        population = evolve_generation(population, fitness, config, shape, result.archive, gen);
        result.generations_run = gen;
        if (observer) {
            observer(gen, population, result.archive);
        }

        std::vector<std::pair<int, double>> after;
        for (auto const& [c, ind] : result.archive.slots()) after.emplace_back(c, ind.fitness);
        stale = before == after ? stale + 1 : 0;
        if (config.patience > 0 && stale >= config.patience) {
            result.stop_reason = "patience";
            break;
        }
    }
    return result;
}

namespace {

double median_of(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    auto const m = v.size() / 2;
    return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

} // namespace

std::vector<SquashedRow> squash_curves(std::span<PenaltyCurve const> runs)
{
    if (runs.empty()) {
        throw UsageError("squash_fronts: need at least one run");
    }
    int lo = std::numeric_limits<int>::max();
    int hi = std::numeric_limits<int>::min();
    std::vector<PenaltyCurve> sorted;
    for (auto const& run : runs) {
        auto r = run;
        std::sort(r.begin(), r.end());
        for (auto const& [c, p] : r) {
            lo = std::min(lo, c);
            hi = std::max(hi, c);
        }
        sorted.push_back(std::move(r));
    }
    std::vector<SquashedRow> rows;
    if (lo > hi) {
        return rows;
    }
    for (int c = lo; c <= hi; ++c) {
        std::vector<double> values;
        for (auto const& r : sorted) {
            std::optional<double> best;
            for (auto const& [rc, p] : r) {
                if (rc > c) break;
                best = best ? std::min(*best, p) : p;
            }
            if (best) values.push_back(*best);
        }
        if (values.empty()) {
            continue;
        }
        rows.push_back({c, median_of(values), *std::min_element(values.begin(), values.end()),
                        *std::max_element(values.begin(), values.end()), values.size()});
    }
    return rows;
}

std::vector<SquashedRow> squash_fronts(std::span<ParetoArchive const> archives,
                                       std::function<double(Policy const&)> const& penalty)
{
    std::vector<PenaltyCurve> curves;
    for (auto const& a : archives) {
        PenaltyCurve curve;
        for (auto const& m : a.front()) {
            curve.emplace_back(m.complexity, penalty(m.policy));
        }
        curves.push_back(std::move(curve));
    }
    return squash_curves(curves);
}

} // namespace gprl
