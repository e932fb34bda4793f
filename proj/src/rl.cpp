#include "gprl/rl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include <nlohmann/json.hpp>

#include "gprl/error.hpp"

namespace gprl {

double discount_for(std::size_t horizon, double q)
{
    if (horizon <= 1) {
        throw UsageError("discount_for: horizon must exceed 1");
    }
    if (!(q >= 0.0 && q <= 1.0)) {
        throw UsageError("discount_for: q must lie in [0, 1]");
    }
    return std::pow(q, 1.0 / static_cast<double>(horizon - 1));
}

Controller controller_of(Policy const& policy)
{
    return [&policy](std::span<double const> s, std::span<double> a) { policy.act(s, a); };
}

void RolloutConfig::validate() const
{
    if (horizon == 0) {
        throw UsageError("rollout horizon must be at least 1");
    }
    if (starts.empty()) {
        throw UsageError("rollout needs at least one start state");
    }
    if (!weights.empty() && weights.size() != starts.size()) {
        throw UsageError("rollout weights must match the start states");
    }
    if (action_low.size() != action_high.size()) {
        throw UsageError("rollout action bounds differ in length");
    }
}

RolloutResult rollout(Dynamics const& dynamics, Controller const& controller, State start, std::size_t horizon,
                      double gamma, std::span<double const> low, std::span<double const> high)
{
    auto const ad = dynamics.action_dim();
    if (low.size() != ad || high.size() != ad) {
        throw InputShapeError("rollout: action bounds do not match the dynamics");
    }
    RolloutResult out;
    std::vector<double> action(ad);
    double discount = 1.0;
    for (std::size_t k = 0; k < horizon; ++k) {
        controller(start.x, action);
        for (std::size_t i = 0; i < ad; ++i) {
            if (!std::isfinite(action[i])) {
                out.nonfinite_action = true;
                action[i] = action[i] > 0.0 ? high[i] : low[i];
            }
            action[i] = std::clamp(action[i], low[i], high[i]);
        }
        out.ret += discount * dynamics.step(start, action);
        discount *= gamma;
    }
    out.final = std::move(start);
    return out;
}

double rollout_return(Dynamics const& dynamics, Policy const& policy, State const& start, std::size_t horizon,
                      double gamma)
{
    return rollout(dynamics, controller_of(policy), start, horizon, gamma, policy.low, policy.high).ret;
}

double fitness(Dynamics const& dynamics, Controller const& controller, RolloutConfig const& cfg)
{
    cfg.validate();
    double const gamma = cfg.horizon > 1 ? cfg.gamma() : 1.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < cfg.starts.size(); ++i) {
        double const w = cfg.weights.empty() ? 1.0 : cfg.weights[i];
        sum += w * rollout(dynamics, controller, cfg.starts[i], cfg.horizon, gamma, cfg.action_low, cfg.action_high).ret;
    }
    return sum / static_cast<double>(cfg.starts.size());
}

double fitness(Dynamics const& dynamics, Policy const& policy, RolloutConfig const& cfg)
{
    return fitness(dynamics, controller_of(policy), cfg);
}

std::vector<EvaluationRow> evaluate_real(ParetoArchive const& archive, Environment const& env,
                                         RolloutConfig const& cfg)
{
    std::vector<EvaluationRow> rows;
    auto const names = env.variable_names();
    for (auto const& m : archive.front()) {
        EvaluationRow row;
        row.complexity = m.complexity;
        row.model_penalty = -m.fitness;
        row.real_penalty = penalty(env, m.policy, cfg);
        for (auto const& t : m.policy.trees) {
            row.expressions.push_back(format_tree(t, names));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_evaluation_csv(std::ostream& out, std::span<EvaluationRow const> rows)
{
    out << "complexity,model_penalty,real_penalty,expression\n";
    char buf[64];
    for (auto const& r : rows) {
        std::string joined;
        for (std::size_t i = 0; i < r.expressions.size(); ++i) {
            joined += (i > 0 ? "; " : "") + r.expressions[i];
        }
        std::snprintf(buf, sizeof buf, "%.17g,%.17g", r.model_penalty, r.real_penalty);
        out << r.complexity << ',' << buf << ",\"" << joined << "\"\n";
    }
}

// ---------------------------------------------------------------------------------
// Teacher

void TeacherPolicy::act(std::span<double const> state, std::span<double> action) const
{
    if (action.size() != nets.size()) {
        throw InputShapeError("teacher: action buffer size mismatch");
    }
    for (std::size_t i = 0; i < nets.size(); ++i) {
        double const mid = 0.5 * (high[i] + low[i]);
        double const half = 0.5 * (high[i] - low[i]);
        action[i] = std::clamp(mid + half * std::tanh(nets[i].predict_scalar(state)), low[i], high[i]);
    }
}

Controller TeacherPolicy::controller() const
{
    return [this](std::span<double const> s, std::span<double> a) { act(s, a); };
}

void to_json(nlohmann::json& j, TeacherPolicy const& t)
{
    nlohmann::json nets = nlohmann::json::array();
    for (auto const& n : t.nets) {
        nets.push_back(n);
    }
    j = nlohmann::json{
        {"schema_version", 1}, {"role", "teacher"}, {"low", t.low}, {"high", t.high}, {"nets", std::move(nets)}};
}

void from_json(nlohmann::json const& j, TeacherPolicy& t)
{
    if (j.value("role", std::string{}) != "teacher") {
        throw DataError("teacher file: missing role \"teacher\"");
    }
    t.low = j.at("low").get<std::vector<double>>();
    t.high = j.at("high").get<std::vector<double>>();
    t.nets.clear();
    for (auto const& n : j.at("nets")) {
        t.nets.push_back(n.get<Regressor>());
    }
    if (t.nets.size() != t.low.size() || t.high.size() != t.low.size()) {
        throw DataError("teacher file: bounds do not match the number of nets");
    }
}

TeacherPolicy make_teacher(WorldModel const& model, std::span<double const> low, std::span<double const> high,
                           std::vector<std::size_t> const& hidden, Rng& rng)
{
    if (low.size() != model.action_dim || high.size() != model.action_dim) {
        throw UsageError("make_teacher: action bounds do not match the model");
    }
    auto const sd = model.state_dim;
    Normalization in = Normalization::identity(sd);
    if (!model.delta_models.empty() && model.delta_models.front().input_norm.mean.size() >= sd) {
        auto const& n = model.delta_models.front().input_norm;
        in.mean.assign(n.mean.begin(), n.mean.begin() + static_cast<std::ptrdiff_t>(sd));
        in.std.assign(n.std.begin(), n.std.begin() + static_cast<std::ptrdiff_t>(sd));
    }
    std::vector<std::size_t> sizes{sd};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    TeacherPolicy t;
    t.low.assign(low.begin(), low.end());
    t.high.assign(high.begin(), high.end());
    for (std::size_t i = 0; i < model.action_dim; ++i) {
        Regressor r{Mlp(sizes, Activation::Tanh), in, Normalization::identity(1)};
        r.net.initialize(rng);
        t.nets.push_back(std::move(r));
    }
    return t;
}

std::vector<double> flatten_params(TeacherPolicy const& t)
{
    std::vector<double> out;
    for (auto const& n : t.nets) {
        out.insert(out.end(), n.net.params().begin(), n.net.params().end());
    }
    return out;
}

void assign_params(TeacherPolicy& t, std::span<double const> flat)
{
    std::size_t at = 0;
    for (auto& n : t.nets) {
        auto& p = n.net.params();
        if (at + p.size() > flat.size()) {
            throw UsageError("assign_params: too few parameters");
        }
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(at), p.size(), p.begin());
        at += p.size();
    }
    if (at != flat.size()) {
        throw UsageError("assign_params: too many parameters");
    }
}

namespace {

struct StepRecord {
    std::vector<Mlp::Tape> teacher_tapes;
    std::vector<double> squash; // tanh(u) per action dimension
    std::vector<double> raw_action;
    std::vector<Mlp::Tape> delta_tapes;
    std::vector<double> pre_next;
    Mlp::Tape reward_tape;
    double reward_pre = 0.0;
};

bool outside(double x, double lo, double hi) { return x < lo || x > hi; }

} // namespace

double teacher_objective_gradient(TeacherPolicy const& teacher, WorldModel const& model,
                                  ModelStepOptions const& options, Environment const* env, RolloutConfig const& cfg,
                                  std::vector<double>& gradient)
{
    cfg.validate();
    if (options.reward == RewardSource::Analytic && env == nullptr) {
        throw UsageError("teacher gradient: analytic reward needs an environment");
    }
    auto const sd = model.state_dim;
    auto const ad = model.action_dim;
    if (teacher.action_dim() != ad) {
        throw UsageError("teacher gradient: teacher and model disagree on the action dimension");
    }
    bool const clamp = options.clamp_to_data && model.state_min.size() == sd;
    bool const clamp_action = clamp && model.action_min.size() == ad;
    double const gamma = cfg.horizon > 1 ? cfg.gamma() : 1.0;

    std::vector<std::size_t> offsets;
    std::size_t total = 0;
    for (auto const& n : teacher.nets) {
        offsets.push_back(total);
        total += n.net.params().size();
    }
    gradient.assign(total, 0.0);

    std::vector<StepRecord> records(cfg.horizon);
    std::vector<double> in(2 * sd + ad);
    std::vector<double> grad_in(2 * sd + ad);
    std::vector<double> lambda(sd);
    std::vector<double> g_next(sd);
    std::vector<double> g_s(sd);
    std::vector<double> g_a(ad);
    double loss = 0.0;
    double const n_starts = static_cast<double>(cfg.starts.size());

    for (std::size_t si = 0; si < cfg.starts.size(); ++si) {
        double const c = (cfg.weights.empty() ? 1.0 : cfg.weights[si]) / n_starts;
        std::vector<double> s = cfg.starts[si].x;
        if (s.size() != sd) {
            throw InputShapeError("teacher gradient: start state size mismatch");
        }
        double discount = 1.0;
        // Forward pass, mirroring ModelDynamics::step.
        for (std::size_t t = 0; t < cfg.horizon; ++t) {
            auto& rec = records[t];
            rec.teacher_tapes.resize(ad);
            rec.squash.resize(ad);
            rec.raw_action.resize(ad);
            rec.delta_tapes.resize(sd);
            rec.pre_next.resize(sd);
            std::copy(s.begin(), s.end(), in.begin());
            for (std::size_t i = 0; i < ad; ++i) {
                double u = 0.0;
                teacher.nets[i].predict(s, rec.teacher_tapes[i], std::span<double>(&u, 1));
                rec.squash[i] = std::tanh(u);
                double const mid = 0.5 * (teacher.high[i] + teacher.low[i]);
                double const half = 0.5 * (teacher.high[i] - teacher.low[i]);
                double a = std::clamp(mid + half * rec.squash[i], cfg.action_low[i], cfg.action_high[i]);
                rec.raw_action[i] = a;
                if (clamp_action) {
                    a = std::clamp(a, model.action_min[i], model.action_max[i]);
                }
                in[sd + i] = a;
            }
            std::span<double const> const sa(in.data(), sd + ad);
            for (std::size_t v = 0; v < sd; ++v) {
                double d = 0.0;
                model.delta_models[v].predict(sa, rec.delta_tapes[v], std::span<double>(&d, 1));
                rec.pre_next[v] = s[v] + d;
                double next = rec.pre_next[v];
                if (clamp) {
                    next = std::clamp(next, model.state_min[v], model.state_max[v]);
                }
                in[sd + ad + v] = next;
            }
            double r = 0.0;
            std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(sd + ad), sd, s.begin());
            if (options.reward == RewardSource::Analytic) {
                r = env->reward_of(s);
            } else {
                model.reward_model.predict(in, rec.reward_tape, std::span<double>(&rec.reward_pre, 1));
                r = clamp ? std::clamp(rec.reward_pre, model.reward_min, model.reward_max) : rec.reward_pre;
            }
            loss -= c * discount * r;
            discount *= gamma;
        }

        // Backward pass. lambda = dL/ds_{t+1}.
        std::fill(lambda.begin(), lambda.end(), 0.0);
        for (std::size_t t = cfg.horizon; t-- > 0;) {
            auto const& rec = records[t];
            discount = std::pow(gamma, static_cast<double>(t));
            g_next = lambda;
            std::fill(g_s.begin(), g_s.end(), 0.0);
            std::fill(g_a.begin(), g_a.end(), 0.0);
            if (options.reward == RewardSource::Learned
                && !(clamp && outside(rec.reward_pre, model.reward_min, model.reward_max))) {
                double const dr = -c * discount;
                model.reward_model.backward(rec.reward_tape, std::span<double const>(&dr, 1), {}, grad_in);
                for (std::size_t v = 0; v < sd; ++v) {
                    g_s[v] += grad_in[v];
                    g_next[v] += grad_in[sd + ad + v];
                }
                for (std::size_t i = 0; i < ad; ++i) g_a[i] += grad_in[sd + i];
            }
            for (std::size_t v = 0; v < sd; ++v) {
                double const dpre
                    = clamp && outside(rec.pre_next[v], model.state_min[v], model.state_max[v]) ? 0.0 : g_next[v];
                if (dpre == 0.0) continue;
                g_s[v] += dpre;
                model.delta_models[v].backward(rec.delta_tapes[v], std::span<double const>(&dpre, 1), {},
                                               std::span<double>(grad_in.data(), sd + ad));
                for (std::size_t k = 0; k < sd; ++k) g_s[k] += grad_in[k];
                for (std::size_t i = 0; i < ad; ++i) g_a[i] += grad_in[sd + i];
            }
            for (std::size_t i = 0; i < ad; ++i) {
                if (clamp_action && outside(rec.raw_action[i], model.action_min[i], model.action_max[i])) {
                    continue;
                }
                double const half = 0.5 * (teacher.high[i] - teacher.low[i]);
                double const du = g_a[i] * half * (1.0 - rec.squash[i] * rec.squash[i]);
                if (du == 0.0) continue;
                std::span<double> pg(gradient.data() + offsets[i], teacher.nets[i].net.params().size());
                teacher.nets[i].backward(rec.teacher_tapes[i], std::span<double const>(&du, 1), pg,
                                         std::span<double>(grad_in.data(), sd));
                for (std::size_t k = 0; k < sd; ++k) g_s[k] += grad_in[k];
            }
            lambda = g_s;
        }
    }
    return loss;
}

namespace {

double teacher_model_fitness(TeacherPolicy const& t, ModelDynamics const& dyn, RolloutConfig const& cfg)
{
    return fitness(dyn, t.controller(), cfg);
}

struct Adam {
    std::vector<double> m, v;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::size_t step = 0;

    void apply(std::vector<double>& params, std::vector<double> const& grad, double lr)
    {
        if (m.empty()) {
            m.assign(params.size(), 0.0);
            v.assign(params.size(), 0.0);
        }
        ++step;
        double const c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        double const c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
};

} // namespace

TrainedTeacher train_teacher(WorldModel const& model, ModelStepOptions const& options, Environment const* env,
                             RolloutConfig const& cfg, TeacherConfig const& tc)
{
    cfg.validate();
    ModelDynamics const dyn(model, options, env);
    TrainedTeacher best;
    double best_fitness = kWorstFitness;
    bool const gradient_training = tc.method == TeacherMethod::Bptt && tc.epochs > 0;
    std::size_t const restarts = gradient_training || tc.method == TeacherMethod::HillClimb
                                     ? std::max<std::size_t>(tc.restarts, 1)
                                     : 1;

    for (std::size_t r = 0; r < restarts; ++r) {
        Rng rng = make_rng(tc.seed, r);
        TeacherPolicy teacher = make_teacher(model, cfg.action_low, cfg.action_high, tc.hidden, rng);
        double const initial = teacher_model_fitness(teacher, dyn, cfg);
        if (r == 0) {
            best.report.initial_fitness = initial;
        }
        auto params = flatten_params(teacher);
        auto candidate = params;
        double candidate_fitness = initial;
        if (gradient_training) {
            Adam adam;
            std::vector<double> grad;
            for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
                assign_params(teacher, params);
                double const loss = teacher_objective_gradient(teacher, model, options, env, cfg, grad);
                double norm = 0.0;
                for (double g : grad) norm += g * g;
                norm = std::sqrt(norm);
                if (!std::isfinite(loss) || !std::isfinite(norm)) {
                    ++best.report.diverged;
                    break;
                }
                if (-loss > candidate_fitness) {
                    candidate_fitness = -loss;
                    candidate = params;
                }
                if (norm > tc.gradient_clip && norm > 0.0) {
                    for (double& g : grad) g *= tc.gradient_clip / norm;
                }
                adam.apply(params, grad, tc.learning_rate);
            }
            assign_params(teacher, params);
            double const last = teacher_model_fitness(teacher, dyn, cfg);
            if (std::isfinite(last) && last > candidate_fitness) {
                candidate_fitness = last;
                candidate = params;
            }
        }
        ++best.report.restarts_used;
        if (r == 0 || candidate_fitness > best_fitness) {
            best_fitness = candidate_fitness;
            assign_params(teacher, candidate);
            best.policy = teacher;
        }
    }

    if (tc.hill_climb_iterations > 0) {
        Rng rng = make_rng(tc.seed, 0x4843ULL);
        auto params = flatten_params(best.policy);
        TeacherPolicy trial = best.policy;
        double sigma = tc.hill_climb_sigma;
        for (std::size_t it = 0; it < tc.hill_climb_iterations; ++it) {
            auto proposal = params;
            for (double& p : proposal) p += sigma * standard_normal(rng);
            assign_params(trial, proposal);
            double const f = teacher_model_fitness(trial, dyn, cfg);
            if (std::isfinite(f) && f > best_fitness) {
                best_fitness = f;
                params = std::move(proposal);
                sigma *= 1.5;
            } else {
                sigma *= 0.95;
            }
        }
        assign_params(best.policy, params);
    }
    best.report.final_fitness = best_fitness;
    return best;
}

ImitationDataset make_imitation_dataset(TeacherPolicy const& teacher, Dynamics const& dynamics,
                                        std::span<State const> starts, std::size_t horizon)
{
    auto const sd = dynamics.state_dim();
    auto const ad = dynamics.action_dim();
    if (teacher.action_dim() != ad) {
        throw UsageError("imitation dataset: teacher and dynamics disagree on the action dimension");
    }
    ImitationDataset d{Matrix(starts.size() * horizon, sd), Matrix(starts.size() * horizon, ad)};
    std::size_t row = 0;
    for (auto const& start : starts) {
        State s = start;
        for (std::size_t t = 0; t < horizon; ++t, ++row) {
            std::copy(s.x.begin(), s.x.end(), d.states.row(row).begin());
            auto a = d.actions.row(row);
            teacher.act(s.x, a);
            (void)dynamics.step(s, a);
        }
    }
    return d;
}

double regression_fitness(Policy const& policy, ImitationDataset const& data)
{
    if (data.size() == 0) {
        throw UsageError("regression_fitness: empty dataset");
    }
    auto const ad = policy.action_dim();
    if (data.actions.cols != ad) {
        throw InputShapeError("regression_fitness: policy and dataset differ in action dimension");
    }
    std::vector<double> out(ad);
    double sse = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        policy.act(data.states.row(i), out);
        auto const target = data.actions.row(i);
        for (std::size_t k = 0; k < ad; ++k) {
            sse += (out[k] - target[k]) * (out[k] - target[k]);
        }
    }
    // Sum over dimensions of per-dimension means.
    return -sse / static_cast<double>(data.size());
}

} // namespace gprl
