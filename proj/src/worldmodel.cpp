#include "gprl/worldmodel.hpp"

#include <algorithm>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "gprl/error.hpp"

namespace gprl {

void TransitionDataset::validate() const
{
    if (rows.empty()) {
        throw UsageError("dataset is empty");
    }
    auto const sd = state_dim();
    auto const ad = action_dim();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto const& t = rows[i];
        if (t.s.size() != sd || t.sn.size() != sd || t.a.size() != ad) {
            throw UsageError("dataset row " + std::to_string(i) + " has inconsistent dimensions");
        }
    }
}

void write_jsonl(std::ostream& out, TransitionDataset const& d)
{
    for (auto const& t : d.rows) {
        nlohmann::json const row{{"s", t.s}, {"a", t.a}, {"sn", t.sn}, {"r", t.r}};
        out << row.dump() << '\n';
    }
}

TransitionDataset read_jsonl(std::istream& in)
{
    TransitionDataset d;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            auto const j = nlohmann::json::parse(line);
            d.rows.push_back(Transition{j.at("s").get<std::vector<double>>(), j.at("a").get<std::vector<double>>(),
                                        j.at("sn").get<std::vector<double>>(), j.at("r").get<double>()});
        } catch (nlohmann::json::exception const& e) {
            throw DataError("dataset line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    d.provenance.size = d.rows.size();
    return d;
}

DatasetSplit split_dataset(TransitionDataset const& d, Rng& rng)
{
    if (d.size() < 10) {
        throw UsageError("split_dataset: need at least 10 rows, have " + std::to_string(d.size()));
    }
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), 0U);
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[uniform_index(rng, i)]);
    }
    std::size_t const n_val = d.size() / 10;
    std::size_t const n_gen = d.size() / 10;
    std::size_t const n_train = d.size() - n_val - n_gen;

    DatasetSplit s;
    for (auto* part : {&s.train, &s.validation, &s.generalization}) {
        part->provenance = d.provenance;
    }
    for (std::size_t k = 0; k < order.size(); ++k) {
        auto& part = k < n_train ? s.train : (k < n_train + n_val ? s.validation : s.generalization);
        part.rows.push_back(d.rows[order[k]]);
    }
    for (auto* part : {&s.train, &s.validation, &s.generalization}) {
        part->provenance.size = part->rows.size();
    }
    return s;
}

Supervised delta_problem(TransitionDataset const& d, std::size_t variable)
{
    auto const sd = d.state_dim();
    auto const ad = d.action_dim();
    Supervised p{Matrix(d.size(), sd + ad), Matrix(d.size(), 1)};
    for (std::size_t i = 0; i < d.size(); ++i) {
        auto const& t = d.rows[i];
        auto row = p.inputs.row(i);
        std::copy(t.s.begin(), t.s.end(), row.begin());
        std::copy(t.a.begin(), t.a.end(), row.begin() + static_cast<std::ptrdiff_t>(sd));
        p.targets(i, 0) = t.sn[variable] - t.s[variable];
    }
    return p;
}

Supervised reward_problem(TransitionDataset const& d)
{
    auto const sd = d.state_dim();
    auto const ad = d.action_dim();
    Supervised p{Matrix(d.size(), 2 * sd + ad), Matrix(d.size(), 1)};
    for (std::size_t i = 0; i < d.size(); ++i) {
        auto const& t = d.rows[i];
        auto row = p.inputs.row(i);
        std::copy(t.s.begin(), t.s.end(), row.begin());
        std::copy(t.a.begin(), t.a.end(), row.begin() + static_cast<std::ptrdiff_t>(sd));
        std::copy(t.sn.begin(), t.sn.end(), row.begin() + static_cast<std::ptrdiff_t>(sd + ad));
        p.targets(i, 0) = t.r;
    }
    return p;
}

BuiltWorldModel build_world_model(TransitionDataset const& d, WorldModelConfig const& config)
{
    d.validate();
    Rng rng = make_rng(config.split_seed, 0x73706C6974ULL);
    auto const split = split_dataset(d, rng);

    BuiltWorldModel out;
    auto& m = out.model;
    m.state_dim = d.state_dim();
    m.action_dim = d.action_dim();
    m.provenance = d.provenance;
    out.report.train_rows = split.train.size();
    out.report.validation_rows = split.validation.size();
    out.report.generalization_rows = split.generalization.size();

    for (std::size_t v = 0; v < m.state_dim; ++v) {
        auto cfg = config.delta;
        cfg.seed = derive_seed(config.delta.seed, v);
        auto trained = train_regressor(delta_problem(split.train, v), delta_problem(split.validation, v),
                                       delta_problem(split.generalization, v), cfg);
        trained.report.name = "delta_" + std::to_string(v);
        m.delta_models.push_back(std::move(trained.regressor));
        out.report.delta_reports.push_back(trained.report);
    }
    {
        auto cfg = config.reward;
        cfg.seed = derive_seed(config.reward.seed, m.state_dim);
        auto trained = train_regressor(reward_problem(split.train), reward_problem(split.validation),
                                       reward_problem(split.generalization), cfg);
        trained.report.name = "reward";
        m.reward_model = std::move(trained.regressor);
        out.report.reward_report = trained.report;
    }

    m.state_min.assign(m.state_dim, std::numeric_limits<double>::infinity());
    m.state_max.assign(m.state_dim, -std::numeric_limits<double>::infinity());
    m.action_min.assign(m.action_dim, std::numeric_limits<double>::infinity());
    m.action_max.assign(m.action_dim, -std::numeric_limits<double>::infinity());
    m.reward_min = std::numeric_limits<double>::infinity();
    m.reward_max = -std::numeric_limits<double>::infinity();
    for (auto const& t : split.train.rows) {
        for (std::size_t i = 0; i < m.state_dim; ++i) {
            m.state_min[i] = std::min({m.state_min[i], t.s[i], t.sn[i]});
            m.state_max[i] = std::max({m.state_max[i], t.s[i], t.sn[i]});
        }
        for (std::size_t i = 0; i < m.action_dim; ++i) {
            m.action_min[i] = std::min(m.action_min[i], t.a[i]);
            m.action_max[i] = std::max(m.action_max[i], t.a[i]);
        }
        m.reward_min = std::min(m.reward_min, t.r);
        m.reward_max = std::max(m.reward_max, t.r);
    }
    return out;
}

void WorldModel::predict(std::span<double const> s, std::span<double const> a, std::span<double> next,
                         double& reward) const
{
    thread_local std::vector<double> in;
    in.resize(2 * state_dim + action_dim);
    std::copy(s.begin(), s.end(), in.begin());
    std::copy(a.begin(), a.end(), in.begin() + static_cast<std::ptrdiff_t>(state_dim));
    std::span<double const> const sa(in.data(), state_dim + action_dim);
    for (std::size_t v = 0; v < state_dim; ++v) {
        next[v] = s[v] + delta_models[v].predict_scalar(sa);
    }
    std::copy(next.begin(), next.end(), in.begin() + static_cast<std::ptrdiff_t>(state_dim + action_dim));
    reward = reward_model.predict_scalar(in);
}

ModelStepResult model_step(WorldModel const& m, std::span<double const> s, std::span<double const> a)
{
    if (s.size() != m.state_dim || a.size() != m.action_dim) {
        throw InputShapeError("model_step: state/action size mismatch");
    }
    ModelStepResult r{std::vector<double>(m.state_dim), 0.0};
    m.predict(s, a, r.next, r.reward);
    return r;
}

ModelDynamics::ModelDynamics(WorldModel const& model, ModelStepOptions options, Environment const* env)
    : model_(&model), options_(options), env_(env)
{
    if (options_.reward == RewardSource::Analytic && env_ == nullptr) {
        throw UsageError("ModelDynamics: analytic reward needs an environment");
    }
    if (model.delta_models.size() != model.state_dim) {
        throw UsageError("ModelDynamics: world model needs one delta model per state variable");
    }
}

double ModelDynamics::step(State& state, std::span<double const> action) const
{
    auto const& m = *model_;
    auto const sd = m.state_dim;
    auto const ad = m.action_dim;
    if (state.x.size() != sd || action.size() != ad) {
        throw InputShapeError("model step: state/action size mismatch");
    }
    bool const clamp = options_.clamp_to_data && m.state_min.size() == sd;
    // Layout (s, a, s'): the first sd + ad entries feed the delta models.
    thread_local std::vector<double> in;
    in.resize(2 * sd + ad);
    std::copy(state.x.begin(), state.x.end(), in.begin());
    for (std::size_t i = 0; i < ad; ++i) {
        double a = action[i];
        if (clamp && m.action_min.size() == ad) {
            a = std::clamp(a, m.action_min[i], m.action_max[i]);
        }
        in[sd + i] = a;
    }
    std::span<double const> const sa(in.data(), sd + ad);
    for (std::size_t v = 0; v < sd; ++v) {
        double next = state.x[v] + m.delta_models[v].predict_scalar(sa);
        if (clamp) {
            next = std::clamp(next, m.state_min[v], m.state_max[v]);
        }
        in[sd + ad + v] = next;
    }
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(sd + ad), sd, state.x.begin());
    if (options_.reward == RewardSource::Analytic) {
        return env_->reward_of(state.x);
    }
    double const reward = m.reward_model.predict_scalar(in);
    return clamp ? std::clamp(reward, m.reward_min, m.reward_max) : reward;
}

void to_json(nlohmann::json& j, WorldModel const& m)
{
    nlohmann::json models = nlohmann::json::array();
    for (auto const& r : m.delta_models) {
        nlohmann::json rj = r;
        models.push_back(std::move(rj));
    }
    j = nlohmann::json{
        {"schema_version", 1},
        {"state_dim", m.state_dim},
        {"action_dim", m.action_dim},
        {"models", std::move(models)},
        {"reward_model", m.reward_model},
        {"bounds",
         {{"state_min", m.state_min},
          {"state_max", m.state_max},
          {"action_min", m.action_min},
          {"action_max", m.action_max},
          {"reward_min", m.reward_min},
          {"reward_max", m.reward_max}}},
        {"provenance",
         {{"env", m.provenance.env},
          {"sampler", m.provenance.sampler},
          {"seed", m.provenance.seed},
          {"size", m.provenance.size}}},
    };
}

void from_json(nlohmann::json const& j, WorldModel& m)
{
    m.state_dim = j.at("state_dim").get<std::size_t>();
    m.action_dim = j.at("action_dim").get<std::size_t>();
    m.delta_models.clear();
    for (auto const& r : j.at("models")) {
        m.delta_models.push_back(r.get<Regressor>());
    }
    m.reward_model = j.at("reward_model").get<Regressor>();
    if (m.delta_models.size() != m.state_dim) {
        throw DataError("world model: expected " + std::to_string(m.state_dim) + " delta models, found "
                        + std::to_string(m.delta_models.size()));
    }
    for (auto const& r : m.delta_models) {
        if (r.input_dim() != m.state_dim + m.action_dim || r.output_dim() != 1) {
            throw DataError("world model: delta model has the wrong shape");
        }
    }
    if (m.reward_model.input_dim() != 2 * m.state_dim + m.action_dim || m.reward_model.output_dim() != 1) {
        throw DataError("world model: reward model has the wrong shape");
    }
    if (j.contains("bounds")) {
        auto const& b = j.at("bounds");
        m.state_min = b.at("state_min").get<std::vector<double>>();
        m.state_max = b.at("state_max").get<std::vector<double>>();
        m.action_min = b.value("action_min", std::vector<double>{});
        m.action_max = b.value("action_max", std::vector<double>{});
        m.reward_min = b.at("reward_min").get<double>();
        m.reward_max = b.at("reward_max").get<double>();
    }
    if (j.contains("provenance")) {
        auto const& p = j.at("provenance");
        m.provenance = {p.value("env", std::string{}), p.value("sampler", std::string{}),
                        p.value("seed", std::uint64_t{0}), p.value("size", std::size_t{0})};
    }
}

} // namespace gprl
