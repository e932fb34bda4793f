#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "gprl/error.hpp"
#include "gprl/experiment.hpp"

namespace py = pybind11;
using namespace gprl;

namespace {

std::vector<std::string> names_or_default(std::optional<std::vector<std::string>> const& names)
{
    return names.value_or(std::vector<std::string>{});
}

char const* absorption_name(Absorption a)
{
    switch (a) {
    case Absorption::Goal:
        return "goal";
    case Absorption::Failure:
        return "failure";
    default:
        return "none";
    }
}

// Thin stateful wrapper so Python can drive an episode step by step.
struct PyEnv {
    std::unique_ptr<Environment> env;
    State state;

    explicit PyEnv(std::string const& name) : env(make_environment(name)) {}

    std::vector<double> reset(std::uint64_t seed)
    {
        Rng rng = make_rng(seed);
        state = env->sample_start(rng);
        return state.x;
    }

    void set_state(std::vector<double> x)
    {
        if (x.size() != env->state_dim()) throw InputShapeError("set_state: wrong state size");
        state = State{std::move(x), Absorption::None};
    }

    py::tuple step(std::vector<double> const& action)
    {
        double const r = env->step(state, action);
        return py::make_tuple(state.x, r, absorption_name(state.absorbed));
    }
};

} // namespace

PYBIND11_MODULE(_gprl, m)
{
    m.doc() = "Genetic programming reinforcement learning core";

    py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
    py::register_exception<InputShapeError>(m, "InputShapeError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);

    m.def("discount_for", &discount_for, py::arg("horizon"), py::arg("q"));

    m.def(
        "complexity",
        [](std::string const& text, std::optional<std::vector<std::string>> names) {
            auto const n = names_or_default(names);
            return complexity_of(parse_tree(text, n));
        },
        py::arg("expression"), py::arg("names") = py::none());

    m.def(
        "evaluate",
        [](std::string const& text, std::vector<double> const& state, std::optional<std::vector<std::string>> names) {
            auto const n = names_or_default(names);
            return parse_tree(text, n).eval(state);
        },
        py::arg("expression"), py::arg("state"), py::arg("names") = py::none());

    m.def(
        "simplify",
        [](std::string const& text, std::optional<std::vector<std::string>> names) {
            auto const n = names_or_default(names);
            return format_tree(auto_cancel(parse_tree(text, n)), n);
        },
        py::arg("expression"), py::arg("names") = py::none());

    m.def(
        "random_expression",
        [](std::size_t num_variables, int depth, std::uint64_t seed) {
            Rng rng = make_rng(seed);
            return format_tree(grow(rng, depth, depth, ValueType::Float, {num_variables, -20.0, 20.0}));
        },
        py::arg("num_variables"), py::arg("depth"), py::arg("seed") = 1);

    m.def(
        "penalty",
        [](std::string const& env_name, std::vector<std::string> const& expressions, std::size_t starts,
           std::uint64_t seed, std::optional<std::size_t> horizon) {
            auto const env = make_environment(env_name);
            auto const names = env->variable_names();
            Policy p{{}, env->action_low(), env->action_high()};
            for (auto const& e : expressions) p.trees.push_back(parse_tree(e, names));
            auto const cfg = default_config(env_name, "desk");
            auto const rc = make_rollout(*env, evaluation_starts(*env, starts, seed),
                                         horizon.value_or(cfg.rollout.horizon), cfg.rollout.q);
            return gprl::penalty(*env, p, rc);
        },
        py::arg("env"), py::arg("expressions"), py::arg("starts") = 100, py::arg("seed") = 1,
        py::arg("horizon") = py::none());

    m.def(
        "default_config_json",
        [](std::string const& env, std::string const& profile) { return nlohmann::json(default_config(env, profile)).dump(); },
        py::arg("env"), py::arg("profile") = "desk");

    py::class_<PyEnv>(m, "Environment")
        .def(py::init<std::string const&>(), py::arg("name"))
        .def_property_readonly("variable_names", [](PyEnv const& e) { return e.env->variable_names(); })
        .def_property_readonly("action_low", [](PyEnv const& e) { return e.env->action_low(); })
        .def_property_readonly("action_high", [](PyEnv const& e) { return e.env->action_high(); })
        .def_property_readonly("state", [](PyEnv const& e) { return e.state.x; })
        .def("reset", &PyEnv::reset, py::arg("seed") = 1)
        .def("set_state", &PyEnv::set_state, py::arg("state"))
        .def("step", &PyEnv::step, py::arg("action"));
}
