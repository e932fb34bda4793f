#include "gprl/envs.hpp"

#include <algorithm>
#include <cmath>

#include "gprl/error.hpp"

namespace gprl {

std::vector<double> rk4_integrate(void (*deriv)(std::span<double const>, std::span<double>, void*), void* ctx,
                                  std::span<double const> s, double dt)
{
    if (!(dt > 0.0)) {
        throw UsageError("rk4_integrate: dt must be positive");
    }
    auto const n = s.size();
    std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n), out(n);
    deriv(s, k1, ctx);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = s[i] + 0.5 * dt * k1[i];
    deriv(tmp, k2, ctx);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = s[i] + 0.5 * dt * k2[i];
    deriv(tmp, k3, ctx);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = s[i] + dt * k3[i];
    deriv(tmp, k4, ctx);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = s[i] + dt * (k1[i] / 6.0 + k2[i] / 3.0 + k3[i] / 3.0 + k4[i] / 6.0);
    }
    return out;
}

namespace {

void check_step_args(Dynamics const& d, State const& s, std::span<double const> action)
{
    if (s.x.size() != d.state_dim() || action.size() != d.action_dim()) {
        throw InputShapeError("step: state/action size mismatch");
    }
}

} // namespace

double MountainCar::step(State& state, std::span<double const> action) const
{
    check_step_args(*this, state, action);
    if (state.absorbed == Absorption::Goal) {
        return 0.0;
    }
    double const a = std::clamp(action[0], -1.0, 1.0);
    double p = state.x[0];
    double v = state.x[1] / p_.velocity_scale;
    v = std::clamp(v + p_.force * a - p_.gravity * std::cos(3.0 * p), -p_.max_speed, p_.max_speed);
    p = std::clamp(p + v, p_.min_position, p_.max_position);
    if (p <= p_.min_position && v < 0.0) {
        v = 0.0;
    }
    state.x[0] = p;
    state.x[1] = v * p_.velocity_scale;
    if (p >= p_.goal_position) {
        state.absorbed = Absorption::Goal;
    }
    return reward_of(state.x);
}

double MountainCar::reward_of(std::span<double const> next) const { return next[0] >= p_.goal_position ? 0.0 : -1.0; }

State MountainCar::sample_start(Rng& rng) const
{
    return State{{uniform(rng, p_.min_position, p_.max_position), 0.0}, Absorption::None};
}

void CartPole::derivatives(std::array<double, 4> const& s, double force, std::array<double, 4>& out) const
{
    double const theta = s[0];
    double const theta_dot = s[1];
    double const total = p_.cart_mass + p_.pole_mass;
    double const ml = p_.pole_mass * p_.half_length;
    double const sin_t = std::sin(theta);
    double const cos_t = std::cos(theta);
    double const temp = (force + ml * theta_dot * theta_dot * sin_t) / total;
    double const theta_acc
        = (p_.gravity * sin_t - cos_t * temp) / (p_.half_length * (4.0 / 3.0 - p_.pole_mass * cos_t * cos_t / total));
    double const rho_acc = temp - ml * theta_acc * cos_t / total;
    out = {theta_dot, theta_acc, s[3], rho_acc};
}

bool CartPole::failed(std::span<double const> s) const noexcept
{
    return std::abs(s[0]) > p_.angle_limit || std::abs(s[2]) > p_.position_limit;
}

double CartPole::step(State& state, std::span<double const> action) const
{
    check_step_args(*this, state, action);
    if (state.absorbed == Absorption::Failure) {
        return -1.0;
    }
    double const force = std::clamp(action[0], -p_.max_force, p_.max_force);
    std::array<double, 4> const s{state.x[0], state.x[1], state.x[2], state.x[3]};
    auto const next = rk4_integrate(
        [&](std::array<double, 4> const& y, std::array<double, 4>& dy) { derivatives(y, force, dy); }, s, p_.dt);
    std::copy(next.begin(), next.end(), state.x.begin());
    if (failed(state.x)) {
        state.absorbed = Absorption::Failure;
    }
    return reward_of(state.x);
}

double CartPole::reward_of(std::span<double const> next) const
{
    if (failed(next)) {
        return -1.0;
    }
    if (std::abs(next[0]) < p_.goal_angle && std::abs(next[2]) < p_.goal_position) {
        return 0.0;
    }
    return -0.1;
}

State CartPole::sample_start(Rng& rng) const
{
    double const theta = uniform(rng, -p_.angle_limit, p_.angle_limit);
    double const rho = uniform(rng, -p_.position_limit, p_.position_limit);
    return State{{theta, 0.0, rho, 0.0}, Absorption::None};
}

std::unique_ptr<Environment> make_environment(std::string_view name)
{
    if (name == "mc") {
        return std::make_unique<MountainCar>();
    }
    if (name == "cpb") {
        return std::make_unique<CartPole>();
    }
    throw UsageError("unknown environment '" + std::string(name) + "' (expected mc or cpb)");
}

std::vector<State> sample_starts(Environment const& env, std::size_t n, Rng& rng)
{
    if (n == 0) {
        throw UsageError("sample_starts: n must be >= 1");
    }
    std::vector<State> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(env.sample_start(rng));
    }
    return out;
}

std::vector<double> history_window(std::span<std::vector<double> const> observations, std::size_t horizon)
{
    if (observations.size() < horizon + 1) {
        throw UsageError("history_window: need " + std::to_string(horizon + 1) + " observations, have "
                         + std::to_string(observations.size()));
    }
    auto const first = observations.size() - horizon - 1;
    std::size_t const dim = observations[first].size();
    std::vector<double> out;
    out.reserve((horizon + 1) * dim);
    for (auto i = first; i < observations.size(); ++i) {
        if (observations[i].size() != dim) {
            throw InputShapeError("history_window: observations differ in size");
        }
        out.insert(out.end(), observations[i].begin(), observations[i].end());
    }
    return out;
}

} // namespace gprl
