#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gprl/random.hpp"

namespace gprl {

enum class Absorption : std::uint8_t { None, Goal, Failure };

struct State {
    std::vector<double> x;
    Absorption absorbed = Absorption::None;

    friend bool operator==(State const&, State const&) = default;
};

/// Anything that advances a state under an action: the true benchmarks and learned
/// world models share this contract so one policy evaluates on both unchanged.
class Dynamics {
public:
    virtual ~Dynamics() = default;

    [[nodiscard]] virtual std::size_t state_dim() const = 0;
    [[nodiscard]] virtual std::size_t action_dim() const = 0;

    /// Advances `state` in place and returns the transition reward.
    /// Actions outside the bounds are clamped first.
    virtual double step(State& state, std::span<double const> action) const = 0;
};

/// Classical explicit RK4 step. `deriv(x, dxdt)` writes the right-hand side.
template <typename Deriv, std::size_t N>
std::array<double, N> rk4_integrate(Deriv&& deriv, std::array<double, N> const& s, double dt)
{
    std::array<double, N> k1{}, k2{}, k3{}, k4{}, tmp{};
    deriv(s, k1);
    for (std::size_t i = 0; i < N; ++i) tmp[i] = s[i] + 0.5 * dt * k1[i];
    deriv(tmp, k2);
    for (std::size_t i = 0; i < N; ++i) tmp[i] = s[i] + 0.5 * dt * k2[i];
    deriv(tmp, k3);
    for (std::size_t i = 0; i < N; ++i) tmp[i] = s[i] + dt * k3[i];
    deriv(tmp, k4);
    std::array<double, N> out{};
    for (std::size_t i = 0; i < N; ++i) {
        out[i] = s[i] + dt * (k1[i] / 6.0 + k2[i] / 3.0 + k3[i] / 3.0 + k4[i] / 6.0);
    }
    return out;
}

/// Dynamic-size overload for arbitrary ODEs.
std::vector<double> rk4_integrate(void (*deriv)(std::span<double const>, std::span<double>, void*), void* ctx,
                                  std::span<double const> s, double dt);

// Mountain car: state (position, velocity), action in [-1, 1].
//
// Per step: v <- clamp(v + force*a - gravity*cos(3p), +-v_max); p <- clamp(p + v, [p_min, p_max]),
// with v zeroed at the left wall. The stored velocity is v * velocity_scale so that it
// is on the same scale as the action.
struct MountainCarParams {
    double force = 0.001;
    double gravity = 0.0025;
    double max_speed = 0.07;
    double velocity_scale = 100.0;
    double min_position = -1.2;
    double max_position = 0.6;
    double goal_position = 0.6;
};

// Frictionless cart-pole, state (theta, theta_dot, rho, rho_dot), force in [-10, 10] N.
struct CartPoleParams {
    double gravity = 9.8;
    double cart_mass = 1.0;
    double pole_mass = 0.1;
    double half_length = 0.5;
    double max_force = 10.0;
    double dt = 0.025;
    double angle_limit = 0.7;
    double position_limit = 2.4;
    double goal_angle = 0.25;
    double goal_position = 0.5;
};

class Environment : public Dynamics {
public:
    [[nodiscard]] virtual std::string_view name() const = 0;
    [[nodiscard]] virtual std::vector<std::string> variable_names() const = 0;
    [[nodiscard]] virtual std::vector<double> action_low() const = 0;
    [[nodiscard]] virtual std::vector<double> action_high() const = 0;
    /// Reward as a function of the successor state alone.
    [[nodiscard]] virtual double reward_of(std::span<double const> next) const = 0;
    [[nodiscard]] virtual State sample_start(Rng& rng) const = 0;
};

class MountainCar final : public Environment {
public:
    explicit MountainCar(MountainCarParams params = {}) : p_(params) {}

    [[nodiscard]] std::size_t state_dim() const override { return 2; }
    [[nodiscard]] std::size_t action_dim() const override { return 1; }
    double step(State& state, std::span<double const> action) const override;

    [[nodiscard]] std::string_view name() const override { return "mc"; }
    [[nodiscard]] std::vector<std::string> variable_names() const override { return {"rho", "rho_dot"}; }
    [[nodiscard]] std::vector<double> action_low() const override { return {-1.0}; }
    [[nodiscard]] std::vector<double> action_high() const override { return {1.0}; }
    [[nodiscard]] double reward_of(std::span<double const> next) const override;
    [[nodiscard]] State sample_start(Rng& rng) const override;

    [[nodiscard]] MountainCarParams const& params() const noexcept { return p_; }
    /// Largest |velocity| in stored (scaled) units.
    [[nodiscard]] double max_velocity() const noexcept { return p_.max_speed * p_.velocity_scale; }

private:
    MountainCarParams p_;
};

class CartPole final : public Environment {
public:
    explicit CartPole(CartPoleParams params = {}) : p_(params) {}

    [[nodiscard]] std::size_t state_dim() const override { return 4; }
    [[nodiscard]] std::size_t action_dim() const override { return 1; }
    double step(State& state, std::span<double const> action) const override;

    [[nodiscard]] std::string_view name() const override { return "cpb"; }
    [[nodiscard]] std::vector<std::string> variable_names() const override
    {
        return {"theta", "theta_dot", "rho", "rho_dot"};
    }
    [[nodiscard]] std::vector<double> action_low() const override { return {-p_.max_force}; }
    [[nodiscard]] std::vector<double> action_high() const override { return {p_.max_force}; }
    [[nodiscard]] double reward_of(std::span<double const> next) const override;
    [[nodiscard]] State sample_start(Rng& rng) const override;

    /// Time derivative of (theta, theta_dot, rho, rho_dot) under constant force.
    void derivatives(std::array<double, 4> const& s, double force, std::array<double, 4>& out) const;

    [[nodiscard]] CartPoleParams const& params() const noexcept { return p_; }
    [[nodiscard]] bool failed(std::span<double const> s) const noexcept;

private:
    CartPoleParams p_;
};

/// "mc" or "cpb"; throws UsageError otherwise.
[[nodiscard]] std::unique_ptr<Environment> make_environment(std::string_view name);

[[nodiscard]] std::vector<State> sample_starts(Environment const& env, std::size_t n, Rng& rng);

/// Concatenates the last H+1 observations, oldest first.
[[nodiscard]] std::vector<double> history_window(std::span<std::vector<double> const> observations, std::size_t horizon);

} // namespace gprl
