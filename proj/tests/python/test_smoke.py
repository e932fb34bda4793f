import math

import pytest

import gprl


def test_discount():
    assert gprl.discount_for(200, 0.05) == pytest.approx(0.05 ** (1 / 199), abs=1e-12)
    assert gprl.discount_for(10, 1.0) == 1.0
    with pytest.raises(ValueError):
        gprl.discount_for(1, 0.5)


def test_expressions():
    assert gprl.complexity("x0 / x1") == 4
    assert gprl.complexity("rho_dot", ["rho", "rho_dot"]) == 1
    assert gprl.evaluate("x0 / x1", [2.0, 0.0]) == 1.0
    assert gprl.evaluate("tanh(x0) + 1.0", [0.5]) == pytest.approx(math.tanh(0.5) + 1.0)
    assert gprl.simplify("x0 + (2.0 * 3.0)") == "x0 + 6.0"
    with pytest.raises(gprl.ParseError):
        gprl.complexity("x0 + ")


def test_random_expression_round_trips():
    for seed in range(20):
        text = gprl.random_expression(3, 3, seed)
        state = [0.3, -1.2, 2.5]
        assert math.isclose(gprl.evaluate(text, state), gprl.evaluate(gprl.simplify(text), state), abs_tol=1e-9)


def test_environment_stepping():
    env = gprl.Environment("mc")
    assert env.variable_names == ["rho", "rho_dot"]
    env.set_state([0.59, 7.0])
    state, reward, absorbed = env.step([1.0])
    assert reward == 0.0
    assert absorbed == "goal"
    with pytest.raises(ValueError):
        gprl.Environment("ib")


def test_mc_velocity_policy_reaches_goal():
    # Penalty below the all-failing bound means the goal was reached everywhere.
    g = gprl.discount_for(200, 0.05)
    bound = (1 - g**200) / (1 - g)
    assert gprl.penalty("mc", ["rho_dot"], starts=20, seed=3) < bound


def test_default_config():
    cfg = gprl.default_config("cpb", "paper")
    assert cfg["rollout"]["horizon"] == 100
    assert cfg["ga"]["population_size"] == 1000
