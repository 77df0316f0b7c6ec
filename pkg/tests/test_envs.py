import numpy as np
import pytest

from hcdyna.envs import make_env, ENV_TAGS
from hcdyna.envs import tabular as tab
from hcdyna.errors import ConfigurationError


# --- GridWorld -----------------------------------------------------------------


def test_gridworld_up_move():
    # 0.05 move arithmetic, at a state the wall cannot interfere with
    env = make_env("gridworld")
    s2, r, term = env.step(np.array([0.2, 0.5]), 0)
    assert np.allclose(s2, [0.2, 0.55])
    assert r == -1.0 and not term


def test_gridworld_goal_entry():
    env = make_env("gridworld")
    s2, r, term = env.step(np.array([0.97, 0.93]), 0)
    assert np.allclose(s2, [0.97, 0.98])
    assert term


def test_gridworld_boundary_clip():
    env = make_env("gridworld")
    s2, _, _ = env.step(np.array([0.0, 0.0]), 2)
    assert np.array_equal(s2, np.array([0.0, 0.0]))


def test_gridworld_wall_cancels_move():
    env = make_env("gridworld")
    s = np.array([0.42, 0.4])
    s2, _, _ = env.step(s, 3)  # right, into the wall band
    assert np.array_equal(s2, s)
    # above the wall the same move passes
    s2, _, _ = env.step(np.array([0.42, 0.85]), 3)
    assert np.allclose(s2, [0.47, 0.85])


def test_gridworld_start_region():
    env = make_env("gridworld")
    rng = np.random.default_rng(0)
    for _ in range(100):
        s = env.initial_state(rng)
        assert (0 <= s).all() and (s <= 0.05).all()


def test_gridworld_invalid_action():
    env = make_env("gridworld")
    with pytest.raises(ValueError):
        env.step(np.array([0.5, 0.5]), 7)


def test_continuous_action_gridworld_moves():
    env = make_env("gridworld-cont-action")
    s2, r, term = env.step(np.array([0.2, 0.2]), np.array([1.0, 1.0]))
    assert np.allclose(s2, [0.25, 0.25])
    assert r == -1.0 and not term
    s2, _, _ = env.step(np.array([0.2, 0.2]), np.array([0.0, 0.0]))
    assert np.allclose(s2, [0.2, 0.2])
    # step into the wall is cancelled
    s = np.array([0.42, 0.5])
    s2, _, _ = env.step(s, np.array([1.0, 0.0]))
    assert np.array_equal(s2, s)


# --- TabularGridWorld ------------------------------------------------------------


def test_tabular_forced_success_moves_right():
    env = tab.TabularGridWorld(success_prob=1.0)
    rng = np.random.default_rng(0)
    cell2, r, term = env.step(tab.START_CELL, 3, rng)  # right
    assert tab.cell_to_colrow(cell2) == (1, 0)
    assert r == -1.0 and not term


def test_tabular_intended_direction_frequency():
    # success prob 0.8 plus 0.2/4 chance the random action coincides -> 0.85
    env = tab.TabularGridWorld()
    rng = np.random.default_rng(1)
    center = tab.colrow_to_cell(10, 10)
    hits = 0
    n = 100_000
    expected = tab.apply_move(center, 0)
    for _ in range(n):
        cell2, _, _ = env.step(center, 0, rng)
        hits += cell2 == expected
    assert abs(hits / n - 0.85) < 0.01


def test_tabular_goal_is_terminal_on_entry():
    env = tab.TabularGridWorld(success_prob=1.0)
    rng = np.random.default_rng(2)
    below_goal = tab.colrow_to_cell(19, 18)
    cell2, _, term = env.step(below_goal, 0, rng)
    assert cell2 == tab.GOAL_CELL and term


def test_tabular_off_grid_stays():
    env = tab.TabularGridWorld(success_prob=1.0)
    rng = np.random.default_rng(3)
    cell2, _, _ = env.step(tab.START_CELL, 1, rng)  # down from bottom row
    assert cell2 == tab.START_CELL


def test_cell_center_round_trip():
    for cell in range(tab.N_CELLS):
        x, y = tab.cell_to_center(cell)
        assert tab.center_to_cell(x, y) == cell
    assert np.allclose(tab.cell_to_center(tab.START_CELL), [0.025, 0.025])
    assert np.allclose(tab.cell_to_center(tab.GOAL_CELL), [0.975, 0.975])


# --- MountainCar -----------------------------------------------------------------


def test_mountaincar_coast_equation():
    env = make_env("mountaincar")
    s2, r, term = env.step(np.array([-0.5, 0.0]), 1)
    vel = -0.0025 * np.cos(3 * -0.5)
    assert np.allclose(s2, [np.clip(-0.5 + vel, -1.2, 0.6), vel])
    assert r == -1.0 and not term


def test_mountaincar_terminal_iff_position_reaches_goal():
    env = make_env("mountaincar")
    s2, _, term = env.step(np.array([0.45, 0.07]), 2)
    assert term == (s2[0] >= 0.5)
    assert term  # 0.45 + ~0.07 passes 0.5
    assert env.is_terminal(np.array([0.51, 0.0]))
    assert not env.is_terminal(np.array([0.49, 0.0]))


def test_mountaincar_left_wall_zeroes_velocity():
    env = make_env("mountaincar")
    s2, _, _ = env.step(np.array([-1.19, -0.06]), 0)
    assert s2[0] == -1.2 and s2[1] == 0.0


# --- CartPole ---------------------------------------------------------------------


def test_cartpole_reward_and_termination():
    env = make_env("cartpole")
    rng = np.random.default_rng(4)
    s = env.initial_state(rng)
    s2, r, term = env.step(s, 1)
    assert r == 1.0 and not term
    assert env.is_terminal(np.array([2.5, 0, 0, 0]))
    assert env.is_terminal(np.array([0, 0, 0.22, 0]))
    assert not env.is_terminal(np.array([2.3, 0, 0.2, 0]))


def test_cartpole_known_step():
    # hand-evaluated Euler update from rest with a push right
    env = make_env("cartpole")
    s2, _, _ = env.step(np.zeros(4), 1)
    temp = 10.0 / 1.1
    theta_acc = -temp / (0.5 * (4.0 / 3.0 - 0.1 / 1.1))
    x_acc = temp - 0.05 * theta_acc / 1.1
    assert np.allclose(s2, [0.0, 0.02 * x_acc, 0.0, 0.02 * theta_acc])


# --- Acrobot ---------------------------------------------------------------------


def test_acrobot_trig_pairs_stay_on_unit_circle():
    env = make_env("acrobot")
    rng = np.random.default_rng(5)
    s = env.initial_state(rng)
    for _ in range(300):
        a = int(rng.integers(3))
        s, r, term = env.step(s, a)
        assert abs(s[0] ** 2 + s[1] ** 2 - 1) < 1e-9
        assert abs(s[2] ** 2 + s[3] ** 2 - 1) < 1e-9
        if term:
            assert r == 0.0
            break
        assert r == -1.0


def test_acrobot_velocity_bounds():
    env = make_env("acrobot")
    rng = np.random.default_rng(6)
    s = env.initial_state(rng)
    for _ in range(500):
        s, _, term = env.step(s, 2)
        assert abs(s[4]) <= env.MAX_VEL_1 and abs(s[5]) <= env.MAX_VEL_2
        if term:
            break


# --- projection -------------------------------------------------------------------


def test_projection_box_clip():
    env = make_env("gridworld")
    assert np.array_equal(env.project(np.array([1.3, -0.2])), np.array([1.0, 0.0]))


def test_projection_acrobot_normalizes_pairs():
    env = make_env("acrobot")
    s = np.array([0.6, 0.6, 1.0, 0.0, 0.0, 0.0])
    p = env.project(s)
    r = np.sqrt(0.5)
    assert np.allclose(p[:2], [r, r])
    assert np.allclose(p[2:4], [1.0, 0.0])


def test_projection_zero_pair_replaced():
    env = make_env("acrobot")
    p = env.project(np.array([0.0, 0.0, 1.0, 0.0, 0.0, 0.0]))
    assert p[0] == 1.0 and p[1] == 0.0


def test_projection_idempotent_and_fixes_feasible():
    rng = np.random.default_rng(7)
    for tag in ("gridworld", "gridworld-cont-action", "mountaincar", "cartpole", "acrobot"):
        env = make_env(tag)
        for _ in range(20):
            raw = rng.normal(scale=3.0, size=env.spec.state_dim)
            once = env.project(raw)
            assert np.array_equal(env.project(once), once)


def test_emitted_states_are_projection_fixed_points():
    rng = np.random.default_rng(8)
    for tag in ("gridworld", "mountaincar", "cartpole", "acrobot"):
        env = make_env(tag)
        s = env.initial_state(rng)
        for _ in range(200):
            a = int(rng.integers(env.spec.n_actions))
            s, _, term = env.step(s, a)
            assert np.array_equal(env.project(s), s), tag
            if term:
                s = env.initial_state(rng)


def test_uniform_states_are_feasible():
    rng = np.random.default_rng(9)
    for tag in ("gridworld", "mountaincar", "cartpole", "acrobot"):
        env = make_env(tag)
        for _ in range(50):
            s = env.uniform_state(rng)
            assert np.array_equal(env.project(s), s), tag


def test_registry_tags():
    assert set(ENV_TAGS) == {
        "gridworld",
        "gridworld-cont-action",
        "tabular-gridworld",
        "mountaincar",
        "cartpole",
        "acrobot",
    }
    with pytest.raises(ConfigurationError):
        make_env("pong")
