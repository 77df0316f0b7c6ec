import numpy as np
import pytest

from helpers import away_from_kinks, batch_covariance, fd_input_gradient, rel_err, zero_net
from hcdyna import nn, search_control as sc
from hcdyna.errors import NonFiniteError


def identity(s):
    return s


class FakeBuffer:
    def __init__(self, states):
        self._states = np.atleast_2d(states)

    def __len__(self):
        return len(self._states)

    def sample_states(self, n, rng):
        idx = rng.integers(0, len(self._states), size=n)
        return self._states[idx]


# --- covariance tracker ---------------------------------------------------------


def test_tracker_identity_before_observations():
    t = sc.CovarianceTracker(3)
    assert np.array_equal(t.covariance(), np.eye(3))


def test_tracker_constant_stream_has_zero_covariance():
    t = sc.CovarianceTracker(2)
    for _ in range(100):
        t.observe(np.array([1.5, -2.0]))
    assert np.allclose(t.covariance(), 0.0, atol=1e-12)


def test_tracker_matches_batch_formula():
    rng = np.random.default_rng(0)
    for _ in range(20):
        d = int(rng.integers(1, 6))
        n = int(rng.integers(2, 200))
        states = rng.normal(size=(n, d)) * rng.uniform(0.1, 3.0, size=d)
        t = sc.CovarianceTracker(d)
        for s in states:
            t.observe(s)
        assert np.abs(t.covariance() - batch_covariance(states)).max() < 1e-10
        assert np.allclose(t.mean, states.mean(axis=0))


def test_tracker_monte_carlo_consistency():
    rng = np.random.default_rng(1)
    true = np.diag([4.0, 0.25, 1.0])
    t = sc.CovarianceTracker(3)
    for s in rng.multivariate_normal(np.array([1.0, -2.0, 0.0]), true, size=1000):
        t.observe(s)
    est = np.diag(t.covariance())
    assert np.all(np.abs(est - np.diag(true)) < 0.15 * np.diag(true))


def test_tracker_rejects_non_finite():
    t = sc.CovarianceTracker(2)
    with pytest.raises(NonFiniteError):
        t.observe(np.array([np.nan, 0.0]))
    assert t.count == 0


# --- value gradient --------------------------------------------------------------


def test_value_gradient_near_zero_for_fresh_net():
    rng = np.random.default_rng(2)
    net = nn.init_xavier([2, 32, 32, 4], 0.0003, rng)
    g = sc.value_gradient(net, np.array([0.3, 0.4]))
    assert np.linalg.norm(g) < 0.01


def test_value_gradient_single_action_equals_input_gradient():
    rng = np.random.default_rng(3)
    net = nn.init_xavier([3, 8, 1], 0.3, rng)
    s = rng.normal(size=3)
    assert np.allclose(sc.value_gradient(net, s), nn.input_gradient(net, s, 0), atol=1e-14)


def test_value_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    h = 1e-5
    checked = 0
    while checked < 20:
        net = nn.init_xavier([2, 8, 8, 4], 0.4, rng)
        s = rng.normal(size=2)
        if not away_from_kinks(net, s, 10 * h):
            continue
        a_star = int(np.argmax(nn.forward(net, s)))
        # stay away from argmax switching surfaces
        stable = all(
            int(np.argmax(nn.forward(net, s + dh * e))) == a_star
            for e in np.eye(2)
            for dh in (h, -h)
        )
        if not stable:
            continue
        assert rel_err(sc.value_gradient(net, s), fd_input_gradient(net, s, a_star)) < 1e-5
        checked += 1


def test_value_gradient_ties_break_to_lowest_index():
    # two identical output rows: gradient must follow action 0
    net = zero_net([2, 2])
    net.weights[0] = np.array([[1.0, 1.0], [2.0, 2.0]])
    g = sc.value_gradient(net, np.array([0.1, 0.1]))
    assert np.allclose(g, [1.0, 2.0])


# --- hc_step ----------------------------------------------------------------------


def test_hc_step_unit_metric_moves_exactly_step_size():
    cfg = sc.HCConfig(noise_scale=0.0)
    rng = np.random.default_rng(5)
    s = np.array([0.2, 0.3])
    g = np.array([3.0, -4.0])
    s2 = sc.hc_step(s, g, np.eye(2), cfg, rng, identity)
    assert np.allclose(s2 - s, 0.1 * g / 5.0)


def test_hc_step_zero_gradient_zero_noise_is_identity():
    cfg = sc.HCConfig(noise_scale=0.0)
    rng = np.random.default_rng(6)
    s = np.array([0.2, 0.3])
    s2 = sc.hc_step(s, np.zeros(2), np.eye(2), cfg, rng, identity)
    assert np.array_equal(s2, s)


def test_hc_step_preconditioning_scales_components():
    cfg = sc.HCConfig(noise_scale=0.0)
    rng = np.random.default_rng(7)
    cov = np.diag([9.0, 0.01])
    g = np.array([0.5, 0.7])
    s = np.zeros(2)
    delta = sc.hc_step(s, g, cov, cfg, rng, identity) - s
    # displacement ratio equals sigma1^2 g1 : sigma2^2 g2
    assert np.isclose(delta[0] / delta[1], (9.0 * 0.5) / (0.01 * 0.7))


def test_hc_step_applies_projection():
    cfg = sc.HCConfig(noise_scale=0.0)
    rng = np.random.default_rng(8)
    box = lambda s: np.clip(s, 0.0, 1.0)
    s2 = sc.hc_step(np.array([0.95, 0.5]), np.array([1.0, 0.0]), np.eye(2), cfg, rng, box)
    assert s2[0] == 1.0


def test_hc_step_noise_has_requested_covariance():
    cfg = sc.HCConfig(noise_scale=0.3)
    rng = np.random.default_rng(9)
    cov = np.array([[2.0, 0.6], [0.6, 0.5]])
    s = np.zeros(2)
    draws = np.array([sc.hc_step(s, np.zeros(2), cov, cfg, rng, identity) for _ in range(20000)])
    assert np.abs(batch_covariance(draws) - 0.3 * cov).max() < 0.02


def test_hc_step_degenerate_gradient_is_noise_only():
    cfg = sc.HCConfig(noise_scale=0.0)
    rng = np.random.default_rng(10)
    s = np.array([0.5, 0.5])
    s2 = sc.hc_step(s, np.full(2, 1e-14), np.eye(2), cfg, rng, identity)
    assert np.array_equal(s2, s)


# --- admission / queue -------------------------------------------------------------


def run_climb(eps, steps=10, seed=11):
    cfg = sc.HCConfig(steps=steps, noise_scale=0.5)
    tracker = sc.CovarianceTracker(2)
    rng = np.random.default_rng(seed)
    for s in rng.uniform(0, 1, size=(50, 2)):
        tracker.observe(s)
    queue = sc.SearchControlQueue(2, capacity=1000)
    queue.epsilon_a = eps
    grad = lambda s: np.array([1.0, 0.5])
    buf = FakeBuffer(np.array([[0.1, 0.1]]))
    n = sc.run_hill_climb(grad, buf, tracker, queue, cfg, np.random.default_rng(seed), lambda s: np.clip(s, 0, 1))
    return n, queue


def test_admission_infinite_threshold_admits_nothing():
    n, queue = run_climb(np.inf)
    assert n == 0 and len(queue) == 0


def test_admission_zero_threshold_admits_every_step():
    n, queue = run_climb(0.0, steps=17)
    assert n == 17 and len(queue) == 17


def test_admitted_states_respect_spacing():
    n, queue = run_climb(0.08, steps=60)
    states = queue.states()
    assert n == len(states) > 1
    for a, b in zip(states[:-1], states[1:]):
        assert sc.normalized_distance(a, b) >= 0.08


def test_admitted_states_are_feasible():
    _, queue = run_climb(0.0, steps=40)
    states = queue.states()
    assert (states >= 0).all() and (states <= 1).all()


def test_empty_buffer_is_noop():
    cfg = sc.HCConfig(steps=5)
    queue = sc.SearchControlQueue(2, capacity=10)
    n = sc.run_hill_climb(lambda s: s, FakeBuffer(np.empty((0, 2))), sc.CovarianceTracker(2),
                          queue, cfg, np.random.default_rng(0), identity)
    assert n == 0 and len(queue) == 0


def test_queue_fifo_eviction():
    queue = sc.SearchControlQueue(1, capacity=3)
    for v in range(5):
        queue.append(np.array([float(v)]))
    assert len(queue) == 3
    assert queue.states().ravel().tolist() == [2.0, 3.0, 4.0]


def test_queue_sample_uniform():
    queue = sc.SearchControlQueue(1, capacity=100)
    for v in range(10):
        queue.append(np.array([float(v)]))
    rng = np.random.default_rng(12)
    draws = queue.sample(5000, rng).ravel()
    counts = np.bincount(draws.astype(int), minlength=10)
    assert counts.min() > 380  # roughly uniform at 500 each


# --- threshold EMA ------------------------------------------------------------------


def test_threshold_first_update():
    queue = sc.SearchControlQueue(2)
    queue.update_threshold(np.zeros(2), np.array([3.0, 4.0]))  # distance 5/sqrt(2)
    assert np.isclose(queue.epsilon_a, 0.001 * 5.0 / np.sqrt(2))


def test_threshold_converges_to_constant_length():
    queue = sc.SearchControlQueue(2)
    s, s2 = np.zeros(2), np.array([0.05, 0.0])
    for _ in range(8000):
        queue.update_threshold(s, s2)
    target = 0.05 / np.sqrt(2)
    assert abs(queue.epsilon_a - target) < 1e-3 * target


def test_gridworld_steady_state_threshold():
    # all moves are 0.05 long -> epsilon_a -> 0.05/sqrt(2) ~ 0.0354
    queue = sc.SearchControlQueue(2)
    rng = np.random.default_rng(13)
    s = np.array([0.5, 0.2])
    for _ in range(10000):
        step = np.zeros(2)
        step[rng.integers(2)] = 0.05 * (1 if rng.random() < 0.5 else -1)
        queue.update_threshold(s, s + step)
        s = s + step
    assert abs(queue.epsilon_a - 0.0354) < 0.001


# --- langevin oracle -----------------------------------------------------------------


def test_langevin_zero_gradient_is_random_walk():
    rng = np.random.default_rng(14)
    alpha = 0.01
    y = np.zeros(2)
    increments = []
    for _ in range(20000):
        y2 = sc.langevin_step(y, lambda v: np.zeros_like(v), alpha, rng)
        increments.append(y2 - y)
        y = y2
    var = np.var(np.array(increments), axis=0)
    assert np.allclose(var, 2 * alpha, rtol=0.05)


def test_langevin_gaussian_stationary_moments():
    # U(y) = -||y||^2/2: chain Y_{k+1} = (1-a) Y_k + sqrt(2a) Z has stationary
    # variance 2a / (1 - (1-a)^2).
    rng = np.random.default_rng(19)
    alpha = 0.01
    grad_u = lambda y: -y
    y = np.zeros(3)
    for _ in range(2000):
        y = sc.langevin_step(y, grad_u, alpha, rng)
    samples = np.empty((100_000, 3))
    for i in range(samples.shape[0]):
        y = sc.langevin_step(y, grad_u, alpha, rng)
        samples[i] = y
    stationary_var = 2 * alpha / (1 - (1 - alpha) ** 2)
    assert np.all(np.abs(samples.mean(axis=0)) < 0.05)
    assert np.all(np.abs(samples.var(axis=0) - stationary_var) < 0.10 * stationary_var)


def test_langevin_rejects_bad_step():
    with pytest.raises(ValueError):
        sc.langevin_step(np.zeros(1), lambda y: y, 0.0, np.random.default_rng(0))


# --- scale invariance of the preconditioned ascent -----------------------------------


def quadratic_grad(center, curvature):
    return lambda s: curvature @ (center - s)


def test_preconditioned_direction_is_scale_equivariant():
    # rescaling states by diagonal D (with the tracker rebuilt from rescaled
    # data and the value function composed with D^-1) maps the hc_step
    # direction to D times the original direction
    rng = np.random.default_rng(16)
    data = rng.normal(size=(400, 2)) * [1.0, 0.3] + [0.2, -0.1]
    d = np.array([5.0, 0.5])
    t1, t2 = sc.CovarianceTracker(2), sc.CovarianceTracker(2)
    for s in data:
        t1.observe(s)
        t2.observe(d * s)
    center = np.array([1.0, 1.0])
    curv = np.array([[2.0, 0.3], [0.3, 1.0]])
    g1 = quadratic_grad(center, curv)
    g2 = lambda z: g1(z / d) / d  # gradient of V(D^-1 z)
    cfg = sc.HCConfig(noise_scale=0.0)
    s0 = np.array([-0.5, 0.4])
    step1 = sc.hc_step(s0, g1(s0), t1.covariance(), cfg, rng, identity) - s0
    step2 = sc.hc_step(d * s0, g2(d * s0), t2.covariance(), cfg, rng, identity) - d * s0
    mapped = d * step1
    cos = mapped @ step2 / (np.linalg.norm(mapped) * np.linalg.norm(step2))
    assert cos > 1 - 1e-10


def test_preconditioned_iteration_with_fixed_stepsize_is_scale_equivariant():
    # without the per-step normalization the whole trajectory maps exactly
    rng = np.random.default_rng(17)
    data = rng.normal(size=(300, 2)) * [0.8, 0.2]
    d = np.array([3.0, 0.25])
    t1, t2 = sc.CovarianceTracker(2), sc.CovarianceTracker(2)
    for s in data:
        t1.observe(s)
        t2.observe(d * s)
    c1, c2 = t1.covariance(), t2.covariance()
    center = np.array([0.6, -0.2])
    curv = np.array([[1.5, -0.2], [-0.2, 0.7]])
    g1 = quadratic_grad(center, curv)
    g2 = lambda z: g1(z / d) / d
    alpha = 0.25
    s, z = np.array([-1.0, 0.5]), d * np.array([-1.0, 0.5])
    for _ in range(25):
        s = s + alpha * (c1 @ g1(s))
        z = z + alpha * (c2 @ g2(z))
        assert np.abs(z - d * s).max() < 1e-9
