import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from consensus_flow import constants as C
from consensus_flow.errors import (
    BadGain,
    BadParam,
    MismatchedTopology,
    NonFinite,
    RankDeficientBlock,
    ZeroRow,
)
from consensus_flow.flow import (
    Dynamics,
    FlowConfig,
    LinearSystem,
    cost_gradient,
    cost_v,
    initialize,
    neighbor_table,
    projection_for_block,
    rhs_gains,
    rhs_plain,
    rhs_restoring,
    step,
)
from consensus_flow.graph import NetworkGraph, generate, laplacian
from consensus_flow.harness import random_block_sizes, random_instance
from consensus_flow.linalg import inf_norm, kron
from consensus_flow.spectral import stacked_operators

from conftest import random_state


class TestProjection:
    def test_axis_row(self):
        assert np.array_equal(projection_for_block([1.0, 0.0]).matrix, np.diag([0.0, 1.0]))

    def test_diagonal_row(self):
        # I - a a^T / 2 with a = (1, 1)
        p = projection_for_block([1.0, 1.0]).matrix
        assert np.allclose(p, [[0.5, -0.5], [-0.5, 0.5]], atol=1e-15)

    def test_coordinate_block(self):
        p = projection_for_block([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).matrix
        assert np.allclose(p, np.diag([0.0, 0.0, 1.0]), atol=1e-15)

    def test_rank_deficient_block(self):
        with pytest.raises(RankDeficientBlock):
            LinearSystem.from_blocks([[1.0, 2.0], [2.0, 4.0]], [1.0, 2.0], [2])

    def test_zero_row(self):
        with pytest.raises(ZeroRow):
            LinearSystem.from_rows([[1.0, 0.0], [0.0, 0.0]], [1.0, 0.0])
        with pytest.raises(ZeroRow):
            projection_for_block([0.0, 0.0])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 7), st.integers(1, 3), st.integers(0, 10_000))
    def test_projector_invariants(self, n, r, seed):
        r = min(r, n)
        a = np.random.default_rng(seed).normal(size=(r, n))
        p = projection_for_block(a).matrix
        assert inf_norm(p - p.T) <= C.PROJ_SYMMETRY_TOL
        assert inf_norm(p @ p - p) <= C.PROJ_IDEMPOTENT_TOL
        assert inf_norm(a @ p) <= C.PROJ_ANNIHILATE_REL * inf_norm(a)


def _projections(system):
    return [projection_for_block(a) for a, _ in system.blocks]


class TestRhs:
    def test_consensus_is_equilibrium(self, axis_pair):
        system, g = axis_pair
        x = np.tile([0.3, -1.2], (2, 1))
        assert np.array_equal(rhs_plain(x, g, _projections(system)), np.zeros((2, 2)))

    def test_hand_expansion(self, axis_pair):
        system, g = axis_pair
        x = np.array([[1.0, 0.0], [0.0, 2.0]])
        d = rhs_plain(x, g, _projections(system))
        assert np.array_equal(d, [[0.0, 2.0], [1.0, 0.0]])

    def test_restoring_single_agent(self):
        system = LinearSystem.from_rows([[2.0]], [4.0])
        g = NetworkGraph(1)
        d = rhs_restoring(np.zeros((1, 1)), g, _projections(system), system)
        assert np.array_equal(d, [[2.0]])

    def test_restoring_on_manifold_equals_plain(self):
        system, g = random_instance(4, 3)
        cfg = FlowConfig(init="tangent_noise", seed=3)
        x = initialize(system, g, cfg)
        proj = _projections(system)
        assert np.allclose(rhs_restoring(x, g, proj, system), rhs_plain(x, g, proj), atol=1e-14)

    def test_solution_is_global_equilibrium(self):
        system, g = random_instance(5, 11)
        xs = np.linalg.solve(system.matrix, system.rhs)
        x = np.tile(xs, (5, 1))
        assert np.max(np.abs(rhs_restoring(x, g, _projections(system), system))) < 1e-12

    def test_gains_reduce_to_restoring(self):
        system, g = random_instance(4, 1)
        x = random_state(np.random.default_rng(0), (4, 4))
        proj = _projections(system)
        assert np.array_equal(rhs_gains(x, g, proj, system, 1.0, 1.0), rhs_restoring(x, g, proj, system))

    def test_gains_scale_restoring_term(self):
        system, g = random_instance(3, 2)
        x = np.tile([0.5, -0.25, 2.0], (3, 1))  # consensus, off the manifolds
        proj = _projections(system)
        full = rhs_restoring(x, g, proj, system)
        half = rhs_gains(x, g, proj, system, 2.0, 0.5)
        assert np.allclose(half, 0.5 * full, atol=1e-15)

    def test_gains_superposition(self):
        system, g = random_instance(4, 5)
        x = random_state(np.random.default_rng(1), (4, 4))
        proj = _projections(system)
        gains = np.array([0.5, 1.5, 2.0, 0.25])
        plain = rhs_plain(x, g, proj)
        restoring = plain - rhs_restoring(x, g, proj, system)  # = the restoring term alone
        expected = 3.0 * plain - gains[:, None] * restoring
        assert np.allclose(rhs_gains(x, g, proj, system, 3.0, gains), expected, atol=1e-13)

    def test_bad_gain(self, axis_pair):
        system, g = axis_pair
        with pytest.raises(BadGain):
            rhs_gains(np.zeros((2, 2)), g, _projections(system), system, 1.0, [1.0, 0.0])
        with pytest.raises(BadGain):
            FlowConfig(variant="gains", alpha=-1.0)
        with pytest.raises(BadGain):
            FlowConfig(variant="gains", alpha_i=[1.0, 0.0])

    def test_vectorized_matches_reference(self):
        system, g = random_instance(5, 9, block_sizes=[2, 1, 2])
        dyn = Dynamics(system, g)
        x = random_state(np.random.default_rng(4), (3, 5))
        proj = _projections(system)
        cfg = FlowConfig(variant="gains", alpha=1.5, alpha_i=[0.5, 2.0, 1.0])
        assert np.allclose(dyn.derivative(x, cfg), rhs_gains(x, g, proj, system, 1.5, [0.5, 2.0, 1.0]), atol=1e-13)

    def test_mismatched_topology(self, axis_pair):
        system, _ = axis_pair
        with pytest.raises(MismatchedTopology):
            Dynamics(system, generate("path", 3))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10_000), st.booleans())
def test_tangency(n, seed, blocks):
    sizes = random_block_sizes(n, seed) if blocks else None
    system, g = random_instance(n, seed, block_sizes=sizes, topology="path")
    x = random_state(np.random.default_rng(seed), (system.agent_count, n))
    d = rhs_plain(x, g, _projections(system))
    for (a, _), di in zip(system.blocks, d):
        assert inf_norm(a @ di) <= 1e-10


@pytest.mark.parametrize("seed", range(5))
def test_plain_is_projected_gradient(seed):
    system, g = random_instance(4, seed)
    x = random_state(np.random.default_rng(seed), (4, 4))
    edges = np.array(g.edges)
    grad = cost_gradient(x, g)
    fd = np.zeros_like(x)
    h = 1e-6
    for i in range(4):
        for k in range(4):
            e = np.zeros_like(x)
            e[i, k] = h
            fd[i, k] = (cost_v(x + e, edges) - cost_v(x - e, edges)) / (2 * h)
    assert np.max(np.abs(fd - grad)) <= 1e-5 * max(1.0, np.max(np.abs(grad)))
    proj = _projections(system)
    projected = np.array([p.matrix @ gi for p, gi in zip(proj, grad)])
    assert np.allclose(rhs_plain(x, g, proj), -projected, atol=1e-13)


@pytest.mark.parametrize("seed", range(8))
def test_euler_error_system(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    system, g = random_instance(n, seed)
    xs = np.linalg.solve(system.matrix, system.rhs)
    x = random_state(rng, (n, n))
    cfg = FlowConfig(variant="restoring", step=0.05)
    dyn = Dynamics(system, g)
    new = step(x, cfg, lambda t, s: dyn.derivative(s, cfg), 0.05)
    p, lbar = stacked_operators(system, g)
    big = np.eye(n * n) - 0.05 * (p @ lbar + np.eye(n * n) - p)
    err_prev = (x - xs).reshape(-1)
    err_new = (new - xs).reshape(-1)
    assert np.max(np.abs(err_new - big @ err_prev)) <= 1e-9


def test_stacked_compact_form():
    system, g = random_instance(4, 2)
    x = random_state(np.random.default_rng(2), (4, 4))
    p, lbar = stacked_operators(system, g)
    assert np.allclose(rhs_plain(x, g, _projections(system)).reshape(-1), -(p @ lbar @ x.reshape(-1)), atol=1e-13)
    assert np.array_equal(lbar, kron(laplacian(g), np.eye(4)))


class TestInitialize:
    def test_axis(self):
        system = LinearSystem.from_rows([[1.0, 0.0]], [5.0])
        assert np.array_equal(initialize(system, NetworkGraph(1), FlowConfig()), [[5.0, 0.0]])

    def test_diagonal(self):
        system = LinearSystem.from_rows([[1.0, 1.0]], [2.0])
        assert np.allclose(initialize(system, NetworkGraph(1), FlowConfig()), [[1.0, 1.0]])

    @pytest.mark.parametrize("init", ["min_norm", "tangent_noise"])
    def test_on_manifold(self, init):
        system, g = random_instance(6, 4, block_sizes=[3, 1, 2])
        x = initialize(system, g, FlowConfig(init=init, seed=8))
        for (a, b), xi in zip(system.blocks, x):
            assert inf_norm(a @ xi - b) <= 1e-12

    def test_noise_is_seeded(self):
        system, g = random_instance(4, 4)
        one = initialize(system, g, FlowConfig(init="tangent_noise", seed=1))
        assert np.array_equal(one, initialize(system, g, FlowConfig(init="tangent_noise", seed=1)))
        assert not np.array_equal(one, initialize(system, g, FlowConfig(init="tangent_noise", seed=2)))

    def test_long_init_name(self):
        assert FlowConfig(init="min_norm_plus_tangent_noise").init == "tangent_noise"

    def test_free_random_needs_restoring(self):
        with pytest.raises(BadParam):
            FlowConfig(variant="plain", init="free_random")
        system, g = random_instance(3, 0)
        x = initialize(system, g, FlowConfig(variant="restoring", init="free_random"))
        assert np.all(np.abs(x) <= 1.0)


class TestStep:
    def test_zero_derivative(self):
        x = np.arange(6.0).reshape(2, 3)
        for integ in ("euler", "rk4"):
            out = step(x, FlowConfig(integrator=integ), lambda t, s: np.zeros_like(s), 0.3)
            assert np.array_equal(out, x)

    def test_scalar_decay(self):
        out = step(np.array([[1.0]]), FlowConfig(), lambda t, s: -s, 0.1)
        assert out[0, 0] == pytest.approx(0.9, abs=1e-15)

    def test_rk4_order(self):
        h = 0.1
        out = step(np.array([[1.0]]), FlowConfig(integrator="rk4"), lambda t, s: -s, h)
        assert out[0, 0] == pytest.approx(1 - h + h**2 / 2 - h**3 / 6 + h**4 / 24, abs=1e-15)

    @pytest.mark.parametrize("integ", ["euler", "rk4"])
    def test_plain_keeps_manifold(self, integ):
        system, g = random_instance(5, 6, block_sizes=[2, 2, 1])
        cfg = FlowConfig(integrator=integ, init="tangent_noise", seed=6)
        dyn = Dynamics(system, g)
        x = initialize(system, g, cfg)
        before = dyn.residuals(x)
        for h in (0.01, 0.2, 0.7):
            x = step(x, cfg, lambda t, s: dyn.plain(s), h)
        assert np.max(np.abs(dyn.residuals(x) - before)) <= 1e-11

    def test_nonfinite(self):
        with pytest.raises(NonFinite), np.errstate(over="ignore"):
            step(np.array([[1e308]]), FlowConfig(), lambda t, s: s * 1e10, 1.0)

    def test_auto_step(self):
        system, g = random_instance(5, 2)
        dyn = Dynamics(system, g)
        dmax = int(max(g.degrees()))
        assert dyn.step_size(FlowConfig()) == 1.0 / (2 * dmax + 0.5)
        assert dyn.step_size(FlowConfig(variant="restoring")) == 1.0 / (2 * dmax + 1.0)
        assert dyn.step_size(FlowConfig(variant="gains", alpha=2.0, alpha_i=[3.0])) == 1.0 / (4 * dmax + 3.0)
        assert dyn.step_size(FlowConfig(step=0.01)) == 0.01


def test_neighbor_table_padding():
    g = generate("star", 4)
    t = neighbor_table(g)
    assert t.tolist() == [[1, 2, 3], [0, 1, 1], [0, 2, 2], [0, 3, 3]]
