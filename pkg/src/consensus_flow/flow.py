"""Projected consensus dynamics and their fixed-step integration.

Agent ``i`` owns the row block ``A_i x = b_i`` and a state ``x_i``. The state
array used throughout is ``X`` with shape ``(agents, n)``, row ``i`` holding
``x_i``; stacking the rows gives the long vector of the compact form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from consensus_flow import constants as C
from consensus_flow.errors import (
    BadGain,
    BadParam,
    MismatchedTopology,
    NonFinite,
    RankDeficientBlock,
    ShapeError,
    Singular,
    ZeroRow,
)
from consensus_flow.graph import NetworkGraph
from consensus_flow.linalg import as_matrix, as_vector, inf_norm, rank, solve_columns

VARIANTS = ("plain", "restoring", "gains")
INTEGRATORS = ("euler", "rk4")
INITS = ("min_norm", "tangent_noise", "free_random")
INIT_ALIASES = {"min_norm_plus_tangent_noise": "tangent_noise"}

Rhs = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LinearSystem:
    """Row blocks ``(A_i, b_i)`` of ``A x = b``; one block per agent."""

    blocks: tuple[tuple[np.ndarray, np.ndarray], ...]
    unknown_dim: int

    def __post_init__(self):
        if not self.blocks:
            raise ShapeError("a linear system needs at least one block")
        for k, (a, b) in enumerate(self.blocks):
            if a.ndim != 2 or a.shape[1] != self.unknown_dim or a.shape[0] < 1:
                raise ShapeError(f"block {k} has shape {a.shape}, expected (r, {self.unknown_dim})")
            if b.shape != (a.shape[0],):
                raise ShapeError(f"block {k} rhs has shape {b.shape}, expected ({a.shape[0]},)")
            for r, row in enumerate(a):
                if not np.any(row):
                    raise ZeroRow(f"block {k} row {r} is zero")
            if rank(a) < a.shape[0]:
                raise RankDeficientBlock(f"block {k} does not have full row rank")

    @classmethod
    def from_rows(cls, a, b) -> "LinearSystem":
        """One agent per row of ``a``."""
        return cls.from_blocks(a, b, [1] * np.asarray(a).shape[0])

    @classmethod
    def from_blocks(cls, a, b, sizes: Sequence[int]) -> "LinearSystem":
        """Group consecutive rows of ``a`` into blocks of the given sizes."""
        a = as_matrix(a, "A")
        b = as_vector(b, "b")
        if b.shape[0] != a.shape[0]:
            raise ShapeError(f"A has {a.shape[0]} rows but b has {b.shape[0]} entries")
        if sum(sizes) != a.shape[0] or min(sizes, default=0) < 1:
            raise ShapeError(f"block sizes {list(sizes)} do not partition {a.shape[0]} rows")
        blocks, start = [], 0
        for s in sizes:
            blocks.append((a[start:start + s].copy(), b[start:start + s].copy()))
            start += s
        return cls(tuple(blocks), a.shape[1])

    @property
    def agent_count(self) -> int:
        return len(self.blocks)

    @property
    def block_sizes(self) -> list[int]:
        return [a.shape[0] for a, _ in self.blocks]

    @property
    def matrix(self) -> np.ndarray:
        return np.vstack([a for a, _ in self.blocks])

    @property
    def rhs(self) -> np.ndarray:
        return np.concatenate([b for _, b in self.blocks])

    def with_rhs(self, b) -> "LinearSystem":
        return LinearSystem.from_blocks(self.matrix, b, self.block_sizes)


@dataclass(frozen=True)
class Projection:
    matrix: np.ndarray

    def __call__(self, y: np.ndarray) -> np.ndarray:
        return self.matrix @ y


def _right_inverse(block: np.ndarray) -> np.ndarray:
    """``A^T (A A^T)^{-1}`` for a full-row-rank block."""
    try:
        inner_inv = solve_columns(block @ block.T, np.eye(block.shape[0]))
    except Singular:
        raise RankDeficientBlock("block Gram matrix is singular") from None
    return block.T @ inner_inv


def projection_for_block(block) -> Projection:
    """Orthogonal projector onto the kernel of a full-row-rank block."""
    a = as_matrix(np.atleast_2d(block), "block")
    n = a.shape[1]
    if a.shape[0] == 1:
        row = a[0]
        nrm2 = float(row @ row)
        if nrm2 == 0.0:
            raise ZeroRow("zero row has no well-defined projection")
        p = np.eye(n) - np.outer(row, row) / nrm2
    else:
        p = np.eye(n) - _right_inverse(a) @ a
        p = 0.5 * (p + p.T)
    return Projection(p)


@dataclass
class FlowConfig:
    variant: str = "plain"
    alpha: float = 1.0
    alpha_i: Optional[Sequence[float]] = None  # None means all ones
    integrator: str = "euler"
    step: Union[float, str] = "auto"
    max_steps: int = C.DEFAULT_MAX_STEPS
    convergence_tol: float = C.DEFAULT_CONVERGENCE_TOL
    seed: int = 0
    init: str = "min_norm"
    record_every: int = C.DEFAULT_RECORD_EVERY

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise BadParam(f"unknown variant {self.variant!r}")
        if self.integrator not in INTEGRATORS:
            raise BadParam(f"unknown integrator {self.integrator!r}")
        self.init = INIT_ALIASES.get(self.init, self.init)
        if self.init not in INITS:
            raise BadParam(f"unknown init {self.init!r}")
        if self.init == "free_random" and self.variant == "plain":
            raise BadParam("free_random init leaves the manifolds; use the restoring or gains variant")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise BadGain(f"alpha must be positive, got {self.alpha}")
        if self.alpha_i is not None and any(not (g > 0 and math.isfinite(g)) for g in self.alpha_i):
            raise BadGain("every alpha_i must be positive")
        if self.step != "auto":
            if isinstance(self.step, str) or not (self.step > 0 and math.isfinite(self.step)):
                raise BadParam(f"step must be positive or 'auto', got {self.step!r}")
        if self.max_steps < 0 or self.record_every < 1:
            raise BadParam("max_steps must be >= 0 and record_every >= 1")
        if not self.convergence_tol > 0:
            raise BadParam("convergence_tol must be positive")

    def gains(self, agents: int) -> np.ndarray:
        if self.variant == "plain":
            return np.zeros(agents)
        if self.variant == "restoring" or self.alpha_i is None:
            return np.ones(agents)
        g = np.asarray(self.alpha_i, dtype=float)
        if g.shape == (1,):
            return np.full(agents, g[0])
        if g.shape != (agents,):
            raise BadGain(f"alpha_i has {g.size} entries for {agents} agents")
        return g

    def coupling_gain(self) -> float:
        return self.alpha if self.variant == "gains" else 1.0


def neighbor_table(g: NetworkGraph) -> np.ndarray:
    """Neighbor indices per agent, ascending, padded with the agent's own index.

    Padding with ``i`` contributes ``x_i - x_i = 0`` exactly.
    """
    nbrs = g.neighbors()
    width = max((len(n) for n in nbrs), default=0)
    table = np.empty((g.vertex_count, width), dtype=int)
    for i, n in enumerate(nbrs):
        table[i] = n + [i] * (width - len(n))
    return table


def neighbor_disagreement(x: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Row ``i`` is ``sum_{j in N_i} (x_i - x_j)``, summed in ascending ``j``."""
    if table.shape[1] == 0:
        return np.zeros_like(x)
    # reduction over a non-contiguous axis accumulates slot by slot, in order
    return np.sum(x[:, None, :] - x[table], axis=1)


class Dynamics:
    """Precomputed per-agent operators for one (system, graph) pair.

    ``proj`` stacks the projectors ``P_i``; ``restore`` and ``rows`` hold each
    block's right inverse and rows, zero padded to the largest block size, so
    that ``restore_i (A_i x_i - b_i)`` evaluates for all agents at once.
    """

    def __init__(self, system: LinearSystem, g: NetworkGraph):
        if g.vertex_count != system.agent_count:
            raise MismatchedTopology(
                f"graph has {g.vertex_count} vertices but the system has {system.agent_count} row blocks"
            )
        self.system = system
        self.graph = g
        self.n = system.unknown_dim
        self.agents = system.agent_count
        self.table = neighbor_table(g)
        self.projections = [projection_for_block(a) for a, _ in system.blocks]
        self.proj = np.stack([p.matrix for p in self.projections])
        width = max(system.block_sizes)
        self.rows = np.zeros((self.agents, width, self.n))
        self.restore = np.zeros((self.agents, self.n, width))
        self.rhs = np.zeros((self.agents, width))
        for i, (a, b) in enumerate(system.blocks):
            r = a.shape[0]
            self.rows[i, :r] = a
            if r == 1:
                self.restore[i, :, 0] = a[0] / float(a[0] @ a[0])
            else:
                self.restore[i, :, :r] = _right_inverse(a)
            self.rhs[i, :r] = b
        self.edges = np.array(g.edges, dtype=int).reshape(-1, 2)
        self.max_degree = int(g.degrees().max(initial=0))

    def padded_rhs(self, b: np.ndarray) -> np.ndarray:
        out = np.zeros_like(self.rhs)
        start = 0
        for i, r in enumerate(self.system.block_sizes):
            out[i, :r] = b[start:start + r]
            start += r
        return out

    def min_norm_points(self, rhs: Optional[np.ndarray] = None) -> np.ndarray:
        rhs = self.rhs if rhs is None else rhs
        return np.einsum("anr,ar->an", self.restore, rhs)

    def plain(self, x: np.ndarray) -> np.ndarray:
        return -np.einsum("aij,aj->ai", self.proj, neighbor_disagreement(x, self.table))

    def restoring_term(self, x: np.ndarray, rhs: Optional[np.ndarray] = None) -> np.ndarray:
        """Row ``i`` is ``A_i^T (A_i A_i^T)^{-1} (A_i x_i - b_i)``."""
        rhs = self.rhs if rhs is None else rhs
        resid = np.einsum("arn,an->ar", self.rows, x) - rhs
        return np.einsum("anr,ar->an", self.restore, resid)

    def residuals(self, x: np.ndarray, rhs: Optional[np.ndarray] = None) -> np.ndarray:
        rhs = self.rhs if rhs is None else rhs
        return np.einsum("arn,an->ar", self.rows, x) - rhs

    def derivative(self, x: np.ndarray, config: FlowConfig, rhs: Optional[np.ndarray] = None) -> np.ndarray:
        d = self.plain(x)
        if config.variant == "plain":
            return d
        if config.variant == "gains":
            d = config.alpha * d
        gains = config.gains(self.agents)
        return d - gains[:, None] * self.restoring_term(x, rhs)

    def auto_step(self, config: FlowConfig) -> float:
        """``1 / (alpha * 2 d_max + c)``; ``c`` is 0.5 (plain) or ``max alpha_i``.

        ``2 d_max`` bounds the Laplacian spectrum, hence that of the projected
        coupling, so Euler stays inside its stability interval with margin.
        """
        if config.variant == "plain":
            c = 0.5
        else:
            c = float(np.max(config.gains(self.agents)))
        return 1.0 / (config.coupling_gain() * 2.0 * self.max_degree + c)

    def step_size(self, config: FlowConfig) -> float:
        return self.auto_step(config) if config.step == "auto" else float(config.step)


def _check_state(state, system: LinearSystem, g: NetworkGraph) -> np.ndarray:
    x = np.asarray(state, dtype=float)
    if x.shape != (system.agent_count, system.unknown_dim):
        raise ShapeError(f"state shape {x.shape} does not match ({system.agent_count}, {system.unknown_dim})")
    if g.vertex_count != system.agent_count:
        raise MismatchedTopology("graph size does not match the number of agents")
    return x


def rhs_plain(state, g: NetworkGraph, projections: Sequence[Projection]) -> np.ndarray:
    """Derivatives ``-P_i sum_{j in N_i} (x_i - x_j)`` for every agent."""
    x = np.asarray(state, dtype=float)
    if x.shape[0] != g.vertex_count or len(projections) != g.vertex_count:
        raise MismatchedTopology("state, graph and projections disagree on the agent count")
    proj = np.stack([p.matrix for p in projections])
    return -np.einsum("aij,aj->ai", proj, neighbor_disagreement(x, neighbor_table(g)))


def restoring_terms(state, system: LinearSystem) -> np.ndarray:
    x = np.asarray(state, dtype=float)
    out = np.zeros_like(x)
    for i, (a, b) in enumerate(system.blocks):
        if a.shape[0] == 1:
            row = a[0]
            out[i] = row * ((row @ x[i] - b[0]) / (row @ row))
        else:
            out[i] = _right_inverse(a) @ (a @ x[i] - b)
    return out


def rhs_restoring(state, g: NetworkGraph, projections, system: LinearSystem) -> np.ndarray:
    """Plain derivative plus the pull back onto each agent's manifold."""
    x = _check_state(state, system, g)
    return rhs_plain(x, g, projections) - restoring_terms(x, system)


def rhs_gains(state, g: NetworkGraph, projections, system: LinearSystem, alpha: float, alpha_i) -> np.ndarray:
    x = _check_state(state, system, g)
    gains = np.broadcast_to(np.asarray(alpha_i, dtype=float), (system.agent_count,))
    if not alpha > 0 or np.any(~(gains > 0)):
        raise BadGain("gains must be positive")
    return alpha * rhs_plain(x, g, projections) - gains[:, None] * restoring_terms(x, system)


def initialize(system: LinearSystem, g: NetworkGraph, config: FlowConfig) -> np.ndarray:
    """Starting states.

    ``min_norm`` puts each agent at the point of its manifold closest to the
    origin; ``tangent_noise`` adds ``P_i z_i`` with ``z_i ~ U[-1, 1]^n``;
    ``free_random`` uses ``z_i`` itself and ignores the manifolds.
    """
    dyn = Dynamics(system, g)
    x = dyn.min_norm_points()
    if config.init == "min_norm":
        return x
    rng = np.random.default_rng(config.seed)
    z = rng.uniform(-1.0, 1.0, size=x.shape)
    if config.init == "free_random":
        return z
    return x + np.einsum("aij,aj->ai", dyn.proj, z)


def euler_step(f: Rhs, t: float, x: np.ndarray, h: float) -> np.ndarray:
    return x + h * f(t, x)


def rk4_step(f: Rhs, t: float, x: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, x)
    k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = f(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(state, config: FlowConfig, rhs: Rhs, h: float, t: float = 0.0) -> np.ndarray:
    """Advance one fixed step of size ``h`` with the configured integrator.

    Raises :class:`NonFinite` if the new state overflows, which in practice
    means ``h`` is outside the stability region.
    """
    x = np.asarray(state, dtype=float)
    if config.integrator == "rk4":
        new = rk4_step(rhs, t, x, h)
    else:
        new = euler_step(rhs, t, x, h)
    if not np.all(np.isfinite(new)):
        raise NonFinite(f"state became non-finite at t={t + h:g}; reduce the step size")
    return new


@dataclass
class Metrics:
    cost_v: float
    spread: float
    residual: float


def cost_v(x: np.ndarray, edges: np.ndarray) -> float:
    """Half the sum over edges of squared Euclidean disagreement."""
    if len(edges) == 0:
        return 0.0
    diff = x[edges[:, 0]] - x[edges[:, 1]]
    return 0.5 * float(np.sum(diff * diff))


def cost_gradient(x: np.ndarray, g: NetworkGraph) -> np.ndarray:
    """Unprojected gradient of :func:`cost_v`; row ``i`` is ``sum_j (x_i - x_j)``."""
    return neighbor_disagreement(np.asarray(x, dtype=float), neighbor_table(g))


def spread(x: np.ndarray, edges: np.ndarray) -> float:
    if len(edges) == 0:
        return 0.0
    return float(np.max(np.abs(x[edges[:, 0]] - x[edges[:, 1]])))


def edge_metrics(x: np.ndarray, edges: np.ndarray) -> tuple[float, float]:
    """``(cost_v, spread)`` from a single pass over the edges."""
    if len(edges) == 0:
        return 0.0, 0.0
    diff = x[edges[:, 0]] - x[edges[:, 1]]
    return 0.5 * float(np.sum(diff * diff)), float(np.abs(diff).max())


def manifold_residual(dyn: Dynamics, x: np.ndarray, rhs: Optional[np.ndarray] = None) -> float:
    return float(np.max(np.abs(dyn.residuals(x, rhs))))


def measure(dyn: Dynamics, x: np.ndarray, rhs: Optional[np.ndarray] = None) -> Metrics:
    return Metrics(cost_v(x, dyn.edges), spread(x, dyn.edges), manifold_residual(dyn, x, rhs))


def system_residual(system: LinearSystem, x: np.ndarray) -> float:
    return inf_norm(system.matrix @ x - system.rhs)
