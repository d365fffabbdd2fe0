"""End-to-end experiments: run the flow, record traces, fit decay rates.

A trace keeps one :class:`TraceRow` per recorded step plus terminal data.
Rates are fitted to the distance from the oracle solution rather than to the
cost ``V``: ``V`` is quadratic in the error and decays at twice the rate.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from consensus_flow import constants as C
from consensus_flow.errors import (
    BadParam,
    ConsensusFlowError,
    Disconnected,
    InsufficientData,
    NotConverged,
    ShapeError,
)
from consensus_flow.flow import (
    Dynamics,
    FlowConfig,
    LinearSystem,
    edge_metrics,
    initialize,
    step,
)
from consensus_flow.graph import GraphReport, NetworkGraph, generate, graph_report, is_connected
from consensus_flow.linalg import direct_solve, rank
from consensus_flow.spectral import SpectralReport, spectral_report

TRACE_FIELDS = ("step", "t", "cost_v", "spread", "residual", "oracle_dist")


@dataclass
class TraceRow:
    step: int
    t: float
    cost_v: float
    spread: float
    residual: float
    oracle_dist: Optional[float] = None


@dataclass
class RateFit:
    fitted_rate: float
    window: tuple[int, int]  # recorded step indices, inclusive
    r_squared: float


@dataclass
class SimulationTrace:
    rows: list[TraceRow] = field(default_factory=list)
    converged: bool = False
    steps: int = 0
    step_size: float = 0.0
    consensus: Optional[np.ndarray] = None
    oracle: Optional[np.ndarray] = None
    max_residual: float = 0.0  # over every integration step
    max_cost_increase: float = 0.0  # largest V(k+1) - V(k), every step
    rate: Optional[RateFit] = None
    steady_state_lag: Optional[float] = None
    notes: list[str] = field(default_factory=list)

    @property
    def final(self) -> TraceRow:
        return self.rows[-1]

    def raise_if_not_converged(self) -> None:
        if not self.converged:
            raise NotConverged(f"no convergence within {self.steps} steps")

    def summary(self) -> dict:
        """Flat description of the run, without the per-step rows."""
        out = {
            "converged": self.converged,
            "steps": self.steps,
            "step_size": self.step_size,
            "final_t": self.final.t if self.rows else 0.0,
            "final_cost_v": self.final.cost_v if self.rows else None,
            "final_spread": self.final.spread if self.rows else None,
            "final_residual": self.final.residual if self.rows else None,
            "final_oracle_dist": self.final.oracle_dist if self.rows else None,
            "max_residual": self.max_residual,
            "max_cost_increase": self.max_cost_increase,
            "solution": None if self.consensus is None else [float(v) for v in self.consensus],
            "oracle": None if self.oracle is None else [float(v) for v in self.oracle],
            "fitted_rate": None if self.rate is None else self.rate.fitted_rate,
            "fit_r_squared": None if self.rate is None else self.rate.r_squared,
            "fit_window": None if self.rate is None else list(self.rate.window),
            "rate_basis": "oracle_dist",
            "notes": list(self.notes),
        }
        if self.steady_state_lag is not None:
            out["steady_state_lag"] = self.steady_state_lag
        return out

    def records(self) -> list[dict]:
        return [asdict(r) for r in self.rows]


Drift = Callable[[float], np.ndarray]


def _check_setup(system: LinearSystem, g: NetworkGraph) -> tuple[Dynamics, Optional[np.ndarray], list[str]]:
    """Validate a (system, graph) pair and pick the oracle solution if unique."""
    if not is_connected(g):
        raise Disconnected("graph is disconnected")
    dyn = Dynamics(system, g)
    a = system.matrix
    m, n = a.shape
    if m > n:
        raise ShapeError(f"A has more rows than unknowns ({m}x{n}); least squares is not supported")
    notes = []
    oracle = None
    if rank(a) < m:
        msg = "A does not have full row rank; oracle comparison skipped"
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
        notes.append(msg)
    elif m == n:
        oracle = direct_solve(a, system.rhs)
    return dyn, oracle, notes


def _integrate(
    system: LinearSystem,
    g: NetworkGraph,
    config: FlowConfig,
    drift: Optional[Drift] = None,
    freeze_after: Optional[float] = None,
) -> SimulationTrace:
    """Shared fixed-step loop for :func:`run` and :func:`track_varying_b`.

    ``drift(t)`` returns the additive change to ``b`` at time ``t``. While it is
    active the run never stops early; the oracle follows ``b(t)``.
    """
    dyn, oracle, notes = _check_setup(system, g)
    h = dyn.step_size(config)
    x = initialize(system, g, config)
    b0 = system.rhs
    a = system.matrix
    varying = drift is not None

    def b_at(t: float) -> np.ndarray:
        if not varying:
            return b0
        if freeze_after is not None:
            t = min(t, freeze_after)
        return b0 + drift(t)

    def rhs_at(t: float):
        return dyn.padded_rhs(b_at(t)) if varying else None

    def f(t, state):
        return dyn.derivative(state, config, rhs_at(t))

    trace = SimulationTrace(step_size=h, notes=notes)

    def oracle_now(t):
        if oracle is None:
            return None
        return direct_solve(a, b_at(t)) if varying else oracle

    t = 0.0
    k = 0
    v_prev, sp = edge_metrics(x, dyn.edges)
    while True:
        rhs = rhs_at(t)
        res = float(np.max(np.abs(dyn.residuals(x, rhs))))
        trace.max_residual = max(trace.max_residual, res)
        frozen = not varying or (freeze_after is not None and t >= freeze_after)
        done = frozen and max(sp, res) <= config.convergence_tol
        if done or k == config.max_steps or k % config.record_every == 0:
            xs = oracle_now(t)
            dist = None if xs is None else float(np.max(np.abs(x - xs)))
            trace.rows.append(TraceRow(k, t, v_prev, sp, res, dist))
        if done:
            trace.converged = True
            break
        if k == config.max_steps:
            break
        x = step(x, config, f, h, t)
        k += 1
        t = k * h
        v, sp = edge_metrics(x, dyn.edges)
        trace.max_cost_increase = max(trace.max_cost_increase, v - v_prev)
        v_prev = v
    trace.steps = k
    trace.consensus = x.mean(axis=0)
    trace.oracle = oracle_now(t)
    try:
        trace.rate = fit_rate(trace)
    except InsufficientData:
        trace.rate = None
    return trace


def run(system: LinearSystem, g: NetworkGraph, config: FlowConfig) -> SimulationTrace:
    """Integrate the configured flow until it converges or ``max_steps`` runs out.

    Convergence means the largest edge disagreement and the largest manifold
    residual are both within ``config.convergence_tol``. A run that does not
    converge still returns its trace with ``converged=False``.
    """
    return _integrate(system, g, config)


def fit_rate(trace: SimulationTrace) -> RateFit:
    """Least-squares exponential rate of the oracle distance over the tail.

    The first 20% of the recorded rows are dropped as transient, as are rows
    whose distance is below 1e-13.
    """
    rows = trace.rows
    start = int(np.ceil(C.RATE_TRANSIENT_FRACTION * len(rows)))
    tail = [r for r in rows[start:] if r.oracle_dist is not None and r.oracle_dist > C.RATE_DIST_FLOOR]
    if len(tail) < C.RATE_MIN_POINTS:
        raise InsufficientData(f"need {C.RATE_MIN_POINTS} usable points, have {len(tail)}")
    t = np.array([r.t for r in tail])
    y = np.log([r.oracle_dist for r in tail])
    design = np.column_stack([t, np.ones_like(t)])
    (slope, icpt), *_ = np.linalg.lstsq(design, y, rcond=None)
    fitted = design @ np.array([slope, icpt])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - fitted) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateFit(float(-slope), (tail[0].step, tail[-1].step), r2)


def sinusoidal_drift(amplitude, omega) -> Drift:
    """Per-row ``amplitude * sin(omega * t)``; scalars broadcast over rows."""
    amp = np.asarray(amplitude, dtype=float)
    om = np.asarray(omega, dtype=float)
    return lambda t: amp * np.sin(om * t)


def track_varying_b(
    system: LinearSystem,
    g: NetworkGraph,
    config: FlowConfig,
    amplitude: Union[float, Sequence[float]],
    omega: Union[float, Sequence[float]],
    freeze_after: Optional[float] = None,
) -> SimulationTrace:
    """Follow a sinusoidally moving right-hand side.

    ``oracle_dist`` in the trace is the lag behind the instantaneous solution.
    The steady-state lag is the maximum lag over the last 30% of recorded
    rows (up to the freeze time, if there is one). With zero amplitude this is
    exactly :func:`run`.
    """
    amp = np.broadcast_to(np.asarray(amplitude, dtype=float), (len(system.rhs),))
    om = np.broadcast_to(np.asarray(omega, dtype=float), (len(system.rhs),))
    if config.variant == "plain" and np.any(amp != 0.0):
        raise BadParam("manifolds move when b varies; the plain variant cannot follow them (use restoring)")
    drift = sinusoidal_drift(amp, om) if np.any(amp != 0.0) else None
    trace = _integrate(system, g, config, drift=drift, freeze_after=freeze_after)
    rows = trace.rows
    if freeze_after is not None:
        rows = [r for r in rows if r.t <= freeze_after]
    lags = [r.oracle_dist for r in rows if r.oracle_dist is not None]
    if lags:
        tail = lags[int(np.floor((1.0 - C.TRACK_TAIL_FRACTION) * len(lags))):]
        trace.steady_state_lag = float(max(tail))
    return trace


# random instances ------------------------------------------------------------


def _orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def random_matrix(rows: int, cols: int, seed: int, cond_max: float = 10.0) -> np.ndarray:
    """Full-row-rank ``rows x cols`` matrix with condition number ``<= cond_max``.

    Built as ``U diag(s) V^T`` with orthogonal factors and singular values
    log-uniform in ``[1, cond_max]`` (the smallest pinned to 1).
    """
    if rows > cols:
        raise ShapeError("random_matrix builds wide or square matrices only")
    rng = np.random.default_rng(seed)
    u = _orthogonal(rng, rows)
    v = _orthogonal(rng, cols)[:, :rows]
    s = np.exp(rng.uniform(0.0, np.log(cond_max), size=rows))
    s[np.argmin(s)] = 1.0
    return (u * s) @ v.T


def random_instance(
    n: int,
    seed: int,
    rows: Optional[int] = None,
    block_sizes: Optional[Sequence[int]] = None,
    topology: str = "random_connected",
    cond_max: float = 10.0,
) -> tuple[LinearSystem, NetworkGraph]:
    """Seeded system plus a graph with one vertex per row block.

    ``b`` entries are uniform in ``[-1, 1]``. With ``block_sizes`` the rows are
    grouped in that order; otherwise every row is its own agent.
    """
    m = n if rows is None else rows
    a = random_matrix(m, n, seed, cond_max)
    rng = np.random.default_rng([seed, 1])
    b = rng.uniform(-1.0, 1.0, size=m)
    if block_sizes is None:
        system = LinearSystem.from_rows(a, b)
    else:
        system = LinearSystem.from_blocks(a, b, block_sizes)
    return system, generate(topology, system.agent_count, seed)


def random_block_sizes(m: int, seed: int, largest: int = 3) -> list[int]:
    rng = np.random.default_rng([seed, 2])
    sizes = []
    while sum(sizes) < m:
        sizes.append(int(min(rng.integers(1, largest + 1), m - sum(sizes))))
    return sizes


def expected_rate(rho: float, variant: str) -> Optional[float]:
    """Slowest decay rate of the error, given ``rho`` of the system.

    In an orthonormal basis adapted to ``ker P`` and ``Im P`` the restoring
    error matrix is ``diag(I, Qbar^T Lbar Qbar)``, hence ``min(rho, 1)``.
    No closed form is used for general gains.
    """
    if variant == "plain":
        return rho
    if variant == "restoring":
        return min(rho, 1.0)
    return None


# sweeps ----------------------------------------------------------------------


@dataclass
class SweepEntry:
    topology: str
    n: int
    seed: int
    variant: str = "plain"


@dataclass
class SweepRow:
    entry: SweepEntry
    graph: Optional[GraphReport] = None
    spectral: Optional[SpectralReport] = None
    rate: Optional[RateFit] = None
    converged: Optional[bool] = None
    rate_ratio: Optional[float] = None
    nongeneric: bool = False  # fitted rate above the band around rho
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "entry": asdict(self.entry),
            "graph": None if self.graph is None else self.graph.to_dict(),
            "spectral": None if self.spectral is None else self.spectral.to_dict(),
            "rate": None if self.rate is None else asdict(self.rate),
            "converged": self.converged,
            "rate_ratio": self.rate_ratio,
            "nongeneric": self.nongeneric,
            "error": self.error,
        }


def sweep(
    entries: Iterable[Union[SweepEntry, tuple]],
    simulate: bool = True,
    cond_max: float = 10.0,
    config: Optional[FlowConfig] = None,
) -> list[SweepRow]:
    """Analyze (and optionally simulate) one random instance per entry.

    Each entry builds a square system of size ``n`` and the named topology on
    ``n`` vertices from ``seed``. Per-entry failures are stored on the row.
    Simulations record every step with RK4 so the fitted rate is not biased
    by the Euler discretization.
    """
    out = []
    for e in entries:
        entry = e if isinstance(e, SweepEntry) else SweepEntry(*e)
        row = SweepRow(entry)
        out.append(row)
        try:
            system, g = random_instance(entry.n, entry.seed, topology=entry.topology, cond_max=cond_max)
            row.graph = graph_report(g)
            row.spectral = spectral_report(system, g, lemma1=False)
            if not simulate:
                continue
            base = config or FlowConfig(integrator="rk4", record_every=1)
            cfg = FlowConfig(**{**asdict(base), "variant": entry.variant, "seed": entry.seed})
            if cfg.variant != "plain" and cfg.init == "min_norm":
                cfg.init = "free_random"
            trace = run(system, g, cfg)
            row.converged = trace.converged
            row.rate = trace.rate
            reference = expected_rate(row.spectral.rho, cfg.variant)
            if trace.rate is not None and reference is not None:
                row.rate_ratio = trace.rate.fitted_rate / reference
                row.nongeneric = row.rate_ratio > 1.0 + C.RATE_BAND
        except ConsensusFlowError as exc:
            row.error = f"{type(exc).__name__}: {exc}"
    return out
