"""Stacked operators of the consensus flow and checks on their spectra.

All spectra are reported with the positive sign convention: the plain flow is
``d/dt X = -P Lbar X``, and ``rho`` is the smallest nonzero eigenvalue of
``P Lbar`` (equivalently of the symmetric ``P Lbar P``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from consensus_flow import constants as C
from consensus_flow.errors import BadParam, Disconnected, MismatchedTopology, RankDeficient
from consensus_flow.flow import LinearSystem, projection_for_block
from consensus_flow.graph import NetworkGraph, is_connected, lambda2, laplacian
from consensus_flow.linalg import general_eigvals, kron, rank, spectrum_distance, sym_eigen


def stacked_operators(system: LinearSystem, g: NetworkGraph) -> tuple[np.ndarray, np.ndarray]:
    """Block-diagonal projector ``P`` and ``Lbar = L kron I_n``."""
    if g.vertex_count != system.agent_count:
        raise MismatchedTopology(
            f"graph has {g.vertex_count} vertices but the system has {system.agent_count} row blocks"
        )
    n = system.unknown_dim
    size = system.agent_count * n
    p = np.zeros((size, size))
    for i, (a, _) in enumerate(system.blocks):
        p[i * n:(i + 1) * n, i * n:(i + 1) * n] = projection_for_block(a).matrix
    return p, kron(laplacian(g), np.eye(n))


def _require_full_row_rank(system: LinearSystem) -> None:
    a = system.matrix
    if rank(a) < a.shape[0]:
        raise RankDeficient("A is rank deficient (rows are linearly dependent)")


def _require_connected(g: NetworkGraph) -> None:
    if not is_connected(g):
        raise Disconnected("graph is disconnected")


def _zero_threshold(values: np.ndarray) -> float:
    return C.ZERO_EIG_REL * float(np.max(np.abs(values), initial=0.0))


def projected_laplacian(system: LinearSystem, g: NetworkGraph) -> np.ndarray:
    """``P Lbar P``, symmetrized against roundoff."""
    p, lbar = stacked_operators(system, g)
    m = p @ lbar @ p
    return 0.5 * (m + m.T)


def _smallest_nonzero(values: np.ndarray) -> float:
    tau = _zero_threshold(values)
    nonzero = values[values > tau]
    if nonzero.size == 0:
        raise BadParam("operator has no nonzero eigenvalue (single agent?)")
    return float(nonzero.min())


def rho(system: LinearSystem, g: NetworkGraph) -> float:
    """Asymptotic decay rate: smallest nonzero eigenvalue of ``P Lbar P``."""
    _require_full_row_rank(system)
    _require_connected(g)
    return _smallest_nonzero(sym_eigen(projected_laplacian(system, g)).values)


def image_basis(system: LinearSystem) -> np.ndarray:
    """Orthonormal basis (columns) of ``Im P``, assembled agent by agent.

    Columns are eigenvectors of each ``P_i`` with eigenvalue within 1e-6 of 1,
    then re-orthonormalized by modified Gram-Schmidt.
    """
    n = system.unknown_dim
    cols = []
    for i, (a, _) in enumerate(system.blocks):
        res = sym_eigen(projection_for_block(a).matrix)
        for k in np.flatnonzero(np.abs(res.values - 1.0) <= C.IMAGE_EIG_TOL):
            v = np.zeros(system.agent_count * n)
            v[i * n:(i + 1) * n] = res.vectors[:, k]
            cols.append(v)
    q = np.array(cols).T.reshape(system.agent_count * n, len(cols))
    for j in range(q.shape[1]):
        for k in range(j):
            q[:, j] -= (q[:, k] @ q[:, j]) * q[:, k]
        q[:, j] /= np.linalg.norm(q[:, j])
    return q


def rho_restricted(system: LinearSystem, g: NetworkGraph) -> float:
    """``rho`` recomputed from the Laplacian restricted to ``Im P``.

    This is the smallest eigenvalue of ``Qbar^T Lbar Qbar`` (for a square
    nonsingular ``A`` that matrix is nonsingular; otherwise its consensus
    zero modes are skipped with the usual threshold).
    """
    _require_full_row_rank(system)
    _require_connected(g)
    q = image_basis(system)
    _, lbar = stacked_operators(system, g)
    k = q.T @ lbar @ q
    return _smallest_nonzero(sym_eigen(0.5 * (k + k.T)).values)


@dataclass
class Lemma1Check:
    min_real: float
    max_imag: float
    general_checked: bool
    spectrum_gap: Optional[float] = None  # symmetric vs general path


def verify_lemma1(system: LinearSystem, g: NetworkGraph, general_max_dim: int = C.GENERAL_EIG_MAX_DIM) -> Lemma1Check:
    """Eigenvalues of the error-system matrix ``P Lbar + I - P``.

    The symmetric form ``P Lbar P + I - P`` (same spectrum) is always solved;
    when the stacked dimension is at most ``general_max_dim`` the
    nonsymmetric matrix is solved directly as well and the two spectra are
    compared.
    """
    a = system.matrix
    if rank(a) < a.shape[1]:
        raise RankDeficient("ker A is nontrivial")
    _require_connected(g)
    p, lbar = stacked_operators(system, g)
    eye = np.eye(p.shape[0])
    sym = p @ lbar @ p + eye - p
    sym_vals = sym_eigen(0.5 * (sym + sym.T)).values
    if p.shape[0] > general_max_dim:
        return Lemma1Check(float(sym_vals.min()), 0.0, False)
    gen_vals = general_eigvals(p @ lbar + eye - p)
    return Lemma1Check(
        min_real=float(gen_vals.real.min()),
        max_imag=float(np.abs(gen_vals.imag).max()),
        general_checked=True,
        spectrum_gap=spectrum_distance(gen_vals, sym_vals),
    )


@dataclass
class Theorem2Check:
    rho: float
    rho_restricted: float
    lambda2: float
    holds: bool
    paths_agree: bool


def verify_theorem2(system: LinearSystem, g: NetworkGraph) -> Theorem2Check:
    """Check ``rho <= lambda2(L)`` and that both ways of computing ``rho`` agree."""
    r = rho(system, g)
    rq = rho_restricted(system, g)
    l2 = lambda2(g)
    return Theorem2Check(
        rho=r,
        rho_restricted=rq,
        lambda2=l2,
        holds=r <= l2 + C.THEOREM2_TOL,
        paths_agree=abs(r - rq) <= C.RHO_PATHS_TOL,
    )


def equilibrium_space_dim(system: LinearSystem, g: NetworkGraph) -> int:
    """Multiplicity of the zero eigenvalue of ``P Lbar P`` (``n`` for full row rank)."""
    _require_full_row_rank(system)
    _require_connected(g)
    values = sym_eigen(projected_laplacian(system, g)).values
    return int(np.count_nonzero(np.abs(values) <= _zero_threshold(values)))


def manifold_equilibrium_dim(system: LinearSystem, g: NetworkGraph) -> int:
    """Dimension of the equilibrium set inside the product of the manifolds.

    Zero multiplicity of ``Qbar^T Lbar Qbar``: ``n - m`` for a connected graph
    and full row rank, so 0 when ``A`` is square.
    """
    _require_full_row_rank(system)
    _require_connected(g)
    q = image_basis(system)
    if q.shape[1] == 0:
        return 0
    _, lbar = stacked_operators(system, g)
    k = q.T @ lbar @ q
    values = sym_eigen(0.5 * (k + k.T)).values
    if not np.any(values):
        return len(values)
    return int(np.count_nonzero(np.abs(values) <= _zero_threshold(values)))


@dataclass
class SpectralReport:
    rho: float
    rho_restricted: float
    lambda2: float
    theorem2_holds: bool
    rho_paths_agree: bool
    equilibrium_dim: int
    lemma1_min_eigenvalue: Optional[float] = None
    lemma1_max_imag: Optional[float] = None
    lemma1_general_checked: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def spectral_report(system: LinearSystem, g: NetworkGraph, lemma1: bool = True) -> SpectralReport:
    """Collect ``rho``, the ``rho <= lambda2`` check and the error-system extremes.

    The ``lemma1_*`` fields describe the spectrum of ``P Lbar + I - P``; they
    stay ``None`` when ``A`` has a nontrivial kernel (the rectangular case) or
    when ``lemma1`` is false.
    """
    _require_full_row_rank(system)
    _require_connected(g)
    values = sym_eigen(projected_laplacian(system, g)).values
    r = _smallest_nonzero(values)
    rq = rho_restricted(system, g)
    l2 = lambda2(g)
    rep = SpectralReport(
        rho=r,
        rho_restricted=rq,
        lambda2=l2,
        theorem2_holds=r <= l2 + C.THEOREM2_TOL,
        rho_paths_agree=abs(r - rq) <= C.RHO_PATHS_TOL,
        equilibrium_dim=int(np.count_nonzero(np.abs(values) <= _zero_threshold(values))),
    )
    if lemma1 and rank(system.matrix) == system.unknown_dim:
        l1 = verify_lemma1(system, g)
        rep.lemma1_min_eigenvalue = l1.min_real
        rep.lemma1_max_imag = l1.max_imag
        rep.lemma1_general_checked = l1.general_checked
    return rep
