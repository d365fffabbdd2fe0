"""Dense linear algebra kernel.

Matrices and vectors are plain ``numpy`` float arrays. The routines here are
the ones every other module leans on: Kronecker product, a cyclic Jacobi
eigensolver for symmetric matrices, Gaussian elimination (solve and rank) and a
small Hessenberg/QR eigenvalue routine for nonsymmetric matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from consensus_flow import constants as C
from consensus_flow.errors import (
    NoConvergence,
    NonFiniteInput,
    NotSymmetric,
    ShapeError,
    Singular,
)


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float array (a copy is not guaranteed)."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteInput(f"{name} has non-finite entries")
    return m


def as_vector(v, name: str = "vector") -> np.ndarray:
    x = np.asarray(v, dtype=float)
    if x.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput(f"{name} has non-finite entries")
    return x


def inf_norm(a: np.ndarray) -> float:
    """Maximum absolute row sum (``max |x_i|`` for vectors)."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0.0
    if a.ndim == 1:
        return float(np.max(np.abs(a)))
    return float(np.max(np.sum(np.abs(a), axis=1)))


def kron(a, b) -> np.ndarray:
    """Kronecker product, assembled block by block."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    p, q = b.shape
    out = np.zeros((a.shape[0] * p, a.shape[1] * q))
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            if a[i, j] != 0.0:
                out[i * p:(i + 1) * p, j * q:(j + 1) * q] = a[i, j] * b
    return out


@dataclass(frozen=True)
class EigenResult:
    values: np.ndarray  # ascending
    vectors: np.ndarray  # column k pairs with values[k]

    def __iter__(self):
        yield self.values
        yield self.vectors


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint index pairings covering every pair (p, q) once per cycle."""
    players = list(range(n if n % 2 == 0 else n + 1))
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for k in range(m // 2):
            p, q = players[k], players[m - 1 - k]
            if p < n and q < n:
                ps.append(min(p, q))
                qs.append(max(p, q))
        rounds.append((np.array(ps, dtype=int), np.array(qs, dtype=int)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _offdiag_norm(a: np.ndarray) -> float:
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.linalg.norm(off))


def sym_eigen(m) -> EigenResult:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Each sweep visits every off-diagonal pair once. Pairs are grouped into
    rounds of disjoint rotations (tournament ordering) so a whole round is
    applied at once. Iterates until the off-diagonal Frobenius norm drops to
    ``1e-12 * ||m||_F``.

    Raises:
        NotSymmetric: if ``max |m_ij - m_ji| > 1e-10``.
        NoConvergence: if 50 sweeps do not suffice.
    """
    a = as_matrix(m, "m")
    n, k = a.shape
    if n != k:
        raise NotSymmetric(f"matrix is not square ({n}x{k})")
    if n and np.max(np.abs(a - a.T)) > C.SYMMETRY_TOL:
        raise NotSymmetric("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    target = C.JACOBI_OFFDIAG_REL * float(np.linalg.norm(a))
    rounds = _round_robin(n) if n > 1 else []
    sweeps = 0
    while _offdiag_norm(a) > target:
        if sweeps == C.JACOBI_MAX_SWEEPS:
            raise NoConvergence(f"Jacobi did not converge in {sweeps} sweeps")
        sweeps += 1
        for p, q in rounds:
            apq = a[p, q]
            active = apq != 0.0
            if not np.any(active):
                continue
            p, q, apq = p[active], q[active], apq[active]
            # tan of the rotation angle, smaller root; no overflow for tiny apq
            d = a[q, q] - a[p, p]
            sgn = np.where(d >= 0.0, 1.0, -1.0)
            t = sgn * 2.0 * apq / (np.abs(d) + np.hypot(d, 2.0 * apq))
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rp, rq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            cp, cq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = cp * c - cq * s
            a[:, q] = cp * s + cq * c
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = vp * c - vq * s
            v[:, q] = vp * s + vq * c
    values = np.diag(a).copy()
    order = np.argsort(values, kind="stable")
    return EigenResult(values[order], v[:, order])


def sym_eigvals(m) -> np.ndarray:
    return sym_eigen(m).values


def direct_solve(a, b) -> np.ndarray:
    """Solve ``a x = b`` by Gaussian elimination with partial pivoting.

    Raises :class:`Singular` when a pivot falls below ``1e-12 * ||a||_inf``.
    """
    a = as_matrix(a, "a").copy()
    b = as_vector(b, "b").copy()
    n = a.shape[0]
    if a.shape[1] != n:
        raise ShapeError(f"direct_solve needs a square matrix, got {a.shape}")
    if b.shape[0] != n:
        raise ShapeError(f"rhs length {b.shape[0]} does not match {n}")
    tol = C.PIVOT_REL * inf_norm(a)
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[p, k]) <= tol or a[p, k] == 0.0:
            raise Singular(f"matrix is singular (pivot {k})")
        if p != k:
            a[[k, p]] = a[[p, k]]
            b[[k, p]] = b[[p, k]]
        f = a[k + 1:, k] / a[k, k]
        a[k + 1:, k:] -= np.outer(f, a[k, k:])
        b[k + 1:] -= f * b[k]
    x = np.zeros(n)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - a[k, k + 1:] @ x[k + 1:]) / a[k, k]
    return x


def solve_columns(a, rhs) -> np.ndarray:
    """``direct_solve`` applied to each column of ``rhs``."""
    rhs = as_matrix(rhs, "rhs")
    return np.column_stack([direct_solve(a, rhs[:, j]) for j in range(rhs.shape[1])])


def rank(a) -> int:
    """Numerical rank via elimination with complete pivoting.

    A pivot counts when it exceeds ``1e-10 * ||a||_inf``.
    """
    a = as_matrix(a, "a").copy()
    if a.size == 0:
        return 0
    tol = C.RANK_PIVOT_REL * inf_norm(a)
    r = 0
    rows, cols = a.shape
    while r < min(rows, cols):
        sub = np.abs(a[r:, r:])
        i, j = np.unravel_index(int(np.argmax(sub)), sub.shape)
        if sub[i, j] <= tol or sub[i, j] == 0.0:
            break
        i += r
        j += r
        a[[r, i]] = a[[i, r]]
        a[:, [r, j]] = a[:, [j, r]]
        f = a[r + 1:, r] / a[r, r]
        a[r + 1:, r:] -= np.outer(f, a[r, r:])
        r += 1
    return r


def _hessenberg(a: np.ndarray) -> np.ndarray:
    """Householder similarity reduction to upper Hessenberg form."""
    h = a.astype(complex)
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1:, k].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        u = x.copy()
        u[0] += phase * alpha
        u /= np.linalg.norm(u)
        h[k + 1:, k:] -= 2.0 * np.outer(u, u.conj() @ h[k + 1:, k:])
        h[:, k + 1:] -= 2.0 * np.outer(h[:, k + 1:] @ u, u.conj())
        h[k + 2:, k] = 0.0
    return h


def general_eigvals(m) -> np.ndarray:
    """Eigenvalues (complex) of a general square matrix.

    Hessenberg reduction followed by QR iteration with Wilkinson shifts and
    deflation, in complex arithmetic. Meant for the small matrices of the
    spectral cross-checks, not for production sizes.
    """
    a = as_matrix(m, "m")
    n = a.shape[0]
    if a.shape[1] != n:
        raise ShapeError(f"matrix is not square ({a.shape})")
    if n == 0:
        return np.zeros(0, dtype=complex)
    h = _hessenberg(a)
    eps = np.finfo(float).eps
    scale = max(float(np.max(np.abs(h))), np.finfo(float).tiny)
    eig = np.zeros(n, dtype=complex)
    hi = n - 1
    iters = 0
    stall = 0
    while hi >= 0:
        l = hi
        while l > 0:
            sub = abs(h[l, l - 1])
            if sub <= eps * (abs(h[l, l]) + abs(h[l - 1, l - 1])) or sub <= eps * scale:
                h[l, l - 1] = 0.0
                break
            l -= 1
        if l == hi:
            eig[hi] = h[hi, hi]
            hi -= 1
            stall = 0
            continue
        iters += 1
        stall += 1
        if iters > C.QR_MAX_ITER:
            raise NoConvergence(f"QR iteration exceeded {C.QR_MAX_ITER} iterations")
        d = h[hi, hi]
        if stall % 11 == 10:
            mu = d + 0.75 * abs(h[hi, hi - 1])
        else:
            a11, a12, a21 = h[hi - 1, hi - 1], h[hi - 1, hi], h[hi, hi - 1]
            half = 0.5 * (a11 - d)
            root = np.sqrt(half * half + a12 * a21)
            mu1, mu2 = d + half - root, d + half + root
            mu = mu1 if abs(mu1 - d) <= abs(mu2 - d) else mu2
        blk = h[l:hi + 1, l:hi + 1] - mu * np.eye(hi - l + 1)
        rot = []
        for k in range(hi - l):
            x, y = blk[k, k], blk[k + 1, k]
            r = np.hypot(abs(x), abs(y))
            if r == 0.0:
                c, s = 1.0 + 0j, 0j
            else:
                c, s = x / r, y / r
            rk, rk1 = blk[k, k:].copy(), blk[k + 1, k:].copy()
            blk[k, k:] = c.conjugate() * rk + s.conjugate() * rk1
            blk[k + 1, k:] = -s * rk + c * rk1
            rot.append((c, s))
        for k, (c, s) in enumerate(rot):
            ck, ck1 = blk[:k + 2, k].copy(), blk[:k + 2, k + 1].copy()
            blk[:k + 2, k] = c * ck + s * ck1
            blk[:k + 2, k + 1] = -s.conjugate() * ck + c.conjugate() * ck1
        h[l:hi + 1, l:hi + 1] = blk + mu * np.eye(hi - l + 1)
    return eig


def spectrum_distance(x, y) -> float:
    """Largest gap after greedily pairing two eigenvalue multisets.

    Values of ``x`` are taken in sorted order and matched to the nearest unused
    value of ``y``; adequate when the mismatch is far below the eigenvalue
    separation, which is the only regime we use it in.
    """
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if x.shape != y.shape:
        raise ShapeError("spectra have different sizes")
    order = np.lexsort((x.imag, x.real))
    free = np.ones(len(y), dtype=bool)
    worst = 0.0
    for i in order:
        d = np.where(free, np.abs(y - x[i]), np.inf)
        j = int(np.argmin(d))
        free[j] = False
        worst = max(worst, float(d[j]))
    return worst
