"""Laplacian spectra and the spectral estimates of the optimal search parameters.

With ``H_norm = I - L / lambda_L`` and ``a_i`` the overlaps of the target with
its eigenvectors, the sums

    S_k = sum_{i < N} |a_i|^2 / (1 - lambda_i)^k

give the approximate optimum ``gamma ~ S_1 / lambda_L`` and
``T ~ sqrt(N) sqrt(S_2) / S_1``. Since ``1 - lambda_i = mu_i / lambda_L`` for
Laplacian eigenvalues ``mu_i``, ``S_k = lambda_L^k <w|(L^+)^k|w>``, which is
what the ``solver`` backend evaluates with conjugate gradients.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .graph import Graph

log = logging.getLogger(__name__)

__all__ = [
    "DisconnectedGraphError",
    "ConvergenceError",
    "SpectralSummary",
    "OverlapCurve",
    "laplacian_extremes",
    "laplacian_pinv_solve",
    "s_parameters",
    "approx_optimum",
    "overlap_gap_curve",
    "DENSE_EIGEN_MAX_N",
    "EXTREMES_DENSE_MAX_N",
]

DENSE_EIGEN_MAX_N = 3000
EXTREMES_DENSE_MAX_N = 256


class DisconnectedGraphError(ValueError):
    def __init__(self, msg="graph is disconnected; extract the giant component first"):
        super().__init__(msg)


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectralSummary:
    node: int
    degree: int
    lambda_L: float
    delta: float
    s1: float
    s2: float
    s3: float
    epsilon: float
    gamma_approx: float
    t_approx: float
    p_approx: float
    c_constant: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class OverlapCurve:
    gamma_grid: np.ndarray
    overlap_s0: np.ndarray
    overlap_w0: np.ndarray
    overlap_s1: np.ndarray
    overlap_w1: np.ndarray
    gap: np.ndarray
    flags: list = field(default_factory=list)

    columns = ("gamma", "overlap_s0", "overlap_w0", "overlap_s1", "overlap_w1", "gap")

    def rows(self):
        return zip(self.gamma_grid, self.overlap_s0, self.overlap_w0,
                   self.overlap_s1, self.overlap_w1, self.gap)


# ---------------------------------------------------------------- extremal eigenvalues


@lru_cache(maxsize=64)
def laplacian_extremes(g: Graph) -> tuple[float, float]:
    """Largest Laplacian eigenvalue and the algebraic connectivity."""
    if g.n < 2:
        raise ValueError("need at least two nodes")
    if g.n <= EXTREMES_DENSE_MAX_N:
        mu = np.linalg.eigvalsh(g.dense_laplacian())
        lam, mu2 = float(mu[-1]), float(mu[1])
    else:
        L = g.laplacian
        lam = float(eigsh(L, k=1, which="LA", tol=1e-13, return_eigenvectors=False)[0])
        # shift-invert around a small negative shift keeps L - sigma I definite
        vals = eigsh(L, k=2, sigma=-1e-3, which="LM", tol=1e-13, return_eigenvectors=False)
        mu2 = float(np.max(vals))
    if mu2 < 1e-12 * max(1.0, lam) or not g.is_connected():
        raise DisconnectedGraphError()
    return lam, mu2


# ---------------------------------------------------------------- pseudoinverse solves


def laplacian_pinv_solve(g: Graph, b: np.ndarray, rtol: float = 1e-13,
                         maxiter: int | None = None) -> np.ndarray:
    """Return ``L^+ b`` by Jacobi-preconditioned CG on the complement of the constants.

    ``b`` is projected onto the range of L first; the returned vector has zero mean.
    """
    L = g.laplacian
    n = g.n
    maxiter = maxiter or 20 * n + 100
    b = np.asarray(b, dtype=float)
    b = b - b.mean()
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n)
    dinv = 1.0 / g.degrees.astype(float)
    x = np.zeros(n)
    r = b.copy()
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for it in range(maxiter):
        q = L @ p
        alpha = rz / (p @ q)
        x += alpha * p
        r -= alpha * q
        if np.linalg.norm(r) <= rtol * bnorm:
            return x - x.mean()
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(f"CG did not converge in {maxiter} iterations "
                           f"(residual {np.linalg.norm(r) / bnorm:.2e})")


def s_parameters(g: Graph, w: int, backend: str = "auto") -> tuple[float, float, float]:
    """The sums ``(S_1, S_2, S_3)`` for target ``w``."""
    if not (0 <= w < g.n):
        raise IndexError(f"node {w} outside [0, {g.n})")
    lam, _ = laplacian_extremes(g)
    if backend == "auto":
        backend = "dense" if g.n <= DENSE_EIGEN_MAX_N else "solver"
    if backend == "dense":
        mu, v = g.laplacian_eigh
        a2 = v[w, 1:] ** 2
        ratio = lam / mu[1:]
        return tuple(float(np.sum(a2 * ratio ** k)) for k in (1, 2, 3))
    if backend == "solver":
        e = np.zeros(g.n)
        e[w] = 1.0
        x1 = laplacian_pinv_solve(g, e)
        x2 = laplacian_pinv_solve(g, x1)
        wp = e - 1.0 / g.n
        return (lam * float(wp @ x1), lam ** 2 * float(x1 @ x1), lam ** 3 * float(x1 @ x2))
    raise ValueError(f"unknown backend {backend!r}")


def approx_optimum(g: Graph, w: int, backend: str = "auto") -> SpectralSummary:
    lam, mu2 = laplacian_extremes(g)
    s1, s2, s3 = s_parameters(g, w, backend)
    eps = 1.0 / g.n
    delta = mu2 / lam
    return SpectralSummary(
        node=int(w),
        degree=int(g.degrees[w]),
        lambda_L=lam,
        delta=delta,
        s1=s1,
        s2=s2,
        s3=s3,
        epsilon=eps,
        gamma_approx=s1 / lam,
        t_approx=math.sqrt(s2) / (math.sqrt(eps) * s1),
        p_approx=s1 * s1 / s2,
        # the c for which the validity condition holds with equality
        c_constant=math.sqrt(eps) / min(s1 * s2 / s3, delta * math.sqrt(s2)),
    )


# ---------------------------------------------------------------- overlap / gap curves


def _lowest_dense(h: np.ndarray, w: int, degen_tol: float):
    n = h.shape[0]
    k = min(n, 3)
    while True:
        e, v = sla.eigh(h, subset_by_index=[0, k - 1])
        # grow the window until it closes the first excited level
        if k == n or e[-1] - e[1] > degen_tol:
            break
        k = min(n, 2 * k)
    top = np.searchsorted(e, e[1] + degen_tol, side="right")
    return e, v, top


def overlap_gap_curve(g: Graph, w: int, gamma_grid, iterative: bool = False,
                      degen_tol: float = 1e-9) -> OverlapCurve:
    """Overlaps of the two lowest eigenstates of ``H(gamma)`` with ``|s>`` and ``|w>``."""
    grid = np.asarray(gamma_grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("gamma grid must be positive and strictly increasing")
    n = g.n
    if not (0 <= w < n):
        raise IndexError(f"node {w} outside [0, {n})")
    if n > DENSE_EIGEN_MAX_N and not iterative:
        raise ValueError(f"dense eigensolver limited to N <= {DENSE_EIGEN_MAX_N}; "
                         "request the iterative solver for larger graphs")
    s = np.full(n, 1.0 / math.sqrt(n))
    out = {k: np.full(len(grid), np.nan) for k in ("s0", "w0", "s1", "w1", "gap")}
    flags = []
    L = g.dense_laplacian() if not iterative else g.laplacian
    oracle = sp.csr_matrix(([1.0], ([w], [w])), shape=(n, n))
    for i, gam in enumerate(grid):
        try:
            if iterative:
                h = (gam * L - oracle).tocsc()
                e, v = eigsh(h, k=min(3, n - 1), which="SA", tol=1e-12)
                order = np.argsort(e)
                e, v = e[order], v[:, order]
                top = 2 if len(e) < 3 or e[2] - e[1] > degen_tol else 3
            else:
                h = gam * L
                h[w, w] -= 1.0
                e, v, top = _lowest_dense(h, w, degen_tol)
        except Exception as exc:  # a failed grid point must not sink the curve
            log.warning("eigensolver failed at gamma=%g: %s", gam, exc)
            flags.append((i, "failed"))
            continue
        psi0 = v[:, 0]
        if top > 2:
            # degenerate first excited level: take the member closest to |w>
            sub = v[:, 1:top]
            c = sub[w, :]
            if np.linalg.norm(c) > 0:
                psi1 = sub @ c / np.linalg.norm(c)
            else:
                psi1 = sub[:, 0]
            flags.append((i, "degenerate"))
        else:
            psi1 = v[:, 1]
        out["s0"][i] = (s @ psi0) ** 2
        out["w0"][i] = psi0[w] ** 2
        out["s1"][i] = (s @ psi1) ** 2
        out["w1"][i] = psi1[w] ** 2
        out["gap"][i] = max(e[1] - e[0], 0.0)
    return OverlapCurve(grid, out["s0"], out["w0"], out["s1"], out["w1"], out["gap"], flags)
