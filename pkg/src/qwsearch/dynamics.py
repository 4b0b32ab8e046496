"""Time evolution of the search walker.

The search Hamiltonian is ``H = gamma * L - |w><w|``. Three propagators for
``exp(-iHt) psi`` are provided:

* ``krylov``: Lanczos projection with adaptive sub-stepping and the usual
  a-posteriori local error estimate (Expokit's ``expv`` scheme).
* ``chebyshev``: Chebyshev expansion with Bessel coefficients. ``H`` is real,
  so a real start vector keeps the whole recurrence in real arithmetic, and
  one recurrence yields the target amplitude at any number of times.
* ``dense``: full eigendecomposition, for small graphs and as an oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
from numba import njit
from scipy.special import jv

from .graph import Graph, laplacian_apply

__all__ = [
    "SearchHamiltonian",
    "WalkerState",
    "NumericalError",
    "uniform_state",
    "basis_state",
    "hamiltonian_apply",
    "evolve",
    "target_probability",
    "target_amplitudes",
    "laplacian_max",
    "DENSE_MAX_N",
]

DENSE_MAX_N = 256
KRYLOV_DIM = 30


class NumericalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SearchHamiltonian:
    graph: Graph
    gamma: float
    target: int

    def __post_init__(self):
        if not (0 <= self.target < self.graph.n):
            raise ValueError(f"target {self.target} outside [0, {self.graph.n})")
        if not math.isfinite(self.gamma) or self.gamma < 0:
            raise ValueError(f"gamma must be finite and >= 0, got {self.gamma}")

    @property
    def n(self) -> int:
        return self.graph.n

    def dense(self) -> np.ndarray:
        h = self.gamma * self.graph.dense_laplacian()
        h[self.target, self.target] -= 1.0
        return h

    def spectral_bounds(self) -> tuple[float, float]:
        """Interval guaranteed to contain the spectrum."""
        return -1.0, self.gamma * laplacian_max(self.graph)


@dataclass(frozen=True)
class WalkerState:
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        object.__setattr__(self, "amplitudes", a)

    def __len__(self):
        return len(self.amplitudes)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def uniform_state(n: int) -> WalkerState:
    if n < 1:
        raise ValueError("need n >= 1")
    return WalkerState(np.full(n, 1.0 / math.sqrt(n), dtype=complex))


def basis_state(n: int, i: int) -> WalkerState:
    a = np.zeros(n, dtype=complex)
    a[i] = 1.0
    return WalkerState(a)


def hamiltonian_apply(h: SearchHamiltonian, x: np.ndarray) -> np.ndarray:
    y = h.gamma * laplacian_apply(h.graph, x)
    y[h.target] -= x[h.target]
    return y


def target_probability(psi: WalkerState | np.ndarray, w: int) -> float:
    a = psi.amplitudes if isinstance(psi, WalkerState) else np.asarray(psi)
    if not (0 <= w < len(a)):
        raise IndexError(f"node {w} outside [0, {len(a)})")
    return float(abs(a[w]) ** 2)


def laplacian_max(g: Graph) -> float:
    """Safe upper bound on the largest Laplacian eigenvalue, cached per graph."""
    return _laplacian_max_cached(g)


@lru_cache(maxsize=64)
def _laplacian_max_cached(g: Graph) -> float:
    bound = g.laplacian_bound
    if g.n <= 512:
        lam = float(np.linalg.eigvalsh(g.dense_laplacian())[-1])
        return min(bound, lam * (1 + 1e-9) + 1e-9)
    from scipy.sparse.linalg import eigsh

    vals, vecs = eigsh(g.laplacian, k=1, which="LA", tol=1e-8)
    # Ritz value plus residual norm bounds the true eigenvalue from above
    resid = np.linalg.norm(g.laplacian @ vecs[:, 0] - vals[0] * vecs[:, 0])
    return min(bound, float(vals[0] + resid) * 1.001)


def _as_array(psi) -> np.ndarray:
    if isinstance(psi, WalkerState):
        return psi.amplitudes
    return np.asarray(psi, dtype=complex)


def evolve(h: SearchHamiltonian, psi0, t: float, tol: float = 1e-9,
           backend: str = "krylov", dense_max_n: int = DENSE_MAX_N) -> WalkerState:
    """Return ``exp(-i H t) psi0``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    v = _as_array(psi0)
    if v.shape != (h.n,):
        raise ValueError(f"state length {v.shape} != node count {h.n}")
    if t == 0:
        return WalkerState(v.copy())
    if backend == "krylov":
        out = _expv_lanczos(h, v, t, tol)
    elif backend == "chebyshev":
        out = _chebyshev_states(h, v, np.array([t]), tol)[0]
    elif backend == "dense":
        if h.n > dense_max_n:
            raise ValueError(f"dense backend limited to N <= {dense_max_n} (got {h.n})")
        e, u = np.linalg.eigh(h.dense())
        out = u @ (np.exp(-1j * e * t) * (u.T @ v))
    else:
        raise ValueError(f"unknown backend {backend!r}")
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite amplitudes in evolution")
    return WalkerState(out)


def target_amplitudes(h: SearchHamiltonian, psi0, times, tol: float = 1e-9,
                      backend: str = "chebyshev") -> np.ndarray:
    """Amplitude ``<w|exp(-iHt)|psi0>`` at each of ``times`` (any order)."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    v = _as_array(psi0)
    if backend == "chebyshev":
        return _chebyshev_target(h, v, times, tol)
    if backend == "dense":
        e, u = np.linalg.eigh(h.dense())
        c = u.T @ v
        return (u[h.target] * c) @ np.exp(-1j * np.outer(e, times))
    if backend == "krylov":
        out = np.empty(len(times), dtype=complex)
        order = np.argsort(times)
        cur, t_cur = v, 0.0
        for idx in order:
            cur = _expv_lanczos(h, cur, times[idx] - t_cur, tol) if times[idx] != t_cur else cur
            t_cur = times[idx]
            out[idx] = cur[h.target]
        return out
    raise ValueError(f"unknown backend {backend!r}")


# ---------------------------------------------------------------- Lanczos / Krylov


def _round_step(x: float) -> float:
    s = 10.0 ** (math.floor(math.log10(x)) - 1)
    return math.ceil(x / s) * s


def _expv_lanczos(h: SearchHamiltonian, v: np.ndarray, t: float, tol: float,
                  m: int = KRYLOV_DIM, max_steps: int = 100_000) -> np.ndarray:
    """Expokit-style ``expv`` for ``A = -iH`` with a Lanczos inner recurrence.

    Step sizes are chosen so that the estimated local error of every step
    stays below ``tol``. The Lanczos vectors are fully reorthogonalised (classical Gram-Schmidt,
    applied twice).
    """
    n = len(v)
    m = min(m, n)
    lo, hi = h.spectral_bounds()
    anorm = max(abs(lo), abs(hi), 1e-300)
    gamma_safety, delta = 0.9, 1.2
    eps = np.finfo(float).eps
    rndoff = anorm * eps

    sgn = 1.0 if t >= 0 else -1.0
    t_out = abs(t)
    # treating a residual below btol as an invariant subspace costs about btol * |t|;
    # the round-off floor still catches exhaustion of the whole space
    btol = max(1e-3 * tol / max(1.0, anorm * t_out), 64.0 * eps * anorm)
    w = v.astype(complex, copy=True)
    beta = float(np.linalg.norm(w))
    if beta == 0.0:
        return w
    fact = ((m + 1) / math.e) ** (m + 1) * math.sqrt(2 * math.pi * (m + 1))
    xm = 1.0 / m
    t_new = (1.0 / anorm) * ((fact * tol) / (4.0 * beta * anorm)) ** xm
    t_new = _round_step(t_new)
    t_now = 0.0

    V = np.empty((m + 1, n), dtype=complex)
    nstep = 0
    while t_now < t_out:
        nstep += 1
        if nstep > max_steps:
            raise NumericalError("Krylov propagation exceeded step budget")
        t_step = min(t_out - t_now, t_new)
        V[0] = w / beta
        alpha = np.zeros(m)
        offd = np.zeros(m)
        mb = m
        happy = False
        for j in range(m):
            p = hamiltonian_apply(h, V[j])
            for _ in range(2):
                coef = V[: j + 1].conj() @ p
                p -= coef @ V[: j + 1]
                if _ == 0:
                    alpha[j] = coef[j].real
            bnorm = float(np.linalg.norm(p))
            if bnorm < btol:
                mb = j + 1
                happy = True
                break
            offd[j] = bnorm
            V[j + 1] = p / bnorm
        if happy:
            k1 = 0
            t_step = t_out - t_now
            avnorm = 0.0
        else:
            k1 = 2
            avnorm = float(np.linalg.norm(hamiltonian_apply(h, V[m])))

        # extended Hessenberg matrix of A = -iH in the Lanczos basis
        mx = mb + k1
        Hx = np.zeros((m + 2, m + 2), dtype=complex)
        idx = np.arange(mb)
        Hx[idx, idx] = -1j * alpha[:mb]
        Hx[idx[:-1] + 1, idx[:-1]] = -1j * offd[: mb - 1]
        Hx[idx[:-1], idx[:-1] + 1] = -1j * offd[: mb - 1]
        if not happy:
            Hx[m, m - 1] = -1j * offd[m - 1]
            Hx[m + 1, m] = 1.0

        ireject = 0
        while True:
            F = sla.expm(sgn * t_step * Hx[:mx, :mx])
            if k1 == 0:
                err_loc = btol
                break
            phi1 = abs(beta * F[m, 0])
            phi2 = abs(beta * F[m + 1, 0] * avnorm)
            if phi1 > 10 * phi2:
                err_loc, xm = phi2, 1.0 / m
            elif phi1 > phi2:
                err_loc, xm = phi1 * phi2 / (phi1 - phi2), 1.0 / m
            else:
                err_loc, xm = phi1, 1.0 / (m - 1)
            if err_loc <= delta * tol:
                break
            ireject += 1
            if ireject > 10:
                raise NumericalError("Krylov step size collapsed; tolerance unattainable")
            t_step = _round_step(gamma_safety * t_step * (tol / err_loc) ** xm)

        mxk = mb + max(0, k1 - 1)
        w = (beta * F[:mxk, 0]) @ V[:mxk]
        beta = float(np.linalg.norm(w))
        if not math.isfinite(beta):
            raise NumericalError("non-finite norm during Krylov propagation")
        t_now += t_step
        err_loc = max(err_loc, rndoff)
        t_new = _round_step(gamma_safety * t_step * (tol / err_loc) ** xm)
    return w


# ---------------------------------------------------------------- Chebyshev


@njit(cache=True)
def _bessel_j_all(z, kmax):  # pragma: no cover
    """``J_0(z) .. J_kmax(z)`` for ``z >= 0`` by Miller's backward recurrence."""
    out = np.zeros(kmax + 1)
    if z == 0.0:
        out[0] = 1.0
        return out
    if z < 1e-6:
        # two series terms; the backward recurrence would overflow on 2k/z
        term = 1.0
        for k in range(kmax + 1):
            if k > 0:
                term *= 0.5 * z / k
            if term == 0.0:
                break
            out[k] = term * (1.0 - 0.25 * z * z / (k + 1))
        return out
    top = max(kmax, int(z) + 1)
    start = top + 20 + int(np.sqrt(40.0 * top))
    jp1 = 0.0
    jk = 1e-300
    norm = 0.0
    for k in range(start, 0, -1):
        jm1 = (2.0 * k / z) * jk - jp1
        if k - 1 <= kmax:
            out[k - 1] = jm1
        if k <= kmax:
            out[k] = jk
        if (k - 1) % 2 == 0:
            norm += jm1 if k - 1 == 0 else 2.0 * jm1
        jp1, jk = jk, jm1
        if abs(jk) > 1e250:
            jp1 *= 1e-250
            jk *= 1e-250
            norm *= 1e-250
            for i in range(k - 1, kmax + 1):
                out[i] *= 1e-250
    return out / norm


def _cheb_order(z: float, tol: float) -> int:
    """Number of terms after which ``|J_k(z)|`` stays below ``tol``."""
    thresh = tol * 1e-3
    # J_k(z) decays super-exponentially once k exceeds z by a few z^(1/3)
    span = int(z + 12.0 * max(z, 1.0) ** (1.0 / 3.0) + 40)
    while abs(jv(span, z)) > thresh:
        span = int(span * 1.2) + 10
    big = np.flatnonzero(np.abs(_bessel_j_all(float(z), span)) > thresh)
    return int(big[-1]) + 2 if len(big) else 2


def _cheb_coefficients(z: np.ndarray, K: int) -> np.ndarray:
    """(len(z), K) array of ``(2 - delta_k0) (-i)^k J_k(z)`` for signed ``z``."""
    k = np.arange(K)
    c = np.array([_bessel_j_all(float(abs(x)), K - 1) for x in z]).reshape(len(z), K)
    # J_k(-z) = (-1)^k J_k(z)
    c = c * np.where(z[:, None] < 0, (-1.0) ** k[None, :], 1.0)
    c = c * ((-1j) ** k)[None, :]
    c[:, 1:] *= 2.0
    return c


def _cheb_setup(h: SearchHamiltonian, times: np.ndarray, tol: float):
    lo, hi = h.spectral_bounds()
    a = max(0.5 * (hi - lo), 1e-12)
    b = 0.5 * (hi + lo)
    K = _cheb_order(float(a * np.abs(times).max(initial=0.0)), tol)
    return a, b, K


def _cheb_recurrence(h: SearchHamiltonian, v: np.ndarray, a: float, b: float, K: int, reduce):
    """Run the three-term recurrence, handing each ``T_k(H~) v`` to ``reduce``."""
    L = h.graph.laplacian
    g = h.gamma
    w = h.target

    def apply(x):
        y = g * (L @ x)
        y[w] -= x[w]
        y -= b * x
        y /= a
        return y

    t0 = v
    reduce(0, t0)
    if K == 1:
        return
    t1 = apply(t0)
    reduce(1, t1)
    for k in range(2, K):
        t2 = apply(t1)
        t2 *= 2.0
        t2 -= t0
        reduce(k, t2)
        t0, t1 = t1, t2


def _real_if_possible(v: np.ndarray) -> np.ndarray:
    if np.isrealobj(v):
        return np.asarray(v, dtype=float)
    if not np.any(v.imag):
        return np.ascontiguousarray(v.real)
    return v


def _chebyshev_target(h: SearchHamiltonian, v: np.ndarray, times: np.ndarray, tol: float):
    a, b, K = _cheb_setup(h, times, tol)
    w = h.target
    v = _real_if_possible(v)
    if np.isrealobj(v):
        g = h.graph
        mom = np.empty(K)
        diag = (h.gamma * g.degrees - b) / a
        diag[w] -= 1.0 / a
        _cheb_moments_kernel(g.indptr, g.indices, diag, -h.gamma / a, int(w),
                             np.ascontiguousarray(v), K, mom)
    else:
        mom = np.empty(K, dtype=complex)

        def keep(k, x):
            mom[k] = x[w]

        _cheb_recurrence(h, v, a, b, K, keep)
    return np.exp(-1j * b * times) * (_cheb_coefficients(a * times, K) @ mom)


@njit(cache=True, fastmath=True)
def _cheb_moments_kernel(indptr, indices, diag, offd, w, v, K, out):  # pragma: no cover
    # (H - b) / a = diag(diag) + offd * A, applied matrix-free
    n = v.shape[0]
    t0 = v.copy()
    t1 = np.empty(n)
    t2 = np.empty(n)
    out[0] = t0[w]
    if K == 1:
        return
    for i in range(n):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc += t0[indices[p]]
        t1[i] = diag[i] * t0[i] + offd * acc
    out[1] = t1[w]
    for k in range(2, K):
        for i in range(n):
            acc = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                acc += t1[indices[p]]
            t2[i] = 2.0 * (diag[i] * t1[i] + offd * acc) - t0[i]
        out[k] = t2[w]
        t0, t1, t2 = t1, t2, t0


def _chebyshev_states(h: SearchHamiltonian, v: np.ndarray, times: np.ndarray, tol: float):
    a, b, K = _cheb_setup(h, times, tol)
    coef = _cheb_coefficients(a * times, K)
    out = np.zeros((len(times), h.n), dtype=complex)

    def acc(k, x):
        out[:] += coef[:, k, None] * x[None, :]

    _cheb_recurrence(h, _real_if_possible(v), a, b, K, acc)
    return np.exp(-1j * b * times)[:, None] * out
