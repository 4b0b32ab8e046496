"""Per-target optimisation of the success probability over (gamma, t)."""
from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .dynamics import SearchHamiltonian, target_amplitudes, uniform_state
from .graph import Graph
from .spectral import SpectralSummary, approx_optimum

log = logging.getLogger(__name__)

__all__ = [
    "SearchOptions",
    "SearchRecord",
    "CampaignResult",
    "objective",
    "optimize_node",
    "search_all",
    "sample_targets",
]

_LOG_GAMMA_RANGE = (math.log(1e-9), math.log(1e4))
_GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class SearchOptions:
    tol_f: float = 1e-6
    tol_x: float = 1e-4
    max_iter: int = 400
    t_horizon_factor: float = 20.0
    evolve_tol: float = 1e-9
    backend: str = "chebyshev"
    refine_points: int = 64
    target_sample: int | None = None
    sample_seed: int | None = None

    def __post_init__(self):
        if min(self.tol_f, self.tol_x, self.evolve_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.t_horizon_factor < 1:
            raise ValueError("t_horizon_factor must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class SearchRecord:
    node: int
    degree: int
    gamma_opt: float
    t_opt: float
    p_succ: float
    t_search: float
    start_used: str
    evaluations: int
    converged: bool

    @classmethod
    def columns(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def as_dict(self) -> dict:
        return asdict(self)


def objective(g: Graph, w: int, gamma: float, t: float, evolve_tol: float = 1e-9,
              backend: str = "chebyshev") -> float:
    """``p_w(t)`` for the walker started in the uniform superposition."""
    if gamma < 0 or t < 0:
        raise ValueError("gamma and t must be non-negative")
    h = SearchHamiltonian(g, gamma, w)
    amp = target_amplitudes(h, uniform_state(g.n), [t], tol=evolve_tol, backend=backend)[0]
    return float(abs(amp) ** 2)


def _probabilities(g, w, gamma, times, opts: SearchOptions) -> np.ndarray:
    h = SearchHamiltonian(g, gamma, w)
    amp = target_amplitudes(h, uniform_state(g.n), times, tol=opts.evolve_tol,
                            backend=opts.backend)
    return np.abs(amp) ** 2


class _Counter:
    """Objective in NM coordinates ``(ln gamma, t / sqrt(N))`` with call counting."""

    def __init__(self, g, w, opts, horizon):
        self.g, self.w, self.opts, self.horizon = g, w, opts, horizon
        self.tscale = math.sqrt(g.n)
        self.calls = 0

    def p(self, gamma, t):
        self.calls += 1
        return objective(self.g, self.w, gamma, t, self.opts.evolve_tol, self.opts.backend)

    def __call__(self, x):
        lg, t = float(x[0]), abs(float(x[1])) * self.tscale
        if not (_LOG_GAMMA_RANGE[0] <= lg <= _LOG_GAMMA_RANGE[1]) or t > self.horizon:
            return 0.0
        return -self.p(math.exp(lg), t)


def _golden_max(f, a, b, tol, max_iter=80):
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def optimize_node(g: Graph, w: int, opts: SearchOptions | None = None,
                  summary: SpectralSummary | None = None) -> SearchRecord:
    """Maximise ``p_w(t)`` jointly over ``gamma`` and ``t`` for target ``w``.

    Nelder-Mead runs from the spectral estimate and from ``(1/k, 0)``; the
    better end point is polished by a scan over ``t`` at fixed gamma.
    """
    opts = opts or SearchOptions()
    n = g.n
    if not (0 <= w < n):
        raise IndexError(f"node {w} outside [0, {n})")
    k = int(g.degrees[w])
    if k == 0:
        raise ValueError(f"node {w} is isolated")
    summary = summary or approx_optimum(g, w)
    sqn = math.sqrt(n)
    horizon = opts.t_horizon_factor * sqn * max(1.0, 1.0 / max(summary.p_approx, 1e-12))
    f = _Counter(g, w, opts, horizon)

    starts = {
        "approx": (math.log(summary.gamma_approx), min(summary.t_approx, horizon) / sqn),
        "inverse-degree": (math.log(1.0 / k), 0.0),
    }
    best = None
    converged_all = True
    for name, x0 in starts.items():
        x0 = np.array(x0)
        simplex = np.array([x0, x0 + [math.log(2.0), 0.0], x0 + [0.0, 0.25]])
        res = minimize(f, x0, method="Nelder-Mead",
                       options=dict(initial_simplex=simplex, xatol=opts.tol_x,
                                    fatol=opts.tol_f, maxiter=opts.max_iter))
        p = -float(res.fun)
        cand = (p, math.exp(res.x[0]), abs(float(res.x[1])) * sqn, name)
        converged_all &= bool(res.success)
        # strict improvement needed to displace the first start; ties keep the smaller t
        if best is None or p > best[0] + opts.tol_f or (abs(p - best[0]) <= opts.tol_f and cand[2] < best[2]):
            best = cand
    p_best, gamma_opt, t_opt, start_used = best

    # refinement scan in t at fixed gamma
    if t_opt > 0:
        lo, hi = 0.8 * t_opt, min(1.25 * t_opt, horizon)
    else:
        lo, hi = 0.0, min(sqn, horizon)
    grid = np.linspace(lo, hi, opts.refine_points)
    pg = _probabilities(g, w, gamma_opt, grid, opts)
    f.calls += 1
    i = int(np.flatnonzero(pg >= pg.max() - opts.tol_f)[0])
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    t_ref, p_ref = _golden_max(lambda t: f.p(gamma_opt, t), a, b, tol=1e-7 * max(1.0, b))
    if p_ref < pg[i]:
        t_ref, p_ref = grid[i], float(pg[i])
    if p_ref > p_best or (p_ref >= p_best - opts.tol_f and t_ref < t_opt):
        t_opt, p_best = float(t_ref), float(p_ref)
    if p_best < 1.0 / n:
        # t = 0 always gives 1/N
        t_opt, p_best = 0.0, 1.0 / n

    return SearchRecord(
        node=int(w),
        degree=k,
        gamma_opt=float(gamma_opt),
        t_opt=float(t_opt),
        p_succ=float(p_best),
        t_search=float(t_opt / p_best),
        start_used=start_used,
        evaluations=f.calls,
        converged=converged_all,
    )


def sample_targets(n: int, count: int | None, seed) -> np.ndarray:
    """All nodes, or a reproducible uniform subsample without replacement."""
    if count is None or count >= n:
        return np.arange(n)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=count, replace=False))


@dataclass
class CampaignResult:
    records: list[SearchRecord]
    failures: dict[int, str] = field(default_factory=dict)
    wall_time: float = 0.0

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]


_WORKER_GRAPH: Graph | None = None


def _init_worker(g):
    global _WORKER_GRAPH
    _WORKER_GRAPH = g


def _run_one(args):
    w, opts = args
    try:
        return w, optimize_node(_WORKER_GRAPH, w, opts), None
    except Exception as exc:  # recorded per node, the campaign continues
        return w, None, f"{type(exc).__name__}: {exc}"


def search_all(g: Graph, targets: Sequence[int] | None = None, opts: SearchOptions | None = None,
               threads: int | None = 1,
               progress: Callable[[int, int], None] | None = None) -> CampaignResult:
    """Optimise every target; records come back sorted by node id."""
    opts = opts or SearchOptions()
    if targets is None:
        targets = sample_targets(g.n, opts.target_sample, opts.sample_seed)
    else:
        targets = np.asarray(targets, dtype=np.int64)
        if len(targets) and (targets.min() < 0 or targets.max() >= g.n):
            raise IndexError("target outside graph")
        if opts.target_sample is not None and opts.target_sample < len(targets):
            rng = np.random.default_rng(opts.sample_seed)
            targets = np.sort(rng.choice(targets, size=opts.target_sample, replace=False))
    threads = threads or os.cpu_count() or 1
    jobs = [(int(w), opts) for w in targets]
    t0 = time.perf_counter()
    records, failures = [], {}

    def collect(it):
        for done, (w, rec, err) in enumerate(it, start=1):
            if err is None:
                records.append(rec)
            else:
                failures[w] = err
                log.warning("node %d failed: %s", w, err)
            if progress:
                progress(done, len(jobs))
            elif done % 50 == 0 or done == len(jobs):
                log.info("search: %d/%d targets done (%d failed)", done, len(jobs), len(failures))

    if threads == 1 or len(jobs) <= 1:
        _init_worker(g)
        collect(map(_run_one, jobs))
    else:
        with ProcessPoolExecutor(max_workers=threads, initializer=_init_worker, initargs=(g,)) as ex:
            collect(ex.map(_run_one, jobs, chunksize=max(1, len(jobs) // (8 * threads))))
    records.sort(key=lambda r: r.node)
    return CampaignResult(records, failures, time.perf_counter() - t0)
