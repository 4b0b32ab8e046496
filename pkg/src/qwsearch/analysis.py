"""Aggregation and regressions over search records.

All fits use natural logarithms. Standard deviations are population values.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .search import SearchRecord

__all__ = [
    "LayerStats",
    "FitResult",
    "DegreeFit",
    "layer_stats",
    "degree_class_average",
    "fit_hub_linear",
    "fit_scaling",
    "percentile_filter",
    "hub_time_slope",
    "hub_selection",
    "powerlaw_tail_exponent",
    "spearman",
]


@dataclass(frozen=True)
class LayerStats:
    n_nodes: int
    mean_p: float
    std_p: float
    mean_t: float
    std_t: float
    mean_tw: float
    std_tw: float
    sample_size: int
    stderr_tw: float = 0.0

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class FitResult:
    intercept: float
    exponent: float
    stderr_x: float
    r_squared: float
    n_points: int = 0
    log_base: str = "e"

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class DegreeFit:
    slope: float
    intercept: float
    degree_threshold: float
    n_points: int = 0

    def as_dict(self):
        return asdict(self)


def layer_stats(records: Sequence[SearchRecord], n_nodes: int | None = None) -> LayerStats:
    if not records:
        raise ValueError("no records")
    p = np.array([r.p_succ for r in records])
    t = np.array([r.t_opt for r in records])
    tw = np.array([r.t_search for r in records])
    n = len(records)
    return LayerStats(
        n_nodes=n if n_nodes is None else int(n_nodes),
        mean_p=float(p.mean()), std_p=float(p.std()),
        mean_t=float(t.mean()), std_t=float(t.std()),
        mean_tw=float(tw.mean()), std_tw=float(tw.std()),
        sample_size=n,
        stderr_tw=float(tw.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
    )


def degree_class_average(records: Iterable[SearchRecord]) -> dict[int, tuple[float, float, int]]:
    """``degree -> (mean p_succ, std p_succ, count)``, sorted by degree."""
    groups = defaultdict(list)
    for r in records:
        groups[int(r.degree)].append(r.p_succ)
    return {k: (float(np.mean(v)), float(np.std(v)), len(v)) for k, v in sorted(groups.items())}


def _ols(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx == 0:
        raise ValueError("regressor has no spread")
    slope = np.sum((x - xm) * (y - ym)) / sxx
    icpt = ym - slope * xm
    resid = y - (icpt + slope * x)
    ssr = float(np.sum(resid ** 2))
    sst = float(np.sum((y - ym) ** 2))
    stderr = math.sqrt(ssr / (n - 2) / sxx) if n > 2 else 0.0
    r2 = 1.0 - ssr / sst if sst > 0 else 1.0
    return float(icpt), float(slope), stderr, r2


def hub_selection(records: Sequence[SearchRecord], top_fraction: float) -> tuple[list, float]:
    """Records whose degree reaches the ``1 - top_fraction`` degree quantile."""
    if not (0 < top_fraction <= 0.5):
        raise ValueError("top_fraction must lie in (0, 0.5]")
    k = np.array([r.degree for r in records], dtype=float)
    thr = float(np.quantile(k, 1.0 - top_fraction))
    return [r for r in records if r.degree >= thr], thr


def fit_hub_linear(records: Sequence[SearchRecord], top_fraction: float = 0.02) -> DegreeFit:
    """Least squares ``p_succ = a k + b`` over the highest-degree records."""
    hubs, thr = hub_selection(records, top_fraction)
    if len(hubs) < 3 or len({r.degree for r in hubs}) < 2:
        raise ValueError(f"too few hub points above degree {thr:g} ({len(hubs)})")
    b, a, _, _ = _ols([r.degree for r in hubs], [r.p_succ for r in hubs])
    return DegreeFit(slope=a, intercept=b, degree_threshold=thr, n_points=len(hubs))


def fit_scaling(points: Sequence[tuple[float, float]]) -> FitResult:
    """Fit ``log T = c + x log N`` over ``(N, mean T)`` pairs."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < 3:
        raise ValueError("scaling fit needs at least 3 layers")
    if np.any(pts <= 0):
        raise ValueError("sizes and times must be positive")
    c, x, se, r2 = _ols(np.log(pts[:, 0]), np.log(pts[:, 1]))
    return FitResult(intercept=c, exponent=x, stderr_x=se, r_squared=r2, n_points=len(pts))


def percentile_filter(records: Sequence[SearchRecord], q: float) -> list[SearchRecord]:
    """Keep the first ``floor(q * count)`` records in ascending (degree, node) order."""
    if not (0 < q <= 1):
        raise ValueError("q must lie in (0, 1]")
    ordered = sorted(records, key=lambda r: (r.degree, r.node))
    keep = ordered[: int(math.floor(q * len(ordered) + 1e-9))]
    if not keep:
        raise ValueError("percentile filter left no records")
    return keep


def hub_time_slope(records: Sequence[SearchRecord], top_fraction: float = 0.02) -> FitResult:
    """Log-log slope of ``t_search`` against degree over the hub records."""
    hubs, thr = hub_selection(records, top_fraction)
    if len(hubs) < 3 or len({r.degree for r in hubs}) < 2:
        raise ValueError(f"too few hub points above degree {thr:g} ({len(hubs)})")
    c, x, se, r2 = _ols(np.log([r.degree for r in hubs]), np.log([r.t_search for r in hubs]))
    return FitResult(intercept=c, exponent=x, stderr_x=se, r_squared=r2, n_points=len(hubs))


def spearman(x, y) -> float:
    from scipy.stats import spearmanr

    return float(spearmanr(x, y).statistic)


def powerlaw_tail_exponent(degrees, k_min: int | None = None, min_tail: int = 50) -> tuple[float, int]:
    """Maximum-likelihood tail exponent of a degree sequence.

    Uses the continuous approximation for discrete data,
    ``1 + n / sum(log(k / (k_min - 1/2)))``. Without ``k_min`` the cutoff is
    the one minimising the Kolmogorov-Smirnov distance among cutoffs leaving
    at least ``min_tail`` samples. Returns ``(exponent, k_min)``.
    """
    k = np.sort(np.asarray(degrees, dtype=float))
    k = k[k > 0]

    def mle(kmin):
        tail = k[k >= kmin]
        return 1.0 + len(tail) / np.sum(np.log(tail / (kmin - 0.5))), tail

    if k_min is not None:
        return float(mle(k_min)[0]), int(k_min)
    best = None
    for kmin in np.unique(k):
        if kmin < 1 or np.sum(k >= kmin) < min_tail:
            continue
        alpha, tail = mle(kmin)
        emp = np.arange(1, len(tail) + 1) / len(tail)
        model = 1.0 - ((tail + 0.5) / (kmin - 0.5)) ** (1.0 - alpha)
        ks = float(np.max(np.abs(emp - model)))
        if best is None or ks < best[0]:
            best = (ks, alpha, kmin)
    if best is None:
        raise ValueError("too few samples for a tail fit")
    return float(best[1]), int(best[2])
