"""S1 network model, geometric renormalisation and pruning.

Nodes live on a circle of radius ``R = N / (2 pi)`` with angular coordinate
``theta`` and hidden degree ``kappa``. Two nodes connect with probability

    p_ij = 1 / (1 + (R dtheta_ij / (mu kappa_i kappa_j)) ** beta)
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import ComponentMap, Graph, from_edges, giant_component

log = logging.getLogger(__name__)

__all__ = [
    "Embedding",
    "RenormResult",
    "PruneResult",
    "EmbeddingError",
    "connection_probability",
    "gen_s1",
    "renormalize",
    "prune",
    "import_embedding",
    "read_embedding",
    "export_embedding",
    "read_mercator",
    "h2_radial",
    "write_block_map",
    "read_block_map",
]

TWO_PI = 2.0 * math.pi


class EmbeddingError(ValueError):
    pass


@dataclass(frozen=True)
class Embedding:
    theta: np.ndarray
    kappa: np.ndarray
    beta: float
    mu: float

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float)
        ka = np.asarray(self.kappa, dtype=float)
        if th.shape != ka.shape or th.ndim != 1:
            raise EmbeddingError("theta and kappa must be 1-d arrays of equal length")
        if np.any(ka <= 0):
            raise EmbeddingError("kappa must be positive")
        if not self.beta > 1:
            raise EmbeddingError(f"beta must exceed 1 (got {self.beta})")
        if not self.mu > 0:
            raise EmbeddingError(f"mu must be positive (got {self.mu})")
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "kappa", ka)

    @property
    def n(self) -> int:
        return len(self.theta)

    @property
    def radius(self) -> float:
        return self.n / TWO_PI

    def subset(self, nodes) -> "Embedding":
        nodes = np.asarray(nodes)
        return Embedding(self.theta[nodes], self.kappa[nodes], self.beta, self.mu)


@dataclass(frozen=True)
class RenormResult:
    graph: Graph
    embedding: Embedding
    block_map: list
    layer_index: int


@dataclass(frozen=True)
class PruneResult:
    graph: Graph
    embedding: Embedding
    components: ComponentMap
    mu_pruned: float
    expected_avg_k: float


def angular_distance(a, b):
    d = np.abs(np.asarray(a) - np.asarray(b)) % TWO_PI
    return np.minimum(d, TWO_PI - d)


def connection_probability(dist, kappa_i, kappa_j, beta, mu):
    """S1 connection probability for arc-length distance ``dist``."""
    x = np.asarray(dist, dtype=float) / (mu * np.asarray(kappa_i) * np.asarray(kappa_j))
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + x ** beta)


def _pareto_kappa(n, gamma_pl, avg_k, rng):
    """Pareto hidden degrees truncated at the natural cutoff, with mean ``avg_k``."""
    c = n ** (1.0 / (gamma_pl - 1.0))  # kappa_max / kappa_min
    a = gamma_pl - 1.0
    # mean of the truncated law, in units of kappa_min
    ratio = (a / (a - 1.0)) * (1.0 - c ** (1.0 - a)) / (1.0 - c ** (-a))
    k0 = avg_k / ratio
    u = rng.random(n)
    # inverse CDF of the Pareto law restricted to [k0, c k0]
    return k0 * (1.0 - u * (1.0 - c ** (-a))) ** (-1.0 / a)


def _s1_pair_pass(theta, kappa, beta, mu, rng=None):
    """Expected average degree, and sampled edges when ``rng`` is given."""
    n = len(theta)
    R = n / TWO_PI
    total = 0.0
    edges = []
    for i in range(n - 1):
        j = np.arange(i + 1, n)
        p = connection_probability(R * angular_distance(theta[i], theta[j]), kappa[i], kappa[j], beta, mu)
        total += p.sum()
        if rng is not None:
            hit = j[rng.random(len(j)) < p]
            if len(hit):
                edges.append(np.column_stack([np.full(len(hit), i), hit]))
    if rng is None:
        return 2.0 * total / n, None
    e = np.concatenate(edges) if edges else np.empty((0, 2), dtype=np.int64)
    return 2.0 * total / n, e


def gen_s1(n: int, gamma_pl: float, beta: float, avg_k: float, seed=None,
           calibrate_mu: bool = True) -> tuple[Graph, Embedding]:
    """Sample an S1 network with power-law hidden degrees.

    ``mu`` starts from the infinite-size value ``beta sin(pi/beta) / (2 pi avg_k)``.
    With ``calibrate_mu`` it is rescaled so that the expected average degree of
    the sampled coordinates equals ``avg_k``; for ``beta < 2`` the finite circle
    otherwise loses several percent of the links.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if not gamma_pl > 2:
        raise ValueError("gamma_pl must exceed 2")
    if not beta > 1:
        raise ValueError("beta must exceed 1")
    if not avg_k > 0:
        raise ValueError("avg_k must be positive")
    rng = np.random.default_rng(seed)
    kappa = _pareto_kappa(n, gamma_pl, avg_k, rng)
    theta = rng.random(n) * TWO_PI
    mu = beta * math.sin(math.pi / beta) / (TWO_PI * avg_k)
    if calibrate_mu:
        mu = _calibrate_mu(theta, kappa, beta, mu, avg_k)
    _, e = _s1_pair_pass(theta, kappa, beta, mu, rng)
    return from_edges(n, e), Embedding(theta, kappa, beta, mu)


def _calibrate_mu(theta, kappa, beta, mu0, avg_k, rtol=1e-4, max_iter=20):
    """Secant iteration in log(mu) on the expected average degree."""
    x0, f0 = math.log(mu0), _s1_pair_pass(theta, kappa, beta, mu0)[0] - avg_k
    x1 = x0 + 0.1
    f1 = _s1_pair_pass(theta, kappa, beta, math.exp(x1))[0] - avg_k
    for _ in range(max_iter):
        if abs(f1) <= rtol * avg_k or f1 == f0:
            break
        x0, x1 = x1, x1 - f1 * (x1 - x0) / (f1 - f0)
        f0, f1 = f1, _s1_pair_pass(theta, kappa, beta, math.exp(x1))[0] - avg_k
    return math.exp(x1)


def _block_angle(theta, kappa, beta):
    """kappa^beta-weighted circular mean, clamped into the block's angular interval."""
    wgt = kappa ** beta
    phi = math.atan2(np.sum(wgt * np.sin(theta)), np.sum(wgt * np.cos(theta)))
    lo, hi = float(theta.min()), float(theta.max())
    mid = 0.5 * (lo + hi)
    phi += TWO_PI * round((mid - phi) / TWO_PI)
    return min(max(phi, lo), hi)


def renormalize(g: Graph, e: Embedding, r: int = 2, layer: int = 0) -> RenormResult:
    """Merge angular blocks of ``r`` consecutive nodes into supernodes."""
    if e.n != g.n:
        raise EmbeddingError(f"embedding has {e.n} nodes, graph has {g.n}")
    if r < 2:
        raise ValueError("r must be >= 2")
    order = np.lexsort((np.arange(g.n), e.theta))
    n_new = -(-g.n // r)
    block_of = np.empty(g.n, dtype=np.int64)
    block_of[order] = np.arange(g.n) // r
    blocks = [order[b * r:(b + 1) * r] for b in range(n_new)]
    kappa = np.empty(n_new)
    theta = np.empty(n_new)
    for b, members in enumerate(blocks):
        kappa[b] = np.sum(e.kappa[members] ** e.beta) ** (1.0 / e.beta)
        theta[b] = _block_angle(e.theta[members], e.kappa[members], e.beta)
    ed = block_of[g.edges]
    ed = ed[ed[:, 0] != ed[:, 1]]
    new_g = from_edges(n_new, ed)
    new_e = Embedding(theta % TWO_PI, kappa, e.beta, e.mu / r)
    return RenormResult(new_g, new_e, [np.sort(b) for b in blocks], layer + 1)


def _edge_probabilities(g: Graph, e: Embedding, mu: float) -> np.ndarray:
    i, j = g.edges[:, 0], g.edges[:, 1]
    d = e.radius * angular_distance(e.theta[i], e.theta[j])
    return connection_probability(d, e.kappa[i], e.kappa[j], e.beta, mu)


def prune(g: Graph, e: Embedding, target_avg_k: float, seed=None, giant_only: bool = True,
          tol: float = 1e-6) -> PruneResult:
    """Remove edges stochastically so that the expected average degree hits the target.

    Each edge survives with probability ``p(mu') / p(mu)`` where ``mu' <= mu``
    is found by bisection.
    """
    if e.n != g.n:
        raise EmbeddingError(f"embedding has {e.n} nodes, graph has {g.n}")
    current = g.avg_degree
    if not target_avg_k > 0:
        raise ValueError("target average degree must be positive")
    if target_avg_k > current + tol:
        raise ValueError(f"cannot prune up: current <k> = {current:.4f} < target {target_avg_k}")
    p_now = _edge_probabilities(g, e, e.mu)

    def expected_k(mu_p):
        q = np.minimum(1.0, _edge_probabilities(g, e, mu_p) / p_now)
        return 2.0 * q.sum() / g.n, q

    if abs(target_avg_k - current) <= tol:
        mu_p, q = e.mu, np.ones(g.m)
        k_exp = current
    else:
        lo, hi = math.log(e.mu) - 60.0, math.log(e.mu)
        k_lo, _ = expected_k(math.exp(lo))
        if k_lo > target_avg_k:
            raise ValueError("pruning bisection failed to bracket the target")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            k_exp, q = expected_k(math.exp(mid))
            if abs(k_exp - target_avg_k) <= tol:
                break
            if k_exp > target_avg_k:
                hi = mid
            else:
                lo = mid
        mu_p = math.exp(mid)
    rng = np.random.default_rng(seed)
    keep = rng.random(g.m) < q
    pruned = from_edges(g.n, g.edges[keep])
    log.debug("pruned %d -> %d edges (mu' / mu = %.4f)", g.m, pruned.m, mu_p / e.mu)
    # the surviving links follow the model at mu'
    e_p = Embedding(e.theta, e.kappa, e.beta, mu_p)
    if not giant_only:
        return PruneResult(pruned, e_p, ComponentMap(np.arange(g.n), 0), mu_p, k_exp)
    gc, cmap = giant_component(pruned)
    return PruneResult(gc, e_p.subset(cmap.kept_nodes), cmap, mu_p, k_exp)


def h2_radial(e: Embedding) -> np.ndarray:
    """Hyperbolic-disc radii of the nodes (outermost for the smallest kappa)."""
    kmin = float(e.kappa.min())
    r_disc = 2.0 * math.log(2.0 * e.radius / (e.mu * kmin ** 2))
    return r_disc - 2.0 * np.log(e.kappa / kmin)


# ---------------------------------------------------------------- files


def export_embedding(e: Embedding, path, labels=None) -> None:
    lab = np.arange(e.n) if labels is None else np.asarray(labels)
    with open(path, "w") as fh:
        fh.write(f"#beta={float(e.beta):.17g},mu={float(e.mu):.17g}\n")
        fh.write("id,theta,kappa\n")
        for i in range(e.n):
            fh.write(f"{int(lab[i])},{e.theta[i]:.17g},{e.kappa[i]:.17g}\n")


def _align(rows: dict, labels, n_expected, beta, mu) -> Embedding:
    if labels is None:
        labels = np.arange(n_expected if n_expected is not None else len(rows))
    theta = np.empty(len(labels))
    kappa = np.empty(len(labels))
    for new, old in enumerate(labels):
        key = str(old)
        if key not in rows:
            raise EmbeddingError(f"embedding has no entry for node {old}")
        th, ka = rows[key]
        if not ka > 0:
            raise EmbeddingError(f"node {old}: kappa must be positive (got {ka})")
        if not (0.0 <= th < TWO_PI):
            warnings.warn(f"node {old}: theta {th} normalised into [0, 2pi)", stacklevel=3)
            th = th % TWO_PI
        theta[new], kappa[new] = th, ka
    return Embedding(theta, kappa, beta, mu)


def _read_rows(path):
    """``({file_id: (theta, kappa)}, beta, mu)`` from either supported format."""
    path = Path(path)
    text = path.read_text().splitlines()
    if not text:
        raise EmbeddingError(f"{path}: empty file")
    if not text[0].startswith("#beta="):
        return _read_mercator_rows(path, text)
    params = dict(kv.split("=", 1) for kv in text[0][1:].split(",") if "=" in kv)
    try:
        beta, mu = float(params["beta"]), float(params["mu"])
    except (KeyError, ValueError):
        raise EmbeddingError(f"{path}: bad parameter line {text[0]!r}") from None
    if len(text) < 2 or text[1].strip() != "id,theta,kappa":
        raise EmbeddingError(f"{path}: expected header 'id,theta,kappa', got {text[1:2]!r}")
    rows = {}
    for lineno, line in enumerate(text[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise EmbeddingError(f"{path}:{lineno}: expected 3 fields")
        try:
            rows[parts[0].strip()] = (float(parts[1]), float(parts[2]))
        except ValueError:
            raise EmbeddingError(f"{path}:{lineno}: non-numeric coordinate") from None
    return rows, beta, mu


def _read_mercator_rows(path, text):
    beta = mu = None
    rows = {}
    for line in text:
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            body = s.lstrip("#").strip().lstrip("-").strip()
            if ":" in body:
                key, val = (x.strip() for x in body.split(":", 1))
                try:
                    if key == "beta":
                        beta = float(val.split()[0])
                    elif key == "mu":
                        mu = float(val.split()[0])
                except (ValueError, IndexError):
                    pass
            continue
        parts = s.split()
        if len(parts) < 3:
            raise EmbeddingError(f"{path}: malformed coordinate line {s!r}")
        rows[parts[0]] = (float(parts[2]), float(parts[1]))
    if beta is None or mu is None:
        raise EmbeddingError(f"{path}: beta/mu not found; expected '#beta=..,mu=..' or Mercator header")
    return rows, beta, mu


def import_embedding(path, labels=None) -> Embedding:
    """Read an ``id,theta,kappa`` CSV whose first line is ``#beta=...,mu=...``.

    ``labels[new_id]`` gives the file id for each graph node; without it the
    file ids must be ``0..N-1``. Mercator ``.inf_coord`` files (vertex, kappa,
    theta, ...) are also accepted.
    """
    rows, beta, mu = _read_rows(path)
    return _align(rows, labels, None, beta, mu)


def read_embedding(path) -> tuple[np.ndarray, Embedding]:
    """All nodes of a coordinate file, as ``(file ids, Embedding)``.

    Ids must be integers; they come back sorted.
    """
    rows, beta, mu = _read_rows(path)
    try:
        ids = np.array(sorted(int(k) for k in rows))
    except ValueError:
        raise EmbeddingError(f"{path}: node ids must be integers") from None
    return ids, _align(rows, ids, None, beta, mu)


def read_mercator(path, labels=None) -> Embedding:
    """Read Mercator's ``.inf_coord`` output (vertex, kappa, theta, ...)."""
    rows, beta, mu = _read_mercator_rows(Path(path), Path(path).read_text().splitlines())
    return _align(rows, labels, None, beta, mu)


def write_block_map(blocks, path, layer: int | None = None, r: int | None = None) -> None:
    doc = {"layer": layer, "r": r,
           "blocks": {str(i): [int(x) for x in b] for i, b in enumerate(blocks)}}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_block_map(path) -> list:
    doc = json.loads(Path(path).read_text())
    blocks = doc["blocks"]
    return [np.asarray(blocks[str(i)], dtype=np.int64) for i in range(len(blocks))]
