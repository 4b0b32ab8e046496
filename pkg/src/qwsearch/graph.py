"""Undirected simple graphs, edge-list I/O, generators and the graph Laplacian.

Graphs are immutable and store adjacency in compressed sparse row form so
that they can be shared freely between worker processes.
"""
from __future__ import annotations

import logging
import warnings
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

__all__ = [
    "Graph",
    "ComponentMap",
    "EdgeListError",
    "GenerationError",
    "from_edges",
    "from_edge_list",
    "read_edge_list",
    "write_edge_list",
    "laplacian_apply",
    "giant_component",
    "gen_complete",
    "gen_star",
    "gen_er",
    "gen_ba",
]


class EdgeListError(ValueError):
    """Malformed edge-list input."""


class GenerationError(RuntimeError):
    """A random generator ran out of retries; ``best`` holds the closest attempt."""

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph on nodes ``0..n-1`` in CSR form."""

    n: int
    indptr: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)

    @property
    def degrees(self) -> np.ndarray:
        return self._degrees

    @cached_property
    def _degrees(self):
        d = np.diff(self.indptr)
        d.setflags(write=False)
        return d

    @property
    def m(self) -> int:
        return int(self.indptr[-1]) // 2

    @property
    def avg_degree(self) -> float:
        return 2.0 * self.m / self.n

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    @cached_property
    def edges(self) -> np.ndarray:
        """(m, 2) array of edges with ``i < j``, sorted lexicographically."""
        rows = np.repeat(np.arange(self.n), self.degrees)
        mask = rows < self.indices
        e = np.column_stack([rows[mask], self.indices[mask]])
        e.setflags(write=False)
        return e

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(len(self.indices))
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        return (sp.diags(self.degrees.astype(float)) - self.adjacency).tocsr()

    def dense_laplacian(self) -> np.ndarray:
        return self.laplacian.toarray()

    @cached_property
    def laplacian_eigh(self):
        """Full eigendecomposition ``(mu, V)`` of L, ascending. Only for modest n."""
        mu, v = np.linalg.eigh(self.dense_laplacian())
        mu.setflags(write=False)
        v.setflags(write=False)
        return mu, v

    @cached_property
    def laplacian_bound(self) -> float:
        """Upper bound on the largest Laplacian eigenvalue."""
        kmax = float(self.degrees.max(initial=0))
        if self.m == 0:
            return 0.0
        # Anderson-Morley: lambda_max <= max over edges of k_i + k_j
        e = self.edges
        d = self.degrees
        return float(min(2 * kmax, (d[e[:, 0]] + d[e[:, 1]]).max()))

    def component_labels(self) -> np.ndarray:
        labels = np.full(self.n, -1, dtype=np.int64)
        c = 0
        for start in range(self.n):
            if labels[start] >= 0:
                continue
            labels[start] = c
            queue = deque([start])
            while queue:
                u = queue.popleft()
                for v in self.neighbors(u):
                    if labels[v] < 0:
                        labels[v] = c
                        queue.append(v)
            c += 1
        return labels

    def is_connected(self) -> bool:
        if self.n == 0:
            return False
        return bool((self.component_labels() == 0).all())

    def check(self) -> None:
        """Raise AssertionError if any structural invariant is violated."""
        assert len(self.indptr) == self.n + 1
        assert self.degrees.sum() == 2 * self.m
        a = self.adjacency
        assert (a != a.T).nnz == 0, "adjacency not symmetric"
        assert a.diagonal().sum() == 0, "self-loop present"
        for i in range(self.n):
            nb = self.neighbors(i)
            assert len(np.unique(nb)) == len(nb), f"duplicate edge at node {i}"


def from_edges(n: int, edges) -> Graph:
    """Build a graph on ``n`` nodes from an iterable/array of pairs.

    Duplicates and orientation are ignored; self-loops raise.
    """
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(e) and (e.min() < 0 or e.max() >= n):
        raise ValueError("edge endpoint out of range")
    if np.any(e[:, 0] == e[:, 1]):
        raise ValueError("self-loops are not allowed")
    lo = np.minimum(e[:, 0], e[:, 1])
    hi = np.maximum(e[:, 0], e[:, 1])
    e = np.unique(np.column_stack([lo, hi]), axis=0) if len(e) else e
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    return Graph(n, indptr, cols.astype(np.int64))


def from_edge_list(lines: Iterable[str]) -> tuple[Graph, np.ndarray]:
    """Parse whitespace-separated id pairs.

    Returns the graph and ``labels`` where ``labels[new_id]`` is the id used
    in the input. Ids are remapped in ascending order, so the relabelling is
    monotone. Self-loops are skipped with a warning.
    """
    pairs = []
    rejected = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 2:
            raise EdgeListError(f"line {lineno}: expected two node ids, got {raw.strip()!r}")
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise EdgeListError(f"line {lineno}: non-integer node id in {raw.strip()!r}") from None
        if a < 0 or b < 0:
            raise EdgeListError(f"line {lineno}: negative node id")
        if a == b:
            rejected.append((lineno, a))
            continue
        pairs.append((a, b))
    if rejected:
        warnings.warn(
            "rejected self-loop(s) at line(s) " + ", ".join(str(ln) for ln, _ in rejected),
            stacklevel=2,
        )
    if not pairs:
        raise EdgeListError("no edges found")
    arr = np.array(pairs, dtype=np.int64)
    labels, inv = np.unique(arr, return_inverse=True)
    g = from_edges(len(labels), inv.reshape(-1, 2))
    return g, labels


def read_edge_list(path) -> tuple[Graph, np.ndarray]:
    with open(path) as fh:
        return from_edge_list(fh)


def write_edge_list(g: Graph, path, labels: Sequence[int] | None = None, comment: str | None = None):
    with open(path, "w") as fh:
        if comment:
            for c in comment.splitlines():
                fh.write(f"# {c}\n")
        fh.write(f"# N={g.n} m={g.m}\n")
        lab = np.arange(g.n) if labels is None else np.asarray(labels)
        for i, j in g.edges:
            fh.write(f"{lab[i]} {lab[j]}\n")


def laplacian_apply(g: Graph, x: np.ndarray) -> np.ndarray:
    """Return ``(D - A) x`` without forming a dense matrix."""
    x = np.asarray(x)
    if x.shape[0] != g.n:
        raise ValueError(f"vector length {x.shape[0]} != node count {g.n}")
    return g.degrees * x - g.adjacency @ x


@dataclass(frozen=True)
class ComponentMap:
    """``kept_nodes[new_id]`` is the node's id in the source graph."""

    kept_nodes: np.ndarray
    dropped_count: int

    def old_to_new(self, n_old: int) -> np.ndarray:
        m = np.full(n_old, -1, dtype=np.int64)
        m[self.kept_nodes] = np.arange(len(self.kept_nodes))
        return m


def induced_subgraph(g: Graph, nodes: np.ndarray) -> Graph:
    nodes = np.sort(np.asarray(nodes, dtype=np.int64))
    remap = np.full(g.n, -1, dtype=np.int64)
    remap[nodes] = np.arange(len(nodes))
    e = g.edges
    keep = (remap[e[:, 0]] >= 0) & (remap[e[:, 1]] >= 0)
    return from_edges(len(nodes), remap[e[keep]])


def giant_component(g: Graph) -> tuple[Graph, ComponentMap]:
    """Largest connected component; ties go to the component holding the smallest id."""
    if g.n == 0:
        raise ValueError("empty graph")
    labels = g.component_labels()
    sizes = np.bincount(labels)
    # labels are assigned in order of smallest member, so argmax picks the tie-winner
    best = int(np.argmax(sizes))
    nodes = np.flatnonzero(labels == best)
    if len(nodes) == g.n:
        return g, ComponentMap(np.arange(g.n), 0)
    return induced_subgraph(g, nodes), ComponentMap(nodes, g.n - len(nodes))


def gen_complete(n: int) -> Graph:
    if n < 2:
        raise ValueError("complete graph needs n >= 2")
    i, j = np.triu_indices(n, k=1)
    return from_edges(n, np.column_stack([i, j]))


def gen_star(n: int) -> Graph:
    """Star with center 0 and leaves 1..n-1."""
    if n < 2:
        raise ValueError("star graph needs n >= 2")
    leaves = np.arange(1, n)
    return from_edges(n, np.column_stack([np.zeros(n - 1, dtype=np.int64), leaves]))


def _sample_gnm(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    total = n * (n - 1) // 2
    if m > total:
        raise ValueError(f"cannot place {m} edges on {n} nodes")
    if m > total // 4:
        i, j = np.triu_indices(n, k=1)
        pick = rng.choice(total, size=m, replace=False)
        return np.column_stack([i[pick], j[pick]])
    seen: set[int] = set()
    out = []
    while len(out) < m:
        need = m - len(out)
        a = rng.integers(0, n, size=2 * need + 8)
        b = rng.integers(0, n, size=2 * need + 8)
        for x, y in zip(a.tolist(), b.tolist()):
            if x == y:
                continue
            if x > y:
                x, y = y, x
            key = x * n + y
            if key in seen:
                continue
            seen.add(key)
            out.append((x, y))
            if len(out) == m:
                break
    return np.array(out, dtype=np.int64)


def gen_er(target_n: int, target_m: int, seed=None, max_retries: int = 50,
           n_tol: float = 0.02, m_tol: float = 0.05) -> Graph:
    """Erdos-Renyi G(n0, m0) graph whose giant component matches the targets.

    The generated graph is oversampled (``n0 > target_n``) to make up for the
    nodes lost when the giant component is extracted. The node and edge
    oversampling factors are nudged by 2% after every rejected draw.
    """
    max_edges = target_n * (target_n - 1) // 2
    if target_n < 2 or target_m < target_n - 1 or target_m > max_edges:
        raise ValueError("target_m must lie in [target_n - 1, target_n (target_n - 1) / 2]")
    rng = np.random.default_rng(seed)
    fn, fm = 1.08, 1.0
    best, best_err = None, np.inf
    for attempt in range(max_retries):
        n0 = max(target_n, int(round(fn * target_n)))
        m0 = min(int(round(fm * target_m)), n0 * (n0 - 1) // 2)
        g0 = from_edges(n0, _sample_gnm(n0, m0, rng))
        g, _ = giant_component(g0)
        dn = (g.n - target_n) / target_n
        dm = (g.m - target_m) / target_m
        err = max(abs(dn) / n_tol, abs(dm) / m_tol)
        if err < best_err:
            best, best_err = g, err
        if abs(dn) <= n_tol and abs(dm) <= m_tol:
            log.debug("gen_er accepted after %d attempt(s): N=%d m=%d", attempt + 1, g.n, g.m)
            return g
        if abs(dn) > n_tol:
            fn += -0.02 if dn > 0 else 0.02
        if abs(dm) > m_tol:
            fm += -0.02 if dm > 0 else 0.02
        fn = max(fn, 1.0)
    raise GenerationError(f"no ER graph within tolerance after {max_retries} attempts", best=best)


def gen_ba(n: int, m_attach: int, seed=None) -> Graph:
    """Barabasi-Albert graph grown from a clique of ``m_attach + 1`` nodes."""
    if not (1 <= m_attach < n):
        raise ValueError("need 1 <= m_attach < n")
    rng = np.random.default_rng(seed)
    m0 = m_attach + 1
    edges = [(i, j) for i in range(m0) for j in range(i + 1, m0)]
    # every node appears once per incident edge end
    ends = [v for e in edges for v in e]
    for new in range(m0, n):
        targets: set[int] = set()
        while len(targets) < m_attach:
            targets.add(ends[int(rng.integers(len(ends)))])
        for t in sorted(targets):
            edges.append((t, new))
            ends.extend((t, new))
    return from_edges(n, edges)
