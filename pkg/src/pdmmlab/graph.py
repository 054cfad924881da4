"""Communication graphs and the directed-slot numbering of edge variables.

Every undirected edge ``l = (i, j)`` with ``i < j`` owns two auxiliary
variables: ``z_{i|j}`` at slot ``l`` and ``z_{j|i}`` at slot ``l + m``.
All matrices and vectors in the package follow this ordering.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class GraphError(ValueError):
    """Raised for malformed graphs, graph files, or failed generation."""


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes ``0..n-1``.

    Edges are stored once as ``(i, j)`` with ``i < j``; the edge index is its
    position in ``edges``.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    neighbors: tuple[tuple[int, ...], ...] = field(init=False, repr=False)
    _slots: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise GraphError("a graph needs at least one node")
        edges = tuple((int(i), int(j)) for i, j in self.edges)
        seen = set()
        nbrs = [set() for _ in range(self.n)]
        for i, j in edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge ({i}, {j}) references a node outside 0..{self.n - 1}")
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if i > j:
                raise GraphError(f"edge ({i}, {j}) must be stored with i < j")
            if (i, j) in seen:
                raise GraphError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
            nbrs[i].add(j)
            nbrs[j].add(i)
        m = len(edges)
        slots = {}
        for l, (i, j) in enumerate(edges):
            slots[(i, j)] = l
            slots[(j, i)] = l + m
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "neighbors", tuple(tuple(sorted(s)) for s in nbrs))
        object.__setattr__(self, "_slots", slots)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def degrees(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.neighbors], dtype=int)

    def slot(self, holder: int, peer: int) -> int:
        return directed_slot(self, holder, peer)

    def slot_pairs(self) -> list[tuple[int, int]]:
        """``(holder, peer)`` for every slot ``0..2m-1`` in order."""
        return [(i, j) for i, j in self.edges] + [(j, i) for i, j in self.edges]


def directed_slot(g: Graph, holder: int, peer: int) -> int:
    """Row index of ``z_{holder|peer}`` in the auxiliary vector."""
    try:
        return g._slots[(holder, peer)]
    except KeyError:
        raise GraphError(f"({holder}, {peer}) is not an edge") from None


def is_connected(g: Graph) -> bool:
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in g.neighbors[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == g.n


def rgg_radius(n: int) -> float:
    """Connectivity radius ``sqrt(2 ln n / n)`` for ``n`` nodes in the unit square."""
    if n < 2:
        return 1.0
    return math.sqrt(2.0 * math.log(n) / n)


def generate_rgg(n: int, radius: float | None = None, seed=None, max_attempts: int = 100) -> Graph:
    """Connected random geometric graph in the unit square.

    Node positions are resampled until the graph is connected. Positions are
    discarded; only the topology is returned.

    Parameters
    ----------
    n : int
        Number of nodes.
    radius : float, optional
        Communication radius; defaults to :func:`rgg_radius`.
    seed : int or numpy.random.Generator, optional
        Source of randomness. Equal seeds give equal graphs.
    max_attempts : int
        Number of position draws before giving up.

    Raises
    ------
    GraphError
        If no connected draw is found within ``max_attempts``.
    """
    if n < 1:
        raise GraphError("n must be >= 1")
    if radius is None:
        radius = rgg_radius(n)
    if radius <= 0:
        raise GraphError("radius must be positive")
    if max_attempts < 1:
        raise GraphError("max_attempts must be >= 1")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    for _ in range(max_attempts):
        pos = rng.uniform(0.0, 1.0, size=(n, 2))
        dist = np.linalg.norm(pos[iu] - pos[ju], axis=1)
        close = dist <= radius
        g = Graph(n, tuple(zip(iu[close].tolist(), ju[close].tolist())))
        if is_connected(g):
            return g
    raise GraphError(f"not connected after {max_attempts} resamples (n={n}, radius={radius:.4g})")


def complete_graph(n: int) -> Graph:
    return Graph(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))


def path_graph(n: int) -> Graph:
    return Graph(n, tuple((i, i + 1) for i in range(n - 1)))


def cycle_graph(n: int) -> Graph:
    edges = [(i, i + 1) for i in range(n - 1)]
    if n > 2:
        edges.append((0, n - 1))
    return Graph(n, tuple(edges))


def load_graph(path) -> Graph:
    """Read the ``n m`` / ``i j`` text format."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise GraphError(f"{path}:1: empty graph file")

    def ints(lineno, text, what):
        parts = text.split()
        if len(parts) != 2:
            raise GraphError(f"{path}:{lineno}: expected '{what}', got {text!r}")
        try:
            return int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphError(f"{path}:{lineno}: non-integer value in {text!r}") from None

    n, m = ints(1, lines[0], "n m")
    body = [(k + 2, ln) for k, ln in enumerate(lines[1:]) if ln.strip()]
    if len(body) != m:
        raise GraphError(f"{path}: header declares {m} edges, found {len(body)}")
    edges = []
    for lineno, text in body:
        i, j = ints(lineno, text, "i j")
        if i >= j:
            raise GraphError(f"{path}:{lineno}: edge must satisfy i < j, got {i} {j}")
        edges.append((i, j))
    try:
        return Graph(n, tuple(edges))
    except GraphError as exc:
        raise GraphError(f"{path}: {exc}") from None


def save_graph(g: Graph, path) -> None:
    text = f"{g.n} {g.m}\n" + "".join(f"{i} {j}\n" for i, j in g.edges)
    Path(path).write_text(text, encoding="utf-8")
