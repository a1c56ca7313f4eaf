"""Directed graphs and the gossip edge-activation model.

Nodes are labeled ``1..n``. An edge ``(j, i)`` means node ``j`` transmits to
node ``i``. At every time step exactly one edge is activated, drawn from an
:class:`ActivationModel`.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

Edge = Tuple[int, int]

PROB_TOL = 1e-12


class GraphError(ValueError):
    """Raised for malformed digraphs, activation models or graph specs."""


@dataclass(frozen=True)
class Digraph:
    """Digraph on nodes ``1..n`` with an ordered edge list.

    Attributes:
        n: Node count, at least 2.
        edges: Directed pairs ``(j, i)``; no self-loops, no duplicates.
    """

    n: int
    edges: Tuple[Edge, ...]

    def __post_init__(self) -> None:
        if self.n < 2:
            raise GraphError(f"need at least 2 nodes, got n={self.n}")
        object.__setattr__(self, "edges", tuple((int(j), int(i)) for j, i in self.edges))
        seen = set()
        for j, i in self.edges:
            if not (1 <= j <= self.n and 1 <= i <= self.n):
                raise GraphError(f"edge ({j}, {i}) references a node outside 1..{self.n}")
            if j == i:
                raise GraphError(f"self-loop ({i}, {i}) is not allowed")
            if (j, i) in seen:
                raise GraphError(f"duplicate edge ({j}, {i})")
            seen.add((j, i))
        if not self.edges:
            raise GraphError("digraph has no edges")

    def __contains__(self, edge: object) -> bool:
        return edge in self.edge_set

    @cached_property
    def edge_set(self) -> frozenset:
        return frozenset(self.edges)

    def successors(self) -> List[List[int]]:
        """Adjacency lists indexed by node label (index 0 unused)."""
        adj: List[List[int]] = [[] for _ in range(self.n + 1)]
        for j, i in self.edges:
            adj[j].append(i)
        return adj


@dataclass(frozen=True)
class ActivationModel:
    """Per-edge activation probabilities over a digraph.

    Attributes:
        graph: The digraph whose edges form the support.
        probabilities: One strictly positive weight per edge, in edge order,
            summing to one.
    """

    graph: Digraph
    probabilities: Tuple[float, ...]
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        probs = tuple(float(p) for p in self.probabilities)
        if len(probs) != len(self.graph.edges):
            raise GraphError(
                f"{len(probs)} probabilities for {len(self.graph.edges)} edges"
            )
        for edge, p in zip(self.graph.edges, probs):
            if not 0.0 < p < 1.0:
                raise GraphError(f"probability of edge {edge} must lie in (0, 1), got {p}")
        total = math.fsum(probs)
        if abs(total - 1.0) > PROB_TOL:
            raise GraphError(f"activation probabilities sum to {total!r}, not 1")
        object.__setattr__(self, "probabilities", probs)
        cdf = np.cumsum(np.asarray(probs, dtype=float))
        cdf[-1] = 1.0
        object.__setattr__(self, "_cdf", cdf)

    @property
    def cdf(self) -> np.ndarray:
        return self._cdf

    def is_uniform(self) -> bool:
        p0 = 1.0 / len(self.probabilities)
        return all(abs(p - p0) <= PROB_TOL for p in self.probabilities)

    def probability(self, edge: Edge) -> float:
        return self.probabilities[self.graph.edges.index(tuple(edge))]


def complete_digraph(n: int) -> Digraph:
    """All ``n(n-1)`` ordered pairs of distinct nodes."""
    if n < 2:
        raise GraphError(f"complete digraph needs n >= 2, got {n}")
    return Digraph(n, tuple((j, i) for j in range(1, n + 1) for i in range(1, n + 1) if i != j))


def path_digraph(n: int) -> Digraph:
    """Directed path ``1 -> 2 -> ... -> n``."""
    return Digraph(n, tuple((k, k + 1) for k in range(1, n)))


def ring_digraph(n: int) -> Digraph:
    """Directed cycle ``1 -> 2 -> ... -> n -> 1``."""
    return Digraph(n, tuple((k, k % n + 1) for k in range(1, n + 1)))


def uniform_activation(g: Digraph) -> ActivationModel:
    m = len(g.edges)
    return ActivationModel(g, tuple([1.0 / m] * m))


def sample_edge(model: ActivationModel, rng: np.random.Generator) -> Edge:
    """Draw one edge by inverse CDF over the cumulative weight table."""
    k = int(np.searchsorted(model.cdf, rng.random(), side="right"))
    return model.graph.edges[min(k, len(model.graph.edges) - 1)]


class EdgeStream:
    """Iterator of 0-based ``(sender, receiver)`` index pairs.

    Draws uniforms from ``rng`` in chunks (doubling from 64 up to ``max_chunk``)
    so a trajectory costs one vectorized inverse-CDF lookup per chunk rather
    than per step. The edge sequence is a deterministic function of the
    generator state.
    """

    def __init__(self, model: ActivationModel, rng: np.random.Generator, max_chunk: int = 8192):
        self._cdf = model.cdf
        self._last = len(model.graph.edges) - 1
        self._senders = np.array([j - 1 for j, _ in model.graph.edges], dtype=np.int64)
        self._receivers = np.array([i - 1 for _, i in model.graph.edges], dtype=np.int64)
        self._rng = rng
        self._chunk = 64
        self._max_chunk = max_chunk
        self._buf: List[Tuple[int, int]] = []
        self._pos = 0

    def __iter__(self) -> "EdgeStream":
        return self

    def __next__(self) -> Tuple[int, int]:
        if self._pos >= len(self._buf):
            u = self._rng.random(self._chunk)
            idx = np.minimum(np.searchsorted(self._cdf, u, side="right"), self._last)
            self._buf = list(zip(self._senders[idx].tolist(), self._receivers[idx].tolist()))
            self._pos = 0
            self._chunk = min(2 * self._chunk, self._max_chunk)
        pair = self._buf[self._pos]
        self._pos += 1
        return pair


def _reaches_all(adj: Sequence[Sequence[int]], root: int, n: int) -> bool:
    seen = {root}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == n


def has_globally_reachable_node(g: Digraph) -> bool:
    """True iff some node is connected to every other node by a directed path.

    Paths follow information flow (edge ``(j, i)`` carries ``x_j`` to ``i``),
    so such a root's value can spread to the whole network. This is the QC
    consensus condition: with ``2 -> 1`` and ``3 -> 1`` only, nodes 2 and 3
    never update and consensus fails.
    """
    forward: List[List[int]] = [[] for _ in range(g.n + 1)]
    for j, i in g.edges:
        forward[j].append(i)
    return any(_reaches_all(forward, root, g.n) for root in range(1, g.n + 1))


def is_complete(g: Digraph) -> bool:
    return len(g.edges) == g.n * (g.n - 1)


def parse_edge_list(text: str) -> ActivationModel:
    """Parse the edge-list format.

    The first non-blank line is ``n <count>``; every following line is
    ``j i [p_ji]``. Probabilities must be given for all edges or for none,
    in which case activation is uniform. ``#`` starts a comment.
    """
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise GraphError("empty edge list")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "n":
        raise GraphError(f"first line must be 'n <count>', got {lines[0]!r}")
    try:
        n = int(head[1])
    except ValueError as exc:
        raise GraphError(f"bad node count {head[1]!r}") from exc
    edges: List[Edge] = []
    probs: List[Optional[float]] = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) not in (2, 3):
            raise GraphError(f"bad edge line {ln!r}")
        try:
            edges.append((int(parts[0]), int(parts[1])))
            probs.append(float(parts[2]) if len(parts) == 3 else None)
        except ValueError as exc:
            raise GraphError(f"bad edge line {ln!r}") from exc
    g = Digraph(n, tuple(edges))
    given = [p is not None for p in probs]
    if all(given):
        return ActivationModel(g, tuple(probs))  # type: ignore[arg-type]
    if any(given):
        raise GraphError("give probabilities for every edge or for none")
    return uniform_activation(g)


_BUILDERS = {"complete": complete_digraph, "path": path_digraph, "ring": ring_digraph}


def load_graph(spec: str) -> ActivationModel:
    """Resolve ``complete:<n>``, ``path:<n>``, ``ring:<n>`` or an edge-list file."""
    name, sep, arg = spec.partition(":")
    if sep and name in _BUILDERS:
        try:
            n = int(arg)
        except ValueError as exc:
            raise GraphError(f"bad node count in graph spec {spec!r}") from exc
        return uniform_activation(_BUILDERS[name](n))
    path = Path(spec)
    if not path.is_file():
        raise GraphError(f"unknown graph spec {spec!r} (not a builder and not a file)")
    return parse_edge_list(path.read_text())

