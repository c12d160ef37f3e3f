"""Undirected attributed graphs and their normalized Laplacians."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GraphValidationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph with integer node/edge codes and float targets.

    ``targets`` may hold NaN for missing labels.
    """

    n: int
    edges: tuple[tuple[int, int], ...] = ()
    node_attrs: tuple[int, ...] = ()
    edge_attrs: tuple[int, ...] = ()
    targets: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        edges = tuple((int(u), int(v)) for u, v in self.edges)
        object.__setattr__(self, "edges", edges)
        node_attrs = tuple(int(c) for c in self.node_attrs) or (0,) * self.n
        object.__setattr__(self, "node_attrs", node_attrs)
        edge_attrs = tuple(int(c) for c in self.edge_attrs) or (0,) * len(edges)
        object.__setattr__(self, "edge_attrs", edge_attrs)
        object.__setattr__(self, "targets", np.asarray(self.targets, dtype=np.float64).reshape(-1))
        self.validate()

    def validate(self) -> None:
        if self.n < 0:
            raise GraphValidationError(f"negative node count {self.n}")
        if len(self.node_attrs) != self.n:
            raise GraphValidationError(
                f"{len(self.node_attrs)} node codes for {self.n} nodes")
        if len(self.edge_attrs) != len(self.edges):
            raise GraphValidationError(
                f"{len(self.edge_attrs)} edge codes for {len(self.edges)} edges")
        seen = set()
        for u, v in self.edges:
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise GraphValidationError(f"edge ({u}, {v}) out of range for n={self.n}")
            if u == v:
                raise GraphValidationError(f"self-loop on node {u}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise GraphValidationError(f"duplicate edge ({u}, {v})")
            seen.add(key)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.n == other.n and self.edges == other.edges
                and self.node_attrs == other.node_attrs
                and self.edge_attrs == other.edge_attrs
                and self.targets.shape == other.targets.shape
                and np.array_equal(self.targets, other.targets, equal_nan=True))

    __hash__ = None

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for u, v in self.edges:
            a[u, v] = a[v, u] = 1.0
        return a

    def neighbors(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        return nbrs

    def permute(self, perm) -> "Graph":
        """Relabel node ``i`` as ``perm[i]``."""
        perm = np.asarray(perm)
        inv = np.argsort(perm)
        return Graph(
            n=self.n,
            edges=tuple((int(perm[u]), int(perm[v])) for u, v in self.edges),
            node_attrs=tuple(self.node_attrs[i] for i in inv),
            edge_attrs=self.edge_attrs,
            targets=self.targets.copy(),
        )


def degrees(g: Graph) -> np.ndarray:
    deg = np.zeros(g.n, dtype=np.int64)
    for u, v in g.edges:
        deg[u] += 1
        deg[v] += 1
    return deg


def normalized_laplacian(g: Graph) -> np.ndarray:
    """``I - D^-1/2 A D^-1/2``, with all-zero rows and columns for isolated nodes.

    Built entry by entry from the edge list, so the result is exactly symmetric.
    """
    deg = degrees(g).astype(np.float64)
    lap = np.diag((deg > 0).astype(np.float64))
    for u, v in g.edges:
        w = -1.0 / np.sqrt(deg[u] * deg[v])
        lap[u, v] = w
        lap[v, u] = w
    return lap
