"""Junction-tree style coarse-graining of a graph into cliques.

Cliques are built from three rules, in this order:

1. rings -- cycles of a minimum cycle basis, merged when two of them share
   more than one node (fused or bridged ring systems);
2. every edge not inside a ring clique becomes a two-node clique;
3. every isolated node becomes a singleton clique.

Cliques sharing nodes are linked with weight equal to the shared-node count
and the tree is a maximum-weight spanning forest of that clique graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import networkx as nx
import numpy as np

from .graph import Graph, degrees, normalized_laplacian

EDGE_CLIQUE = 0
SINGLETON_CLIQUE = 1
RING_BASE = 2


@dataclass(frozen=True, eq=False)
class CoarseGraph:
    m: int
    tree_edges: tuple[tuple[int, int], ...]
    cliques: tuple[tuple[int, ...], ...]
    clique_attrs: tuple[int, ...]
    S: np.ndarray  # (m, n) 0/1 assignment

    def as_graph(self) -> Graph:
        return Graph(n=self.m, edges=self.tree_edges, node_attrs=self.clique_attrs)

    def membership(self) -> tuple[np.ndarray, np.ndarray]:
        """Nonzero pattern of ``S`` as ``(clique_index, node_index)`` arrays."""
        rows, cols = np.nonzero(self.S)
        return rows.astype(np.int64), cols.astype(np.int64)

    def tree_degrees(self) -> np.ndarray:
        return degrees(self.as_graph())


class _DisjointSet:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[max(ra, rb)] = min(ra, rb)
        return True


def _ring_cliques(g: Graph) -> list[tuple[frozenset, int]]:
    nxg = nx.Graph()
    nxg.add_nodes_from(range(g.n))
    nxg.add_edges_from(g.edges)
    cycles = [frozenset(c) for c in nx.minimum_cycle_basis(nxg)]
    if not cycles:
        return []
    ds = _DisjointSet(len(cycles))
    for i, j in combinations(range(len(cycles)), 2):
        if len(cycles[i] & cycles[j]) > 1:
            ds.union(i, j)
    groups: dict[int, list[int]] = {}
    for i in range(len(cycles)):
        groups.setdefault(ds.find(i), []).append(i)
    return [(frozenset().union(*(cycles[i] for i in members)), len(members))
            for members in groups.values()]


def _relabel(signatures: list) -> list[int]:
    """Map hashable signatures to dense ranks in sorted order (label-free)."""
    table = {s: r for r, s in enumerate(sorted(set(signatures)))}
    return [table[s] for s in signatures]


def _canonical_order(g: Graph, cliques: list[frozenset], attrs: list[int],
                     weights: dict[tuple[int, int], int]) -> list[int]:
    """Order cliques by colour refinement so equal-weight ties in the spanning
    tree do not depend on the input node numbering."""
    nbrs = g.neighbors()
    color = _relabel([(a, ) for a in g.node_attrs])
    for _ in range(g.n):
        new = _relabel([(color[i], tuple(sorted(color[j] for j in nbrs[i])))
                        for i in range(g.n)])
        if len(set(new)) == len(set(color)):
            color = new
            break
        color = new

    cnbrs: list[list[tuple[int, int]]] = [[] for _ in cliques]
    for (i, j), w in weights.items():
        cnbrs[i].append((j, w))
        cnbrs[j].append((i, w))
    ccolor = _relabel([(attrs[k], len(c), tuple(sorted(color[v] for v in c)))
                       for k, c in enumerate(cliques)])
    for _ in range(len(cliques)):
        new = _relabel([(ccolor[k], tuple(sorted((w, ccolor[j]) for j, w in cnbrs[k])))
                        for k in range(len(cliques))])
        if len(set(new)) == len(set(ccolor)):
            ccolor = new
            break
        ccolor = new
    return sorted(range(len(cliques)), key=lambda k: (ccolor[k], min(cliques[k])))


def decompose(g: Graph) -> CoarseGraph:
    """Coarse-grain ``g`` into cliques joined by a spanning forest."""
    rings = _ring_cliques(g)
    cliques: list[frozenset] = [nodes for nodes, _ in rings]
    attrs: list[int] = [RING_BASE + k for _, k in rings]

    for u, v in g.edges:
        if not any(u in r and v in r for r, _ in rings):
            cliques.append(frozenset((u, v)))
            attrs.append(EDGE_CLIQUE)
    for i, d in enumerate(degrees(g)):
        if d == 0:
            cliques.append(frozenset((i,)))
            attrs.append(SINGLETON_CLIQUE)

    weights = _clique_weights(g.n, cliques)
    order = _canonical_order(g, cliques, attrs, weights)
    rank = {old: new for new, old in enumerate(order)}
    cliques = [cliques[k] for k in order]
    attrs = [attrs[k] for k in order]
    weights = {tuple(sorted((rank[i], rank[j]))): w for (i, j), w in weights.items()}

    ds = _DisjointSet(len(cliques))
    tree = []
    for (i, j), _ in sorted(weights.items(), key=lambda kv: (-kv[1], kv[0])):
        if ds.union(i, j):
            tree.append((i, j))

    S = np.zeros((len(cliques), g.n), dtype=np.int8)
    for k, c in enumerate(cliques):
        S[k, sorted(c)] = 1
    return CoarseGraph(
        m=len(cliques),
        tree_edges=tuple(sorted(tree)),
        cliques=tuple(tuple(sorted(c)) for c in cliques),
        clique_attrs=tuple(attrs),
        S=S,
    )


def _clique_weights(n: int, cliques: list[frozenset]) -> dict[tuple[int, int], int]:
    member: list[list[int]] = [[] for _ in range(n)]
    for k, c in enumerate(cliques):
        for v in c:
            member[v].append(k)
    weights: dict[tuple[int, int], int] = {}
    for ks in member:
        for i, j in combinations(sorted(ks), 2):
            weights[(i, j)] = weights.get((i, j), 0) + 1
    return weights


def coarse_laplacian(cg: CoarseGraph) -> np.ndarray:
    return normalized_laplacian(cg.as_graph())
