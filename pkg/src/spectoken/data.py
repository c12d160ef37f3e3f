"""Line-oriented dataset files, synthetic molecule-like graphs, and splits.

One JSON record per line::

    {"nodes": [0, 3, 1], "edges": [[0, 1, 0], [1, 2, 2]], "targets": [0.5, null]}

``null`` targets are missing labels and load as NaN.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .autodiff import ContractError
from .graph import Graph, GraphValidationError, normalized_laplacian
from .spectral import sym_eigh

NODE_CODES = 8
EDGE_CODES = 4
RING_PROB = 0.3
MAX_VALENCE = 4
ZERO_EIG = 1e-8


class DatasetParseError(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class DatasetValidationError(DatasetParseError):
    pass


def graph_to_record(g: Graph) -> dict:
    return {
        "nodes": list(g.node_attrs),
        "edges": [[u, v, c] for (u, v), c in zip(g.edges, g.edge_attrs)],
        "targets": [None if math.isnan(t) else float(t) for t in g.targets],
    }


def serialize(graphs: Iterable[Graph]) -> str:
    return "".join(json.dumps(graph_to_record(g)) + "\n" for g in graphs)


def write_dataset(path, graphs: Iterable[Graph]) -> None:
    Path(path).write_text(serialize(graphs), encoding="utf-8")


def _as_int(x, what: str) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise TypeError(f"{what} must be an integer, got {x!r}")
    return x


def record_to_graph(rec) -> Graph:
    if not isinstance(rec, dict):
        raise TypeError("record must be a JSON object")
    unknown = set(rec) - {"nodes", "edges", "targets"}
    if unknown:
        raise TypeError(f"unknown keys {sorted(unknown)}")
    nodes = [_as_int(c, "node code") for c in rec.get("nodes", [])]
    edges, codes = [], []
    for e in rec.get("edges", []):
        if not isinstance(e, list) or len(e) not in (2, 3):
            raise TypeError(f"edge must be [u, v] or [u, v, code], got {e!r}")
        edges.append((_as_int(e[0], "edge endpoint"), _as_int(e[1], "edge endpoint")))
        codes.append(_as_int(e[2], "edge code") if len(e) == 3 else 0)
    targets = []
    for t in rec.get("targets", []):
        if t is None:
            targets.append(float("nan"))
        elif isinstance(t, (int, float)) and not isinstance(t, bool):
            targets.append(float(t))
        else:
            raise TypeError(f"target must be a number or null, got {t!r}")
    return Graph(n=len(nodes), edges=tuple(edges), node_attrs=tuple(nodes),
                 edge_attrs=tuple(codes), targets=np.array(targets))


def parse_lines(lines: Iterable[str]) -> list[Graph]:
    graphs = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetParseError(lineno, f"malformed JSON ({exc.msg})") from None
        try:
            graphs.append(record_to_graph(rec))
        except TypeError as exc:
            raise DatasetParseError(lineno, str(exc)) from None
        except GraphValidationError as exc:
            raise DatasetValidationError(lineno, str(exc)) from None
    return graphs


def parse_dataset(path) -> list[Graph]:
    with open(path, encoding="utf-8") as fh:
        return parse_lines(fh)


# ----------------------------------------------------------------------------
# synthetic data

def spectral_target(g: Graph) -> float:
    """Sum of the three smallest nonzero normalized-Laplacian eigenvalues."""
    if g.n == 0:
        return 0.0
    evals = sym_eigh(normalized_laplacian(g)).eigenvalues
    return float(evals[evals > ZERO_EIG][:3].sum())


def _bfs(nbrs: list[set], src: int) -> dict[int, int]:
    dist = {src: 0}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in nbrs[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def random_molecule(n: int, rng: np.random.Generator) -> tuple[list, list]:
    """Random tree with valence <= 4 plus ring-closing edges.

    Each node, with probability 0.3, bonds to a node 2-5 hops away, closing a
    ring of 3-6 nodes. Returns ``(node_codes, [(u, v), ...])``.
    """
    nbrs: list[set] = [set() for _ in range(n)]
    edges = []
    for v in range(1, n):
        open_nodes = [u for u in range(v) if len(nbrs[u]) < MAX_VALENCE] or list(range(v))
        u = int(open_nodes[rng.integers(len(open_nodes))])
        nbrs[u].add(v)
        nbrs[v].add(u)
        edges.append((u, v))
    for u in range(n):
        if rng.random() >= RING_PROB or len(nbrs[u]) >= MAX_VALENCE:
            continue
        dist = _bfs(nbrs, u)
        cands = [v for v, d in sorted(dist.items())
                 if 2 <= d <= 5 and len(nbrs[v]) < MAX_VALENCE]
        if not cands:
            continue
        v = int(cands[rng.integers(len(cands))])
        nbrs[u].add(v)
        nbrs[v].add(u)
        edges.append((min(u, v), max(u, v)))
    codes = [int(c) for c in rng.integers(0, NODE_CODES, n)]
    return codes, edges


def generate_synthetic(n_graphs: int, size_range: tuple[int, int] = (8, 24),
                       seed: int = 0) -> list[Graph]:
    """Deterministic molecule-like graphs with a spectral regression target."""
    lo, hi = size_range
    if not 1 <= lo <= hi <= 64:
        raise ValueError(f"size_range must satisfy 1 <= min <= max <= 64, got {size_range}")
    rng = np.random.default_rng(seed)
    graphs = []
    for _ in range(n_graphs):
        n = int(rng.integers(lo, hi + 1))
        codes, edges = random_molecule(n, rng)
        ecodes = [int(c) for c in rng.integers(0, EDGE_CODES, len(edges))]
        g = Graph(n=n, edges=tuple(edges), node_attrs=tuple(codes), edge_attrs=tuple(ecodes))
        graphs.append(Graph(n=n, edges=g.edges, node_attrs=g.node_attrs,
                            edge_attrs=g.edge_attrs, targets=np.array([spectral_target(g)])))
    return graphs


# ----------------------------------------------------------------------------
# splits

@dataclass
class SplitSpec:
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0
    indices: Optional[tuple[Sequence[int], Sequence[int], Sequence[int]]] = None
    require_valid: bool = True

    def assign(self, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self.indices is not None:
            parts = tuple(np.asarray(p, dtype=np.int64) for p in self.indices)
            flat = np.concatenate(parts)
            if len(set(flat.tolist())) != flat.size or sorted(flat.tolist()) != list(range(n)):
                raise ContractError("explicit split indices must be disjoint and cover the data")
            return parts
        r_train, r_valid, r_test = self.ratios
        if min(self.ratios) < 0 or abs(r_train + r_valid + r_test - 1.0) > 1e-9:
            raise ContractError(f"split ratios must be non-negative and sum to 1: {self.ratios}")
        n_valid = int(math.floor(n * r_valid + 1e-9))
        n_test = int(math.floor(n * r_test + 1e-9))
        n_train = n - n_valid - n_test
        for name, ratio, count in (("train", r_train, n_train), ("valid", r_valid, n_valid),
                                   ("test", r_test, n_test)):
            if ratio > 0 and count == 0:
                raise ContractError(f"{n} graphs leave the {name} split empty")
        if self.require_valid and n_valid == 0:
            raise ContractError("validation split requested but empty")
        order = np.random.default_rng(self.seed).permutation(n)
        return order[:n_train], order[n_train:n_train + n_valid], order[n_train + n_valid:]


def split(dataset: Sequence, spec: SplitSpec = SplitSpec()) -> tuple[list, list, list]:
    tr, va, te = spec.assign(len(dataset))
    return ([dataset[i] for i in tr], [dataset[i] for i in va], [dataset[i] for i in te])
