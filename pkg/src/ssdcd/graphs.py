"""Random DAG generators and small graph oracles.

Adjacency convention everywhere: ``A[i, j] = 1`` means a directed edge ``i -> j``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Fixed stream offsets for deriving sub-seeds from one master seed.
STREAM_GRAPH = 1
STREAM_WEIGHTS = 2
STREAM_LATENTS = 3
STREAM_NOISE = 4


def derive_seed(master: int, stream: int) -> int:
    """Deterministic 64-bit sub-seed for ``stream`` under ``master``."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=(int(stream),))
    return int(ss.generate_state(1, np.uint64)[0])


def _frozen(a: np.ndarray, dtype=None) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dag:
    """Directed acyclic graph stored as a read-only boolean adjacency matrix."""

    adjacency: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.adjacency) != 0
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {a.shape}")
        if np.any(np.diag(a)):
            raise ValueError("self-loops are not allowed")
        if not is_acyclic(a):
            raise ValueError("adjacency contains a directed cycle")
        object.__setattr__(self, "adjacency", _frozen(a, bool))

    @classmethod
    def from_edges(cls, d: int, edges) -> "Dag":
        a = np.zeros((d, d), dtype=bool)
        for i, j in edges:
            a[i, j] = True
        return cls(a)

    @property
    def d(self) -> int:
        return self.adjacency.shape[0]

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.adjacency))]

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum())

    @property
    def max_in_degree(self) -> int:
        return int(self.adjacency.sum(axis=0).max()) if self.d else 0

    def __eq__(self, other):
        return isinstance(other, Dag) and np.array_equal(self.adjacency, other.adjacency)

    def __hash__(self):
        return hash(self.adjacency.tobytes())


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Observed-node causal graph: directed part plus latent-induced bidirected pairs."""

    directed: np.ndarray
    bidirected: np.ndarray = None
    n_latent: int = 0

    def __post_init__(self):
        a = np.asarray(self.directed) != 0
        d = a.shape[0]
        if not is_acyclic(a):
            raise ValueError("directed part of the ground truth is cyclic")
        b = np.zeros((d, d), bool) if self.bidirected is None else np.asarray(self.bidirected) != 0
        if b.shape != (d, d):
            raise ValueError("bidirected matrix must match the directed one")
        b = b | b.T
        np.fill_diagonal(b, False)
        if self.n_latent == 0 and b.any():
            raise ValueError("bidirected edges require at least one latent")
        object.__setattr__(self, "directed", _frozen(a, bool))
        object.__setattr__(self, "bidirected", _frozen(b, bool))

    @property
    def d(self) -> int:
        return self.directed.shape[0]

    @property
    def directed_edges(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.directed))]

    @property
    def bidirected_edges(self) -> list[tuple[int, int]]:
        iu, ju = np.nonzero(np.triu(self.bidirected, 1))
        return [(int(i), int(j)) for i, j in zip(iu, ju)]

    @property
    def dag(self) -> Dag:
        return Dag(self.directed)

    def skeleton(self) -> np.ndarray:
        """Symmetric boolean matrix of every true adjacency (directed or bidirected)."""
        return self.directed | self.directed.T | self.bidirected

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "directed": sorted([list(e) for e in self.directed_edges]),
            "bidirected": sorted([list(e) for e in self.bidirected_edges]),
            "latents": int(self.n_latent),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "GroundTruth":
        d = int(obj["d"])
        a = np.zeros((d, d), bool)
        b = np.zeros((d, d), bool)
        for i, j in obj.get("directed", []):
            a[i, j] = True
        for i, j in obj.get("bidirected", []):
            b[i, j] = b[j, i] = True
        n_latent = int(obj.get("latents", 1 if b.any() else 0))
        return cls(a, b, n_latent)

    def __eq__(self, other):
        return (
            isinstance(other, GroundTruth)
            and np.array_equal(self.directed, other.directed)
            and np.array_equal(self.bidirected, other.bidirected)
            and self.n_latent == other.n_latent
        )


def graph_to_json(graph, path=None) -> str:
    """Canonical JSON for a Dag, GroundTruth or binary adjacency matrix."""
    if isinstance(graph, GroundTruth):
        obj = graph.to_dict()
    else:
        a = graph.adjacency if isinstance(graph, Dag) else np.asarray(graph) != 0
        obj = {
            "d": int(a.shape[0]),
            "directed": sorted([[int(i), int(j)] for i, j in zip(*np.nonzero(a))]),
            "bidirected": [],
        }
    text = json.dumps(obj, sort_keys=True)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def graph_from_json(source) -> GroundTruth:
    """Parse the graph format written by :func:`graph_to_json` (path or JSON text)."""
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        source = Path(source).read_text()
    return GroundTruth.from_dict(json.loads(source))


# --------------------------------------------------------------------------- #
# Generators


def _permute(a: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    p = rng.permutation(a.shape[0])
    return a[np.ix_(p, p)]


def gen_er(d: int, degree: float, seed: int) -> Dag:
    """Erdos-Renyi DAG with expected total degree ``degree`` (``degree*d/2`` edges)."""
    if d < 2:
        raise ValueError("d must be at least 2")
    if degree < 0:
        raise ValueError("degree must be non-negative")
    p = degree / (d - 1)
    if p > 1.0 + 1e-12:
        raise ValueError(f"degree {degree} too dense for d={d} (max {d - 1})")
    rng = np.random.default_rng(seed)
    low = np.tril(rng.random((d, d)) < min(p, 1.0), k=-1)
    return Dag(_permute(low, rng))


def gen_sf(d: int, attach_edges: int, seed: int) -> Dag:
    """Preferential-attachment DAG; each new node links to ``attach_edges`` older ones.

    Edges point from the newer node to the older one, then labels are permuted.
    """
    if d < 2:
        raise ValueError("d must be at least 2")
    if attach_edges < 1:
        raise ValueError("attach_edges must be positive")
    rng = np.random.default_rng(seed)
    a = np.zeros((d, d), dtype=bool)
    deg = np.zeros(d)
    for t in range(1, d):
        m = min(attach_edges, t)
        w = deg[:t] + 1.0
        targets = rng.choice(t, size=m, replace=False, p=w / w.sum())
        a[t, targets] = True
        deg[targets] += 1
        deg[t] += m
    return Dag(_permute(a, rng))


def gen_bp(d: int, split_ratio: float = 0.5, degree: float = 1.0, seed: int = 0) -> Dag:
    """Bipartite DAG: edges only from the first ``ceil(split_ratio*d)`` nodes to the rest."""
    if d < 2:
        raise ValueError("d must be at least 2")
    if not 0.0 < split_ratio < 1.0:
        raise ValueError("split_ratio must lie in (0, 1)")
    top = min(max(math.ceil(split_ratio * d), 1), d - 1)
    pairs = top * (d - top)
    p = degree * d / 2.0 / pairs
    if p > 1.0 + 1e-12:
        raise ValueError(f"degree {degree} too dense for a {top}x{d - top} bipartite graph")
    rng = np.random.default_rng(seed)
    a = np.zeros((d, d), dtype=bool)
    a[:top, top:] = rng.random((top, d - top)) < min(p, 1.0)
    return Dag(a)


def sf_attach_for_degree(degree: float) -> int:
    """Attachment count whose expected total degree is closest to ``degree``."""
    return max(1, int(round(degree / 2.0)))


def generate_dag(kind: str, d: int, degree: float, seed: int, split_ratio: float = 0.5) -> Dag:
    if kind == "er":
        return gen_er(d, degree, seed)
    if kind == "sf":
        return gen_sf(d, sf_attach_for_degree(degree), seed)
    if kind == "bp":
        return gen_bp(d, split_ratio, degree, seed)
    raise ValueError(f"unknown graph type {kind!r}")


# --------------------------------------------------------------------------- #
# Oracles


def _successors(a: np.ndarray) -> list[np.ndarray]:
    return [np.flatnonzero(a[i]) for i in range(a.shape[0])]


def find_cycle(adjacency) -> list[int] | None:
    """Return one directed cycle as a node list ``[v0, v1, ..., v0]``, or None."""
    a = np.asarray(adjacency) != 0
    d = a.shape[0]
    succ = _successors(a)
    color = np.zeros(d, dtype=np.int8)  # 0 new, 1 on stack, 2 done
    parent = np.full(d, -1)
    for root in range(d):
        if color[root]:
            continue
        stack = [(root, 0)]
        color[root] = 1
        while stack:
            v, k = stack[-1]
            if k < len(succ[v]):
                stack[-1] = (v, k + 1)
                w = int(succ[v][k])
                if color[w] == 0:
                    color[w] = 1
                    parent[w] = v
                    stack.append((w, 0))
                elif color[w] == 1:
                    cycle = [w]
                    u = v
                    while u != w:
                        cycle.append(int(u))
                        u = parent[u]
                    cycle.append(w)
                    return cycle[::-1]
            else:
                color[v] = 2
                stack.pop()
    return None


def is_acyclic(adjacency) -> bool:
    """True iff the directed graph has no cycle (self-loops count as cycles)."""
    a = np.asarray(adjacency) != 0
    if np.any(np.diag(a)):
        return False
    return find_cycle(a) is None


def topological_order(adjacency) -> list[int]:
    """Kahn ordering with smallest-index tie-breaking; raises on cycles."""
    a = np.asarray(adjacency) != 0
    indeg = a.sum(axis=0).astype(int)
    ready = sorted(np.flatnonzero(indeg == 0).tolist())
    order = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        for w in np.flatnonzero(a[v]):
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(int(w))
        ready.sort()
    if len(order) != a.shape[0]:
        raise ValueError("graph is cyclic")
    return order


def moralize(dag) -> np.ndarray:
    """Moral graph: drop orientations and marry every pair of co-parents."""
    a = dag.adjacency if isinstance(dag, Dag) else np.asarray(dag) != 0
    m = a | a.T
    for j in range(a.shape[0]):
        pa = np.flatnonzero(a[:, j])
        if len(pa) > 1:
            m[np.ix_(pa, pa)] = True
    np.fill_diagonal(m, False)
    return m


def marginalize_latents(full_dag, observed) -> GroundTruth:
    """Project a DAG over observed+latent nodes onto the observed ones.

    Every latent must be a parentless node with at least two observed children;
    each pair of observed children of a latent becomes a bidirected edge.
    """
    a = full_dag.adjacency if isinstance(full_dag, Dag) else np.asarray(full_dag) != 0
    observed = np.asarray(observed, dtype=int)
    latent = np.setdiff1d(np.arange(a.shape[0]), observed)
    obs_set = np.zeros(a.shape[0], bool)
    obs_set[observed] = True
    d = len(observed)
    b = np.zeros((d, d), bool)
    pos = {int(v): k for k, v in enumerate(observed)}
    for h in latent:
        if a[:, h].any():
            raise ValueError(f"latent node {h} has parents")
        kids = np.flatnonzero(a[h])
        if not obs_set[kids].all() or len(kids) < 2:
            raise ValueError(f"latent node {h} must have >= 2 children, all observed")
        idx = [pos[int(k)] for k in kids]
        b[np.ix_(idx, idx)] = True
    np.fill_diagonal(b, False)
    return GroundTruth(a[np.ix_(observed, observed)], b, len(latent))
