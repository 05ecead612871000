"""Super-structure masks from a sparse + low-rank precision decomposition."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import admm, graphs
from .graphs import GroundTruth
from .scm import load_matrix_csv, save_matrix_csv

# Off-diagonal entries of a dense low-rank L are rarely exactly zero, so a
# near-zero cut yields the complete graph; see README for the calibration.
DEFAULT_TAU_EDGE = 0.05
METHODS = ("alvgl", "glasso", "lvgl")


@dataclass(frozen=True, eq=False)
class SuperStructure:
    """Symmetric 0/1 mask of allowed (undirected) edges."""

    mask: np.ndarray
    tau_edge: float | None = None
    method: str | None = None
    decomposition: admm.PrecisionDecomposition | None = None

    def __post_init__(self):
        m = np.asarray(self.mask) != 0
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("mask must be square")
        if not np.array_equal(m, m.T):
            raise ValueError("mask must be symmetric")
        if np.any(np.diag(m)):
            raise ValueError("mask diagonal must be zero")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @property
    def d(self) -> int:
        return self.mask.shape[0]

    @property
    def edge_count(self) -> int:
        return int(np.triu(self.mask, 1).sum())

    @property
    def free_parameters(self) -> int:
        """Directed entries left free: both orientations of every allowed pair."""
        return int(self.mask.sum())

    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.mask, 1))
        return [(int(a), int(b)) for a, b in zip(i, j)]

    def __eq__(self, other):
        return isinstance(other, SuperStructure) and np.array_equal(self.mask, other.mask)

    __hash__ = None


def full_mask(d: int) -> SuperStructure:
    m = np.ones((d, d), dtype=bool)
    np.fill_diagonal(m, False)
    return SuperStructure(m, method="full")


def empty_mask(d: int) -> SuperStructure:
    return SuperStructure(np.zeros((d, d), dtype=bool), method="empty")


def combine(S: np.ndarray, L: np.ndarray | None = None) -> np.ndarray:
    """``|S| + |L|``, symmetrized by entrywise max, zero diagonal."""
    S = np.asarray(S, dtype=float)
    W = np.abs(S) if L is None else np.abs(S) + np.abs(np.asarray(L, dtype=float))
    if W.shape[0] != W.shape[1]:
        raise ValueError("S and L must be square")
    W = np.maximum(W, W.T)
    np.fill_diagonal(W, 0.0)
    return W


def threshold(W: np.ndarray, tau_edge: float = DEFAULT_TAU_EDGE, **meta) -> SuperStructure:
    """Mask of entries strictly above ``tau_edge``."""
    if tau_edge < 0:
        raise ValueError("tau_edge must be non-negative")
    W = np.asarray(W, dtype=float)
    m = W > tau_edge
    m = m | m.T
    np.fill_diagonal(m, False)
    return SuperStructure(m, tau_edge=float(tau_edge), **meta)


def learn(
    cov,
    method: str = "alvgl",
    cfg: admm.AdmmConfig | None = None,
    tau_edge: float = DEFAULT_TAU_EDGE,
) -> SuperStructure:
    """Decompose ``cov`` and threshold it. Only ALVGL adds ``|L|`` to the weights."""
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    base = cfg or admm.AdmmConfig()
    kw = {k: v for k, v in admm.config_to_dict(base).items() if k != "mode"}
    if method == "glasso":
        if cfg is None:
            kw["ridge"] = 0.0
        run_cfg = admm.AdmmConfig(mode="glasso", **kw)
    else:
        run_cfg = admm.AdmmConfig(mode=method, **kw)
    dec = admm.solve(cov, run_cfg)
    W = combine(dec.S, dec.L) if method == "alvgl" else combine(dec.S)
    return threshold(W, tau_edge, method=method, decomposition=dec)


def _true_pairs(truth: GroundTruth) -> np.ndarray:
    sk = truth.skeleton()
    return np.triu(sk, 1)


def validate(mask: SuperStructure, truth: GroundTruth) -> dict:
    """Recall of true pairs (directed and bidirected), plus checks against the moral graph."""
    if mask.d != truth.d:
        raise ValueError(f"dimension mismatch: mask {mask.d}, truth {truth.d}")
    tp = _true_pairs(truth)
    m = np.triu(mask.mask, 1)
    n_true = int(tp.sum())
    out = {
        "recall": float((tp & m).sum() / n_true) if n_true else 1.0,
        "edge_count": mask.edge_count,
        "true_edges": n_true,
    }
    if truth.n_latent == 0:
        moral = np.triu(graphs.moralize(truth.dag), 1)
        n_pred = int(m.sum())
        out["precision_vs_moralized"] = float((moral & m).sum() / n_pred) if n_pred else 0.0
        out["recall_vs_moralized"] = float((moral & m).sum() / moral.sum()) if moral.sum() else 1.0
        out["symdiff_vs_moralized"] = int((moral ^ m).sum())
        out["moralized_edges"] = int(moral.sum())
    return out


# --------------------------------------------------------------------------- #
# io


def save_mask(mask: SuperStructure, path) -> None:
    """``.json`` writes an edge list; anything else a 0/1 CSV."""
    path = Path(path)
    if path.suffix == ".json":
        obj = {"d": mask.d, "edges": [list(e) for e in mask.edges()]}
        if mask.tau_edge is not None:
            obj["tau_edge"] = mask.tau_edge
        if mask.method is not None:
            obj["method"] = mask.method
        path.write_text(json.dumps(obj, sort_keys=True) + "\n")
    else:
        save_matrix_csv(path, mask.mask.astype(int), fmt="%d")


def load_mask(path) -> SuperStructure:
    path = Path(path)
    text = path.read_text()
    if text.lstrip().startswith("{"):
        obj = json.loads(text)
        d = int(obj["d"])
        m = np.zeros((d, d), dtype=bool)
        for i, j in obj.get("edges", []):
            m[i, j] = m[j, i] = True
        return SuperStructure(m, tau_edge=obj.get("tau_edge"), method=obj.get("method"))
    M, _ = load_matrix_csv(path)
    return SuperStructure(M != 0)

