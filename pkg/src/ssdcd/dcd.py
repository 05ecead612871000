"""Mask-constrained continuous DAG learning.

Least-squares score with an l1 penalty, the trace-exponential acyclicity
function and an augmented-Lagrangian outer loop. Only entries allowed by a
super-structure mask are optimization variables, so forbidden entries of W are
exactly zero throughout and gradients (and the quasi-Newton memory built from
them) live in the masked subspace.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.optimize as sopt

from . import graphs
from .admm import SolverError
from .scm import Dataset, save_matrix_csv
from .superstructure import SuperStructure, full_mask

log = logging.getLogger(__name__)


@dataclass
class DcdConfig:
    lambda1: float | None = None  # None: 0.1 * sqrt(log d / n)
    rho0: float = 1.0
    rho_growth: float = 10.0
    rho_max: float = 1e16
    h_shrink: float = 0.25  # grow rho unless h drops below this fraction
    h_tol: float = 1e-8
    alpha0: float = 0.0
    max_outer: int = 100
    inner_max_iter: int = 15000
    inner_gtol: float = 1e-6
    omega: float = 0.3
    center: bool = True

    def __post_init__(self):
        if self.lambda1 is not None and self.lambda1 < 0:
            raise ValueError("lambda1 must be non-negative")
        if self.rho0 <= 0 or self.rho_growth <= 1 or self.rho_max < self.rho0:
            raise ValueError("need rho0 > 0, rho_growth > 1, rho_max >= rho0")
        if not 0 < self.h_shrink < 1:
            raise ValueError("h_shrink must lie in (0, 1)")
        for name in ("h_tol", "inner_gtol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer < 1 or self.inner_max_iter < 1:
            raise ValueError("iteration limits must be positive")
        if self.omega < 0:
            raise ValueError("omega must be non-negative")

    def resolved_lambda1(self, d: int, n: int) -> float:
        if self.lambda1 is not None:
            return float(self.lambda1)
        return 0.1 * math.sqrt(math.log(d) / n) if d > 1 else 0.0


@dataclass(eq=False)
class DiscoveryResult:
    W_hat: np.ndarray
    graph: np.ndarray
    h_final: float
    objective: float
    seconds: float
    outer_iters: int
    inner_iters: int
    rho: float
    converged: bool
    free_parameters: int
    repaired_edges: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "h_final": float(self.h_final),
            "objective": float(self.objective),
            "seconds": float(self.seconds),
            "outer_iters": int(self.outer_iters),
            "inner_iters": int(self.inner_iters),
            "rho": float(self.rho),
            "converged": bool(self.converged),
            "free_parameters": int(self.free_parameters),
            "n_edges": int(self.graph.sum()),
            "repaired_edges": [list(map(int, e)) for e in self.repaired_edges],
        }

    def save(self, out_dir, prefix: str = "") -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{prefix}result.json").write_text(json.dumps(self.summary(), sort_keys=True, indent=2) + "\n")
        save_matrix_csv(out / f"{prefix}W_hat.csv", self.W_hat)
        graphs.graph_to_json(self.graph, out / f"{prefix}graph.json")


def h_dag(W: np.ndarray) -> tuple[float, np.ndarray]:
    """``tr(exp(W * W)) - d`` and its gradient ``exp(W * W)^T * 2W``."""
    W = np.asarray(W, dtype=float)
    if not np.all(np.isfinite(W)):
        raise FloatingPointError("h_dag: non-finite input")
    with np.errstate(over="raise", invalid="raise"):
        try:
            E = sla.expm(W * W)
        except FloatingPointError as exc:
            raise FloatingPointError("h_dag: matrix exponential overflow") from exc
    if not np.all(np.isfinite(E)):
        raise FloatingPointError("h_dag: matrix exponential overflow")
    return float(np.trace(E) - W.shape[0]), E.T * (2.0 * W)


def h_admg(B: np.ndarray, Omega: np.ndarray) -> float:
    """``tr(exp(B)) - d + sum(exp(B) * Omega)`` on the structural parts of B and Omega.

    Both arguments are read as edge structures: absolute values, diagonal
    zeroed. Vanishes iff the pair encodes an ancestral mixed graph.
    """
    B = np.abs(np.asarray(B, dtype=float))
    O = np.asarray(Omega, dtype=float)
    if B.shape != O.shape or B.shape[0] != B.shape[1]:
        raise ValueError("B and Omega must be square and of equal size")
    if not np.allclose(O, O.T, rtol=0, atol=1e-12):
        raise ValueError("Omega must be symmetric")
    O = np.abs(O)
    B = B.copy()
    np.fill_diagonal(B, 0.0)
    np.fill_diagonal(O, 0.0)
    E = sla.expm(B)
    return float(np.trace(E) - B.shape[0] + np.sum(E * O))


def _data_matrix(data) -> np.ndarray:
    return data.X if isinstance(data, Dataset) else np.asarray(data, dtype=float)


def _mask_array(mask, d: int) -> np.ndarray:
    if mask is None or (isinstance(mask, str) and mask == "full"):
        return full_mask(d).mask
    m = mask.mask if isinstance(mask, SuperStructure) else np.asarray(mask) != 0
    if m.shape != (d, d):
        raise ValueError(f"mask is {m.shape[0]}x{m.shape[1]}, data has d={d}")
    m = m.copy()
    np.fill_diagonal(m, False)
    return m


def score(W: np.ndarray, data, lambda1: float, mask=None) -> tuple[float, np.ndarray]:
    """``(1/2n)||X - XW||^2 + lambda1 ||W||_1`` and the gradient of the smooth part.

    With ``mask`` the l1 term only counts allowed entries.
    """
    X = _data_matrix(data)
    W = np.asarray(W, dtype=float)
    n = X.shape[0]
    if W.shape != (X.shape[1], X.shape[1]):
        raise ValueError("W must be d x d with d = X.shape[1]")
    R = X - X @ W
    l1 = np.abs(W if mask is None else W * _mask_array(mask, W.shape[0])).sum()
    value = 0.5 / n * np.sum(R * R) + lambda1 * l1
    return float(value), -X.T @ R / n


def project(G: np.ndarray, mask) -> np.ndarray:
    """Zero the gradient outside the allowed entries."""
    G = np.asarray(G, dtype=float)
    return G * _mask_array(mask, G.shape[0])


def _threshold_and_repair(W: np.ndarray, omega: float) -> tuple[np.ndarray, list]:
    A = np.abs(W) >= omega
    np.fill_diagonal(A, False)
    removed = []
    while True:
        cyc = graphs.find_cycle(A)
        if cyc is None:
            return A, removed
        arcs = list(zip(cyc[:-1], cyc[1:]))
        i, j = min(arcs, key=lambda e: (abs(W[e]), e))
        A[i, j] = False
        removed.append((i, j))


def fit(data, mask="full", cfg: DcdConfig | None = None) -> DiscoveryResult:
    """Augmented-Lagrangian fit restricted to the mask's free entries."""
    cfg = cfg or DcdConfig()
    t0 = time.perf_counter()
    X = _data_matrix(data)
    if not np.all(np.isfinite(X)):
        raise ValueError("data contains non-finite entries")
    n, d = X.shape
    M = _mask_array(mask, d)
    if cfg.center:
        X = X - X.mean(axis=0)
    C = X.T @ X / n
    lam = cfg.resolved_lambda1(d, n)
    rows, cols = np.nonzero(M)
    k = rows.size

    def unpack(x):
        W = np.zeros((d, d))
        W[rows, cols] = x[:k] - x[k:]
        return W

    if k == 0:
        W = np.zeros((d, d))
        return DiscoveryResult(W, np.zeros((d, d), dtype=bool), 0.0, 0.5 * np.trace(C),
                               time.perf_counter() - t0, 0, 0, cfg.rho0, True, 0)

    rho, alpha, h = cfg.rho0, cfg.alpha0, np.inf
    x = np.zeros(2 * k)
    last = {"x": x.copy()}

    def fun(xv):
        W = unpack(xv)
        IW = np.eye(d) - W
        CW = C @ IW
        loss = 0.5 * np.sum(IW * CW)
        hv, hg = h_dag(W)
        obj = loss + 0.5 * rho * hv * hv + alpha * hv + lam * xv.sum()
        if not np.isfinite(obj):
            raise SolverError("non-finite objective in inner solve", W=unpack(last["x"]), rho=rho)
        last["x"] = xv
        G = -CW + (rho * hv + alpha) * hg
        g = G[rows, cols]
        return obj, np.concatenate([g + lam, -g + lam])

    bounds = [(0.0, None)] * (2 * k)
    outer = inner = 0
    converged = False
    while outer < cfg.max_outer:
        outer += 1
        while rho < cfg.rho_max:
            try:
                res = sopt.minimize(fun, x, jac=True, method="L-BFGS-B", bounds=bounds,
                                    options={"maxiter": cfg.inner_max_iter, "gtol": cfg.inner_gtol})
            except FloatingPointError as exc:
                raise SolverError("matrix exponential overflow in inner solve",
                                  W=unpack(last["x"]), rho=rho, outer=outer) from exc
            inner += int(res.nit)
            h_new, _ = h_dag(unpack(res.x))
            if h_new > cfg.h_shrink * h:
                rho *= cfg.rho_growth
            else:
                break
        x, h = res.x, h_new
        alpha += rho * h
        if h <= cfg.h_tol:
            converged = True
            break
        if rho >= cfg.rho_max:
            break

    W = unpack(x)
    IW = np.eye(d) - W
    objective = 0.5 * np.sum(IW * (C @ IW)) + lam * np.abs(W).sum()
    A, removed = _threshold_and_repair(W, cfg.omega)
    seconds = time.perf_counter() - t0
    if not converged:
        log.info("ALM stopped with h=%.3g at rho=%.3g", h, rho)
    return DiscoveryResult(W, A, float(h), float(objective), seconds, outer, inner, rho,
                           converged, int(k), removed)


def config_to_dict(cfg: DcdConfig) -> dict:
    return asdict(cfg)
