"""Linear SCM parameterization, sampling and covariance estimation.

A weighted adjacency ``B`` has ``B[i, j]`` = coefficient of ``X_i`` in the
equation for ``X_j``; a sample row satisfies ``x = x @ B + noise``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import graphs
from .graphs import Dag, GroundTruth

NOISE_FAMILIES = ("gaussian", "exponential", "gumbel", "uniform")
EULER_GAMMA = 0.5772156649015329


@dataclass(frozen=True)
class NoiseSpec:
    family: str = "gaussian"
    scale: float | tuple = 1.0

    def __post_init__(self):
        if self.family not in NOISE_FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}")
        s = np.atleast_1d(np.asarray(self.scale, dtype=float))
        if not np.all(s > 0):
            raise ValueError("noise scales must be strictly positive")
        if s.size > 1:
            object.__setattr__(self, "scale", tuple(float(x) for x in s))

    def scales(self, d: int) -> np.ndarray:
        s = np.atleast_1d(np.asarray(self.scale, dtype=float))
        if s.size == 1:
            return np.full(d, float(s[0]))
        if s.size != d:
            raise ValueError(f"need {d} noise scales, got {s.size}")
        return s


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ``n x d`` sample matrix plus how it was produced."""

    X: np.ndarray
    seed: int | None = None
    noise: NoiseSpec | None = None
    truth: GroundTruth | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        X = np.array(self.X, dtype=float, copy=True)
        if X.ndim != 2:
            raise ValueError("X must be two-dimensional")
        if X.shape[0] < 2:
            raise ValueError("need at least two samples")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite entries")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def external(self) -> bool:
        return self.truth is None


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    matrix: np.ndarray
    n: int
    centered: bool = True

    @property
    def d(self) -> int:
        return self.matrix.shape[0]


def assign_weights(dag: Dag, low: float = 0.5, high: float = 2.0, seed: int = 0) -> np.ndarray:
    """Edge weights drawn uniformly from ``[-high, -low] U [low, high]``."""
    if not 0 < low < high:
        raise ValueError("need 0 < low < high")
    rng = np.random.default_rng(seed)
    a = dag.adjacency if isinstance(dag, Dag) else np.asarray(dag) != 0
    d = a.shape[0]
    mag = rng.uniform(low, high, size=(d, d))
    sign = rng.choice([-1.0, 1.0], size=(d, d))
    return np.where(a, mag * sign, 0.0)


def inject_latents(
    B: np.ndarray,
    n_latent: int,
    children_per_latent: int = 2,
    seed: int = 0,
    low: float = 0.5,
    high: float = 2.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Append ``n_latent`` source nodes, each confounding distinct observed children.

    Returns the ``(d+l) x (d+l)`` weighted adjacency and the observed indices.
    """
    B = np.asarray(B, dtype=float)
    d = B.shape[0]
    if n_latent < 0:
        raise ValueError("n_latent must be non-negative")
    if n_latent and not 2 <= children_per_latent <= d:
        raise ValueError("children_per_latent must lie in [2, d]")
    observed = np.arange(d)
    if n_latent == 0:
        return B.copy(), observed
    rng = np.random.default_rng(seed)
    full = np.zeros((d + n_latent, d + n_latent))
    full[:d, :d] = B
    for k in range(n_latent):
        kids = rng.choice(d, size=children_per_latent, replace=False)
        mag = rng.uniform(low, high, size=children_per_latent)
        sign = rng.choice([-1.0, 1.0], size=children_per_latent)
        full[d + k, kids] = mag * sign
    return full, observed


def standard_noise(family: str, size, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean, unit-variance draws from ``family``."""
    if family == "gaussian":
        return rng.standard_normal(size)
    if family == "exponential":
        return rng.exponential(1.0, size) - 1.0
    if family == "gumbel":
        return (rng.gumbel(0.0, 1.0, size) - EULER_GAMMA) * (math.sqrt(6.0) / math.pi)
    if family == "uniform":
        r = math.sqrt(3.0)
        return rng.uniform(-r, r, size)
    raise ValueError(f"unknown noise family {family!r}")


def sample(
    B_full: np.ndarray,
    noise: NoiseSpec,
    n: int,
    observed=None,
    seed: int = 0,
    truth: GroundTruth | None = None,
) -> Dataset:
    """Draw ``n`` samples from the linear SCM and keep the observed columns."""
    B_full = np.asarray(B_full, dtype=float)
    D = B_full.shape[0]
    if n < 2:
        raise ValueError("need n >= 2")
    support = B_full != 0
    if not graphs.is_acyclic(support):
        raise ValueError("weighted adjacency has a cyclic support")
    observed = np.arange(D) if observed is None else np.asarray(observed, dtype=int)
    rng = np.random.default_rng(seed)
    N = standard_noise(noise.family, (n, D), rng) * noise.scales(D)
    X = np.zeros((n, D))
    for j in graphs.topological_order(support):
        pa = np.flatnonzero(support[:, j])
        X[:, j] = N[:, j] + (X[:, pa] @ B_full[pa, j] if len(pa) else 0.0)
    B_obs = B_full[np.ix_(observed, observed)]
    return Dataset(X[:, observed], seed=seed, noise=noise, truth=truth, weights=B_obs)


def population_covariance(B_full: np.ndarray, scales, observed=None) -> np.ndarray:
    """``(I - B)^{-T} diag(scales^2) (I - B)^{-1}`` restricted to ``observed``."""
    B_full = np.asarray(B_full, dtype=float)
    D = B_full.shape[0]
    s = np.broadcast_to(np.asarray(scales, dtype=float), (D,))
    inv = np.linalg.inv(np.eye(D) - B_full)
    cov = inv.T @ np.diag(s**2) @ inv
    if observed is not None:
        cov = cov[np.ix_(observed, observed)]
    return cov


def empirical_covariance(data, center: bool = True) -> CovarianceEstimate:
    """``(1/n) Xc^T Xc`` with optional column centering; exactly symmetric."""
    X = data.X if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least two samples for a covariance")
    Xc = X - X.mean(axis=0) if center else X
    C = Xc.T @ Xc / n
    C = 0.5 * (C + C.T)
    return CovarianceEstimate(C, n, center)


def simulate(
    graph: str = "er",
    d: int = 10,
    degree: float = 1.0,
    n: int = 1000,
    noise: str = "gaussian",
    latents: int = 0,
    seed: int = 0,
    children_per_latent: int = 2,
    weight_range: tuple[float, float] = (0.5, 2.0),
    split_ratio: float = 0.5,
) -> Dataset:
    """Full synthetic pipeline (graph, weights, latents, samples) from one master seed."""
    dag = graphs.generate_dag(graph, d, degree, graphs.derive_seed(seed, graphs.STREAM_GRAPH), split_ratio)
    B = assign_weights(dag, *weight_range, seed=graphs.derive_seed(seed, graphs.STREAM_WEIGHTS))
    B_full, observed = inject_latents(
        B, latents, children_per_latent, graphs.derive_seed(seed, graphs.STREAM_LATENTS), *weight_range
    )
    truth = graphs.marginalize_latents(B_full != 0, observed)
    return sample(
        B_full, NoiseSpec(noise), n, observed, graphs.derive_seed(seed, graphs.STREAM_NOISE), truth=truth
    )


# --------------------------------------------------------------------------- #
# CSV io


def save_matrix_csv(path, M: np.ndarray, header=None, fmt: str = "%.17g") -> None:
    buf = io.StringIO()
    np.savetxt(buf, np.atleast_2d(M), delimiter=",", fmt=fmt)
    text = buf.getvalue()
    if header is not None:
        text = ",".join(header) + "\n" + text
    Path(path).write_text(text)


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def load_matrix_csv(path) -> tuple[np.ndarray, list[str] | None]:
    """Read a numeric CSV; a non-numeric first row is taken as the header."""
    lines = Path(path).read_text().splitlines()
    header = None
    if lines and not all(_is_number(t) for t in lines[0].split(",")):
        header = [t.strip() for t in lines[0].split(",")]
        lines = lines[1:]
    rows = [ln for ln in lines if ln.strip()]
    M = np.loadtxt(rows, delimiter=",", ndmin=2) if rows else np.zeros((0, len(header or [])))
    return M, header


def load_dataset_csv(path) -> Dataset:
    X, _ = load_matrix_csv(path)
    return Dataset(X)
