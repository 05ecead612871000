"""Sparse + low-rank precision decomposition by ADMM.

Solves

    min  -log det(S - L) + tr((S - L) C) + lam_s ||S||_1 + lam_l ||L||_*
    s.t. S - L > 0,  L >= 0

through the splitting ``Theta = S - L`` with scaled dual ``Y``; the augmented
term is ``mu/2 ||Theta - S + L + Y||_F^2``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .scm import CovarianceEstimate, save_matrix_csv

log = logging.getLogger(__name__)

MODES = ("alvgl", "lvgl", "glasso")


class SolverError(RuntimeError):
    """Numerical failure inside a solver; ``context`` carries iteration details."""

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.context = context


@dataclass
class AdmmConfig:
    lambda_s: float = 0.05
    lambda_l: float = 0.05
    tau_rank: float = 0.01
    max_iter: int = 500
    eps_primal: float = 1e-4
    eps_dual: float = 1e-4
    mu0: float = 1.0
    balance_ratio: float = 10.0
    balance_factor: float = 2.0
    # None: add 1e-4 * trace/d only if the covariance is singular; 0: never.
    ridge: float | None = None
    mode: str = "alvgl"
    theta_update: str = "exact"
    record_history: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.theta_update not in ("exact", "inexact"):
            raise ValueError("theta_update must be 'exact' or 'inexact'")
        for name in ("lambda_s", "lambda_l", "eps_primal", "eps_dual", "mu0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.tau_rank < 1:
            raise ValueError("tau_rank must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.balance_ratio <= 1 or self.balance_factor <= 1:
            raise ValueError("balancing ratio and factor must exceed 1")

    @classmethod
    def glasso(cls, **kw) -> "AdmmConfig":
        """Plain graphical lasso: no low-rank part, no ridge on singular input."""
        kw.setdefault("ridge", 0.0)
        return cls(mode="glasso", **kw)

    @classmethod
    def lvgl(cls, **kw) -> "AdmmConfig":
        """Classical latent-variable lasso: exact updates, untruncated shrinkage."""
        return cls(mode="lvgl", **kw)


@dataclass
class AdmmState:
    Theta: np.ndarray
    S: np.ndarray
    L: np.ndarray
    Y: np.ndarray
    mu: float
    iteration: int = 0
    primal_residual: float = np.inf
    dual_residual: float = np.inf


@dataclass(eq=False)
class PrecisionDecomposition:
    S: np.ndarray
    L: np.ndarray
    converged: bool
    iterations: int
    primal_residual: float
    dual_residual: float
    r_star: int
    mode: str = "alvgl"
    ridge: float = 0.0
    feasible: bool = True
    theta_fallbacks: int = 0
    mu: float = 1.0
    history: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "r_star": int(self.r_star),
            "primal_residual": float(self.primal_residual),
            "dual_residual": float(self.dual_residual),
            "mode": self.mode,
            "ridge": float(self.ridge),
            "feasible": bool(self.feasible),
            "theta_fallbacks": int(self.theta_fallbacks),
        }

    def save(self, out_dir, prefix: str = "") -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{prefix}decomposition.json").write_text(json.dumps(self.summary(), sort_keys=True, indent=2) + "\n")
        save_matrix_csv(out / f"{prefix}S.csv", self.S)
        save_matrix_csv(out / f"{prefix}L.csv", self.L)


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def soft_threshold(M: np.ndarray, alpha: float) -> np.ndarray:
    """Entrywise ``sign(M) * max(|M| - alpha, 0)``."""
    M = np.asarray(M, dtype=float)
    return np.sign(M) * np.maximum(np.abs(M) - alpha, 0.0)


def estimate_rank(cov, tau_rank: float) -> int:
    """Number of covariance eigenvalues above ``tau_rank * lambda_max``."""
    C = cov.matrix if isinstance(cov, CovarianceEstimate) else np.asarray(cov, dtype=float)
    ev = np.linalg.eigvalsh(_sym(C))
    if not np.all(np.isfinite(ev)):
        raise SolverError("non-finite covariance eigenvalues")
    return int(np.sum(ev > tau_rank * ev.max()))


def theta_update(cov: np.ndarray, S, L, Y, mu: float) -> np.ndarray:
    """Cheap update ``(C + mu (S - L - Y))^{-1}``.

    Raises ``np.linalg.LinAlgError`` when the symmetrized argument is not
    positive definite; callers fall back to :func:`theta_update_exact`.
    """
    A = _sym(np.asarray(cov) + mu * (S - L - Y))
    c = np.linalg.cholesky(A)
    ci = np.linalg.inv(c)
    return _sym(ci.T @ ci)


def theta_prox_eigenvalues(lam: np.ndarray, mu: float) -> np.ndarray:
    return (lam + np.sqrt(lam**2 + 4.0 * mu)) / (2.0 * mu)


def theta_update_exact(cov: np.ndarray, S, L, Y, mu: float) -> np.ndarray:
    """Exact minimizer of ``-logdet T + tr(T C) + mu/2 ||T - (S - L - Y)||^2``."""
    lam, Q = np.linalg.eigh(_sym(mu * (S - L - Y) - np.asarray(cov)))
    return _sym((Q * theta_prox_eigenvalues(lam, mu)) @ Q.T)


def l_update(residual: np.ndarray, lambda_l: float, mu: float, r_star: int) -> np.ndarray:
    """Rank-truncated eigenvalue shrinkage onto the PSD cone.

    Keeps the ``r_star`` largest eigenvalues of the symmetrized residual, shrinks
    them by ``lambda_l / mu`` and clamps at zero.
    """
    R = _sym(np.asarray(residual, dtype=float))
    if r_star <= 0 or not np.any(R):
        return np.zeros_like(R)
    try:
        lam, U = np.linalg.eigh(R)
    except np.linalg.LinAlgError as exc:
        raise SolverError("eigendecomposition failed in L-update") from exc
    top = np.argsort(lam)[::-1][:r_star]
    s = np.maximum(lam[top] - lambda_l / mu, 0.0)
    keep = s > 0
    if not keep.any():
        return np.zeros_like(R)
    Uk = U[:, top[keep]]
    return _sym((Uk * s[keep]) @ Uk.T)


def objective(S: np.ndarray, L: np.ndarray, cov, lambda_s: float, lambda_l: float) -> float:
    """Penalized negative log-likelihood; ``inf`` outside ``S - L > 0``."""
    C = cov.matrix if isinstance(cov, CovarianceEstimate) else np.asarray(cov)
    sign, logdet = np.linalg.slogdet(S - L)
    if sign <= 0:
        return np.inf
    nuc = np.abs(np.linalg.eigvalsh(_sym(L))).sum()
    return float(-logdet + np.sum((S - L) * C) + lambda_s * np.abs(S).sum() + lambda_l * nuc)


def is_singular(cov: np.ndarray, rcond: float = 1e-10) -> bool:
    ev = np.linalg.eigvalsh(_sym(cov))
    return bool(ev.min() <= rcond * max(ev.max(), np.finfo(float).tiny))


def initial_precision(cov: np.ndarray, ridge: float | None) -> tuple[np.ndarray, float]:
    """Inverse covariance used as the starting sparse part, and the ridge applied."""
    d = cov.shape[0]
    eps = 0.0
    if is_singular(cov):
        if ridge == 0.0:
            raise SolverError("empirical covariance is singular and ridge is disabled", d=d)
        eps = 1e-4 * np.trace(cov) / d if ridge is None else float(ridge)
        if eps <= 0:
            raise SolverError("covariance is singular with zero trace", d=d)
    elif ridge:
        eps = float(ridge)
    try:
        P = np.linalg.inv(cov + eps * np.eye(d))
    except np.linalg.LinAlgError as exc:
        raise SolverError("cannot invert regularized covariance", ridge=eps) from exc
    return _sym(P), eps


def solve(cov, cfg: AdmmConfig | None = None) -> PrecisionDecomposition:
    """Run the decomposition ADMM until the residuals meet tolerance or ``max_iter``."""
    cfg = cfg or AdmmConfig()
    C = cov.matrix if isinstance(cov, CovarianceEstimate) else np.asarray(cov, dtype=float)
    C = _sym(C)
    d = C.shape[0]
    if C.shape != (d, d):
        raise ValueError("covariance must be square")
    if np.any(np.diag(C) < 0) or not np.all(np.isfinite(C)):
        raise ValueError("covariance must be finite with a non-negative diagonal")

    S0, eps = initial_precision(C, cfg.ridge)
    if cfg.mode == "alvgl":
        r_star = estimate_rank(C, cfg.tau_rank)
    elif cfg.mode == "lvgl":
        r_star = d
    else:
        r_star = 0
    exact = cfg.theta_update == "exact" or cfg.mode != "alvgl"

    st = AdmmState(Theta=S0.copy(), S=S0, L=np.zeros((d, d)), Y=np.zeros((d, d)), mu=cfg.mu0)
    history = []
    fallbacks = 0
    converged = False
    for it in range(1, cfg.max_iter + 1):
        st.iteration = it
        try:
            if exact:
                st.Theta = theta_update_exact(C, st.S, st.L, st.Y, st.mu)
            else:
                try:
                    st.Theta = theta_update(C, st.S, st.L, st.Y, st.mu)
                except np.linalg.LinAlgError:
                    fallbacks += 1
                    st.Theta = theta_update_exact(C, st.S, st.L, st.Y, st.mu)
        except np.linalg.LinAlgError as exc:
            raise SolverError("Theta-update failed", iteration=it, mu=st.mu) from exc

        prev = st.S - st.L
        st.S = soft_threshold(st.Theta + st.L + st.Y, cfg.lambda_s / st.mu)
        if r_star > 0:
            # prox of the nuclear norm at S - Theta - Y (sign fixed by the penalty term)
            st.L = l_update(st.S - st.Theta - st.Y, cfg.lambda_l, st.mu, r_star)
        st.Y = st.Y + st.Theta - st.S + st.L

        st.primal_residual = float(np.linalg.norm(st.Theta - st.S + st.L))
        st.dual_residual = float(st.mu * np.linalg.norm(st.S - st.L - prev))
        if not (np.isfinite(st.primal_residual) and np.isfinite(st.dual_residual)):
            raise SolverError("non-finite residual", iteration=it, mu=st.mu)
        if cfg.record_history:
            history.append((it, st.primal_residual, st.dual_residual, st.mu))

        tol_p = cfg.eps_primal * max(1.0, np.linalg.norm(st.Theta))
        tol_d = cfg.eps_dual * max(1.0, st.mu * np.linalg.norm(st.Y))
        if st.primal_residual <= tol_p and st.dual_residual <= tol_d:
            converged = True
            break

        if st.primal_residual > cfg.balance_ratio * st.dual_residual:
            st.mu *= cfg.balance_factor
            st.Y /= cfg.balance_factor
        elif st.dual_residual > cfg.balance_ratio * st.primal_residual:
            st.mu /= cfg.balance_factor
            st.Y *= cfg.balance_factor

    try:
        np.linalg.cholesky(st.S - st.L)
        feasible = True
    except np.linalg.LinAlgError:
        feasible = False
    if not converged:
        log.info("ADMM stopped after %d iterations (primal %.3g, dual %.3g)",
                 st.iteration, st.primal_residual, st.dual_residual)
    return PrecisionDecomposition(
        S=st.S,
        L=st.L,
        converged=converged,
        iterations=st.iteration,
        primal_residual=st.primal_residual,
        dual_residual=st.dual_residual,
        r_star=r_star,
        mode=cfg.mode,
        ridge=eps,
        feasible=feasible,
        theta_fallbacks=fallbacks,
        mu=st.mu,
        history=history,
    )


def rate_scaled_lambda(d: int, n: int, base: float = 0.05, ref_d: int = 50, ref_n: int = 1000) -> float:
    """``base`` rescaled by the sampling rate ``sqrt(log d / n)``.

    Equal to ``base`` at ``(ref_d, ref_n)``. A fixed penalty leaves a shrinkage
    bias that does not vanish as n grows; scaling with the rate lets the
    estimate settle on the true conditional-independence graph for large n.
    """
    if d < 2 or n < 1:
        raise ValueError("need d >= 2 and n >= 1")
    return base * np.sqrt(np.log(d) / n) / np.sqrt(np.log(ref_d) / ref_n)


def config_to_dict(cfg: AdmmConfig) -> dict:
    return asdict(cfg)
