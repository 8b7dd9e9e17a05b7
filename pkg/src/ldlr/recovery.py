"""Graph-regularized low-rank plus sparse decomposition of a noisy label matrix.

Solves

    min  ||D~||_* + alpha ||E||_1 + beta tr(D~^T L D~)   s.t.  D = D~ + E

with a linearized-penalty ADMM that splits D~ = Z so that every subproblem has
a closed form: singular value thresholding for Z, a symmetric positive definite
solve for D~ and soft-thresholding for E.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NotConvergedWarning, ShapeMismatch, SingularSystem, SvdFailure, ValidationError
from .graph import GraphLaplacian

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RecoveryConfig:
    alpha: float = 0.05
    beta: float = 0.05
    mu0: float = 1e-2
    mu_max: float = 1e10
    rho: float = 1.1
    tol: float = 1e-7
    max_iters: int = 500

    def __post_init__(self):
        for name in ("alpha", "beta", "mu0", "mu_max", "tol"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.rho > 1:
            raise ValidationError(f"rho must exceed 1, got {self.rho}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValidationError("max_iters must be a positive integer")


@dataclass
class AdmmState:
    d_tilde: np.ndarray
    error: np.ndarray
    z: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray
    mu: float
    iteration: int = 0

    @classmethod
    def initial(cls, d: np.ndarray, mu0: float) -> "AdmmState":
        zeros = np.zeros_like(d)
        return cls(d.copy(), zeros.copy(), d.copy(), zeros.copy(), zeros.copy(), mu0)


@dataclass(frozen=True)
class RecoveryResult:
    d_tilde: np.ndarray
    error: np.ndarray
    residual_history: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    z: np.ndarray | None = None

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("nan")


def soft_threshold(x, omega: float) -> np.ndarray:
    """Elementwise shrinkage ``sign(x) * max(|x| - omega, 0)``."""
    if omega < 0:
        raise ValidationError(f"threshold must be >= 0, got {omega}")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - omega, 0.0)


def svt(x, tau: float) -> np.ndarray:
    """Singular value thresholding, the proximal map of ``tau * ||.||_*``."""
    if tau < 0:
        raise ValidationError(f"threshold must be >= 0, got {tau}")
    x = np.asarray(x, dtype=float)
    try:
        u, s, vt = np.linalg.svd(x, full_matrices=False)
    except np.linalg.LinAlgError:
        try:
            u, s, vt = scipy.linalg.svd(x, full_matrices=False, lapack_driver="gesvd")
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SvdFailure(str(exc)) from exc
    s = np.maximum(s - tau, 0.0)
    keep = s > 0
    return (u[:, keep] * s[keep]) @ vt[keep]


def update_d_tilde(state: AdmmState, d: np.ndarray, laplacian: GraphLaplacian,
                   beta: float) -> np.ndarray:
    """Solve ``(2 beta L + 2 mu I) D~ = mu (psi1 + psi2)``.

    ``psi1 = Z - Gamma2/mu`` and ``psi2 = D - E - Gamma1/mu``.
    """
    mu = state.mu
    psi1 = state.z - state.gamma2 / mu
    psi2 = d - state.error - state.gamma1 / mu
    rhs = mu * (psi1 + psi2)
    n = d.shape[0]
    if beta == 0 or not np.any(laplacian.laplacian):
        return rhs / (2.0 * mu)
    system = 2.0 * beta * laplacian.laplacian + 2.0 * mu * np.eye(n)
    try:
        factor = scipy.linalg.cho_factor(system, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("graph system is not positive definite") from exc
    return scipy.linalg.cho_solve(factor, rhs, check_finite=False)


def _residuals(state: AdmmState, d: np.ndarray) -> tuple[float, float]:
    r1 = np.max(np.abs(state.d_tilde + state.error - d), initial=0.0)
    r2 = np.max(np.abs(state.d_tilde - state.z), initial=0.0)
    return float(r1), float(r2)


def admm_step(state: AdmmState, d: np.ndarray, laplacian: GraphLaplacian,
              config: RecoveryConfig) -> AdmmState:
    """One sweep: D~, then E and Z from the new D~, then multipliers and mu."""
    mu = state.mu
    d_tilde = update_d_tilde(state, d, laplacian, config.beta)
    # multiplier enters with a minus sign, consistent with the update of Gamma1 below
    error = soft_threshold(d - d_tilde - state.gamma1 / mu, config.alpha / mu)
    z = svt(d_tilde + state.gamma2 / mu, 1.0 / mu)
    gamma1 = state.gamma1 + mu * (d_tilde + error - d)
    gamma2 = state.gamma2 + mu * (d_tilde - z)
    return AdmmState(d_tilde, error, z, gamma1, gamma2,
                     min(config.rho * mu, config.mu_max), state.iteration + 1)


def recover(d, laplacian: GraphLaplacian, config: RecoveryConfig | None = None,
            callback=None) -> RecoveryResult:
    """Decompose ``d`` into a low-rank recovered matrix and a sparse error.

    Stops once ``max(|D~ + E - D|_inf, |D~ - Z|_inf) <= tol``; a run that hits
    ``max_iters`` is returned with ``converged=False`` and a warning.
    """
    config = config or RecoveryConfig()
    d = np.asarray(d, dtype=float)
    if d.ndim != 2:
        raise ShapeMismatch(f"label matrix must be 2-D, got shape {d.shape}")
    if laplacian.n != d.shape[0]:
        raise ShapeMismatch(f"Laplacian is {laplacian.n}x{laplacian.n}, labels have {d.shape[0]} rows")

    state = AdmmState.initial(d, config.mu0)
    history = []
    converged = False
    for _ in range(config.max_iters):
        state = admm_step(state, d, laplacian, config)
        res = max(_residuals(state, d))
        history.append(res)
        if callback is not None:
            callback(state)
        if res <= config.tol:
            converged = True
            break
    log.debug("recover: %d iterations, residual %.3e", state.iteration, history[-1])
    if not converged:
        warnings.warn(f"ADMM stopped after {config.max_iters} iterations with residual "
                      f"{history[-1]:.3e} > tol {config.tol:.1e}", NotConvergedWarning)
    return RecoveryResult(state.d_tilde, state.error, history, converged, state.iteration, state.z)


def as_label_rows(d_tilde: np.ndarray) -> np.ndarray:
    """Clamp at zero and renormalize recovered rows so they can serve as labels.

    A row with no positive mass falls back to the uniform distribution.
    """
    rows = np.maximum(np.asarray(d_tilde, dtype=float), 0.0)
    sums = rows.sum(axis=1, keepdims=True)
    m = rows.shape[1]
    out = np.divide(rows, sums, out=np.full_like(rows, 1.0 / m), where=sums > 0)
    return out
