"""Multi-output support vector regression trained by iteratively re-weighted least squares.

The model predicts ``K(x, X_train) @ B + b`` and is fitted in dual form on

    0.5 ||Theta||_F^2 + kappa * sum_i (u_i - eps)_+^2 - nu * tr(D^T Phi^T Theta)

where ``u_i`` is the Euclidean norm of the i-th residual row. The bias is an
always-on feature, i.e. the Gram matrix is augmented with a constant 1, so the
closed-form IRWLS solve needs no separate bias equation.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Union

import numpy as np
import scipy.linalg

from .dataset import LdlDataset
from .errors import (BandwidthError, NotConvergedWarning, ShapeMismatch, SingularSystem,
                     ValidationError)
from .graph import pairwise_sq_dists

log = logging.getLogger(__name__)

MEDIAN_HEURISTIC = "median-heuristic"
KERNELS = ("linear", "rbf")


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    bandwidth: Union[float, str] = MEDIAN_HEURISTIC

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ValidationError(f"unknown kernel {self.kind!r}; expected one of {KERNELS}")
        if self.bandwidth != MEDIAN_HEURISTIC:
            try:
                bw = float(self.bandwidth)
            except (TypeError, ValueError):
                raise BandwidthError(f"bandwidth must be positive or {MEDIAN_HEURISTIC!r}") from None
            if not bw > 0 or not np.isfinite(bw):
                raise BandwidthError(f"bandwidth must be positive, got {self.bandwidth}")
            object.__setattr__(self, "bandwidth", bw)

    def resolve(self, features: np.ndarray) -> "KernelSpec":
        """Fix a median-heuristic bandwidth against the training features."""
        if self.kind != "rbf" or self.bandwidth != MEDIAN_HEURISTIC:
            return self
        return replace(self, bandwidth=median_heuristic(features))


def median_heuristic(features: np.ndarray) -> float:
    """Median pairwise Euclidean distance between distinct training rows."""
    x = np.asarray(features, dtype=float)
    if x.shape[0] < 2:
        return 1.0
    d = np.sqrt(pairwise_sq_dists(x)[np.triu_indices(x.shape[0], k=1)])
    med = float(np.median(d))
    return med if med > 0 else 1.0


def kernel_matrix(a: np.ndarray, b: np.ndarray, spec: KernelSpec) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ShapeMismatch(f"feature widths differ: {a.shape[1]} vs {b.shape[1]}")
    if spec.kind == "linear":
        return a @ b.T
    if spec.bandwidth == MEDIAN_HEURISTIC:
        raise BandwidthError("resolve the median-heuristic bandwidth before building a kernel")
    sigma = float(spec.bandwidth)
    sq = (np.einsum("ij,ij->i", a, a)[:, None] + np.einsum("ij,ij->i", b, b)[None, :]
          - 2.0 * (a @ b.T))
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * sigma * sigma))


@dataclass(frozen=True)
class MsvrConfig:
    kappa: float = 1.0
    nu: float = 0.1
    epsilon: float = 1e-3
    max_iters: int = 100
    tol: float = 1e-6
    line_search_min_step: float = 1e-8

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValidationError(f"kappa must be positive, got {self.kappa}")
        if not self.nu >= 0:
            raise ValidationError(f"nu must be >= 0, got {self.nu}")
        if not self.epsilon >= 0:
            raise ValidationError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")


@dataclass(frozen=True)
class MsvrModel:
    kernel: KernelSpec
    support_features: np.ndarray
    dual_coefficients: np.ndarray
    bias: np.ndarray
    training_objective: float
    config: MsvrConfig = field(default_factory=MsvrConfig)

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.kind,
            "bandwidth": self.kernel.bandwidth if self.kernel.kind == "rbf" else None,
            "bias": self.bias.tolist(),
            "dual_coefficients": self.dual_coefficients.tolist(),
            "support_features": self.support_features.tolist(),
            "training_objective": self.training_objective,
            "config": asdict(self.config),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MsvrModel":
        kind = doc["kernel"]
        kernel = KernelSpec(kind, doc["bandwidth"]) if kind == "rbf" else KernelSpec(kind)
        return cls(kernel,
                   np.asarray(doc["support_features"], dtype=float),
                   np.asarray(doc["dual_coefficients"], dtype=float),
                   np.asarray(doc["bias"], dtype=float),
                   float(doc.get("training_objective", float("nan"))),
                   MsvrConfig(**doc.get("config", {})))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "MsvrModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class IrwlsDiagnostics:
    objective_history: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def compute_weights(residual_norms, epsilon: float) -> np.ndarray:
    """IRWLS weights: 0 inside the insensitive zone, ``2 (u - eps) / u`` outside.

    With ``eps == 0`` a zero residual gets the limit value 2.
    """
    u = np.asarray(residual_norms, dtype=float)
    if np.any(u < 0):
        raise ValidationError("residual norms must be nonnegative")
    xi = np.zeros_like(u)
    out = u >= epsilon
    if epsilon == 0:
        xi[:] = 2.0
        pos = u > 0
        xi[pos] = 2.0 * (u[pos] - epsilon) / u[pos]
        return xi
    xi[out] = 2.0 * (u[out] - epsilon) / u[out]
    return xi


def irwls_step(k: np.ndarray, targets: np.ndarray, weights, config: MsvrConfig) -> np.ndarray:
    """Minimizer of the weighted quadratic surrogate, in dual coefficients.

    Solves ``(kappa H K + I) B = (kappa H + nu I) D`` with ``H = diag(weights)``.
    """
    k = np.asarray(k, dtype=float)
    targets = np.asarray(targets, dtype=float)
    h = np.asarray(weights, dtype=float)
    n = k.shape[0]
    if k.shape != (n, n) or targets.shape[0] != n or h.shape != (n,):
        raise ShapeMismatch("gram matrix, targets and weights disagree on n")
    lhs = config.kappa * h[:, None] * k + np.eye(n)
    rhs = (config.kappa * h + config.nu)[:, None] * targets
    try:
        return scipy.linalg.solve(lhs, rhs, check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
        raise SingularSystem(str(exc)) from exc


def _residual_norms(k, b, targets):
    return np.linalg.norm(targets - k @ b, axis=1)


def objective(k: np.ndarray, b: np.ndarray, targets: np.ndarray, config: MsvrConfig) -> float:
    """Primal training objective evaluated through the Gram matrix."""
    kb = k @ b
    u = np.linalg.norm(targets - kb, axis=1)
    loss = np.square(np.maximum(u - config.epsilon, 0.0)).sum()
    reg = 0.5 * np.sum(b * kb)
    return float(reg + config.kappa * loss - config.nu * np.sum(targets * kb))


def stationarity_residual(k: np.ndarray, b: np.ndarray, targets: np.ndarray,
                          config: MsvrConfig) -> float:
    """Norm of the dual gradient ``B + kappa H (K B - D) - nu D``, relative to ``||B||``."""
    u = _residual_norms(k, b, targets)
    xi = compute_weights(u, config.epsilon)
    grad = b + config.kappa * xi[:, None] * (k @ b - targets) - config.nu * targets
    scale = max(np.linalg.norm(b), np.finfo(float).tiny)
    return float(np.linalg.norm(grad) / scale)


def augmented_gram(features: np.ndarray, kernel: KernelSpec) -> np.ndarray:
    return kernel_matrix(features, features, kernel) + 1.0


def fit_arrays(features, targets, config: MsvrConfig | None = None,
               kernel: KernelSpec | None = None) -> tuple[MsvrModel, IrwlsDiagnostics]:
    """Fit on raw arrays; ``targets`` need not be label distributions."""
    config = config or MsvrConfig()
    kernel = (kernel or KernelSpec()).resolve(features)
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ShapeMismatch(f"features {x.shape} and targets {y.shape} disagree")
    k = augmented_gram(x, kernel)
    b = np.zeros_like(y)
    f = objective(k, b, y, config)
    diag = IrwlsDiagnostics([f])
    for _ in range(config.max_iters):
        xi = compute_weights(_residual_norms(k, b, y), config.epsilon)
        candidate = irwls_step(k, y, xi, config)
        direction = candidate - b
        t = 1.0
        accepted = None
        while t >= config.line_search_min_step:
            trial = b + t * direction
            f_trial = objective(k, trial, y, config)
            if f_trial <= f:
                accepted = (trial, f_trial)
                break
            t *= 0.5
        diag.iterations += 1
        if accepted is None:
            log.debug("IRWLS line search found no descent step; stopping")
            break
        b, f_new = accepted
        diag.step_sizes.append(t)
        diag.objective_history.append(f_new)
        done = abs(f - f_new) <= config.tol * max(1.0, abs(f))
        f = f_new
        if done:
            diag.converged = True
            break
    if not diag.converged:
        warnings.warn(f"IRWLS stopped after {diag.iterations} iterations without meeting tol",
                      NotConvergedWarning)
    model = MsvrModel(kernel, x.copy(), b, b.sum(axis=0), f, config)
    return model, diag


def fit(train: LdlDataset, config: MsvrConfig | None = None,
        kernel: KernelSpec | None = None) -> tuple[MsvrModel, IrwlsDiagnostics]:
    return fit_arrays(train.features, train.labels, config, kernel)


def raw_predict(model: MsvrModel, features) -> np.ndarray:
    q = np.atleast_2d(np.asarray(features, dtype=float))
    if q.shape[1] != model.support_features.shape[1]:
        raise ShapeMismatch(f"query has {q.shape[1]} features, model expects "
                            f"{model.support_features.shape[1]}")
    return kernel_matrix(q, model.support_features, model.kernel) @ model.dual_coefficients + model.bias


def normalize_rows(raw) -> np.ndarray:
    """Clamp at zero and rescale rows to sum to one; rows with no mass become uniform."""
    rows = np.maximum(np.atleast_2d(np.asarray(raw, dtype=float)), 0.0)
    sums = rows.sum(axis=1, keepdims=True)
    return np.divide(rows, sums, out=np.full_like(rows, 1.0 / rows.shape[1]), where=sums > 0)


def predict(model: MsvrModel, features) -> np.ndarray:
    return normalize_rows(raw_predict(model, features))
