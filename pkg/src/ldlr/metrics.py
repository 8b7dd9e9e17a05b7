"""Label-distribution distance/similarity measures and rank-based significance tests."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateRanks, InvalidDistribution, LengthMismatch, ValidationError

MEASURES = ("chebyshev", "clark", "canberra", "kl", "cosine", "intersection", "sorensen")
HIGHER_IS_BETTER = {"chebyshev": False, "clark": False, "canberra": False, "kl": False,
                    "cosine": True, "intersection": True, "sorensen": False}
KL_FLOOR = 1e-12
SIMPLEX_TOL = 1e-6


def _check_pair(truth, pred):
    t = np.atleast_2d(np.asarray(truth, dtype=float))
    p = np.atleast_2d(np.asarray(pred, dtype=float))
    if t.shape != p.shape:
        raise LengthMismatch(f"truth {t.shape} and prediction {p.shape} differ")
    for name, a in (("truth", t), ("prediction", p)):
        if np.any(a < -SIMPLEX_TOL) or np.any(np.abs(a.sum(axis=1) - 1.0) > SIMPLEX_TOL):
            raise InvalidDistribution(f"{name} rows are not label distributions")
    return t, p


def _ratio(num, den):
    # 0/0 terms (both degrees zero) contribute nothing
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def _scores(t: np.ndarray, p: np.ndarray) -> dict:
    diff = t - p
    tot = t + p
    lp = np.log(np.maximum(p, KL_FLOOR))
    lt = np.log(np.where(t > 0, t, 1.0))
    norm = np.linalg.norm(t, axis=1) * np.linalg.norm(p, axis=1)
    return {
        "chebyshev": np.max(np.abs(diff), axis=1),
        "clark": np.sqrt(np.sum(_ratio(diff ** 2, tot ** 2), axis=1)),
        "canberra": np.sum(_ratio(np.abs(diff), tot), axis=1),
        "kl": np.sum(np.where(t > 0, t * (lt - lp), 0.0), axis=1),
        "cosine": _ratio(np.sum(t * p, axis=1), norm),
        "intersection": np.sum(np.minimum(t, p), axis=1),
        "sorensen": _ratio(np.sum(np.abs(diff), axis=1), np.sum(tot, axis=1)),
    }


def score(truth, pred, measure: str) -> float:
    if measure not in MEASURES:
        raise ValidationError(f"unknown measure {measure!r}")
    t, p = _check_pair(np.ravel(truth)[None, :], np.ravel(pred)[None, :])
    return float(_scores(t, p)[measure][0])


@dataclass
class MetricReport:
    chebyshev: float
    clark: float
    canberra: float
    kl: float
    cosine: float
    intersection: float
    sorensen: float
    stds: dict = field(default_factory=dict)
    per_instance: Optional[np.ndarray] = None
    warnings: list = field(default_factory=list)

    def means(self) -> dict:
        return {m: getattr(self, m) for m in MEASURES}

    def to_dict(self, per_instance: bool = False) -> dict:
        doc = {"means": self.means(), "stds": dict(self.stds)}
        if self.warnings:
            doc["warnings"] = list(self.warnings)
        if per_instance and self.per_instance is not None:
            doc["per_instance"] = self.per_instance.tolist()
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def summary_lines(self) -> list:
        return [f"{m} {getattr(self, m):.6g}" for m in MEASURES]


def report(truth, pred) -> MetricReport:
    t, p = _check_pair(truth, pred)
    s = _scores(t, p)
    per = np.column_stack([s[m] for m in MEASURES])
    means = per.mean(axis=0)
    stds = per.std(axis=0)
    return MetricReport(*map(float, means), stds=dict(zip(MEASURES, map(float, stds))),
                        per_instance=per)


# ---------------------------------------------------------------- ranking

@dataclass
class RankTable:
    algorithms: list
    datasets: list
    ranks: np.ndarray

    @property
    def average_ranks(self) -> np.ndarray:
        return self.ranks.mean(axis=0)

    def to_csv_rows(self) -> list:
        rows = [["dataset", *self.algorithms]]
        for name, r in zip(self.datasets, self.ranks):
            rows.append([name, *(repr(float(v)) for v in r)])
        rows.append(["average", *(repr(float(v)) for v in self.average_ranks)])
        return rows


def average_ranks(scores, higher_is_better: bool = False,
                  algorithms: Sequence[str] | None = None,
                  datasets: Sequence[str] | None = None) -> RankTable:
    """Rank algorithms (columns) within each dataset (row); rank 1 is best, ties averaged."""
    s = np.atleast_2d(np.asarray(scores, dtype=float))
    if np.any(~np.isfinite(s)):
        raise ValidationError("score table has missing or non-finite entries")
    n, k = s.shape
    ranks = rankdata(-s if higher_is_better else s, axis=1)
    return RankTable(list(algorithms or [f"A{j + 1}" for j in range(k)]),
                     list(datasets or [f"D{i + 1}" for i in range(n)]), ranks)


def friedman_from_average_ranks(avg_ranks, n: int) -> tuple[float, float]:
    r = np.asarray(avg_ranks, dtype=float)
    k = r.size
    if k < 3 or n < 2:
        raise ValidationError(f"Friedman test needs K >= 3 and N >= 2, got K={k}, N={n}")
    chi2 = 12.0 * n / (k * (k + 1)) * (np.sum(r ** 2) - k * (k + 1) ** 2 / 4.0)
    denom = n * (k - 1) - chi2
    if abs(denom) <= 1e-12 * n * k:
        raise DegenerateRanks("rankings are perfectly consistent; F_F is undefined")
    return float(chi2), float((n - 1) * chi2 / denom)


def friedman(ranks: RankTable) -> tuple[float, float]:
    """Friedman chi-square and the Iman-Davenport F statistic."""
    return friedman_from_average_ranks(ranks.average_ranks, ranks.ranks.shape[0])


def critical_difference(q_alpha: float, k: int, n: int) -> float:
    """Nemenyi / Bonferroni-Dunn critical difference ``q * sqrt(k (k + 1) / (6 n))``."""
    if not q_alpha > 0 or k < 2 or n < 1:
        raise ValidationError("need q_alpha > 0, k >= 2, n >= 1")
    return float(q_alpha * np.sqrt(k * (k + 1) / (6.0 * n)))
