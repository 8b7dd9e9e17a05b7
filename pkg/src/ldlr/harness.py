"""Experiment protocol: corrupt, learn graph, recover, train, predict, score.

Every repetition ``r`` splits with seed ``seed + r`` and draws label noise with
seed ``noise.seed + r``. Only training labels are corrupted; scores are always
taken against clean held-out labels.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import (LdlDataset, NoiseSpec, SynthSpec, corrupt, load_dataset, split_indices,
                      synthesize)
from .errors import NotConvergedWarning, UnknownParameter, ValidationError
from .graph import laplacian, learn_affinity
from .metrics import (HIGHER_IS_BETTER, MEASURES, MetricReport, RankTable, average_ranks,
                      critical_difference, friedman, report)
from .msvr import KernelSpec, MsvrConfig, MsvrModel, fit, predict
from .recovery import RecoveryConfig, as_label_rows, recover

log = logging.getLogger(__name__)

ARMS = ("ground_truth_trained", "recovered_trained", "noisy_trained")
SWEEP_PARAMETERS = {"alpha": "recovery", "beta": "recovery", "gamma": None,
                    "kappa": "msvr", "nu": "msvr"}


@dataclass(frozen=True)
class ExperimentConfig:
    features_path: Optional[str] = None
    labels_path: Optional[str] = None
    synth: Optional[SynthSpec] = None
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    gamma: float = 1.0
    recovery: RecoveryConfig = field(default_factory=RecoveryConfig)
    msvr: MsvrConfig = field(default_factory=MsvrConfig)
    kernel: KernelSpec = field(default_factory=KernelSpec)
    train_fraction: float = 0.8
    seed: int = 0
    repetitions: int = 10

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValidationError("repetitions must be >= 1")
        if self.synth is None and (self.features_path is None or self.labels_path is None):
            raise ValidationError("give either synth or both features_path and labels_path")
        if not self.gamma > 0:
            raise ValidationError("gamma must be positive")
        if not 0 < self.train_fraction < 1:
            raise ValidationError("train_fraction must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown config fields: {sorted(unknown)}")
        doc = dict(doc)
        nested = {"synth": SynthSpec, "noise": NoiseSpec, "recovery": RecoveryConfig,
                  "msvr": MsvrConfig, "kernel": KernelSpec}
        for name, typ in nested.items():
            if doc.get(name) is not None:
                try:
                    doc[name] = typ(**doc[name])
                except TypeError as exc:
                    raise ValidationError(f"bad {name} section: {exc}") from None
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None

    def with_parameter(self, name: str, value) -> "ExperimentConfig":
        if name not in SWEEP_PARAMETERS:
            raise UnknownParameter(f"cannot sweep {name!r}; choose from {sorted(SWEEP_PARAMETERS)}")
        section = SWEEP_PARAMETERS[name]
        if section is None:
            return replace(self, **{name: value})
        return replace(self, **{section: replace(getattr(self, section), **{name: value})})


@dataclass
class Repetition:
    """Inputs of one repetition, with the training arms' label matrices."""

    index: int
    train_clean: LdlDataset
    train_noisy: LdlDataset
    test: LdlDataset
    recovered_labels: Optional[np.ndarray] = None
    recovery_converged: bool = True


def _digest(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a, dtype=float).tobytes()).hexdigest()[:16]


def load_source(config: ExperimentConfig) -> tuple[LdlDataset, LdlDataset]:
    """Return (clean, pre-corrupted) datasets; the second differs only for synthetic data."""
    if config.synth is not None:
        data = synthesize(config.synth)
        return data.clean, data.corrupted
    clean = load_dataset(config.features_path, config.labels_path)
    return clean, clean


def prepare(config: ExperimentConfig, clean: LdlDataset, source_noisy: LdlDataset,
            rep: int) -> Repetition:
    train_idx, test_idx = split_indices(clean.n, config.train_fraction, config.seed + rep)
    noise = replace(config.noise, seed=config.noise.seed + rep)
    train_noisy = corrupt(source_noisy.subset(train_idx), noise)
    return Repetition(rep, clean.subset(train_idx), train_noisy, clean.subset(test_idx))


def recover_labels(train_noisy: LdlDataset, config: ExperimentConfig) -> tuple[np.ndarray, bool]:
    """Learn the graph on training features and recover the training label matrix."""
    graph = learn_affinity(train_noisy.features, config.gamma)
    result = recover(train_noisy.labels, laplacian(graph), config.recovery)
    return as_label_rows(result.d_tilde), result.converged


def train_arm(features: np.ndarray, labels: np.ndarray, config: ExperimentConfig) -> MsvrModel:
    model, _ = fit(LdlDataset(features, labels), config.msvr, config.kernel)
    return model


def _score(model: MsvrModel, test: LdlDataset) -> MetricReport:
    return report(test.labels, predict(model, test.features))


def _aggregate(reports: list, notes: list) -> MetricReport:
    if len(reports) == 1:
        out = reports[0]
        out.warnings = list(notes)
        return out
    table = np.array([[r.means()[m] for m in MEASURES] for r in reports])
    means = table.mean(axis=0)
    stds = table.std(axis=0)
    return MetricReport(*map(float, means), stds=dict(zip(MEASURES, map(float, stds))),
                        per_instance=None, warnings=list(notes))


def _run_rep(config: ExperimentConfig, clean, source_noisy, rep: int, arms, notes: list):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NotConvergedWarning)
        r = prepare(config, clean, source_noisy, rep)
        out = {}
        if "recovered_trained" in arms:
            labels, ok = recover_labels(r.train_noisy, config)
            r.recovered_labels, r.recovery_converged = labels, ok
            out["recovered_trained"] = _score(train_arm(r.train_noisy.features, labels, config), r.test)
        if "ground_truth_trained" in arms:
            out["ground_truth_trained"] = _score(
                train_arm(r.train_clean.features, r.train_clean.labels, config), r.test)
        if "noisy_trained" in arms:
            out["noisy_trained"] = _score(
                train_arm(r.train_noisy.features, r.train_noisy.labels, config), r.test)
    for w in caught:
        if issubclass(w.category, NotConvergedWarning):
            notes.append(f"repetition {rep}: {w.message}")
        else:
            warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    return r, out


def run_pipeline(config: ExperimentConfig) -> MetricReport:
    """Recovered-label pipeline, averaged over repetitions."""
    clean, source_noisy = load_source(config)
    notes: list = []
    reports = [_run_rep(config, clean, source_noisy, rep, ("recovered_trained",), notes)[1]
               ["recovered_trained"] for rep in range(config.repetitions)]
    return _aggregate(reports, notes)


@dataclass
class ComparisonReport:
    ground_truth_trained: MetricReport
    recovered_trained: MetricReport
    noisy_trained: MetricReport
    # repetitions x measures x arms, arms ordered as ARMS
    raw_scores: np.ndarray
    provenance: list = field(default_factory=list)

    def arm(self, name: str) -> MetricReport:
        return getattr(self, name)

    def to_dict(self) -> dict:
        return {
            "arms": {a: self.arm(a).to_dict() for a in ARMS},
            "measures": list(MEASURES),
            "arm_order": list(ARMS),
            "raw_scores": self.raw_scores.tolist(),
            "provenance": self.provenance,
        }

    def rank_tables(self) -> dict:
        """Per measure, rank the three arms within each repetition."""
        out = {}
        names = [f"rep{r}" for r in range(self.raw_scores.shape[0])]
        for j, m in enumerate(MEASURES):
            out[m] = average_ranks(self.raw_scores[:, j, :], HIGHER_IS_BETTER[m], list(ARMS), names)
        return out


def compare_arms(config: ExperimentConfig) -> ComparisonReport:
    """Train on clean, recovered and noisy labels with identical splits and noise draws."""
    clean, source_noisy = load_source(config)
    notes: list = []
    per_arm = {a: [] for a in ARMS}
    raw = np.empty((config.repetitions, len(MEASURES), len(ARMS)))
    provenance = []
    for rep in range(config.repetitions):
        r, out = _run_rep(config, clean, source_noisy, rep, ARMS, notes)
        for k, a in enumerate(ARMS):
            per_arm[a].append(out[a])
            raw[rep, :, k] = [out[a].means()[m] for m in MEASURES]
        provenance.append({
            "repetition": rep,
            "test_labels": _digest(r.test.labels),
            "test_features": _digest(r.test.features),
            "noisy_train_labels": _digest(r.train_noisy.labels),
            "recovered_converged": r.recovery_converged,
        })
    reports = {a: _aggregate(per_arm[a], notes) for a in ARMS}
    return ComparisonReport(**reports, raw_scores=raw, provenance=provenance)


def sweep(config: ExperimentConfig, parameter: str, values) -> list:
    """One pipeline run per value of ``parameter``, everything else fixed."""
    if parameter not in SWEEP_PARAMETERS:
        raise UnknownParameter(f"cannot sweep {parameter!r}; choose from {sorted(SWEEP_PARAMETERS)}")
    return [(v, run_pipeline(config.with_parameter(parameter, v))) for v in values]


def sweep_rows(parameter: str, table: list) -> list:
    rows = [[parameter, *MEASURES]]
    for value, rep in table:
        rows.append([repr(value), *(repr(rep.means()[m]) for m in MEASURES)])
    return rows


# ---------------------------------------------------------------- external predictions

def rank_algorithms(scores: dict, q_alpha: Optional[float] = None) -> dict:
    """Rank algorithms across datasets for every measure.

    ``scores`` maps dataset name -> algorithm name -> MetricReport, e.g. built
    from prediction files of third-party LDL methods. Returns, per measure, the
    rank table, the Friedman statistics (None with fewer than 3 algorithms or
    2 datasets) and, when ``q_alpha`` is given, the critical difference.
    """
    datasets = list(scores)
    algorithms = list(scores[datasets[0]])
    for d in datasets:
        if list(scores[d]) != algorithms:
            raise ValidationError(f"dataset {d!r} has a different algorithm set")
    out = {}
    for m in MEASURES:
        table = np.array([[scores[d][a].means()[m] for a in algorithms] for d in datasets])
        ranks = average_ranks(table, HIGHER_IS_BETTER[m], algorithms, datasets)
        entry = {"ranks": ranks, "friedman": None, "cd": None}
        if len(algorithms) >= 3 and len(datasets) >= 2:
            try:
                entry["friedman"] = friedman(ranks)
            except ValidationError as exc:
                log.info("%s: %s", m, exc)
        if q_alpha is not None:
            entry["cd"] = critical_difference(q_alpha, len(algorithms), len(datasets))
        out[m] = entry
    return out


def write_rank_tables(path, tables: dict) -> None:
    """Write one datasets x algorithms block per measure, prefixed by a measure column."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header_done = False
        for m, t in tables.items():
            t = t["ranks"] if isinstance(t, dict) else t
            rows = t.to_csv_rows()
            if not header_done:
                w.writerow(["measure", *rows[0]])
                header_done = True
            for row in rows[1:]:
                w.writerow([m, *row])


def write_comparison(out_dir, config: ExperimentConfig, comparison: ComparisonReport) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config-echo.json").write_text(json.dumps(config.to_dict(), indent=2) + "\n")
    (out / "comparison.json").write_text(json.dumps(comparison.to_dict(), indent=2) + "\n")
    write_rank_tables(out / "ranks.csv", comparison.rank_tables())


def write_sweep(out_dir, config: ExperimentConfig, parameter: str, table: list) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config-echo.json").write_text(json.dumps(config.to_dict(), indent=2) + "\n")
    with (out / "sweep.csv").open("w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(sweep_rows(parameter, table))
