"""Command-line entry point: ``ldlr <subcommand> [flags]``.

Exit codes: 0 success, 1 bad input or usage, 2 solver non-convergence under --strict.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from contextlib import nullcontext
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .dataset import NoiseSpec, corrupt, load_dataset, read_matrix, write_matrix, write_manifest
from .errors import LdlError, NotConvergedWarning
from .graph import laplacian, learn_affinity
from .metrics import report
from .msvr import KernelSpec, MsvrConfig, MsvrModel, fit, predict
from .recovery import RecoveryConfig, recover

log = logging.getLogger("ldlr")

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for --strict here
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_common(p):
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="base seed for splits and noise draws")
    p.add_argument("--threads", type=int, help="cap on BLAS/OpenMP worker threads")
    p.add_argument("--strict", action="store_true", help="exit 2 if a solver does not converge")


def _add_recovery(p):
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)


def _add_msvr(p):
    p.add_argument("--kappa", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--kernel", choices=("linear", "rbf"))
    p.add_argument("--bandwidth", help="positive number or 'median-heuristic'")


def _add_noise(p):
    p.add_argument("--noise-mean", type=float)
    p.add_argument("--noise-scale", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ldlr", description="Recover and learn label distributions from noisy labels.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("corrupt", help="add Gaussian noise to a label matrix")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    _add_noise(p)
    _add_common(p)

    p = sub.add_parser("graph", help="learn the adaptive affinity graph")
    p.add_argument("--features", required=True)
    p.add_argument("--gamma", type=float)
    _add_common(p)

    p = sub.add_parser("recover", help="low-rank + sparse recovery of noisy labels")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    _add_recovery(p)
    _add_common(p)

    p = sub.add_parser("train", help="fit the multi-output SVR")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    _add_msvr(p)
    _add_common(p)

    p = sub.add_parser("predict", help="predict label distributions with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    _add_common(p)

    p = sub.add_parser("eval", help="score predictions against true distributions")
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", required=True)
    _add_common(p)

    for name, text in (("compare", "train on clean, recovered and noisy labels"),
                       ("sweep", "vary one hyper-parameter")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config")
        p.add_argument("--features")
        p.add_argument("--labels")
        _add_recovery(p)
        _add_msvr(p)
        _add_noise(p)
        _add_common(p)
        if name == "sweep":
            p.add_argument("--param", required=True, choices=sorted(harness.SWEEP_PARAMETERS))
            p.add_argument("--values", required=True, help="comma-separated values")
    return parser


# ---------------------------------------------------------------- flag -> config

def _recovery_config(args, base: RecoveryConfig | None = None) -> RecoveryConfig:
    base = base or RecoveryConfig()
    over = {k: getattr(args, k) for k in ("alpha", "beta") if getattr(args, k, None) is not None}
    return replace(base, **over)


def _msvr_config(args, base: MsvrConfig | None = None) -> MsvrConfig:
    base = base or MsvrConfig()
    over = {k: getattr(args, k) for k in ("kappa", "nu", "epsilon") if getattr(args, k, None) is not None}
    return replace(base, **over)


def _kernel(args, base: KernelSpec | None = None) -> KernelSpec:
    base = base or KernelSpec()
    kind = getattr(args, "kernel", None) or base.kind
    bw = getattr(args, "bandwidth", None)
    if bw is None:
        bw = base.bandwidth
    elif bw != "median-heuristic":
        try:
            bw = float(bw)
        except ValueError:
            raise UsageError(f"--bandwidth: expected a number or 'median-heuristic', got {bw!r}") from None
    return KernelSpec(kind, bw)


def _noise(args, base: NoiseSpec | None = None) -> NoiseSpec:
    base = base or NoiseSpec()
    over = {}
    if getattr(args, "noise_mean", None) is not None:
        over["mean"] = args.noise_mean
    if getattr(args, "noise_scale", None) is not None:
        over["scale"] = args.noise_scale
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    return replace(base, **over)


def experiment_config(args) -> harness.ExperimentConfig:
    """Config file first, then flag overrides."""
    if args.config:
        cfg = harness.ExperimentConfig.load(args.config)
    elif args.features and args.labels:
        cfg = harness.ExperimentConfig(features_path=args.features, labels_path=args.labels)
    else:
        raise UsageError("--config, or both --features and --labels, is required")
    over = {
        "recovery": _recovery_config(args, cfg.recovery),
        "msvr": _msvr_config(args, cfg.msvr),
        "kernel": _kernel(args, cfg.kernel),
        "noise": _noise(args, cfg.noise),
    }
    if args.config and (args.features or args.labels):
        over.update(features_path=args.features or cfg.features_path,
                    labels_path=args.labels or cfg.labels_path, synth=None)
    if args.gamma is not None:
        over["gamma"] = args.gamma
    if args.seed is not None:
        over["seed"] = args.seed
    return replace(cfg, **over)


def _out_dir(args) -> Path:
    if not args.out:
        raise UsageError("--out is required for this subcommand")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_report(rep, prefix: str = "") -> None:
    for line in rep.summary_lines():
        print(prefix + line)


# ---------------------------------------------------------------- subcommands

def cmd_corrupt(args) -> bool:
    data = load_dataset(args.features, args.labels)
    noisy = corrupt(data, _noise(args))
    out = _out_dir(args)
    write_matrix(out / "labels.csv", noisy.labels, data.names)
    spec = _noise(args)
    write_manifest(out / "manifest.json", {"mean": spec.mean, "scale": spec.scale, "seed": spec.seed,
                                           "n": data.n, "m": data.m})
    print(f"wrote {data.n}x{data.m} corrupted labels")
    return True


def cmd_graph(args) -> bool:
    x, _ = read_matrix(args.features)
    g = learn_affinity(x, args.gamma if args.gamma is not None else 1.0)
    out = _out_dir(args)
    write_matrix(out / "affinity.csv", g.affinity)
    write_matrix(out / "laplacian.csv", laplacian(g).laplacian)
    print(f"affinity {x.shape[0]}x{x.shape[0]}, nonzeros {int(np.count_nonzero(g.affinity))}")
    return True


def cmd_recover(args) -> bool:
    data = load_dataset(args.features, args.labels)
    g = learn_affinity(data.features, args.gamma if args.gamma is not None else 1.0)
    result = recover(data.labels, laplacian(g), _recovery_config(args))
    out = _out_dir(args)
    write_matrix(out / "d_tilde.csv", result.d_tilde)
    write_matrix(out / "error.csv", result.error)
    diag = {"iterations": result.iterations, "converged": result.converged,
            "final_residual": result.final_residual, "residual_history": result.residual_history}
    (out / "diagnostics.json").write_text(json.dumps(diag, indent=2) + "\n")
    print(f"iterations {result.iterations}")
    print(f"final_residual {result.final_residual:.3e}")
    return result.converged


def cmd_train(args) -> bool:
    data = load_dataset(args.features, args.labels)
    model, diag = fit(data, _msvr_config(args), _kernel(args))
    out = _out_dir(args)
    model.save(out / "model.json")
    print(f"iterations {diag.iterations}")
    print(f"objective {model.training_objective:.6g}")
    return diag.converged


def cmd_predict(args) -> bool:
    model = MsvrModel.load(args.model)
    x, _ = read_matrix(args.features)
    out = _out_dir(args)
    write_matrix(out / "pred.csv", predict(model, x))
    print(f"predicted {x.shape[0]} rows")
    return True


def cmd_eval(args) -> bool:
    truth, _ = read_matrix(args.truth)
    pred, _ = read_matrix(args.pred)
    rep = report(truth, pred)
    if args.out:
        (_out_dir(args) / "metrics.json").write_text(rep.to_json() + "\n")
    _print_report(rep)
    return True


def cmd_compare(args) -> bool:
    cfg = experiment_config(args)
    out = _out_dir(args)
    comparison = harness.compare_arms(cfg)
    harness.write_comparison(out, cfg, comparison)
    for arm in harness.ARMS:
        _print_report(comparison.arm(arm), f"{arm} ")
    return not any(comparison.arm(a).warnings for a in harness.ARMS)


def _parse_values(text: str) -> list:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--values: expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise UsageError("--values: empty list")
    return values


def cmd_sweep(args) -> bool:
    cfg = experiment_config(args)
    values = _parse_values(args.values)
    out = _out_dir(args)
    table = harness.sweep(cfg, args.param, values)
    harness.write_sweep(out, cfg, args.param, table)
    for v, rep in table:
        print(f"{args.param}={v:g} chebyshev {rep.chebyshev:.6g}")
    return not any(rep.warnings for _, rep in table)


COMMANDS = {"corrupt": cmd_corrupt, "graph": cmd_graph, "recover": cmd_recover,
            "train": cmd_train, "predict": cmd_predict, "eval": cmd_eval,
            "compare": cmd_compare, "sweep": cmd_sweep}


def _configure_logging() -> None:
    level = os.environ.get("LDLR_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _thread_limit(n):
    if n is None:
        return nullcontext()
    if n < 1:
        raise UsageError("--threads must be >= 1")
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def run(argv=None) -> int:
    _configure_logging()
    try:
        args = build_parser().parse_args(argv)
        with _thread_limit(args.threads), warnings.catch_warnings():
            if not args.strict:
                warnings.simplefilter("ignore", NotConvergedWarning)
            converged = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (LdlError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.strict and not converged:
        print("error: solver did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
