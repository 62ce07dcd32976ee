"""Command-line entry point: ``labelcvar <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import List, Optional

import numpy as np

from .errors import DataError, NumericalError
from .experiments import (
    ABLATION_METHODS,
    DEFAULT_METHODS,
    DEFAULT_P_GRID,
    ExperimentConfig,
    run_real,
    run_synthetic_ablation,
    run_synthetic_sweep,
    split_covtype,
)
from .risk_core import ClassProbabilities
from .robust import BoxUncertaintySet, lcvar_dual, lhcvar_dual, robust_sup_box

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_list(text: str) -> List[str]:
    return [item for item in (s.strip() for s in text.split(",")) if item]


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_training_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--seed", type=int, required=True, help="base random seed (mandatory)")
    sp.add_argument("--out", default="results", help="output directory")
    sp.add_argument("--epochs", type=int, default=2000)
    sp.add_argument("--lr-start", type=float, default=0.01)
    sp.add_argument("--lr-end", type=float, default=0.0001)
    sp.add_argument("--no-standardize", action="store_true", help="train on raw features")
    sp.add_argument("--jobs", type=int, default=1, help="parallel worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="labelcvar", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    sp = sub.add_parser("synth-sweep", help="class risks vs. imbalance on the synthetic world")
    _add_training_flags(sp)
    sp.add_argument("--p-values", type=_float_list, default=list(DEFAULT_P_GRID))
    sp.add_argument("--methods", type=_csv_list, default=list(DEFAULT_METHODS),
                    help="comma list of standard, balanced, lcvar:ALPHA, lhcvar:KAPPA:C")
    sp.add_argument("--n-train", type=int, default=100_000)
    sp.add_argument("--n-test", type=int, default=100_000)

    sp = sub.add_parser("synth-ablation", help="alpha / kappa ablation on the synthetic world")
    _add_training_flags(sp)
    sp.add_argument("--p-values", type=_float_list, default=list(DEFAULT_P_GRID))
    sp.add_argument("--methods", type=_csv_list, default=list(ABLATION_METHODS))
    sp.add_argument("--n-train", type=int, default=100_000)
    sp.add_argument("--n-test", type=int, default=100_000)

    sp = sub.add_parser("real", help="train and evaluate every method on a CSV train/test split")
    _add_training_flags(sp)
    sp.add_argument("--train", required=True, help="training CSV")
    sp.add_argument("--test", required=True, help="test CSV")
    sp.add_argument("--label-column", default=None, help="index or header name (default: last column)")
    sp.add_argument("--header", action="store_true", help="CSV files start with a header row")
    sp.add_argument("--methods", type=_csv_list, default=list(DEFAULT_METHODS))
    sp.add_argument("--ablation", action="store_true", help="append the alpha / kappa ablation grid")

    sp = sub.add_parser("lcvar-eval", help="robust risk of a class-risk vector")
    sp.add_argument("input", nargs="?", default="-",
                    help='JSON file ("-" for stdin) with "risks", "probs" and optionally "alphas"')
    sp.add_argument("--alpha", type=float, default=None, help="homogeneous LCVaR level")

    sp = sub.add_parser("covtype-split", help="write the canonical Covertype train/test CSVs")
    sp.add_argument("source", help="covtype.data or covtype.data.gz from the UCI repository")
    sp.add_argument("--out", default="data/covtype")
    return parser


def _experiment_config(args, kind: str) -> ExperimentConfig:
    common = dict(
        kind=kind, seed=args.seed, output_dir=args.out, methods=tuple(args.methods),
        epochs=args.epochs, lr_start=args.lr_start, lr_end=args.lr_end,
        standardize=not args.no_standardize, jobs=args.jobs,
    )
    if kind == "real":
        methods = list(args.methods)
        if args.ablation:
            methods += [m for m in ABLATION_METHODS if m not in methods]
        common["methods"] = tuple(methods)
        return ExperimentConfig(train_path=args.train, test_path=args.test, label_column=args.label_column,
                                has_header=args.header, **common)
    return ExperimentConfig(p_values=tuple(args.p_values), n_train=args.n_train, n_test=args.n_test, **common)


def _lcvar_eval(args) -> dict:
    text = sys.stdin.read() if args.input == "-" else open(args.input).read()
    try:
        payload = json.loads(text)
        risks = np.asarray(payload["risks"], dtype=float)
        probs = ClassProbabilities(np.asarray(payload["probs"], dtype=float))
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"bad lcvar-eval input: {exc}") from None
    if args.alpha is not None:
        sol = lcvar_dual(risks, probs, args.alpha)
        upper = np.full(probs.k, 1.0 / args.alpha)
    elif "alphas" in payload:
        alphas = np.asarray(payload["alphas"], dtype=float)
        sol = lhcvar_dual(risks, probs, alphas)
        upper = 1.0 / alphas
    elif "alpha" in payload:
        sol = lcvar_dual(risks, probs, float(payload["alpha"]))
        upper = np.full(probs.k, 1.0 / float(payload["alpha"]))
    else:
        raise UsageError("give --alpha or an \"alpha\"/\"alphas\" entry in the input")
    primal = robust_sup_box(risks, BoxUncertaintySet(upper, probs))
    return {
        "value": sol.value,
        "lambda": sol.lam,
        "q_star": sol.q_star.q.tolist(),
        "active_set": list(sol.active_set),
        "primal_value": primal.value,
        "standard_risk": float(probs.p @ risks),
        "worst_class": float(risks.max()),
    }


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "lcvar-eval":
            print(json.dumps(_lcvar_eval(args), indent=2))
        elif args.command == "covtype-split":
            train_path, test_path = split_covtype(args.source, args.out)
            print(f"wrote {train_path} and {test_path}")
        else:
            kind = {"synth-sweep": "synthetic_sweep", "synth-ablation": "synthetic_ablation", "real": "real"}[args.command]
            cfg = _experiment_config(args, kind)
            runner = {"synthetic_sweep": run_synthetic_sweep, "synthetic_ablation": run_synthetic_ablation,
                      "real": run_real}[kind]
            records = runner(cfg)
            for r in records:
                prefix = f"p={r.p:.2f} " if r.p is not None else ""
                print(f"{prefix}{r.objective.method_id:<16} standard={r.standard_risk:.4f} worst_class={r.worst_class_risk:.4f}")
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
