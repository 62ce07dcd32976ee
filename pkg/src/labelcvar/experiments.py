"""Data loading, experiment orchestration and report files."""
from __future__ import annotations

import csv
import gzip
import hashlib
import io
import json
import logging
import math
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import DataError
from .plugin import SyntheticWorld, synth_sample
from .risk_core import LabeledDataset
from .training import Objective, TrainConfig, evaluate, train

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ["p", "method", "alpha", "kappa", "c", "class0_risk", "class1_risk", "worst_risk"]
TABLE_COLUMNS = ["method", "alpha", "kappa", "c", "standard_risk", "worst_class_risk"]
PER_CLASS_COLUMNS = ["method", "class_id", "risk"]

# 0.80, 0.82, ..., 0.98
DEFAULT_P_GRID = tuple(round(0.80 + 0.02 * i, 2) for i in range(10))
DEFAULT_METHODS = ("standard", "balanced", "lcvar:0.1", "lhcvar:1:0.05")
ABLATION_METHODS = (
    "lcvar:0.01", "lcvar:0.05", "lcvar:0.1",
    "lhcvar:0.8:0.05", "lhcvar:1:0.05", "lhcvar:1.2:0.05",
)
COVTYPE_TRAIN_ROWS = 11340
COVTYPE_VALIDATION_ROWS = 3780


# ---------------------------------------------------------------- loading

def _open_text(path: Path):
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return open(path, "r", encoding="utf-8", newline="")


def _locate_bad_row(path: Path, has_header: bool) -> str:
    """Find the first unparsable row with a slow line-by-line pass."""
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        width = None
        for lineno, row in enumerate(reader, start=1):
            if has_header and lineno == 1:
                width = len(row)
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            if width is None:
                width = len(row)
            if len(row) != width:
                return f"line {lineno}: expected {width} fields, found {len(row)}"
            for col, cell in enumerate(row):
                try:
                    value = float(cell)
                except ValueError:
                    return f"line {lineno}, field {col + 1}: not a number: {cell!r}"
                if not math.isfinite(value):
                    return f"line {lineno}, field {col + 1}: non-finite value {cell!r}"
    return "unknown parse failure"


def load_csv(path, label_column: Union[int, str, None] = None, has_header: bool = False,
             label_map: Optional[Sequence] = None) -> LabeledDataset:
    """Read a numeric CSV into a :class:`LabeledDataset`.

    ``label_column`` is a column index, a header name, or ``None`` for the
    last column. Original labels are mapped to ``0..k-1`` in sorted order;
    pass the training set's ``label_values`` as ``label_map`` when loading a
    test split so both share one mapping.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    try:
        frame = pd.read_csv(
            path, header=0 if has_header else None, dtype=float, skip_blank_lines=True,
            compression="infer", engine="c",
        )
    except (ValueError, pd.errors.ParserError) as exc:
        raise DataError(f"{path}: {_locate_bad_row(path, has_header)}") from exc
    if frame.shape[0] == 0:
        raise DataError(f"{path}: no data rows")
    values = frame.to_numpy()
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path}: {_locate_bad_row(path, has_header)}")

    if label_column is None:
        col = values.shape[1] - 1
    elif isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if not has_header:
            raise DataError("a named label column needs a header row")
        names = [str(c) for c in frame.columns]
        if label_column not in names:
            raise DataError(f"{path}: no column named {label_column!r}")
        col = names.index(label_column)
    else:
        col = int(label_column) % values.shape[1]
    if values.shape[1] < 2:
        raise DataError(f"{path}: need at least one feature column besides the label")

    raw = values[:, col]
    if np.any(raw != np.round(raw)):
        bad = int(np.flatnonzero(raw != np.round(raw))[0])
        raise DataError(f"{path}: line {bad + 1 + int(has_header)}: label {raw[bad]!r} is not an integer")
    raw = raw.astype(np.int64)
    features = np.delete(values, col, axis=1)

    if label_map is None:
        label_map = np.unique(raw)
    label_map = np.asarray(label_map, dtype=np.int64)
    ids = np.searchsorted(label_map, raw)
    ids = np.clip(ids, 0, label_map.size - 1)
    unseen = label_map[ids] != raw
    if np.any(unseen):
        raise DataError(f"{path}: label {raw[unseen][0]} does not appear in the label map {label_map.tolist()}")
    return LabeledDataset(features, ids, int(label_map.size), tuple(int(v) for v in label_map))


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, data: LabeledDataset) -> "Standardizer":
        mean = data.features.mean(axis=0)
        scale = data.features.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)  # constant columns stay centred only
        return cls(mean, scale)

    def apply(self, data: LabeledDataset) -> LabeledDataset:
        return LabeledDataset((data.features - self.mean) / self.scale, data.labels, data.k, data.label_values)


def split_covtype(source, out_dir) -> Tuple[Path, Path]:
    """Write the canonical Covertype train (first 11340 rows) and test (last 565892 rows) CSVs.

    The 3780 rows in between are the canonical validation block and are not used.
    """
    source = Path(source)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frame = pd.read_csv(source, header=None, compression="infer")
    if frame.shape[1] != 55:
        raise DataError(f"{source}: expected 55 columns (54 features + cover type), found {frame.shape[1]}")
    start_test = COVTYPE_TRAIN_ROWS + COVTYPE_VALIDATION_ROWS
    train_path, test_path = out_dir / "train.csv", out_dir / "test.csv"
    frame.iloc[:COVTYPE_TRAIN_ROWS].to_csv(train_path, header=False, index=False)
    frame.iloc[start_test:].to_csv(test_path, header=False, index=False)
    return train_path, test_path


# ---------------------------------------------------------------- configs

@dataclass
class ExperimentConfig:
    kind: str  # "synthetic_sweep" | "synthetic_ablation" | "real"
    seed: int
    output_dir: str = "results"
    methods: Tuple[str, ...] = DEFAULT_METHODS
    p_values: Tuple[float, ...] = DEFAULT_P_GRID
    n_train: int = 100_000
    n_test: int = 100_000
    train_path: Optional[str] = None
    test_path: Optional[str] = None
    label_column: Optional[str] = None
    has_header: bool = False
    epochs: int = 2000
    lr_start: float = 0.01
    lr_end: float = 0.0001
    standardize: bool = True
    jobs: int = 1

    def __post_init__(self):
        if self.kind not in ("synthetic_sweep", "synthetic_ablation", "real"):
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        self.methods = tuple(self.methods)
        self.p_values = tuple(float(p) for p in self.p_values)
        for p in self.p_values:
            if not 0 < p < 1:
                raise ValueError(f"p values must lie in (0, 1), got {p}")
        for m in self.methods:
            Objective.parse(m)
        TrainConfig(Objective.standard(), self.epochs, self.lr_start, self.lr_end)
        if self.kind == "real" and not (self.train_path and self.test_path):
            raise ValueError("real experiments need train and test paths")

    def objectives(self) -> List[Objective]:
        return [Objective.parse(m) for m in self.methods]

    def to_json(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class ReportRecord:
    method: str
    objective: Objective
    per_class: np.ndarray
    standard_risk: float
    worst_class_risk: float
    seconds: float
    p: Optional[float] = None
    cell_seed: Optional[int] = None

    def __post_init__(self):
        if self.worst_class_risk != float(np.max(self.per_class)):
            raise ValueError("worst_class_risk must equal the largest per-class risk")

    def hyper(self) -> Dict[str, str]:
        o = self.objective
        return {
            "alpha": _fmt(o.alpha) if o.alpha is not None else "",
            "kappa": _fmt(o.kappa) if o.kappa is not None else "",
            "c": _fmt(o.c) if o.c is not None else "",
        }


def _fmt(x: float) -> str:
    return repr(float(x))


def cell_seed(base_seed: int, *indices: int) -> int:
    """Independent 64-bit seed for one experiment cell."""
    return int(np.random.SeedSequence([base_seed, *indices]).generate_state(1, dtype=np.uint64)[0])


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=10,
        )
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _train_and_report(train_set, test_set, objective: Objective, cfg: ExperimentConfig, seed: int, p=None):
    t0 = time.perf_counter()
    model = train(train_set, TrainConfig(objective, cfg.epochs, cfg.lr_start, cfg.lr_end, seed))
    report = evaluate(model, test_set)
    return ReportRecord(
        method=objective.kind,
        objective=objective,
        per_class=report.per_class,
        standard_risk=report.objective_value,
        worst_class_risk=report.worst_class,
        seconds=time.perf_counter() - t0,
        p=p,
        cell_seed=seed,
    )


def _synthetic_cell(args):
    cfg, p_idx, m_idx = args
    p = cfg.p_values[p_idx]
    world = SyntheticWorld(p)
    # data depends only on (seed, p index) so all methods see the same samples
    data_seed = np.random.SeedSequence([cfg.seed, p_idx])
    train_seed, test_seed = data_seed.spawn(2)
    train_set = synth_sample(world, cfg.n_train, train_seed)
    test_set = synth_sample(world, cfg.n_test, test_seed)
    if cfg.standardize:
        scaler = Standardizer.fit(train_set)
        train_set, test_set = scaler.apply(train_set), scaler.apply(test_set)
    objective = cfg.objectives()[m_idx]
    return _train_and_report(train_set, test_set, objective, cfg, cell_seed(cfg.seed, p_idx, m_idx), p)


def _map_cells(fn, cells, jobs: int):
    if jobs <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, cells))


def _write_manifest(path: Path, cfg: ExperimentConfig, records: Sequence[ReportRecord], extra=None):
    manifest = {
        "config": cfg.to_json(),
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "git_describe": git_describe(),
        "cells": [
            {
                "p": r.p,
                "method": r.objective.method_id,
                "cell_seed": r.cell_seed,
                "wall_clock_seconds": r.seconds,
            }
            for r in records
        ],
    }
    if extra:
        manifest.update(extra)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def write_sweep_csv(path: Path, records: Sequence[ReportRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for r in records:
            h = r.hyper()
            writer.writerow([
                _fmt(r.p), r.method, h["alpha"], h["kappa"], h["c"],
                _fmt(r.per_class[0]), _fmt(r.per_class[1]), _fmt(r.worst_class_risk),
            ])


def run_synthetic_sweep(cfg: ExperimentConfig, csv_name: str = "sweep.csv") -> List[ReportRecord]:
    """Train every method at every p and write ``sweep.csv`` plus ``manifest.json``."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = [(cfg, i, j) for i in range(len(cfg.p_values)) for j in range(len(cfg.methods))]
    records = _map_cells(_synthetic_cell, cells, cfg.jobs)
    for r in records:
        log.info("p=%.2f %-16s class risks %s", r.p, r.objective.method_id, np.round(r.per_class, 4))
    write_sweep_csv(out / csv_name, records)
    _write_manifest(out / csv_name.replace(".csv", "_manifest.json"), cfg, records)
    return records


def run_synthetic_ablation(cfg: ExperimentConfig) -> List[ReportRecord]:
    """Sweep over the LCVaR alpha / LHCVaR kappa grids (``cfg.methods`` defaults to them)."""
    return run_synthetic_sweep(cfg, csv_name="ablation.csv")


def run_real(cfg: ExperimentConfig) -> List[ReportRecord]:
    """Train every method on a real train/test split and write the risk table and per-class risks."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    records: List[ReportRecord] = []
    label_column = cfg.label_column
    if cfg.methods:
        train_set = load_csv(cfg.train_path, label_column, cfg.has_header)
        test_set = load_csv(cfg.test_path, label_column, cfg.has_header, label_map=train_set.label_values)
        if cfg.standardize:
            scaler = Standardizer.fit(train_set)
            train_set, test_set = scaler.apply(train_set), scaler.apply(test_set)
        log.info("train n=%d d=%d k=%d, test n=%d", train_set.n, train_set.d, train_set.k, test_set.n)
        for j, objective in enumerate(cfg.objectives()):
            rec = _train_and_report(train_set, test_set, objective, cfg, cell_seed(cfg.seed, 0, j))
            log.info("%-16s standard %.4f worst-class %.4f", objective.method_id, rec.standard_risk, rec.worst_class_risk)
            records.append(rec)

    with open(out / "table.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TABLE_COLUMNS)
        for r in records:
            h = r.hyper()
            writer.writerow([r.method, h["alpha"], h["kappa"], h["c"], _fmt(r.standard_risk), _fmt(r.worst_class_risk)])
    with open(out / "per_class.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PER_CLASS_COLUMNS)
        for r in records:
            for i, risk in enumerate(r.per_class):
                writer.writerow([r.objective.method_id, i, _fmt(risk)])
    _write_manifest(out / "manifest.json", cfg, records)
    return records


def read_sweep_csv(path) -> List[dict]:
    """Parse a sweep/ablation CSV back into dictionaries with float risks."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in ("p", "class0_risk", "class1_risk", "worst_risk"):
            row[key] = float(row[key])
    return rows
