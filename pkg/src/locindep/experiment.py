"""Replicated simulate-then-test studies (level and power tables)."""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .inference import METHODS, ModelFamily, run_pair_tests
from .model import ProcessSpec, load_spec
from .simulate import derive_seed, discretize, format_float, simulate

__all__ = ["ConfigError", "ExperimentConfig", "run_experiment", "write_experiment", "worker_count"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    spec: str
    dt: float
    n_paths: int
    seed: int
    method: str = "granger"
    alpha: float = 0.05
    correction: str = "none"
    replications: int = 1
    output: str = "experiment_out"
    horizon: float | None = None
    pairs: tuple[tuple[int, int], ...] | None = None
    order: int = 1
    stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.n_paths < 1:
            raise ConfigError(f"n_paths must be >= 1, got {self.n_paths}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.replications < 1:
            raise ConfigError(f"replications must be >= 1, got {self.replications}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.correction not in ("none", "bonferroni"):
            raise ConfigError(f"correction must be 'none' or 'bonferroni', got {self.correction!r}")

    @classmethod
    def from_dict(cls, doc: dict[str, Any], base_dir: Path | None = None) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            doc = dict(doc)
            if "pairs" in doc and doc["pairs"] is not None:
                doc["pairs"] = tuple((int(j), int(k)) for j, k in doc["pairs"])
            if base_dir is not None:
                spec_path = base_dir / doc["spec"]
                if spec_path.exists():
                    doc["spec"] = str(spec_path)
            return cls(**doc)
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"invalid experiment config: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(doc, path.parent)


def worker_count() -> int:
    """Parallelism cap from LOCINDEP_THREADS (0 or unset means one per CPU)."""
    raw = os.environ.get("LOCINDEP_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def _one_replication(args) -> dict[str, Any]:
    spec, cfg, r = args
    seed = derive_seed(cfg.seed, r)
    paths = simulate(spec, cfg.dt, cfg.n_paths, seed)
    if cfg.stride > 1:
        paths = discretize(paths, cfg.stride)
    m = spec.m
    level = cfg.alpha / (m * (m - 1)) if cfg.correction == "bonferroni" and m > 1 else cfg.alpha
    family = ModelFamily.from_spec(spec) if cfg.method == "lrt" else None
    reports, errors = run_pair_tests(paths, cfg.method, level, family, cfg.order,
                                     list(cfg.pairs) if cfg.pairs else None)
    return {
        "replication": r,
        "seed": seed,
        "reports": [rep.to_dict() for rep in reports],
        "errors": {f"{j},{k}": msg for (j, k), msg in errors.items()},
    }


def run_experiment(cfg: ExperimentConfig, spec: ProcessSpec | None = None,
                   workers: int | None = None) -> tuple[list[dict[str, Any]], list[dict[str, Any]]]:
    """Run ``cfg.replications`` simulate-and-test cycles.

    Replication ``r`` simulates with seed ``derive_seed(cfg.seed, r)``.
    Returns ``(summary_rows, replication_records)``; summary rows carry
    ``pair``, ``method``, ``rejection_rate`` and ``mean_stat``.
    """
    if spec is None:
        spec = load_spec(cfg.spec)
    if cfg.horizon is not None:
        spec = spec.with_horizon(cfg.horizon)
    jobs = [(spec, cfg, r) for r in range(cfg.replications)]
    workers = worker_count() if workers is None else workers
    if workers > 1 and cfg.replications > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_one_replication, jobs))
    else:
        records = [_one_replication(job) for job in jobs]
    return summarize(records, cfg.method), records


def summarize(records: list[dict[str, Any]], method: str) -> list[dict[str, Any]]:
    by_pair: dict[tuple[int, int], list[dict]] = {}
    for rec in records:
        for rep in rec["reports"]:
            by_pair.setdefault(tuple(rep["pair"]), []).append(rep)
    rows = []
    for pair in sorted(by_pair):
        reps = by_pair[pair]
        rows.append({
            "pair": f"{pair[0]}->{pair[1]}",
            "method": method,
            "rejection_rate": float(np.mean([r["decision"] for r in reps])),
            "mean_stat": float(np.mean([r["statistic"] for r in reps])),
            "n": len(reps),
        })
    return rows


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_experiment(out_dir: str | Path, rows, records) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for rec in records:
        _atomic_write(out / f"rep_{rec['replication']:05d}.json", json.dumps(rec, indent=1, sort_keys=True) + "\n")
    lines = ["pair,method,rejection_rate,mean_stat"]
    for row in rows:
        lines.append(f"{row['pair']},{row['method']},{format_float(row['rejection_rate'])},"
                     f"{format_float(row['mean_stat'])}")
    _atomic_write(out / "summary.csv", "\n".join(lines) + "\n")
