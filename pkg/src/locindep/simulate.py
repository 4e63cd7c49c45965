"""Euler-Maruyama simulation with per-step Bernoulli jumps.

Every path owns independent random streams, one Brownian ("W") and one
Poisson ("N") stream per component, seeded from
``derive_seed(master, path, component, tag)``.  The seed mixer is a chain of
SplitMix64 finalisers; each derived 64-bit word seeds a PCG64 generator.
Because no stream is shared between paths, path ``p`` of a run is
bit-identical whatever ``n_paths`` is and in whatever order paths are built.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .expr import ExprDomainError, evaluate
from .model import COUNTING, ProcessSpec, SpecError

__all__ = [
    "PathSet", "SimulationError", "simulate", "discretize",
    "derive_seed", "mix64", "make_grid", "write_paths", "read_paths", "format_float",
]

MASK64 = (1 << 64) - 1
TAG_W = 1
TAG_N = 2


class SimulationError(RuntimeError):
    pass


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix64(*words: int) -> int:
    """Fold integers into one 64-bit word with the SplitMix64 finaliser."""
    h = 0
    for w in words:
        h = _splitmix64(h ^ (int(w) & MASK64))
    return h


def derive_seed(master: int, *path: int) -> int:
    return mix64(master, *path)


def _stream(master: int, path: int, component: int, tag: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master, path, component, tag)))


def format_float(v: float) -> str:
    """Shortest decimal that round-trips to the same double."""
    return repr(float(v))


def make_grid(horizon: float, dt: float) -> np.ndarray:
    if not (dt > 0 and dt <= horizon):
        raise ValueError(f"need 0 < dt <= horizon, got dt={dt}, horizon={horizon}")
    steps = horizon / dt
    G = int(round(steps))
    if abs(steps - G) > 1e-6 * max(1.0, steps):
        raise ValueError(f"dt={dt} does not divide the horizon {horizon}")
    return np.linspace(0.0, horizon, G + 1)


@dataclass(frozen=True)
class PathSet:
    """Simulated trajectories on a uniform grid.

    ``values[p, i, k-1]`` is component ``k`` of path ``p`` at ``grid[i]``
    (post-jump).  ``events`` has one row per jump with fields ``path``,
    ``component`` (1-based), ``index`` (first grid index at which the jump
    is visible) and ``size``.
    """

    grid: np.ndarray
    values: np.ndarray
    events: np.ndarray
    seed: int = 0
    names: tuple[str, ...] = ()

    EVENT_DTYPE = np.dtype([("path", np.int64), ("component", np.int64),
                            ("index", np.int64), ("size", np.float64)])

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.grid.shape[0] - 1

    @property
    def m(self) -> int:
        return self.values.shape[2]

    @property
    def dt(self) -> float:
        return float(self.grid[-1] - self.grid[0]) / self.n_steps

    @cached_property
    def jump_counts(self) -> np.ndarray:
        """Number of jumps per path, step and component, shape (n, G, m)."""
        out = np.zeros((self.n_paths, self.n_steps, self.m), dtype=np.int64)
        ev = self.events
        np.add.at(out, (ev["path"], ev["index"] - 1, ev["component"] - 1), 1)
        return out

    @cached_property
    def jump_totals(self) -> np.ndarray:
        """Summed jump sizes per path, step and component, shape (n, G, m)."""
        out = np.zeros((self.n_paths, self.n_steps, self.m))
        ev = self.events
        np.add.at(out, (ev["path"], ev["index"] - 1, ev["component"] - 1), ev["size"])
        return out

    def column(self, k: int) -> np.ndarray:
        return self.values[:, :, k - 1]

    def window(self, start: int, stop: int) -> "PathSet":
        """Restrict to grid indices ``start..stop`` (inclusive), keeping absolute time."""
        if not 0 <= start < stop <= self.n_steps:
            raise ValueError(f"bad window {start}..{stop} for {self.n_steps} steps")
        ev = self.events
        keep = (ev["index"] > start) & (ev["index"] <= stop)
        sub = ev[keep].copy()
        sub["index"] -= start
        return PathSet(self.grid[start:stop + 1].copy(), self.values[:, start:stop + 1].copy(),
                       sub, self.seed, self.names)

    def replace_column(self, k: int, column: np.ndarray) -> "PathSet":
        values = self.values.copy()
        values[:, :, k - 1] = column
        return PathSet(self.grid, values, self.events, self.seed, self.names)

    def summary(self) -> list[tuple[str, float, float]]:
        """(name, mean, variance) of each component at the final grid point."""
        final = self.values[:, -1, :]
        ddof = 1 if self.n_paths > 1 else 0
        names = self.names or tuple(f"X{k}" for k in range(1, self.m + 1))
        return [(names[k], float(final[:, k].mean()), float(final[:, k].var(ddof=ddof)))
                for k in range(self.m)]


def simulate(spec: ProcessSpec, dt: float, n_paths: int, seed: int) -> PathSet:
    """Generate ``n_paths`` trajectories of ``spec`` on a grid of step ``dt``.

    Each step reads the pre-step state only::

        X[i+1] = X[i] + f(X[i], t_i) dt + sigma(t_i) sqrt(dt) xi + J
        J      = size(X[i], t_i) * 1[U < 1 - exp(-beta(X[i], t_i) dt)]
    """
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    seed = int(seed) & MASK64
    grid = make_grid(spec.horizon, dt)
    G = grid.shape[0] - 1
    h = spec.horizon / G
    sqrt_h = math.sqrt(h)
    theta = spec.theta_array()
    m = spec.m
    comps = spec.components

    sig = {}
    normals = {}
    uniforms = {}
    for k, c in enumerate(comps, start=1):
        if c.has_continuous_part:
            s = np.array(evaluate(c.sigma, np.zeros((G, m)), grid[:-1], theta), dtype=float)
            bad = np.flatnonzero(~(s >= 0))
            if bad.size:
                i = int(bad[0])
                raise SimulationError(f"{c.name}: sigma is {s[i]} at t={grid[i]} (step {i})")
            sig[k] = s
            normals[k] = np.stack([_stream(seed, p, k, TAG_W).standard_normal(G) for p in range(n_paths)])
        if c.has_jumps:
            uniforms[k] = np.stack([_stream(seed, p, k, TAG_N).random(G) for p in range(n_paths)])

    values = np.empty((n_paths, G + 1, m))
    values[:, 0, :] = [c.x0 for c in comps]
    ev_path, ev_comp, ev_index, ev_size = [], [], [], []
    bound = spec.jump_bound

    for i in range(G):
        x = values[:, i, :]
        ti = grid[i]
        nxt = values[:, i + 1, :]
        for k, c in enumerate(comps, start=1):
            try:
                if c.has_continuous_part:
                    drift = evaluate(c.drift, x, ti, theta)
                    inc = drift * h + sig[k][i] * sqrt_h * normals[k][:, i]
                else:
                    inc = np.zeros(n_paths)
                if c.has_jumps:
                    beta = evaluate(c.jump_intensity, x, ti, theta)
                    neg = np.flatnonzero(~(beta >= 0))
                    if neg.size:
                        p = int(neg[0])
                        raise SimulationError(
                            f"{c.name}: jump intensity is {beta[p]} on path {p} at t={ti} (step {i})")
                    fire = uniforms[k][:, i] < -np.expm1(-beta * h)
                    if np.any(fire):
                        if c.kind == COUNTING:
                            size = np.ones(n_paths)
                        else:
                            size = np.array(evaluate(c.effective_jump_size(), x, ti, theta), dtype=float)
                        idx = np.flatnonzero(fire)
                        sz = size[idx]
                        if bound is not None and np.any(np.abs(sz) > bound):
                            raise SimulationError(f"{c.name}: jump size exceeds bound {bound} at step {i}")
                        inc = inc + np.where(fire, size, 0.0)
                        ev_path.append(idx)
                        ev_comp.append(np.full(idx.size, k))
                        ev_index.append(np.full(idx.size, i + 1))
                        ev_size.append(sz)
            except ExprDomainError as exc:
                raise SimulationError(f"{c.name}: step {i} (t={ti}): {exc}") from exc
            nxt[:, k - 1] = x[:, k - 1] + inc
        if not np.all(np.isfinite(nxt)):
            p, k = np.argwhere(~np.isfinite(nxt))[0]
            raise SimulationError(f"non-finite state for {comps[k].name} on path {p} at step {i + 1}")

    events = _events(ev_path, ev_comp, ev_index, ev_size)
    return PathSet(grid, values, events, seed, tuple(spec.names))


def _events(paths, comps, index, sizes) -> np.ndarray:
    if not paths:
        return np.zeros(0, dtype=PathSet.EVENT_DTYPE)
    out = np.empty(sum(len(a) for a in paths), dtype=PathSet.EVENT_DTYPE)
    out["path"] = np.concatenate(paths)
    out["component"] = np.concatenate(comps)
    out["index"] = np.concatenate(index)
    out["size"] = np.concatenate(sizes)
    order = np.lexsort((out["component"], out["index"], out["path"]))
    return out[order]


def discretize(paths: PathSet, stride: int) -> PathSet:
    """Keep every ``stride``-th grid point; jumps move to the next kept point."""
    if stride < 1 or paths.n_steps % stride:
        raise ValueError(f"stride {stride} does not divide {paths.n_steps} steps")
    if stride == 1:
        return paths
    ev = paths.events.copy()
    ev["index"] = (ev["index"] + stride - 1) // stride
    return PathSet(paths.grid[::stride].copy(), paths.values[:, ::stride].copy(), ev,
                   paths.seed, paths.names)


# ---------------------------------------------------------------- CSV I/O


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_paths(paths: PathSet, out_dir: str | Path) -> None:
    """Write ``paths.csv``, ``events.csv`` and ``meta.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ff = format_float
    head = "path,t," + ",".join(f"x{k}" for k in range(1, paths.m + 1))
    lines = [head]
    ts = [ff(t) for t in paths.grid]
    for p in range(paths.n_paths):
        block = paths.values[p]
        for i, t in enumerate(ts):
            lines.append(f"{p},{t}," + ",".join(ff(v) for v in block[i]))
    _atomic_write(out / "paths.csv", "\n".join(lines) + "\n")

    lines = ["path,component,t,size"]
    for e in paths.events:
        lines.append(f"{e['path']},{e['component']},{ts[e['index']]},{ff(e['size'])}")
    _atomic_write(out / "events.csv", "\n".join(lines) + "\n")

    meta = {"n_paths": paths.n_paths, "m": paths.m, "n_steps": paths.n_steps,
            "seed": paths.seed, "names": list(paths.names)}
    _atomic_write(out / "meta.json", json.dumps(meta, indent=2) + "\n")


def read_paths(in_dir: str | Path) -> PathSet:
    src = Path(in_dir)
    raw = np.loadtxt(src / "paths.csv", delimiter=",", skiprows=1, ndmin=2)
    meta = json.loads((src / "meta.json").read_text()) if (src / "meta.json").exists() else {}
    path_ids = raw[:, 0].astype(np.int64)
    n_paths = int(path_ids.max()) + 1
    rows_per_path = raw.shape[0] // n_paths
    if rows_per_path * n_paths != raw.shape[0]:
        raise SpecError(f"{src / 'paths.csv'}: paths have unequal lengths")
    grid = raw[:rows_per_path, 1].copy()
    values = raw[:, 2:].reshape(n_paths, rows_per_path, -1).copy()
    ev_lines = (src / "events.csv").read_text().splitlines()[1:]
    ev_raw = np.array([[float(v) for v in line.split(",")] for line in ev_lines if line.strip()])
    events = np.zeros(ev_raw.shape[0], dtype=PathSet.EVENT_DTYPE)
    if ev_raw.size:
        events["path"] = ev_raw[:, 0].astype(np.int64)
        events["component"] = ev_raw[:, 1].astype(np.int64)
        events["index"] = np.searchsorted(grid, ev_raw[:, 2])
        events["size"] = ev_raw[:, 3]
    names = tuple(meta.get("names", ())) or tuple(f"X{k}" for k in range(1, values.shape[2] + 1))
    return PathSet(grid, values, events, int(meta.get("seed", 0)), names)
