"""Semimartingale characteristics evaluated along simulated paths.

All integrals use left-endpoint (predictable) quadrature on the path grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import evaluate
from .model import COUNTING, ProcessSpec
from .simulate import PathSet, format_float

__all__ = ["Triplet", "evaluate_triplet", "martingale_residual", "compensator", "triplet_csv"]


@dataclass(frozen=True)
class Triplet:
    """Cumulative characteristics of one component, each shaped (n_paths, G+1).

    ``nu`` is the integrated jump intensity times jump size; for a counting
    component it is the compensator itself.
    """

    component: int
    grid: np.ndarray
    B: np.ndarray
    C: np.ndarray
    nu: np.ndarray


def _check_grid(spec: ProcessSpec, paths: PathSet) -> None:
    if paths.m != spec.m:
        raise ValueError(f"paths have {paths.m} components, spec has {spec.m}")
    steps = np.diff(paths.grid)
    if steps.size == 0 or not np.allclose(steps, paths.dt, rtol=1e-9, atol=0):
        raise ValueError("path grid is not uniform")


def _cumulate(increments: np.ndarray) -> np.ndarray:
    out = np.zeros(increments.shape[:-1] + (increments.shape[-1] + 1,))
    np.cumsum(increments, axis=-1, out=out[..., 1:])
    return out


def _left_states(paths: PathSet) -> tuple[np.ndarray, np.ndarray]:
    return paths.values[:, :-1, :], paths.grid[:-1]


def evaluate_triplet(spec: ProcessSpec, paths: PathSet, k: int) -> Triplet:
    _check_grid(spec, paths)
    c = spec.component(k)
    theta = spec.theta_array()
    h = paths.dt
    x, t = _left_states(paths)
    shape = x.shape[:2]
    zero = np.zeros(shape)

    if c.kind == COUNTING:
        b_inc = c_inc = zero
    else:
        b_inc = np.broadcast_to(evaluate(c.drift, x, t, theta) * h, shape)
        sig = evaluate(c.sigma, x[:1], t, theta)[0]
        c_inc = np.broadcast_to(sig * sig * h, shape)
    if c.has_jumps:
        rate = evaluate(c.jump_intensity, x, t, theta)
        size = evaluate(c.effective_jump_size(), x, t, theta)
        nu_inc = np.broadcast_to(rate * size * h, shape)
    else:
        nu_inc = zero
    return Triplet(k, paths.grid, _cumulate(b_inc), _cumulate(c_inc), _cumulate(nu_inc))


def compensator(spec: ProcessSpec, paths: PathSet, k: int) -> np.ndarray:
    """Lambda_k = B_k + nu_k, the predictable finite-variation part of X_k."""
    tr = evaluate_triplet(spec, paths, k)
    return tr.B + tr.nu


def martingale_residual(spec: ProcessSpec, paths: PathSet, k: int) -> np.ndarray:
    """X_k(t) - X_k(0) - Lambda_k(t) per path, shape (n_paths, G+1)."""
    col = paths.column(k)
    return col - col[:, :1] - compensator(spec, paths, k)


def triplet_csv(tr: Triplet) -> str:
    ff = format_float
    lines = ["path,t,B,C,nu"]
    ts = [ff(t) for t in tr.grid]
    for p in range(tr.B.shape[0]):
        for i, t in enumerate(ts):
            lines.append(f"{p},{t},{ff(tr.B[p, i])},{ff(tr.C[p, i])},{ff(tr.nu[p, i])}")
    return "\n".join(lines) + "\n"
