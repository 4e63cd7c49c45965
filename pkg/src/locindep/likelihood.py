"""Girsanov log-likelihood-ratio processes against canonical reference measures.

For component ``k`` the reference ``P0`` keeps every other component as is
and replaces ``k`` by

* a driftless diffusion with the same ``sigma(t)`` (diffusion),
* a unit-rate Poisson process (counting),
* the sum of both, keeping the jump sizes (jump diffusion).

The log density of the model against that reference is accumulated on the
path grid with left-endpoint integrands::

    diffusion:  sum f/sigma^2 dX_c  -  1/2 sum f^2/sigma^2 dt
    counting:   sum_jumps log beta  +  sum (1 - beta) dt

``dX_c`` is the continuous increment, i.e. the observed increment minus the
recorded jump sizes.  ``exp(logZ)`` is a martingale under ``P0`` (not under
the model), which is what :func:`martingale_mean` checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .expr import ExprDomainError, Num, evaluate_columns
from .model import COUNTING, DIFFUSION, JUMP_DIFFUSION, ProcessSpec
from .simulate import PathSet, format_float, simulate

__all__ = [
    "LikelihoodError", "LogLikProcess", "LoglikEvaluator",
    "loglik", "loglik_diffusion", "loglik_counting", "loglik_jumpdiff",
    "reference_spec", "lwcli_perturbation_check", "martingale_mean", "loglik_csv",
]

REFERENCES = {
    DIFFUSION: "driftless diffusion with the same sigma(t)",
    COUNTING: "unit-rate Poisson process",
    JUMP_DIFFUSION: "driftless diffusion with the same sigma(t) plus unit-rate Poisson jumps",
}


class LikelihoodError(ValueError):
    pass


@dataclass(frozen=True)
class LogLikProcess:
    component: int
    grid: np.ndarray
    logZ: np.ndarray  # (n_paths, G+1), logZ[:, 0] == 0
    reference: str

    @property
    def final(self) -> np.ndarray:
        return self.logZ[:, -1]


def _cumulate(increments: np.ndarray) -> np.ndarray:
    out = np.zeros(increments.shape[:-1] + (increments.shape[-1] + 1,))
    np.cumsum(increments, axis=-1, out=out[..., 1:])
    return out


def _theta(spec: ProcessSpec, theta):
    return spec.theta_array() if theta is None else np.asarray(theta, dtype=float)


class LoglikEvaluator:
    """Log-likelihood of component ``k`` on fixed paths, for repeated theta.

    State columns, increments and jump counts are extracted once; each call
    only re-evaluates the expressions.
    """

    def __init__(self, spec: ProcessSpec, paths: PathSet, k: int):
        self.spec = spec
        self.k = k
        self.c = c = spec.component(k)
        self.h = paths.dt
        self.t = paths.grid[:-1]
        self.shape = (paths.n_paths, paths.n_steps)
        self.columns = [np.ascontiguousarray(paths.values[:, :-1, l]) for l in range(paths.m)]
        if c.has_continuous_part:
            dx = np.diff(paths.column(k), axis=1)
            if c.kind == JUMP_DIFFUSION:
                dx = dx - paths.jump_totals[:, :, k - 1]
            self.dx = dx
        if c.has_jumps:
            self.counts = np.ascontiguousarray(paths.jump_counts[:, :, k - 1])
            self.jumped = self.counts > 0

    def _eval(self, e, theta):
        return evaluate_columns(e, self.columns, self.t, theta, self.shape)

    def _diffusion(self, theta):
        c = self.c
        sig = np.asarray(evaluate_columns(c.sigma, [], self.t, theta), dtype=float)
        if np.any(sig <= 0):
            i = int(np.flatnonzero(sig <= 0)[0])
            raise LikelihoodError(f"{c.name}: sigma is {sig[i]} at t={self.t[i]}; the density needs sigma > 0")
        s2 = sig * sig
        f = self._eval(c.drift, theta)
        return (f / s2) * self.dx - 0.5 * (f * f / s2) * self.h

    def _counting(self, theta):
        c = self.c
        beta = self._eval(c.jump_intensity, theta)
        jumped = self.jumped
        if np.any(beta[jumped] <= 0):
            p, i = np.argwhere(jumped & (beta <= 0))[0]
            raise LikelihoodError(f"{c.name}: intensity {beta[p, i]} <= 0 at a jump (path {p}, t={self.t[i]})")
        log_beta = np.zeros(self.shape)
        np.log(beta, out=log_beta, where=jumped)
        return self.counts * log_beta + (1.0 - beta) * self.h

    def increments(self, theta) -> np.ndarray:
        """Per-step log-likelihood increments, shape (n_paths, G)."""
        try:
            if self.c.kind == DIFFUSION:
                return np.broadcast_to(self._diffusion(theta), self.shape)
            if self.c.kind == COUNTING:
                return self._counting(theta)
            return self._diffusion(theta) + self._counting(theta)
        except ExprDomainError as exc:
            raise LikelihoodError(str(exc)) from exc

    def final(self, theta) -> np.ndarray:
        """logZ(tau) per path."""
        if self.c.kind != DIFFUSION:
            return self.increments(theta).sum(axis=1)
        try:
            w = self._weights(theta)
            f = np.broadcast_to(self._eval(self.c.drift, theta), self.shape)
        except ExprDomainError as exc:
            raise LikelihoodError(str(exc)) from exc
        return (np.einsum("ij,ij,j->i", f, self.dx, w)
                - 0.5 * self.h * np.einsum("ij,ij,j->i", f, f, w))

    def _weights(self, theta) -> np.ndarray:
        """1 / sigma(t)^2 on the left grid points."""
        c = self.c
        sig = np.asarray(evaluate_columns(c.sigma, [], self.t, theta), dtype=float)
        if np.any(sig <= 0):
            i = int(np.flatnonzero(sig <= 0)[0])
            raise LikelihoodError(f"{c.name}: sigma is {sig[i]} at t={self.t[i]}; the density needs sigma > 0")
        return 1.0 / (sig * sig)


def _require(spec, k, kind):
    c = spec.component(k)
    if c.kind != kind:
        raise LikelihoodError(f"{c.name} is a {c.kind} component, not {kind}")


def loglik_diffusion(spec: ProcessSpec, paths: PathSet, k: int, theta=None) -> LogLikProcess:
    _require(spec, k, DIFFUSION)
    return _process(spec, paths, k, theta)


def loglik_counting(spec: ProcessSpec, paths: PathSet, k: int, theta=None) -> LogLikProcess:
    _require(spec, k, COUNTING)
    return _process(spec, paths, k, theta)


def loglik_jumpdiff(spec: ProcessSpec, paths: PathSet, k: int, theta=None) -> LogLikProcess:
    _require(spec, k, JUMP_DIFFUSION)
    return _process(spec, paths, k, theta)


def _process(spec, paths, k, theta) -> LogLikProcess:
    inc = LoglikEvaluator(spec, paths, k).increments(_theta(spec, theta))
    return LogLikProcess(k, paths.grid, _cumulate(inc), REFERENCES[spec.component(k).kind])


_BY_KIND = {DIFFUSION: loglik_diffusion, COUNTING: loglik_counting, JUMP_DIFFUSION: loglik_jumpdiff}


def loglik(spec: ProcessSpec, paths: PathSet, k: int, theta=None) -> LogLikProcess:
    """Log density process of component ``k``, dispatched on its kind."""
    return _BY_KIND[spec.component(k).kind](spec, paths, k, theta)


def reference_spec(spec: ProcessSpec, k: int) -> ProcessSpec:
    """The canonical reference measure for component ``k`` as a spec."""
    c = spec.component(k)
    changes = {}
    if c.has_continuous_part:
        changes["drift"] = Num(0.0)
    if c.has_jumps:
        changes["jump_intensity"] = Num(1.0)
    return spec.with_component(k, **changes)


def lwcli_perturbation_check(spec: ProcessSpec, paths: PathSet, k: int, j: int,
                             eps: float | Iterable[float] = 0.1) -> float:
    """Largest change of logZ_k when every value of X_j is shifted by ``eps``.

    Zero means the likelihood process of ``k`` never reads ``X_j``.  Only the
    component values are shifted; recorded jumps are left untouched.
    """
    if j == k:
        raise ValueError("perturbation check needs two distinct components")
    spec.component(j)
    eps_list = [float(eps)] if np.isscalar(eps) else [float(e) for e in eps]
    base = loglik(spec, paths, k).logZ
    worst = 0.0
    col = paths.column(j)
    for e in eps_list:
        moved = paths.replace_column(j, col + e)
        try:
            other = loglik(spec, moved, k).logZ
        except LikelihoodError as exc:
            raise LikelihoodError(f"perturbing X{j} by {e} leaves the domain: {exc}") from exc
        worst = max(worst, float(np.max(np.abs(other - base))))
    return worst


def martingale_mean(spec: ProcessSpec, k: int, dt: float, n_paths: int, seed: int,
                    theta: Sequence[float] | None = None) -> tuple[float, float]:
    """Monte Carlo mean and standard error of exp(logZ_k(tau)) under the reference.

    Paths are drawn from :func:`reference_spec`; the density is that of
    ``spec``.  The result should be 1 within sampling error.
    """
    ref = reference_spec(spec, k)
    paths = simulate(ref, dt, n_paths, seed)
    z = np.exp(loglik(spec, paths, k, theta).final)
    return float(z.mean()), float(z.std(ddof=1) / math.sqrt(n_paths))


def loglik_csv(ll: LogLikProcess) -> str:
    ff = format_float
    lines = ["path,t,logZ"]
    ts = [ff(t) for t in ll.grid]
    for p in range(ll.logZ.shape[0]):
        row = ll.logZ[p]
        for i, t in enumerate(ts):
            lines.append(f"{p},{t},{ff(row[i])}")
    return "\n".join(lines) + "\n"
