"""Detecting direct influence from path data.

Three tests are available for an ordered pair ``(j, k)``:

``lrt``
    nested-model likelihood ratio on a parametric family, using the
    component's Girsanov log-likelihood as the objective;
``granger``
    pooled least squares of the one-step increment of ``X_k`` on lagged
    values of every component, F-test on the ``X_j`` lags;
``fscli``
    regression of ``X_k(tau)`` on all components' values at decile probe
    times, F-test on the ``X_j`` block.

Granger and FSCLI pool the regression across independent replicate paths.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np
from scipy import optimize, stats

from .expr import fix_params, free_components, free_params
from .graph import InfluenceGraph
from .likelihood import LikelihoodError, LoglikEvaluator
from .model import ProcessSpec
from .simulate import PathSet

__all__ = [
    "InferenceError", "ModelFamily", "MLEFit", "TestReport",
    "fit_mle", "lrt_direct_influence", "granger_test", "fscli_test",
    "run_pair_tests", "recover_graph", "METHODS",
]

log = logging.getLogger(__name__)

METHODS = ("lrt", "granger", "fscli")
GTOL = 1e-8
MAX_ITER = 200
N_RESTARTS = 5
FD_STEP = 1e-5


class InferenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelFamily:
    """A parametric spec plus, per ordered pair, the parameters carrying that edge.

    Fixing every parameter in ``edge_params[(j, k)]`` at zero must remove
    ``x_j`` from component ``k``'s drift, intensity and jump size.
    """

    spec: ProcessSpec
    edge_params: Mapping[tuple[int, int], tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        for (j, k), params in self.edge_params.items():
            c = self.spec.component(k)
            zeros = {p: 0.0 for p in params}
            deps = set()
            for e in (c.drift, c.jump_intensity, c.jump_size):
                if e is not None:
                    deps |= free_components(fix_params(e, zeros))
            if j in deps:
                raise ValueError(f"zeroing {list(params)} does not remove x{j} from component {k}")

    @classmethod
    def from_spec(cls, spec: ProcessSpec) -> "ModelFamily":
        return cls(spec, dict(spec.edge_params))

    def component_params(self, k: int) -> list[int]:
        c = self.spec.component(k)
        out: set[int] = set()
        for e in c.expressions().values():
            out |= free_params(e)
        return sorted(out)


@dataclass(frozen=True)
class MLEFit:
    theta: np.ndarray
    loglik: float  # summed over paths
    grad_norm: float
    converged: bool
    n_iter: int
    params: tuple[int, ...]


@dataclass
class TestReport:
    pair: tuple[int, int]
    method: str
    statistic: float
    dof: int
    p_value: float
    alpha: float
    decision: bool = field(init=False)
    dof_denominator: int | None = None
    n_obs: int | None = None
    theta: list[float] | None = None

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")
        self.decision = bool(self.p_value < self.alpha)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pair"] = list(self.pair)
        return d


# ------------------------------------------------------------------ MLE


def _fd_grad(fun, v: np.ndarray) -> np.ndarray:
    g = np.empty_like(v)
    for i in range(v.size):
        step = FD_STEP * (1.0 + abs(v[i]))
        up = v.copy()
        dn = v.copy()
        up[i] += step
        dn[i] -= step
        g[i] = (fun(up) - fun(dn)) / (2.0 * step)
    return g


def fit_mle(family: ModelFamily, paths: PathSet, k: int,
            fixed: Mapping[int, float] | None = None,
            restarts: int = N_RESTARTS) -> MLEFit:
    """Maximise the summed log-likelihood of component ``k`` over its parameters.

    Parameters not read by component ``k`` keep their family values.  BFGS
    runs on the per-path mean log-likelihood with central finite-difference
    gradients; ``restarts`` extra starts are drawn around the initial point
    from a fixed generator, and the best optimum is kept.
    """
    spec = family.spec
    fixed = dict(fixed or {})
    base = np.array(spec.theta if spec.theta is not None else np.zeros(spec.n_params), dtype=float)
    for p, v in fixed.items():
        base[p - 1] = v
    free = [p for p in family.component_params(k) if p not in fixed]
    idx = np.array(free, dtype=int) - 1
    n = paths.n_paths

    def theta_of(v):
        th = base.copy()
        th[idx] = v
        return th

    evaluator = LoglikEvaluator(spec, paths, k)

    def objective(v):
        try:
            ll = evaluator.final(theta_of(v))
        except LikelihoodError:
            return math.inf
        total = float(ll.mean())
        return -total if math.isfinite(total) else math.inf

    x0 = base[idx].copy()
    f0 = objective(x0)
    if not math.isfinite(f0):
        raise InferenceError(f"log-likelihood of component {k} is not finite at the initial point")
    if not free:
        return MLEFit(base, -f0 * n, 0.0, True, 0, ())

    rng = np.random.default_rng(0)
    starts = [x0] + [x0 + 0.5 * (1.0 + np.abs(x0)) * rng.standard_normal(x0.size)
                     for _ in range(restarts)]
    best = None
    for s in starts:
        if not math.isfinite(objective(s)):
            continue
        res = optimize.minimize(objective, s, jac=lambda v: _fd_grad(objective, v), method="BFGS",
                                options={"gtol": GTOL, "maxiter": MAX_ITER, "norm": np.inf})
        if not math.isfinite(res.fun):
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise InferenceError(f"no restart produced a finite optimum for component {k}")
    gnorm = float(np.max(np.abs(_fd_grad(objective, best.x))))
    converged = gnorm < GTOL or bool(best.success)
    if not converged:
        log.warning("fit for component %d stopped with gradient norm %.3g (%s)", k, gnorm, best.message)
    return MLEFit(theta_of(best.x), -float(best.fun) * n, gnorm, converged, int(best.nit), tuple(free))


def lrt_direct_influence(family: ModelFamily, paths: PathSet, j: int, k: int,
                         alpha: float = 0.05) -> TestReport:
    """Likelihood-ratio test of the edge parameters E(j, k) against zero."""
    params = tuple(family.edge_params.get((j, k), ()))
    if not params:
        raise ValueError(f"family has no edge parameters for ({j}, {k})")
    full = fit_mle(family, paths, k)
    restricted = fit_mle(family, paths, k, fixed={p: 0.0 for p in params})
    stat = max(0.0, 2.0 * (full.loglik - restricted.loglik))
    dof = len(params)
    p = float(stats.chi2.sf(stat, dof))
    return TestReport((j, k), "lrt", stat, dof, p, alpha, n_obs=paths.n_paths,
                      theta=[float(v) for v in full.theta])


# ------------------------------------------------------------ regressions


def _drop_constant(columns: list[np.ndarray], labels: list[str], what: str):
    keep_c, keep_l = [], []
    for col, lab in zip(columns, labels):
        if np.ptp(col) == 0:
            log.warning("%s: dropping zero-variance regressor %s", what, lab)
            continue
        keep_c.append(col)
        keep_l.append(lab)
    return keep_c, keep_l


def _f_test(y, restricted_cols, extra_cols, pair, method, alpha, what) -> TestReport:
    n = y.shape[0]
    ones = np.ones(n)
    Xr = np.column_stack([ones] + restricted_cols)
    Xf = np.column_stack([Xr] + extra_cols) if extra_cols else Xr
    q = len(extra_cols)
    if q == 0:
        raise InferenceError(f"{what}: no usable regressors for X{pair[0]}")
    kf = Xf.shape[1]
    if np.linalg.matrix_rank(Xf) < kf:
        raise InferenceError(f"{what}: rank-deficient design ({kf} columns)")
    if n <= kf:
        raise InferenceError(f"{what}: {n} observations for {kf} regressors")
    rss_f = float(np.sum((y - Xf @ np.linalg.lstsq(Xf, y, rcond=None)[0]) ** 2))
    rss_r = float(np.sum((y - Xr @ np.linalg.lstsq(Xr, y, rcond=None)[0]) ** 2))
    df2 = n - kf
    if rss_f <= 0:
        raise InferenceError(f"{what}: perfect fit, F statistic undefined")
    F = max(0.0, (rss_r - rss_f) / q) / (rss_f / df2)
    p = float(stats.f.sf(F, q, df2))
    return TestReport(pair, method, F, q, p, alpha, dof_denominator=df2, n_obs=n)


def granger_test(paths: PathSet, j: int, k: int, order: int = 1, alpha: float = 0.05) -> TestReport:
    """Horizon-one Granger test of X_j -> X_k on pooled replicate paths."""
    if j == k:
        raise ValueError("Granger test needs j != k")
    if order < 1:
        raise ValueError("lag order must be >= 1")
    X = paths.values
    m = paths.m
    G = paths.n_steps
    if G < order:
        raise InferenceError(f"{G} steps cannot support {order} lags")
    y = (X[:, order:, k - 1] - X[:, order - 1:G, k - 1]).ravel()
    n_obs = y.shape[0]
    if n_obs <= 10 * (m * order + 1):
        raise InferenceError(f"granger: {n_obs} observations, need more than {10 * (m * order + 1)}")
    own, own_l, other, other_l = [], [], [], []
    for lag in range(order):
        sl = slice(order - 1 - lag, G - lag)
        for l in range(1, m + 1):
            col = X[:, sl, l - 1].ravel()
            (other if l == j else own).append(col)
            (other_l if l == j else own_l).append(f"x{l}[t-{lag}]")
    what = f"granger({j}->{k})"
    own, _ = _drop_constant(own, own_l, what)
    other, _ = _drop_constant(other, other_l, what)
    return _f_test(y, own, other, (j, k), "granger", alpha, what)


def probe_indices(paths: PathSet) -> list[int]:
    """Grid indices nearest to 0, 0.1 tau, ..., 0.9 tau."""
    G = paths.n_steps
    return sorted({int(round(q * G / 10)) for q in range(10)})


def fscli_test(paths: PathSet, j: int, k: int, alpha: float = 0.05) -> TestReport:
    """Test X_k(tau) independent of X_j's probed history given the others' history."""
    if j == k:
        raise ValueError("FSCLI test needs j != k")
    if paths.n_paths < 100:
        raise InferenceError(f"fscli needs at least 100 paths, got {paths.n_paths}")
    X = paths.values
    y = X[:, -1, k - 1]
    probes = probe_indices(paths)
    rest, rest_l, block, block_l = [], [], [], []
    for l in range(1, paths.m + 1):
        for i in probes:
            col = X[:, i, l - 1]
            (block if l == j else rest).append(col)
            (block_l if l == j else rest_l).append(f"x{l}(t{i})")
    what = f"fscli({j}->{k})"
    rest, _ = _drop_constant(rest, rest_l, what)
    block, _ = _drop_constant(block, block_l, what)
    return _f_test(y, rest, block, (j, k), "fscli", alpha, what)


# ------------------------------------------------------------ all pairs


def run_pair_tests(paths: PathSet, method: str, alpha: float = 0.05,
                   family: ModelFamily | None = None, order: int = 1,
                   pairs=None) -> tuple[list[TestReport], dict[tuple[int, int], str]]:
    """Run ``method`` on every ordered pair; failures are collected, not raised."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if method == "lrt" and family is None:
        raise ValueError("the lrt method needs a model family")
    m = paths.m
    if pairs is None:
        pairs = [(j, k) for k in range(1, m + 1) for j in range(1, m + 1) if j != k]
    reports, errors = [], {}
    for j, k in pairs:
        try:
            if method == "lrt":
                rep = lrt_direct_influence(family, paths, j, k, alpha)
            elif method == "granger":
                rep = granger_test(paths, j, k, order, alpha)
            else:
                rep = fscli_test(paths, j, k, alpha)
        except (InferenceError, ValueError, LikelihoodError) as exc:
            errors[(j, k)] = str(exc)
            continue
        reports.append(rep)
    return reports, errors


def recover_graph(paths: PathSet, method: str, alpha: float = 0.05,
                  correction: str = "none", family: ModelFamily | None = None,
                  order: int = 1, names: tuple[str, ...] = ()) -> tuple[InfluenceGraph, list[TestReport]]:
    """Estimate the direct-influence graph by testing every ordered pair.

    With ``correction="bonferroni"`` each test runs at ``alpha / (m (m - 1))``.
    Pairs whose test failed are returned as undecided.
    """
    m = paths.m
    if correction not in ("none", "bonferroni"):
        raise ValueError(f"unknown correction {correction!r}")
    level = alpha / (m * (m - 1)) if correction == "bonferroni" and m > 1 else alpha
    reports, errors = run_pair_tests(paths, method, level, family, order)
    for pair, msg in errors.items():
        log.warning("pair %s undecided: %s", pair, msg)
    edges = frozenset(r.pair for r in reports if r.decision)
    prov = {r.pair: ("statistical", r.p_value) for r in reports if r.decision}
    graph = InfluenceGraph(m, edges, names or paths.names, prov, frozenset(errors))
    return graph, reports
