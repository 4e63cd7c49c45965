"""Declarative process specifications and the direct-influence structure they imply.

A :class:`ProcessSpec` is a system of ``m`` components, each a diffusion, a
counting process or a jump diffusion, whose drift, jump intensity and jump
size are expressions in the current (left-limit) state.  Noise is never
shared between components and diffusion coefficients depend on time only, so
every valid spec has orthogonal martingale parts and a deterministic
continuous bracket.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Iterable

from .expr import Expr, Num, bounds, fix_params, free_components, free_params, parse, to_source

__all__ = [
    "DIFFUSION", "COUNTING", "JUMP_DIFFUSION", "KINDS",
    "ComponentSpec", "ProcessSpec", "Violation", "SpecError",
    "load_spec", "spec_from_dict", "spec_to_dict", "builtin_spec", "BUILTIN_SPECS",
    "validate", "dependency_set", "is_wcli",
]

DIFFUSION = "diffusion"
COUNTING = "counting"
JUMP_DIFFUSION = "jump-diffusion"
KINDS = (DIFFUSION, COUNTING, JUMP_DIFFUSION)

BUILTIN_SPECS = ("ex1", "ex2", "ex3", "ex1_family")


class SpecError(ValueError):
    """The spec document cannot be turned into a ProcessSpec at all."""


@dataclass(frozen=True)
class ComponentSpec:
    name: str
    kind: str
    drift: Expr | None = None
    sigma: Expr | None = None
    jump_intensity: Expr | None = None
    jump_size: Expr | None = None
    x0: float = 0.0
    driver: str | None = None

    @property
    def noise_driver(self) -> str:
        return self.driver if self.driver is not None else self.name

    @property
    def has_continuous_part(self) -> bool:
        return self.kind in (DIFFUSION, JUMP_DIFFUSION)

    @property
    def has_jumps(self) -> bool:
        return self.kind in (COUNTING, JUMP_DIFFUSION)

    def effective_jump_size(self) -> Expr:
        if self.kind == COUNTING:
            return Num(1.0)
        return self.jump_size if self.jump_size is not None else Num(1.0)

    def expressions(self) -> dict[str, Expr]:
        out = {}
        for key in ("drift", "sigma", "jump_intensity", "jump_size"):
            e = getattr(self, key)
            if e is not None:
                out[key] = e
        return out


@dataclass(frozen=True)
class ProcessSpec:
    components: tuple[ComponentSpec, ...]
    horizon: float
    n_params: int = 0
    theta: tuple[float, ...] | None = None
    jump_bound: float | None = None
    edge_params: dict[tuple[int, int], tuple[int, ...]] = field(default_factory=dict, compare=False)

    @property
    def m(self) -> int:
        return len(self.components)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.components]

    def component(self, k: int) -> ComponentSpec:
        if not 1 <= k <= self.m:
            raise IndexError(f"component index {k} outside 1..{self.m}")
        return self.components[k - 1]

    def theta_array(self) -> tuple[float, ...]:
        if self.theta is None:
            if self.n_params:
                raise SpecError(f"spec declares {self.n_params} parameters but binds no theta values")
            return ()
        return self.theta

    def with_horizon(self, horizon: float) -> "ProcessSpec":
        return replace(self, horizon=float(horizon))

    def with_theta(self, theta: Iterable[float]) -> "ProcessSpec":
        theta = tuple(float(v) for v in theta)
        if len(theta) != self.n_params:
            raise SpecError(f"expected {self.n_params} parameter values, got {len(theta)}")
        return replace(self, theta=theta)

    def with_component(self, k: int, **changes) -> "ProcessSpec":
        comps = list(self.components)
        comps[k - 1] = replace(comps[k - 1], **changes)
        return replace(self, components=tuple(comps))

    def instantiate(self) -> "ProcessSpec":
        """Substitute the bound theta values into every expression.

        Terms whose coefficient is exactly zero disappear, so the result's
        dependency sets reflect the data-generating process.
        """
        values = dict(enumerate(self.theta_array(), start=1))
        comps = []
        for c in self.components:
            fixed = {key: fix_params(e, values) for key, e in c.expressions().items()}
            comps.append(replace(c, **fixed))
        return replace(self, components=tuple(comps), n_params=0, theta=None, edge_params={})


@dataclass(frozen=True)
class Violation:
    component: str
    assumption: str  # "A1", "A2'", "bounded-jumps" or "structure"
    expression: str
    message: str

    def __str__(self) -> str:
        where = f" [{self.expression}]" if self.expression else ""
        return f"{self.component}: {self.assumption} violation: {self.message}{where}"


# ------------------------------------------------------------------ JSON


def _parse_field(raw, m, n_params, where):
    if raw is None:
        return None
    if isinstance(raw, (int, float)):
        raw = repr(float(raw))
    if not isinstance(raw, str):
        raise SpecError(f"{where}: expression must be a string")
    try:
        return parse(raw, m, n_params)
    except ValueError as exc:
        raise SpecError(f"{where}: {exc}") from exc


def spec_from_dict(doc: dict[str, Any]) -> ProcessSpec:
    try:
        raw_components = doc["components"]
        horizon = float(doc["horizon"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"malformed spec document: {exc}") from exc
    m = int(doc.get("m", len(raw_components)))
    if m != len(raw_components):
        raise SpecError(f"m={m} but {len(raw_components)} components listed")
    n_params = int(doc.get("params", 0))
    theta = doc.get("theta")
    if theta is not None:
        theta = tuple(float(v) for v in theta)
        if len(theta) != n_params:
            raise SpecError(f"params={n_params} but theta has {len(theta)} values")
    comps = []
    for i, rc in enumerate(raw_components, start=1):
        name = str(rc.get("name", f"X{i}"))
        kind = rc.get("kind")
        if kind not in KINDS:
            raise SpecError(f"component {name}: unknown kind {kind!r}")
        fields = {
            key: _parse_field(rc.get(key), m, n_params, f"component {name}.{key}")
            for key in ("drift", "sigma", "jump_intensity", "jump_size")
        }
        comps.append(ComponentSpec(
            name=name, kind=kind, x0=float(rc.get("x0", 0.0)),
            driver=rc.get("driver"), **fields,
        ))
    edge_params = {}
    for item in doc.get("edge_params", []):
        j, k = int(item["from"]), int(item["to"])
        edge_params[(j, k)] = tuple(int(p) for p in item["params"])
    jump_bound = doc.get("jump_bound")
    return ProcessSpec(
        components=tuple(comps), horizon=horizon, n_params=n_params, theta=theta,
        jump_bound=None if jump_bound is None else float(jump_bound), edge_params=edge_params,
    )


def spec_to_dict(spec: ProcessSpec) -> dict[str, Any]:
    comps = []
    for c in spec.components:
        rc: dict[str, Any] = {"name": c.name, "kind": c.kind}
        for key, e in c.expressions().items():
            rc[key] = to_source(e)
        rc["x0"] = c.x0
        if c.driver is not None:
            rc["driver"] = c.driver
        comps.append(rc)
    doc: dict[str, Any] = {"m": spec.m, "horizon": spec.horizon, "params": spec.n_params}
    if spec.theta is not None:
        doc["theta"] = list(spec.theta)
    if spec.jump_bound is not None:
        doc["jump_bound"] = spec.jump_bound
    doc["components"] = comps
    if spec.edge_params:
        doc["edge_params"] = [
            {"from": j, "to": k, "params": list(ps)} for (j, k), ps in sorted(spec.edge_params.items())
        ]
    return doc


def builtin_spec(name: str) -> ProcessSpec:
    """One of the shipped example systems (``ex1``, ``ex2``, ``ex3``, ``ex1_family``)."""
    if name not in BUILTIN_SPECS:
        raise KeyError(f"no built-in spec named {name!r}")
    text = resources.files("locindep").joinpath("examples", f"{name}.json").read_text()
    return spec_from_dict(json.loads(text))


def load_spec(path: str | Path) -> ProcessSpec:
    """Read a spec document.

    A path that does not exist but whose file name is a shipped example
    (``examples/ex1.json`` and friends) resolves to the built-in copy.
    """
    path = Path(path)
    if not path.exists():
        if path.suffix == ".json" and path.stem in BUILTIN_SPECS:
            return builtin_spec(path.stem)
        raise FileNotFoundError(str(path))
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON: {exc}") from exc
    return spec_from_dict(doc)


# ------------------------------------------------------------- validation


def validate(spec: ProcessSpec) -> list[Violation]:
    """Check the class-D' assumptions; an empty list means the spec is valid."""
    out: list[Violation] = []
    drivers: dict[str, str] = {}
    theta = spec.theta if spec.theta is not None else None

    if not (spec.horizon > 0 and math.isfinite(spec.horizon)):
        out.append(Violation("<spec>", "structure", "", f"horizon must be positive, got {spec.horizon}"))

    for c in spec.components:
        def bad(assumption, e, msg, c=c):
            out.append(Violation(c.name, assumption, "" if e is None else to_source(e), msg))

        owner = drivers.get(c.noise_driver)
        if owner is not None:
            bad("A1", None, f"noise driver '{c.noise_driver}' already drives {owner}")
        else:
            drivers[c.noise_driver] = c.name

        if c.kind == DIFFUSION:
            if c.jump_intensity is not None or c.jump_size is not None:
                bad("structure", c.jump_intensity or c.jump_size, "diffusion component declares jumps")
            if c.drift is None or c.sigma is None:
                bad("structure", None, "diffusion component needs drift and sigma")
        elif c.kind == COUNTING:
            if c.drift is not None or c.sigma is not None:
                bad("structure", c.drift or c.sigma, "counting component declares drift or sigma")
            if c.jump_intensity is None:
                bad("structure", None, "counting component needs a jump intensity")
            if c.jump_size is not None and not (isinstance(c.jump_size, Num) and c.jump_size.value == 1.0):
                bad("structure", c.jump_size, "counting component must have unit jumps")
            if c.x0 != 0.0:
                bad("structure", None, f"counting component must start at 0, got {c.x0}")
        else:
            if c.drift is None or c.sigma is None or c.jump_intensity is None:
                bad("structure", None, "jump-diffusion needs drift, sigma and jump intensity")

        if c.sigma is not None and free_components(c.sigma):
            bad("A2'", c.sigma, "diffusion coefficient must be deterministic (a function of t only)")

        if c.kind == JUMP_DIFFUSION and c.jump_size is not None:
            missing = [p for p in free_params(c.jump_size) if theta is None or p > len(theta)]
            if not missing:
                lo, hi = bounds(c.jump_size, t_range=(0.0, spec.horizon), theta=theta)
                limit = spec.jump_bound if spec.jump_bound is not None else math.inf
                if not (math.isfinite(lo) and math.isfinite(hi)):
                    bad("bounded-jumps", c.jump_size, "jump size is not provably bounded")
                elif max(abs(lo), abs(hi)) > limit:
                    bad("bounded-jumps", c.jump_size, f"jump size may exceed the bound {limit}")

        for key, e in c.expressions().items():
            idx = free_components(e)
            if any(i < 1 or i > spec.m for i in idx):
                bad("structure", e, f"{key} references a component outside 1..{spec.m}")
            if any(p < 1 or p > spec.n_params for p in free_params(e)):
                bad("structure", e, f"{key} references a parameter outside 1..{spec.n_params}")
    return out


# ------------------------------------------------------ influence structure


def dependency_set(spec: ProcessSpec, k: int) -> frozenset[int]:
    """Components read by the drift, intensity or jump size of component ``k``.

    ``k`` itself is always included.  The diffusion coefficient is ignored:
    it is deterministic and therefore measurable in every filtration.
    """
    c = spec.component(k)
    deps = {k}
    for e in (c.drift, c.jump_intensity, c.jump_size):
        deps |= free_components(e)
    return frozenset(deps)


def is_wcli(spec: ProcessSpec, j: int, k: int) -> bool:
    """True when component ``k`` is weakly locally independent of component ``j``."""
    if j == k:
        raise ValueError("is_wcli needs two distinct components")
    spec.component(j)
    return j not in dependency_set(spec, k)
