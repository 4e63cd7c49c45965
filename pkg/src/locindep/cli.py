"""Command-line interface.

Exit status: 0 success, 1 domain violation (invalid spec, failed
simulation or test), 2 I/O or usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import characteristics, graph, inference, likelihood
from .experiment import ConfigError, ExperimentConfig, run_experiment, write_experiment
from .model import SpecError, load_spec, validate
from .simulate import SimulationError, discretize, format_float, read_paths, simulate, write_paths

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _spec(path):
    try:
        return load_spec(path)
    except FileNotFoundError as exc:
        raise UsageError(f"no such spec file: {exc}") from exc
    except SpecError as exc:
        raise UsageError(str(exc)) from exc


def _data(path):
    if path is None:
        raise UsageError("--data DIR is required")
    try:
        return read_paths(path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read path data from {path}: {exc}") from exc


def _components(spec, k):
    if k is None:
        return list(range(1, spec.m + 1))
    if not 1 <= k <= spec.m:
        raise UsageError(f"component {k} outside 1..{spec.m}")
    return [k]


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_validate(args) -> int:
    spec = _spec(args.spec)
    problems = validate(spec)
    for v in problems:
        print(v)
    if problems:
        return EXIT_DOMAIN
    print(f"ok: {spec.m} components")
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = _spec(args.spec)
    if args.horizon is not None:
        spec = spec.with_horizon(args.horizon)
    problems = validate(spec)
    if problems:
        for v in problems:
            print(v, file=sys.stderr)
        return EXIT_DOMAIN
    paths = simulate(spec, args.dt, args.paths, args.seed)
    if args.stride > 1:
        paths = discretize(paths, args.stride)
    try:
        write_paths(paths, args.out)
    except OSError as exc:
        raise UsageError(f"cannot write to {args.out}: {exc}") from exc
    print(f"t={format_float(paths.grid[-1])} n_paths={paths.n_paths} events={len(paths.events)}")
    print("component,mean,variance")
    for name, mean, var in paths.summary():
        print(f"{name},{format_float(mean)},{format_float(var)}")
    return EXIT_OK


def cmd_loglik(args) -> int:
    spec = _spec(args.spec)
    paths = _data(args.data)
    out = Path(args.out)
    for k in _components(spec, args.component):
        ll = likelihood.loglik(spec, paths, k)
        _write(out / f"loglik_{spec.names[k - 1]}.csv", likelihood.loglik_csv(ll))
        print(f"{spec.names[k - 1]}: mean logZ(tau) = {format_float(ll.final.mean())}")
    if args.lwcli is not None:
        print("lwcli check: max |change of logZ_k| when X_j is shifted by", format_float(args.lwcli))
        for k in _components(spec, args.component):
            for j in range(1, spec.m + 1):
                if j != k:
                    d = likelihood.lwcli_perturbation_check(spec, paths, k, j, args.lwcli)
                    print(f"j={j},k={k},{format_float(d)}")
    return EXIT_OK


def cmd_triplet(args) -> int:
    spec = _spec(args.spec)
    paths = _data(args.data)
    out = Path(args.out)
    for k in _components(spec, args.component):
        tr = characteristics.evaluate_triplet(spec, paths, k)
        _write(out / f"triplet_{spec.names[k - 1]}.csv", characteristics.triplet_csv(tr))
    return EXIT_OK


def cmd_test(args) -> int:
    spec = _spec(args.spec)
    paths = _data(args.data)
    if args.stride > 1:
        paths = discretize(paths, args.stride)
    family = inference.ModelFamily.from_spec(spec) if args.method == "lrt" else None
    pairs = [tuple(args.pair)] if args.pair else None
    reports, errors = inference.run_pair_tests(paths, args.method, args.alpha, family, args.order, pairs)
    text = json.dumps([r.to_dict() for r in reports], indent=2) + "\n"
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    for (j, k), msg in errors.items():
        print(f"pair ({j},{k}) undecided: {msg}", file=sys.stderr)
    return EXIT_DOMAIN if errors else EXIT_OK


def cmd_graph(args) -> int:
    spec = _spec(args.spec)
    if args.infer:
        paths = _data(args.data)
        family = inference.ModelFamily.from_spec(spec) if args.method == "lrt" else None
        g, _ = inference.recover_graph(paths, args.method, args.alpha, args.correction,
                                       family, args.order, tuple(spec.names))
    else:
        target = spec.instantiate() if spec.n_params and spec.theta is not None else spec
        g = graph.syntactic_graph(target)
    if args.out:
        out = Path(args.out)
        _write(out / "graph.dot", g.to_dot())
        _write(out / "graph.json", g.to_json())
    print("edges: " + (", ".join(f"{g.names[j - 1]}->{g.names[k - 1]}" for j, k in sorted(g.edges)) or "(none)"))
    if g.undecided:
        print("undecided: " + ", ".join(f"{j}->{k}" for j, k in sorted(g.undecided)))
    print()
    print(g.to_dot(), end="")
    print()
    print("influence of row on column:")
    print(graph.taxonomy_matrix(g))
    print()
    print("pair cells (j->k, k->j):")
    for (a, b), pairs in graph.nine_way_table(g).items():
        names = " ".join(f"{{{g.names[j - 1]},{g.names[k - 1]}}}" for j, k in pairs) or "-"
        print(f"  {a:>8} / {b:<8} {names}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config)
    except FileNotFoundError as exc:
        raise UsageError(f"no such config file: {exc}") from exc
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    spec = _spec(cfg.spec)
    rows, records = run_experiment(cfg, spec)
    write_experiment(cfg.output, rows, records)
    print("pair,method,rejection_rate,mean_stat")
    for row in rows:
        print(f"{row['pair']},{row['method']},{format_float(row['rejection_rate'])},"
              f"{format_float(row['mean_stat'])}")
    return EXIT_OK


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {v}")
    return v


def _alpha(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="locindep", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", help="check a spec against A1 / A2' / bounded jumps")
    s.add_argument("spec")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("simulate", help="simulate paths and write CSV files")
    s.add_argument("spec")
    s.add_argument("--dt", type=_positive_float, required=True)
    s.add_argument("--paths", type=_positive_int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--horizon", type=_positive_float)
    s.add_argument("--stride", type=_positive_int, default=1)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("loglik", help="dump log-likelihood-ratio processes")
    s.add_argument("spec")
    s.add_argument("--data", required=True)
    s.add_argument("--component", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--lwcli", type=float, metavar="EPS",
                   help="also report the perturbation check for every j")
    s.set_defaults(func=cmd_loglik)

    s = sub.add_parser("triplet", help="dump the characteristics (B, C, nu)")
    s.add_argument("spec")
    s.add_argument("--data", required=True)
    s.add_argument("--component", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_triplet)

    s = sub.add_parser("test", help="test direct influence from path data")
    s.add_argument("spec")
    s.add_argument("--data", required=True)
    s.add_argument("--method", choices=inference.METHODS, default="granger")
    s.add_argument("--pair", type=int, nargs=2, metavar=("J", "K"))
    s.add_argument("--alpha", type=_alpha, default=0.05)
    s.add_argument("--order", type=_positive_int, default=1)
    s.add_argument("--stride", type=_positive_int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_test)

    s = sub.add_parser("graph", help="influence graph (syntactic, or inferred from data)")
    s.add_argument("spec")
    s.add_argument("--infer", action="store_true")
    s.add_argument("--data")
    s.add_argument("--method", choices=inference.METHODS, default="granger")
    s.add_argument("--alpha", type=_alpha, default=0.05)
    s.add_argument("--correction", choices=("none", "bonferroni"), default="none")
    s.add_argument("--order", type=_positive_int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_graph)

    s = sub.add_parser("experiment", help="replicated simulate/test study from a JSON config")
    s.add_argument("config")
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SimulationError, likelihood.LikelihoodError, inference.InferenceError, SpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
