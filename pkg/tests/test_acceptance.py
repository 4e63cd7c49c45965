"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or ``python3 tests/test_acceptance.py``.  Monte Carlo sizes and
seeds are fixed, so every run gives the same numbers.
"""

import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import make_spec  # noqa: E402
from oracles import classify_mismatches, random_digraphs  # noqa: E402

from locindep.characteristics import evaluate_triplet  # noqa: E402
from locindep.cli import main as cli_main  # noqa: E402
from locindep.graph import NONE, classify_pair, syntactic_graph  # noqa: E402
from locindep.inference import (  # noqa: E402
    ModelFamily, fscli_test, granger_test, lrt_direct_influence, recover_graph,
)
from locindep.likelihood import loglik, lwcli_perturbation_check, martingale_mean  # noqa: E402
from locindep.model import builtin_spec, is_wcli  # noqa: E402
from locindep.simulate import derive_seed, simulate  # noqa: E402

RESULTS: dict[int, str] = {}
EX1_EDGES = {(2, 1), (3, 1), (1, 2), (3, 2), (2, 3)}
PAIRS3 = [(j, k) for j in (1, 2, 3) for k in (1, 2, 3) if j != k]


def _record(n, ok, detail, elapsed, limit=None):
    over = limit is not None and elapsed > limit
    status = "PASS" if ok and not over else "FAIL"
    timing = f"{elapsed:.1f}s" + (f" (limit {limit:.0f}s)" if limit else "")
    line = f"criterion {n}: {status}  {detail}  [{timing}]"
    RESULTS[n] = line
    print(line)
    return status == "PASS"


# ------------------------------------------------------------ criteria


def criterion_1():
    ex = {name: builtin_spec(name) for name in ("ex1", "ex2", "ex3")}
    checks = {}
    checks["X3 WCLI of X1 in all three"] = all(is_wcli(s, 1, 3) for s in ex.values())
    checks["ex2 edges == ex1 edges"] = syntactic_graph(ex["ex2"]).edges == syntactic_graph(ex["ex1"]).edges
    checks["ex1 edges as declared"] = syntactic_graph(ex["ex1"]).edges == EX1_EDGES
    ps1 = simulate(ex["ex1"], 0.01, 20, 1)
    tr = evaluate_triplet(ex["ex1"], ps1, 3)
    checks["ex1 C3(t) = t"] = float(np.max(np.abs(tr.C - ps1.grid))) < 1e-12
    checks["ex1 nu3 = 0"] = bool(np.all(tr.nu == 0))
    ps2 = simulate(ex["ex2"], 0.01, 20, 1)
    tr2 = evaluate_triplet(ex["ex2"], ps2, 3)
    checks["ex2 B3 = C3 = 0"] = bool(np.all(tr2.B == 0) and np.all(tr2.C == 0))
    failed = [k for k, v in checks.items() if not v]
    return not failed, "all influence statements hold" if not failed else f"failed: {failed}"


def criterion_2():
    c = 0.8
    spec = make_spec([{"drift": str(c), "x0": 0.5}], horizon=3.0)
    ps = simulate(spec, 0.01, 200, 2)
    err_d = float(np.max(np.abs(loglik(spec, ps, 1).final
                                - (c * (ps.values[:, -1, 0] - 0.5) - c * c * 3.0 / 2))))
    beta = 2.5
    spec = make_spec([{"kind": "counting", "jump_intensity": str(beta)}], horizon=3.0)
    ps = simulate(spec, 0.01, 200, 3)
    n = ps.values[:, -1, 0]
    err_c = float(np.max(np.abs(loglik(spec, ps, 1).final - (n * math.log(beta) + (1 - beta) * 3.0))))
    ok = err_d < 1e-10 and err_c < 1e-10
    return ok, f"max error diffusion {err_d:.1e}, counting {err_c:.1e} (tol 1e-10)"


def criterion_3():
    cases = [("diffusion", "ex1", 1), ("counting", "ex2", 3), ("jump-diffusion", "ex3", 3)]
    parts, ok = [], True
    for label, name, k in cases:
        spec = builtin_spec(name).with_horizon(1.0)
        mean, se = martingale_mean(spec, k, 0.01, 10_000, derive_seed(3, k))
        ok &= abs(mean - 1.0) <= 3 * se
        parts.append(f"{label} {mean:.4f}+-{se:.4f}")
    return ok, "E[exp logZ] " + ", ".join(parts) + " (within 3 SE of 1)"


def criterion_4():
    bad, smallest = [], math.inf
    for name in ("ex1", "ex2", "ex3"):
        spec = builtin_spec(name)
        ps = simulate(spec.with_horizon(2.0), 0.01, 50, 4)
        for j, k in PAIRS3:
            d = lwcli_perturbation_check(spec, ps, k, j, [0.1, -0.25])
            if is_wcli(spec, j, k):
                if d != 0.0:
                    bad.append((name, j, k, d))
            else:
                smallest = min(smallest, d)
                if not d > 1e-6:
                    bad.append((name, j, k, d))
    return not bad, f"18 pairs, zero exactly on WCLI pairs, smallest nonzero {smallest:.2e}" if not bad else f"mismatches {bad}"


def criterion_5():
    ou = make_spec([{"drift": "-x1", "sigma": "1", "x0": 1.0}], horizon=1.0)
    x = simulate(ou, 1e-3, 10_000, 5).values[:, -1, 0]
    mean_true = math.exp(-1)
    var_true = (1 - math.exp(-2)) / 2
    se_m = math.sqrt(var_true / x.size)
    se_v = var_true * math.sqrt(2 / (x.size - 1))
    ok_mean = abs(x.mean() - mean_true) <= 3 * se_m
    ok_var = abs(x.var(ddof=1) - var_true) <= 3 * se_v
    # linear drift: E[X_n] follows the noiseless Euler recursion exactly, so the
    # weak error of the scheme is measured without Monte Carlo noise at sigma = 0
    det = make_spec([{"drift": "-x1", "sigma": "0", "x0": 1.0}], horizon=1.0)
    bias = [abs(simulate(det, h, 1, 5).values[0, -1, 0] - mean_true) for h in (0.04, 0.02, 0.01)]
    ratios = [bias[0] / bias[1], bias[1] / bias[2]]
    ok_ratio = all(1.5 <= r <= 2.5 for r in ratios)
    detail = (f"mean {x.mean():.4f} vs {mean_true:.4f} (3SE {3 * se_m:.4f}), "
              f"var {x.var(ddof=1):.4f} vs {var_true:.4f} (3SE {3 * se_v:.4f}), "
              f"bias ratios {ratios[0]:.3f}, {ratios[1]:.3f}")
    return ok_mean and ok_var and ok_ratio, detail


def criterion_6():
    fam = ModelFamily.from_spec(builtin_spec("ex1_family"))
    # level: true-null edge 1 -> 3, 1000 replications
    lrt_rej, gr_rej = [], []
    for r in range(1000):
        ps = simulate(fam.spec, 0.05, 20, derive_seed(2024, r))
        lrt_rej.append(lrt_direct_influence(fam, ps, 1, 3, 0.05).decision)
        gr_rej.append(granger_test(ps, 1, 3, 1, 0.05).decision)
    lrt_level, gr_level = float(np.mean(lrt_rej)), float(np.mean(gr_rej))
    # power: edge 2 -> 3 with coefficient 1.0, 200 paths, tau = 10, dt = 0.01
    lrt_pow, gr_pow = [], []
    for r in range(20):
        ps = simulate(fam.spec, 0.01, 200, derive_seed(2025, r))
        lrt_pow.append(lrt_direct_influence(fam, ps, 2, 3, 0.05).decision)
        gr_pow.append(granger_test(ps, 2, 3, 1, 0.05).decision)
    lrt_power, gr_power = float(np.mean(lrt_pow)), float(np.mean(gr_pow))
    ok = (0.03 <= lrt_level <= 0.07 and 0.03 <= gr_level <= 0.07
          and lrt_power > 0.9 and gr_power > 0.9)
    return ok, (f"level lrt {lrt_level:.3f}, granger {gr_level:.3f} (1000 reps); "
                f"power lrt {lrt_power:.2f}, granger {gr_power:.2f} (20 reps)")


def criterion_7():
    ex1 = builtin_spec("ex1")
    truth = frozenset((j, k) for j, k in PAIRS3 if not is_wcli(ex1, j, k))
    hits = []
    for r in range(200):
        g, _ = recover_graph(simulate(ex1, 0.05, 200, derive_seed(77, r)), "granger", 0.05, "bonferroni")
        hits.append(g.edges == truth)
    rate = float(np.mean(hits))
    return rate >= 0.95, f"Granger graph == WCLI graph in {rate:.3f} of 200 reps (need 0.95)"


def criterion_8():
    mism = classify_mismatches(random_digraphs(1000, seed=8), classify_pair)
    ex1 = builtin_spec("ex1")
    g = syntactic_graph(ex1)
    influence = {(j, k): classify_pair(g, j, k) != NONE for j, k in PAIRS3}
    hits = []
    for r in range(20):
        ps = simulate(ex1, 0.05, 10_000, derive_seed(7, r))
        level = 0.05 / 6
        dec = {(j, k): fscli_test(ps, j, k, level).decision for j, k in PAIRS3}
        hits.append(dec == influence)
    rate = float(np.mean(hits))
    ok = rate >= 0.9 and not mism
    return ok, (f"FSCLI decisions == SCLI classes in {rate:.2f} of 20 reps (need 0.90); "
                f"classify_pair vs path enumeration: {len(mism)} mismatches on 1000 digraphs")


def criterion_9(tmp: Path):
    tmp.mkdir(parents=True, exist_ok=True)
    cfg = tmp / "cfg.json"
    cfg.write_text(json.dumps({"spec": "examples/ex1.json", "dt": 0.05, "n_paths": 20, "seed": 9,
                               "horizon": 5.0, "replications": 3, "output": str(tmp / "OUT" / "exp")}))

    def run_all(out: Path):
        cmds = [
            ["simulate", "examples/ex3.json", "--dt", "0.05", "--paths", "20", "--seed", "9",
             "--horizon", "5", "--out", str(out / "data")],
            ["loglik", "examples/ex3.json", "--data", str(out / "data"), "--out", str(out / "ll")],
            ["triplet", "examples/ex3.json", "--data", str(out / "data"), "--out", str(out / "tr")],
            ["test", "examples/ex3.json", "--data", str(out / "data"), "--method", "granger",
             "--out", str(out / "tests.json")],
            ["graph", "examples/ex3.json", "--out", str(out / "graph")],
        ]
        for c in cmds:
            if cli_main(c) != 0:
                raise RuntimeError(f"command failed: {c}")
        cfg_doc = json.loads(cfg.read_text())
        cfg_doc["output"] = str(out / "exp")
        cfg.write_text(json.dumps(cfg_doc))
        if cli_main(["experiment", str(cfg)]) != 0:
            raise RuntimeError("experiment failed")
        return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}

    a = run_all(tmp / "a")
    b = run_all(tmp / "b")
    same = a == b and len(a) > 0
    return same, f"{len(a)} output files from simulate/loglik/triplet/test/graph/experiment byte-identical"


LIMITS = {1: 10, 2: 10, 3: 120, 4: 60, 5: 120, 6: 600, 7: 300, 8: 300, 9: None}


def _timed(n, fn, *args):
    t0 = time.perf_counter()
    ok, detail = fn(*args)
    return _record(n, ok, detail, time.perf_counter() - t0, LIMITS[n])


# ------------------------------------------------------------ pytest


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6, 7, 8])
def test_criterion(n, capsys):
    fn = globals()[f"criterion_{n}"]
    ok = _timed(n, fn)
    with capsys.disabled():
        print("\n" + RESULTS[n])
    assert ok, RESULTS[n]


def test_criterion_9(tmp_path, capsys):
    ok = _timed(9, criterion_9, tmp_path)
    with capsys.disabled():
        print("\n" + RESULTS[9])
    assert ok, RESULTS[9]


if __name__ == "__main__":
    import tempfile

    results = []
    for n in range(1, 9):
        results.append(_timed(n, globals()[f"criterion_{n}"]))
    with tempfile.TemporaryDirectory() as d:
        results.append(_timed(9, criterion_9, Path(d)))
    sys.exit(0 if all(results) else 1)
