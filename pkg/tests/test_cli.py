import json
import math
import subprocess
import sys

import pytest

from locindep.cli import main


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def _write_spec(path, components, horizon=1.0):
    path.write_text(json.dumps({"horizon": horizon, "components": components}))
    return path


def _files(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


class TestValidate:
    def test_example3_ok(self, capsys):
        code, out, _ = _run(capsys, "validate", "examples/ex3.json")
        assert code == 0 and out.startswith("ok")

    def test_stochastic_sigma(self, capsys, tmp_path):
        spec = _write_spec(tmp_path / "bad.json", [
            {"kind": "diffusion", "drift": "-x1", "sigma": "1 + x1^2"}])
        code, out, _ = _run(capsys, "validate", spec)
        assert code == 1 and "A2' violation" in out

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = _run(capsys, "validate", tmp_path / "missing.json")
        assert code == 2 and "no such spec file" in err

    def test_malformed_json(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        assert _run(capsys, "validate", bad)[0] == 2


class TestSimulate:
    def test_byte_identical(self, capsys, tmp_path):
        for sub in ("a", "b"):
            code, _, _ = _run(capsys, "simulate", "examples/ex1.json", "--dt", 0.01, "--paths", 100,
                              "--seed", 42, "--out", tmp_path / sub)
            assert code == 0
        a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
        assert set(a) == {"paths.csv", "events.csv", "meta.json"}
        assert a == b

    def test_zero_paths_is_usage_error(self, capsys, tmp_path):
        code, _, _ = _run(capsys, "simulate", "examples/ex1.json", "--dt", 0.01, "--paths", 0,
                          "--seed", 1, "--out", tmp_path)
        assert code == 2

    def test_ou_summary(self, capsys, tmp_path):
        spec = _write_spec(tmp_path / "ou.json", [
            {"kind": "diffusion", "drift": "-x1", "sigma": "1", "x0": 1.0}])
        code, out, _ = _run(capsys, "simulate", spec, "--dt", 0.01, "--paths", 4000,
                            "--seed", 3, "--out", tmp_path / "ou")
        assert code == 0
        row = out.splitlines()[-1].split(",")
        mean, var = float(row[1]), float(row[2])
        assert abs(mean - math.exp(-1)) < 3 * math.sqrt(var / 4000) + 0.002

    def test_invalid_spec_is_domain_error(self, capsys, tmp_path):
        spec = _write_spec(tmp_path / "bad.json", [{"kind": "diffusion", "drift": "0", "sigma": "x1"}])
        code, _, err = _run(capsys, "simulate", spec, "--dt", 0.1, "--paths", 1, "--seed", 1,
                            "--out", tmp_path / "o")
        assert code == 1 and "A2'" in err

    def test_simulation_failure(self, capsys, tmp_path):
        spec = _write_spec(tmp_path / "neg.json", [{"kind": "counting", "jump_intensity": "t - 0.5"}])
        code, _, _ = _run(capsys, "simulate", spec, "--dt", 0.1, "--paths", 1, "--seed", 1,
                          "--out", tmp_path / "o")
        assert code == 1


@pytest.fixture
def ex3_data(tmp_path, capsys):
    out = tmp_path / "data"
    assert main(["simulate", "examples/ex3.json", "--dt", "0.05", "--paths", "30", "--seed", "5",
                 "--out", str(out), "--horizon", "4"]) == 0
    capsys.readouterr()
    return out


def test_loglik_and_lwcli(capsys, tmp_path, ex3_data):
    code, out, _ = _run(capsys, "loglik", "examples/ex3.json", "--data", ex3_data,
                        "--out", tmp_path / "ll", "--lwcli", 0.1)
    assert code == 0
    assert (tmp_path / "ll" / "loglik_X2.csv").read_text().startswith("path,t,logZ\n")
    lines = dict(line.rsplit(",", 1) for line in out.splitlines() if line.startswith("j="))
    assert float(lines["j=1,k=3"]) == 0.0
    assert float(lines["j=2,k=3"]) > 1e-6


def test_triplet(capsys, tmp_path, ex3_data):
    code, _, _ = _run(capsys, "triplet", "examples/ex3.json", "--data", ex3_data,
                      "--component", 3, "--out", tmp_path / "tr")
    assert code == 0
    assert (tmp_path / "tr" / "triplet_X3.csv").read_text().startswith("path,t,B,C,nu\n")


def test_component_out_of_range(capsys, tmp_path, ex3_data):
    code, _, _ = _run(capsys, "triplet", "examples/ex3.json", "--data", ex3_data,
                      "--component", 4, "--out", tmp_path / "tr")
    assert code == 2


def test_missing_data_dir(capsys, tmp_path):
    code, _, _ = _run(capsys, "loglik", "examples/ex1.json", "--data", tmp_path / "none",
                      "--out", tmp_path / "o")
    assert code == 2


def test_pair_test_json(capsys, tmp_path, ex3_data):
    out = tmp_path / "reports.json"
    code, _, _ = _run(capsys, "test", "examples/ex3.json", "--data", ex3_data, "--method", "granger",
                      "--pair", 1, 3, "--out", out)
    assert code == 0
    reports = json.loads(out.read_text())
    assert len(reports) == 1
    assert reports[0]["pair"] == [1, 3] and 0 <= reports[0]["p_value"] <= 1


def test_undecided_pair_exits_one(capsys, tmp_path):
    spec = _write_spec(tmp_path / "s.json", [
        {"kind": "diffusion", "drift": "-x1", "sigma": "1"},
        {"kind": "diffusion", "drift": "0", "sigma": "0"}], horizon=2.0)
    assert main(["simulate", str(spec), "--dt", "0.05", "--paths", "10", "--seed", "1",
                 "--out", str(tmp_path / "d")]) == 0
    code, _, err = _run(capsys, "test", spec, "--data", tmp_path / "d", "--pair", 2, 1)
    assert code == 1 and "undecided" in err


class TestGraph:
    def test_example1(self, capsys, tmp_path):
        code, out, _ = _run(capsys, "graph", "examples/ex1.json", "--out", tmp_path)
        assert code == 0
        assert out.splitlines()[0] == "edges: X1->X2, X2->X1, X2->X3, X3->X1, X3->X2"
        doc = json.loads((tmp_path / "graph.json").read_text())
        assert len(doc["edges"]) == 5
        assert (tmp_path / "graph.dot").read_text().startswith("digraph")

    def test_family_is_instantiated(self, capsys):
        code, out, _ = _run(capsys, "graph", "examples/ex1_family.json")
        assert code == 0 and "X1->X3" not in out.splitlines()[0]

    def test_single_component(self, capsys, tmp_path):
        spec = _write_spec(tmp_path / "one.json", [{"kind": "diffusion", "drift": "-x1", "sigma": "1"}])
        code, out, _ = _run(capsys, "graph", spec)
        assert code == 0 and out.splitlines()[0] == "edges: (none)"

    def test_infer(self, capsys, tmp_path):
        assert main(["simulate", "examples/ex1.json", "--dt", "0.01", "--paths", "200", "--seed", "8",
                     "--out", str(tmp_path / "d")]) == 0
        capsys.readouterr()
        code, out, _ = _run(capsys, "graph", "examples/ex1.json", "--infer", "--data", tmp_path / "d",
                            "--correction", "bonferroni")
        assert code == 0
        assert out.splitlines()[0] == "edges: X1->X2, X2->X1, X2->X3, X3->X1, X3->X2"
        assert "style=dashed" in out


class TestExperiment:
    def _config(self, tmp_path, **extra):
        cfg = {"spec": "examples/ex1.json", "dt": 0.05, "n_paths": 20, "seed": 7, "horizon": 5.0,
               "pairs": [[1, 3], [2, 3]], "output": str(tmp_path / "exp"), **extra}
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        return path

    def test_single_replication(self, capsys, tmp_path):
        code, out, _ = _run(capsys, "experiment", self._config(tmp_path, replications=1, pairs=[[1, 3]]))
        assert code == 0
        rows = (tmp_path / "exp" / "summary.csv").read_text().splitlines()
        assert rows[0] == "pair,method,rejection_rate,mean_stat"
        assert len(rows) == 2 and rows[1].startswith("1->3,granger,")

    def test_reproducible(self, capsys, tmp_path, monkeypatch):
        monkeypatch.setenv("LOCINDEP_THREADS", "1")
        cfg = self._config(tmp_path, replications=3)
        assert _run(capsys, "experiment", cfg)[0] == 0
        first = _files(tmp_path / "exp")
        assert _run(capsys, "experiment", cfg)[0] == 0
        assert _files(tmp_path / "exp") == first
        assert len(first) == 4

    def test_unknown_key(self, capsys, tmp_path):
        assert _run(capsys, "experiment", self._config(tmp_path, bogus=1))[0] == 2

    def test_missing_config(self, capsys, tmp_path):
        assert _run(capsys, "experiment", tmp_path / "nope.json")[0] == 2


def test_usage_errors(capsys):
    assert main([]) == 2
    assert main(["simulate"]) == 2
    assert main(["test", "examples/ex1.json", "--data", "x", "--alpha", "2"]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "locindep", "validate", "examples/ex1.json"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0 and proc.stdout.startswith("ok")
