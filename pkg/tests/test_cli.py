import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from jeffmix import ComponentFamily, ConfigError
from jeffmix.cli import main, parse_family

DEMOS = Path(__file__).resolve().parents[1] / "demos"
MODEL = str(DEMOS / "threecomp.json")


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch, tmp_path):
    monkeypatch.delenv("JEFFMIX_OUT", raising=False)
    monkeypatch.delenv("JEFFMIX_DATA", raising=False)
    monkeypatch.chdir(tmp_path)


def _data(tmp_path, n=60, seed=0):
    x = np.random.default_rng(seed).normal(size=n)
    p = tmp_path / "sim.csv"
    p.write_text("x\n" + "\n".join(map(repr, x.tolist())) + "\n")
    return str(p)


class TestFamilies:
    @pytest.mark.parametrize(
        "text, fam",
        [("gaussian", ComponentFamily.gaussian()), ("normal", ComponentFamily.gaussian()), ("gumbel", ComponentFamily.gumbel()),
         ("student_t:4", ComponentFamily.student_t(4.0)), ("t:2.5", ComponentFamily.student_t(2.5))],
    )
    def test_parse(self, text, fam):
        assert parse_family(text) == fam

    @pytest.mark.parametrize("text", ["cauchy", "student_t", "t:-1", "t:x"])
    def test_reject(self, text):
        with pytest.raises(ConfigError):
            parse_family(text)


class TestFim:
    def test_prints_matrix(self, capsys, tmp_path):
        assert main(["fim", "--model", MODEL, "--scenario", "weights"]) == 0
        out = capsys.readouterr().out
        assert "log Jeffreys" in out and "riemann:550" in out
        assert not (tmp_path / "jeffmix_out").exists()  # nothing written without an output directory

    def test_writes_with_env(self, monkeypatch, tmp_path):
        monkeypatch.setenv("JEFFMIX_OUT", str(tmp_path / "env"))
        assert main(["fim", "--model", MODEL, "--method", "gk"]) == 0
        d = json.loads((tmp_path / "env" / "fim.json").read_text())
        assert len(d["fim"]) == 8 and d["method"].startswith("gk")

    def test_out_beats_env(self, monkeypatch, tmp_path):
        monkeypatch.setenv("JEFFMIX_OUT", str(tmp_path / "env"))
        assert main(["fim", "--model", MODEL, "--out", str(tmp_path / "flag")]) == 0
        assert (tmp_path / "flag" / "fim.json").exists() and not (tmp_path / "env").exists()

    def test_prior_eval(self, capsys):
        assert main(["prior-eval", "--model", MODEL, "--mu0", "2", "--zeta0", "8"]) == 0
        assert "log prior (hierarchical)" in capsys.readouterr().out


class TestExitCodes:
    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["fim"])
        assert exc.value.code == 2

    def test_bad_model_file(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"weights": [0.5, 0.6], "locations": [0, 1], "scales": [1, 1]}))
        assert main(["fim", "--model", str(bad)]) == 2

    def test_bad_method(self):
        assert main(["fim", "--model", MODEL, "--method", "simpson:3"]) == 2

    def test_missing_config(self):
        assert main(["study", "--config", "nowhere.json", "--kind", "overfit-null"]) == 2

    def test_missing_data(self, capsys, tmp_path):
        assert main(["sample", "--data", str(tmp_path / "absent.csv"), "--k", "2"]) == 1
        assert "absent.csv" in capsys.readouterr().err

    def test_unknown_named_dataset(self):
        assert main(["analyze", "--data", "enzyme", "--k", "2"]) == 1

    def test_invalid_mcmc(self, tmp_path):
        assert main(["sample", "--data", _data(tmp_path), "--k", "2", "--iterations", "100", "--burn-in", "200"]) == 2

    def test_console_script(self, tmp_path):
        r = subprocess.run([sys.executable, "-m", "jeffmix.cli", "study", "--kind", "bogus", "--out", str(tmp_path)], capture_output=True, text=True)
        assert r.returncode == 2 and "kind" in r.stderr


class TestPipelines:
    def test_sample_then_diagnose(self, tmp_path, capsys):
        data = _data(tmp_path)
        out = tmp_path / "o"
        assert main(["sample", "--data", data, "--k", "2", "--iterations", "500", "--burn-in", "100", "--out", str(out), "--seed", "3"]) == 0
        assert (out / "trace_sim.npz").exists() and (out / "sample_sim.json").exists()
        capsys.readouterr()
        assert main(["diagnose", "--trace", str(out / "trace_sim.npz")]) == 0
        rep = json.loads(capsys.readouterr().out)
        assert set(rep) == {"stuck", "diverged", "longest_stuck_run"}

    def test_diagnose_missing_trace(self, tmp_path):
        assert main(["diagnose", "--trace", str(tmp_path / "none.npz")]) == 1

    def test_analyze_writes_three_files(self, tmp_path, capsys):
        out = tmp_path / "a"
        assert main(["analyze", "--data", _data(tmp_path), "--k", "2", "--iterations", "400", "--burn-in", "100", "--out", str(out)]) == 0
        assert {p.suffix for p in out.iterdir()} == {".json", ".csv", ".svg"}
        assert "tail" in capsys.readouterr().out

    def test_config_file_and_override(self, tmp_path):
        cfg = {"schema_version": 1, "data": _data(tmp_path), "k": 1, "mcmc": {"iterations": 300, "burn_in": 100}, "out": str(tmp_path / "cfgout")}
        (tmp_path / "c.json").write_text(json.dumps(cfg))
        assert main(["sample", "--config", str(tmp_path / "c.json")]) == 0
        assert (tmp_path / "cfgout" / "trace_sim.npz").exists()
        assert main(["sample", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "flag")]) == 0
        assert (tmp_path / "flag" / "trace_sim.npz").exists()

    def test_study_deterministic_across_threads(self, tmp_path):
        cfg = {"kind": "overfit-null", "n": [30], "replications": 2, "mcmc": {"iterations": 400, "burn_in": 100}}
        (tmp_path / "s.json").write_text(json.dumps(cfg))
        for threads, sub in ((1, "one"), (2, "two")):
            assert main(["study", "--config", str(tmp_path / "s.json"), "--seed", "4", "--threads", str(threads), "--out", str(tmp_path / sub)]) == 0
        for ext in ("json", "csv"):
            assert (tmp_path / "one" / f"overfit-null.{ext}").read_bytes() == (tmp_path / "two" / f"overfit-null.{ext}").read_bytes()

    def test_default_output_directory(self, tmp_path):
        assert main(["study", "--kind", "weights-shape", "--config", _shape_cfg(tmp_path)]) == 0
        assert (tmp_path / "jeffmix_out" / "weights-shape.json").exists()


def _shape_cfg(tmp_path):
    p = tmp_path / "shape.json"
    p.write_text(json.dumps({"kind": "weights-shape", "options": {"points": 9}}))
    return str(p)
