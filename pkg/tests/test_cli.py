import json
import subprocess
import sys

import pytest

from hilbert_diffuse.cli import ExperimentConfig, main, run


def _write(tmp_path, text, name="s.txt"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _report(out):
    return json.loads((out / "report.json").read_text(encoding="utf-8"))


class TestRun:
    def test_lemma_tau_default(self, tmp_path):
        sc = _write(tmp_path, "N = 500\n")
        assert run(ExperimentConfig("lemma-tau", sc, tmp_path / "o")) == 0
        rep = _report(tmp_path / "o")
        assert rep["summary"]["tau_q"] == rep["summary"]["tau_h"] == pytest.approx(1 / 6)
        assert {"seed", "wall_time", "config", "status"} <= set(rep)

    def test_far_target_inconclusive(self, tmp_path):
        sc = _write(tmp_path, "N = 10\nspectrum.dim = 4\ntarget.center = 8\ntarget.radius = 0.5\n"
                              "T = 0.5\nh = 0.01\nprobes = 0.1, 0.5\n")
        assert run(ExperimentConfig("positivity", sc, tmp_path / "o")) == 2
        assert (tmp_path / "o" / "positivity.csv").exists()

    def test_rerun_identical(self, tmp_path):
        sc = _write(tmp_path, "drift = tanh\nspectrum.dim = 4\nN = 300\nh = 0.01\n")
        texts = []
        for k, jobs in enumerate((1, 3)):
            out = tmp_path / f"o{k}"
            assert run(ExperimentConfig("positivity", sc, out, seed=42, jobs=jobs)) == 0
            rep = _report(out)
            rep.pop("wall_time")
            texts.append(json.dumps(rep, sort_keys=True))
        assert texts[0] == texts[1]

    def test_seed_priority(self, tmp_path, monkeypatch):
        sc = _write(tmp_path, "N = 10\nspectrum.dim = 2\nT = 0.1\nh = 0.01\nprobes = 0.1\n")
        monkeypatch.setenv("HD_SEED", "17")
        run(ExperimentConfig("simulate", sc, tmp_path / "a"))
        assert _report(tmp_path / "a")["seed"] == 17
        run(ExperimentConfig("simulate", sc, tmp_path / "b", seed=5))
        assert _report(tmp_path / "b")["seed"] == 5
        sc2 = _write(tmp_path, sc.read_text() + "seed = 9\n", "s2.txt")
        run(ExperimentConfig("simulate", sc2, tmp_path / "c"))
        assert _report(tmp_path / "c")["seed"] == 9

    def test_malformed_scenario(self, tmp_path):
        sc = _write(tmp_path, "drift = zero\nbogus = 1\n")
        assert run(ExperimentConfig("simulate", sc, tmp_path / "o")) == 1
        assert "line 2" in _report(tmp_path / "o")["error"]

    def test_invalid_scenario_lists_diagnostics(self, tmp_path):
        sc = _write(tmp_path, "spectrum = custom\nspectrum.q = 0.9, 0.5\n")
        assert run(ExperimentConfig("simulate", sc, tmp_path / "o")) == 1
        assert any("q_1 must equal 1" in d for d in _report(tmp_path / "o")["diagnostics"])

    def test_numerical_abort_names_module(self, tmp_path):
        sc = _write(tmp_path, "spectrum.dim = 1\noracle.cells = 20\noracle.dt = 1.0\n")
        # the validator refuses the step before any simulation starts
        assert run(ExperimentConfig("oracle-compare", sc, tmp_path / "o")) == 1
        assert "stability" in _report(tmp_path / "o")["error"]

    @pytest.mark.parametrize("command,text", [
        ("wiener-check", "spectrum = geom2\nspectrum.dim = 2\nN = 2000\nh = 0.05\nprobes = 0.5, 1\n"),
        ("observables", "drift = tanh\nspectrum.dim = 4\ninitial = shell\ninitial.N = 1\ninitial.delta = 0.2\n"
                        "N = 200\nh = 0.01\n"),
        ("novikov", "N = 50\nh = 0.001\n"),
        ("chain", "drift = tanh\nspectrum.dim = 3\nN = 500\nh = 0.01\ntarget.center = 0.3\n"),
        ("oracle-compare", "drift = tanh\nspectrum.dim = 1\ninitial.point = 0.5\nN = 20000\nh = 0.01\n"),
        ("weak-identity", "drift = tanh\nspectrum.dim = 3\ninitial.point = 0.3, 0.2\nN = 2000\nh = 0.01\n"),
        ("simulate", "spectrum.dim = 2\nN = 5\nh = 0.1\nprobes = 0.5, 1\n"),
    ])
    def test_commands_pass(self, tmp_path, command, text):
        out = tmp_path / "o"
        assert run(ExperimentConfig(command, _write(tmp_path, text), out)) == 0, _report(out).get("error")
        assert list(out.glob("*.csv"))
        for f in out.glob("*.csv"):
            assert f.read_text(encoding="utf-8").splitlines()[0]


class TestMain:
    def test_argparse(self, tmp_path):
        sc = _write(tmp_path, "N = 200\n")
        assert main(["lemma-tau", "--scenario", str(sc), "--out", str(tmp_path / "o"), "--seed", "3"]) == 0

    def test_rejects_unknown_command(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["fly", "--scenario", "x", "--out", str(tmp_path)])

    def test_console_entry(self, tmp_path):
        sc = _write(tmp_path, "N = 10\nspectrum.dim = 4\ntarget.center = 8\ntarget.radius = 0.5\n"
                              "T = 0.5\nh = 0.01\nprobes = 0.1, 0.5\n")
        proc = subprocess.run([sys.executable, "-m", "hilbert_diffuse.cli", "positivity", "--scenario", str(sc),
                               "--out", str(tmp_path / "o")], capture_output=True)
        assert proc.returncode == 2
