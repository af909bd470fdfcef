import numpy as np
import pytest

from hilbert_diffuse import ConfigurationError
from hilbert_diffuse.config import build_scenario, parse_scenario, validate


class TestParse:
    def test_comments_and_blanks(self):
        raw = parse_scenario("# a scenario\n\nmodel = bounded\n  drift=tanh  \n")
        assert raw == {"model": "bounded", "drift": "tanh"}

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError, match="line 2: unknown key 'colour'"):
            parse_scenario("drift = zero\ncolour = red\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigurationError, match="line 2: duplicate"):
            parse_scenario("T = 1\nT = 2\n")

    def test_missing_equals(self):
        with pytest.raises(ConfigurationError, match="line 1"):
            parse_scenario("drift zero\n")


class TestBuild:
    def test_defaults(self):
        sc = build_scenario({})
        assert sc.spectrum.dim == 16 and sc.drift.name == "zero"
        assert sc.initial.kind == "dirac" and sc.target.radius == 1.0
        assert sc.probes[-1] == sc.T and sc.probes.size == 6
        assert sc.model == "bounded"

    def test_vectors_are_padded(self):
        sc = build_scenario(parse_scenario("spectrum.dim = 4\ntarget.center = 3\ninitial.point = 1, 2\n"))
        np.testing.assert_array_equal(sc.target.center, [3, 0, 0, 0])
        np.testing.assert_array_equal(sc.initial.point, [1, 2, 0, 0])

    def test_linear_model(self):
        sc = build_scenario(parse_scenario("model = linear\noperator = shifted\noperator.eps = 0.5\nspectrum.dim = 3"))
        np.testing.assert_array_equal(sc.operator.a, [0.5, 1.5, 2.5])

    def test_custom_spectrum_and_gaussian(self):
        sc = build_scenario(parse_scenario(
            "spectrum = custom\nspectrum.q = 1, 0.5\ninitial = gaussian\ninitial.mean = 1\ninitial.var = 0.1\n"))
        assert sc.spectrum.dim == 2
        np.testing.assert_array_equal(sc.initial.variances, [0.1, 0.1])

    def test_too_many_entries(self):
        with pytest.raises(ConfigurationError):
            build_scenario(parse_scenario("spectrum.dim = 2\ntarget.center = 1,2,3\n"))

    def test_bad_number(self):
        with pytest.raises(ConfigurationError, match="'T'"):
            build_scenario({"T": "one"})


class TestValidate:
    def test_valid_custom(self):
        assert validate({"spectrum": "custom", "spectrum.q": "1, 0.5, 0.25"}) == []

    def test_q1_normalization(self):
        problems = validate({"spectrum": "custom", "spectrum.q": "0.9, 0.5"})
        assert any("q_1 must equal 1" in p for p in problems)

    def test_monotonicity(self):
        assert validate({"spectrum": "custom", "spectrum.q": "1, 0.5, 0.7"})

    def test_shell_order(self):
        problems = validate({"initial": "shell", "initial.N": "1", "initial.delta": "1"})
        assert any("N > delta > 0" in p for p in problems)

    def test_grid_consistency(self):
        assert validate({"T": "1", "h": "0.3"})
        assert validate({"T": "1", "h": "0.1", "probes": "0.55"})

    def test_lemma_probes_within_tau(self):
        assert validate({"probes": "0.5"}, "lemma-tau")
        assert validate({"probes": "0.1"}, "lemma-tau") == []

    def test_chain_horizon(self):
        assert validate({"M": "0.1"}, "chain")

    def test_oracle_dimension_and_cfl(self):
        assert validate({}, "oracle-compare")
        ok = {"spectrum.dim": "1", "oracle.cells": "200"}
        assert validate(ok, "oracle-compare") == []
        problems = validate({**ok, "oracle.dt": "0.1"}, "oracle-compare")
        assert any("stability" in p for p in problems)

    def test_from_file(self, tmp_path):
        p = tmp_path / "s.txt"
        p.write_text("drift = tanh\n")
        assert validate(p) == []
        assert validate(tmp_path / "missing.txt")
