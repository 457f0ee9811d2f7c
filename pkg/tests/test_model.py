"""Model loading, Hessian construction, and the regular/degenerate split."""

import numpy as np
import pytest

from clairaut import ModelError, RankVariationError, evaluate, parse_expression
from clairaut.fixtures import load_bundled
from clairaut.model import (
    check_rank_constancy,
    default_probes,
    hessian_matrix,
    parse_model,
    split_variables,
)
from clairaut.numerics import rank_and_pivots


def hessian_value(model, bindings):
    w = hessian_matrix(model)
    extended = model.base_bindings()
    extended.update(bindings)
    n = model.n
    return np.array([[evaluate(w[i][j], extended) for j in range(n)] for i in range(n)])


class TestParsing:
    def test_loads_all_bundled(self):
        for name in ("oscillator", "mixed", "cawley", "particle", "christ_lee"):
            m = load_bundled(name)
            assert m.n >= 1

    def test_undeclared_velocity(self):
        with pytest.raises(ModelError) as err:
            parse_model("coord x; lagrangian = d(w)^2/2;")
        assert "w" in str(err.value)

    def test_undeclared_symbol(self):
        with pytest.raises(ModelError) as err:
            parse_model("coord x; lagrangian = q*d(x);")
        assert "q" in str(err.value)

    def test_duplicate_coordinate(self):
        with pytest.raises(ModelError):
            parse_model("coord x, x; lagrangian = d(x)^2;")

    def test_missing_lagrangian(self):
        with pytest.raises(ModelError):
            parse_model("coord x; param m = 1;")

    def test_duplicate_lagrangian(self):
        with pytest.raises(ModelError):
            parse_model("coord x; lagrangian = d(x); lagrangian = x;")

    def test_negative_param(self):
        m = parse_model("coord x; param g = -9.8; lagrangian = g*x + d(x)^2/2;")
        assert m.params["g"] == -9.8

    def test_pinned_degenerate_unknown_coord(self):
        with pytest.raises(ModelError):
            parse_model("coord x; degenerate { z }; lagrangian = d(x)^2/2;")


class TestHessian:
    def test_mixed_model_matrix(self):
        # hand value: [[m*y, 0], [0, 0]]
        m = load_bundled("mixed")
        w = hessian_value(m, {"x": 0.3, "y": 0.7, "d(x)": 0.2, "d(y)": -0.4})
        assert np.allclose(w, [[0.7, 0.0], [0.0, 0.0]])

    def test_cawley_matrix(self):
        # hand value: constant [[0,1,0],[1,0,0],[0,0,0]] in (x, y, z) order
        m = load_bundled("cawley")
        w = hessian_value(m, {c: 0.9 for c in ("x", "y", "z", "d(x)", "d(y)", "d(z)")})
        assert np.allclose(w, [[0, 1, 0], [1, 0, 0], [0, 0, 0]])

    def test_mirrored_instances(self):
        m = load_bundled("mixed")
        w = hessian_matrix(m)
        assert w[0][1] is w[1][0]

    def test_symmetry_numerically(self):
        m = load_bundled("particle")
        b = {"x0": 0.1, "x": 0.2, "y": 0.3, "z": 0.1,
             "d(x0)": 1.0, "d(x)": 0.2, "d(y)": -0.1, "d(z)": 0.3}
        w = hessian_value(m, b)
        assert np.allclose(w, w.T, atol=0.0)


class TestSplit:
    def test_oscillator_regular(self):
        m = load_bundled("oscillator")
        s = split_variables(m)
        assert s.r == 1
        assert s.regular == ("x",)
        assert s.degenerate == ()

    def test_mixed_split(self):
        m = load_bundled("mixed")
        s = split_variables(m)
        assert (s.r, s.regular, s.degenerate) == (1, ("x",), ("y",))

    def test_cawley_split(self):
        m = load_bundled("cawley")
        s = split_variables(m)
        assert (s.r, s.regular, s.degenerate) == (2, ("x", "y"), ("z",))

    def test_particle_pinned_split(self):
        m = load_bundled("particle")
        s = split_variables(m)
        assert s.r == 3
        assert s.degenerate == ("x0",)
        assert s.regular == ("x", "y", "z")

    def test_christ_lee_split(self):
        m = load_bundled("christ_lee")
        s = split_variables(m)
        assert s.r == 3
        assert s.regular == ("x1", "x2", "x3")
        assert s.degenerate == ("y1", "y2", "y3")

    def test_permutation_round_trip(self):
        m = load_bundled("cawley")
        s = split_variables(m)
        values = list(range(m.n))
        rearranged = [values[i] for i in s.order]
        restored = [rearranged[s.permutation[i]] for i in range(m.n)]
        assert restored == values

    def test_rank_variation_detected(self):
        # quartic velocity: Hessian 3*v^2 vanishes at v = 0
        m = parse_model("coord x; lagrangian = d(x)^4/4;")
        bad_probes = [
            {"x": 0.5, "d(x)": 1.0},
            {"x": 0.5, "d(x)": 0.0},
        ]
        with pytest.raises(RankVariationError) as err:
            split_variables(m, probes=bad_probes)
        assert "probe 1" in str(err.value)

    def test_wrong_pin_rejected(self):
        m = parse_model("coord x, y; degenerate { x }; lagrangian = d(x)^2/2 + d(y)*x;")
        # rank is 1 but the regular block {y} has a zero Hessian entry
        with pytest.raises(ModelError):
            split_variables(m)

    def test_rank_report(self):
        m = load_bundled("mixed")
        s = split_variables(m)
        report = check_rank_constancy(m, s)
        assert report.passed
        assert report.expected_rank == 1
        assert all(rank == 1 and ok for _, rank, ok in report.ranks)

    def test_rank_report_failure(self):
        m = parse_model("coord x; lagrangian = d(x)^4/4;")
        s = split_variables(m, probes=[{"x": 0.0, "d(x)": 1.0}])
        report = check_rank_constancy(m, s, probes=[{"x": 0.0, "d(x)": 0.0}])
        assert not report.passed


class TestProbes:
    def test_probes_deterministic(self):
        m = load_bundled("mixed")
        a = default_probes(m, seed=42)
        b = default_probes(m, seed=42)
        assert a == b

    def test_particle_probes_respect_sqrt_domain(self):
        m = load_bundled("particle")
        for b in default_probes(m):
            arg = b["d(x0)"] ** 2 - b["d(x)"] ** 2 - b["d(y)"] ** 2 - b["d(z)"] ** 2
            assert arg >= 0.1


class TestRankKernel:
    def test_complete_pivoting_order(self):
        rank, cols = rank_and_pivots([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        assert rank == 2
        assert sorted(cols) == [0, 1]

    def test_threshold_is_relative(self):
        scaled = 1e-6 * np.array([[2.0, 1.0], [1.0, 2.0]])
        rank, _ = rank_and_pivots(scaled, rel_tol=1e-9)
        assert rank == 2

    def test_tiny_pivot_treated_as_zero(self):
        m = np.array([[1.0, 0.0], [0.0, 1e-12]])
        rank, _ = rank_and_pivots(m, rel_tol=1e-9)
        assert rank == 1

    def test_zero_matrix(self):
        rank, cols = rank_and_pivots(np.zeros((3, 3)))
        assert (rank, cols) == (0, [])
