"""Sector brackets, long derivatives, field strength, classification."""

from functools import lru_cache

import numpy as np
import pytest

from clairaut import ClairautTransform, ModelError, RankVariationError, load_bundled
from clairaut.gauge import (
    BObservable,
    ExprObservable,
    FiniteDifferenceObservable,
    bianchi_residual,
    bracket_gauge,
    bracket_new,
    classify,
    delta_b,
    field_strength,
    long_derivative,
    maxwell_current,
    phase_probes,
    poisson_phys,
)

RNG_SEED = 77


@lru_cache(maxsize=None)
def transform(name):
    return ClairautTransform(load_bundled(name))


@lru_cache(maxsize=None)
def classification(name):
    return classify(transform(name))


def sample_points(name, count=3):
    return phase_probes(transform(name))[:count]


class TestObservables:
    def test_expression_observable_gradients(self):
        ct = transform("mixed")
        obs = ExprObservable(ct, "x^2*p_x + y")
        pt = ct.point([0.7, 1.5], [2.0])
        assert abs(obs.value(pt) - (0.49 * 2.0 + 1.5)) < 1e-12
        assert np.max(np.abs(obs.d_dq(pt) - np.array([2 * 0.7 * 2.0, 1.0]))) < 1e-12
        assert np.max(np.abs(obs.d_dp(pt) - np.array([0.49]))) < 1e-12

    def test_velocity_symbols_rejected(self):
        with pytest.raises(ModelError):
            ExprObservable(transform("mixed"), "d(x)")

    def test_degenerate_momentum_rejected(self):
        # p_y is conjugate to a degenerate coordinate, not a phase variable
        with pytest.raises(ModelError):
            ExprObservable(transform("mixed"), "p_y")

    def test_finite_difference_wrapper_matches_analytic(self):
        ct = transform("mixed")
        obs = ExprObservable(ct, "x^2*p_x + sin(y)")
        fd = FiniteDifferenceObservable(obs.value, ct)
        pt = ct.point([0.7, 1.5], [2.0])
        assert np.max(np.abs(obs.d_dq(pt) - fd.d_dq(pt))) < 1e-8
        assert np.max(np.abs(obs.d_dp(pt) - fd.d_dp(pt))) < 1e-8


class TestPoissonPhys:
    def test_canonical_pair(self):
        ct = transform("synthetic_gaugeless")
        x = ExprObservable(ct, "x")
        p = ExprObservable(ct, "p_x")
        pt = ct.point([0.4, 1.0, -0.7], [0.3])
        assert poisson_phys(ct, x, p, pt) == 1.0

    def test_self_bracket_vanishes(self):
        ct = transform("synthetic_bianchi")
        obs = ExprObservable(ct, "p_x*a + x^2")
        for pt in sample_points("synthetic_bianchi"):
            assert poisson_phys(ct, obs, obs, pt) == 0.0

    def test_antisymmetry(self):
        ct = transform("synthetic_bianchi")
        x = ExprObservable(ct, "p_x*a + x^2")
        y = ExprObservable(ct, "x*c - p_x")
        for pt in sample_points("synthetic_bianchi"):
            assert abs(poisson_phys(ct, x, y, pt)
                       + poisson_phys(ct, y, x, pt)) < 1e-12

    def test_zero_b_brackets_to_nothing(self):
        ct = transform("christ_lee")
        y = ExprObservable(ct, "x1*p_x2")
        for pt in sample_points("christ_lee"):
            for alpha in range(3):
                assert poisson_phys(ct, BObservable(ct, alpha), y, pt) == 0.0


class TestLongDerivative:
    def test_cawley_multiplier_direction(self):
        ct = transform("cawley")
        h = ct.hamiltonian_observable()
        pt = ct.point({"x": 0.3, "y": 1.2, "z": -0.5}, {"x": 0.4, "y": 0.8})
        assert abs(long_derivative(ct, h, 0, pt) + 1.2 ** 2 / 2) < 1e-12

    def test_mixed_closed_form(self):
        # D_y H = -p^2/(2 m y^2) + k p/(m y) with m = k = 1
        ct = transform("mixed")
        h = ct.hamiltonian_observable()
        pt = ct.point({"x": 0.3, "y": 1.2}, {"x": 0.4})
        expected = -0.4 ** 2 / (2 * 1.2 ** 2) + 0.4 / 1.2
        assert abs(long_derivative(ct, h, 0, pt) - expected) < 1e-12

    def test_vanishes_without_dependence_or_b(self):
        ct = transform("christ_lee")
        obs = ExprObservable(ct, "x1*p_x2")
        for pt in sample_points("christ_lee"):
            for alpha in range(3):
                assert long_derivative(ct, obs, alpha, pt) == 0.0

    def test_delta_decomposition(self):
        ct = transform("mixed")
        h = ct.hamiltonian_observable()
        pt = ct.point({"x": 0.3, "y": 1.2}, {"x": 0.4})
        res = ct.resolve(pt)
        total = long_derivative(ct, h, 0, pt)
        bracket_part = delta_b(ct, 0, h, pt)
        assert abs(total - bracket_part - res.dH_dq[1]) < 1e-12

    def test_delta_on_momentum(self):
        # {B_b, p_x} = {a x, p_x} = a
        ct = transform("synthetic_gaugeless")
        obs = ExprObservable(ct, "p_x")
        pt = ct.point({"x": 1.4, "a": 0.6, "b": -0.2}, {"x": 0.7})
        assert abs(delta_b(ct, 1, obs, pt) - 0.6) < 1e-12


class TestFieldStrength:
    def test_frozen_values(self):
        cases = {
            "synthetic_gaugeless": lambda q: [[0.0, q["x"]], [-q["x"], 0.0]],
            "synthetic_coupled": lambda q: [[0.0, q["x"] - q["a"]],
                                            [q["a"] - q["x"], 0.0]],
            "synthetic_bianchi": lambda q: [
                [0.0, q["x"] - q["a"], -q["b"]],
                [q["a"] - q["x"], 0.0, q["x"]],
                [q["b"], -q["x"], 0.0]],
        }
        q = {"x": 1.4, "a": 0.6, "b": -0.2, "c": 0.8}
        for name, expected in cases.items():
            ct = transform(name)
            pt = ct.point(q, {"x": 0.7})
            f = field_strength(ct, pt)
            assert np.max(np.abs(f - np.array(expected(q)))) < 1e-12, name

    def test_inert_directions_stay_zero(self):
        ct = transform("synthetic_gauge")
        pt = ct.point({"x": 1.4, "a": 0.6, "b": -0.2, "u": 3.0, "w": -9.0},
                      {"x": 0.7})
        f = field_strength(ct, pt)
        assert abs(f[0, 1] - (1.4 - 0.6)) < 1e-12
        assert np.max(np.abs(f[2:, :])) == 0.0
        assert np.max(np.abs(f[:, 2:])) == 0.0

    @pytest.mark.parametrize("name", ("synthetic_bianchi", "particle", "christ_lee"))
    def test_exact_antisymmetry(self, name):
        ct = transform(name)
        for pt in sample_points(name):
            f = field_strength(ct, pt)
            assert np.all(f + f.T == 0.0)

    @pytest.mark.parametrize("name", ("cawley", "mixed", "particle", "christ_lee"))
    def test_vanishing_cases(self, name):
        ct = transform(name)
        for pt in sample_points(name):
            assert np.max(np.abs(field_strength(ct, pt))) == 0.0


class TestClassify:
    @pytest.mark.parametrize("name,kind,r_f", [
        ("oscillator", "gaugeless", 0),
        ("exponential", "gaugeless", 0),
        ("synthetic_gaugeless", "gaugeless", 2),
        ("synthetic_coupled", "gaugeless", 2),
        ("synthetic_bianchi", "gauge", 2),
        ("synthetic_gauge", "gauge", 2),
        ("cawley", "limit", 0),
        ("mixed", "limit", 0),
        ("particle", "limit", 0),
        ("christ_lee", "limit", 0),
    ])
    def test_fixture_classes(self, name, kind, r_f):
        cls = classification(name)
        assert cls.kind == kind
        assert cls.r_f == r_f
        if kind == "gaugeless":
            assert cls.r_f == cls.n_deg

    def test_forced_subblock(self):
        # u and w rows of F vanish identically, so the minor must be {a, b}
        assert classification("synthetic_gauge").subblock_coords == ("a", "b")

    def test_subblock_minor_invertible(self):
        ct = transform("synthetic_bianchi")
        cls = classification("synthetic_bianchi")
        assert len(cls.subblock) == 2
        pt = sample_points("synthetic_bianchi", 1)[0]
        sub = field_strength(ct, pt)[np.ix_(cls.subblock, cls.subblock)]
        assert abs(np.linalg.det(sub)) > 1e-6

    def test_explicit_probes_and_rank_variation(self):
        ct = transform("synthetic_gaugeless")
        good = [ct.point({"x": 1.0, "a": 0.2, "b": 0.1}, {"x": 0.5}),
                ct.point({"x": 0.5, "a": -0.3, "b": 0.4}, {"x": -0.2})]
        assert classify(ct, probes=good).kind == "gaugeless"
        degenerate_probe = ct.point({"x": 0.0, "a": 0.2, "b": 0.1}, {"x": 0.5})
        with pytest.raises(RankVariationError):
            classify(ct, probes=good + [degenerate_probe])

    def test_limit_means_f_vanishes_at_probes(self):
        ct = transform("christ_lee")
        for pt in phase_probes(ct):
            assert np.max(np.abs(field_strength(ct, pt))) == 0.0


class TestBracketNew:
    def test_reduces_to_poisson_when_b_trivial(self):
        ct = transform("christ_lee")
        x = ExprObservable(ct, "x1*p_x2")
        y = ExprObservable(ct, "p_x1 + x3")
        for pt in sample_points("christ_lee"):
            assert bracket_new(ct, x, y, pt) == poisson_phys(ct, x, y, pt)

    def test_frozen_point_value(self):
        # at (x, a, b, p) = (1, 1, 0, 1): base {p_x, H} = -x = -1 and the
        # correction contracts to zero, so the bracket is exactly -1
        ct = transform("synthetic_gaugeless")
        x = ExprObservable(ct, "p_x")
        h = ct.hamiltonian_observable()
        pt = ct.point({"x": 1.0, "a": 1.0, "b": 0.0}, {"x": 1.0})
        assert abs(bracket_new(ct, x, h, pt) + 1.0) < 1e-9

    def test_matches_brute_force_assembly(self):
        ct = transform("synthetic_gaugeless")
        x = ExprObservable(ct, "p_x")
        h = ct.hamiltonian_observable()
        pt = ct.point({"x": 1.0, "a": 1.0, "b": 0.0}, {"x": 1.0})
        assert abs(bracket_new(ct, x, h, pt)
                   - _brute_bracket_px_h(ct, pt)) < 1e-6

    def test_coordinate_velocity_identity(self):
        # {q^i, H}_new must equal dH/dp_i - sum_a dB_a/dp_i v^a with the
        # sector velocities from the invertible-F solve
        ct = transform("synthetic_coupled")
        h = ct.hamiltonian_observable()
        for pt in sample_points("synthetic_coupled"):
            res = ct.resolve(pt)
            f = field_strength(ct, pt)
            dh = np.array([long_derivative(ct, h, a, pt) for a in range(2)])
            v = np.linalg.solve(f, dh)
            expected = res.dH_dp[0] - res.dB_dp[:, 0] @ v
            got = bracket_new(ct, ExprObservable(ct, "x"), h, pt)
            assert abs(got - expected) < 1e-12


def _brute_bracket_px_h(ct, pt, h=1e-6):
    """Assemble {p_x, H}_new for a 1-regular 2-degenerate model from plain
    central differences of h_phys and b_values only."""

    def h_at(x_, a_, b_, p_):
        return ct.h_phys(ct.point([x_, a_, b_], [p_]))

    def b_at(x_, a_, b_, p_):
        return ct.b_values(ct.point([x_, a_, b_], [p_]))

    x0, a0, b0 = pt.q
    p0 = pt.p[0]

    def d(fn, slot):
        args = [x0, a0, b0, p0]
        lo, hi = args.copy(), args.copy()
        lo[slot] -= h
        hi[slot] += h
        return (np.asarray(fn(*hi)) - np.asarray(fn(*lo))) / (2 * h)

    dh_dx, dh_da, dh_db, dh_dp = (d(h_at, s) for s in range(4))
    db_dx, db_da, db_db, db_dp = (d(b_at, s) for s in range(4))
    b_grad_q = {0: db_dx, 1: db_da, 2: db_db}
    # F_ab = dB_b/dq^a - dB_a/dq^b + {B_a, B_b}
    f = np.zeros((2, 2))
    f[0, 1] = b_grad_q[1][1] - b_grad_q[2][0] + (db_dx[0] * db_dp[1]
                                                 - db_dx[1] * db_dp[0])
    f[1, 0] = -f[0, 1]
    dh_vec = np.array([dh_da + db_dx[0] * dh_dp - dh_dx * db_dp[0],
                       dh_db + db_dx[1] * dh_dp - dh_dx * db_dp[1]])
    # X = p_x: {X, H} = -dH/dx, {X, B_a} = -dB_a/dx
    base = -dh_dx
    xb = np.array([-db_dx[0], -db_dx[1]])
    return float(base - xb @ np.linalg.solve(f, dh_vec))


class TestBracketGauge:
    @pytest.mark.parametrize("name", ("christ_lee", "cawley"))
    def test_limit_case_is_plain_poisson(self, name):
        ct = transform(name)
        cls = classification(name)
        x = ExprObservable(ct, ct.split.regular[0])
        from clairaut.model import momentum_name
        y = ExprObservable(ct, momentum_name(ct.split.regular[-1]))
        for pt in sample_points(name):
            assert bracket_gauge(ct, x, y, pt, cls) == poisson_phys(ct, x, y, pt)

    def test_matches_direct_subblock_assembly(self):
        ct = transform("synthetic_gauge")
        cls = classification("synthetic_gauge")
        x = ExprObservable(ct, "p_x")
        h = ct.hamiltonian_observable()
        for pt in sample_points("synthetic_gauge"):
            sub = list(cls.subblock)
            f = field_strength(ct, pt)[np.ix_(sub, sub)]
            xb = np.array([-delta_b(ct, a, x, pt) for a in sub])
            dh = np.array([long_derivative(ct, h, b, pt) for b in sub])
            expected = (poisson_phys(ct, x, h, pt)
                        - xb @ np.linalg.solve(f, dh))
            assert abs(bracket_gauge(ct, x, h, pt, cls) - expected) < 1e-12


class TestCommutatorIdentity:
    def test_long_derivative_commutator(self):
        # [D_a, D_b]X = {F_ab, X}_phys; both sides equal the coefficient a
        ct = transform("synthetic_gaugeless")
        x = ExprObservable(ct, "p_x*a + x^2/2")
        rng = np.random.default_rng(RNG_SEED)
        for _ in range(3):
            q = rng.uniform(0.5, 1.5, 3)
            pt = ct.point(q, [rng.uniform(-1, 1)])
            d_b = FiniteDifferenceObservable(
                lambda s: long_derivative(ct, x, 1, s), ct)
            d_a = FiniteDifferenceObservable(
                lambda s: long_derivative(ct, x, 0, s), ct)
            lhs = (long_derivative(ct, d_b, 0, pt)
                   - long_derivative(ct, d_a, 1, pt))
            f_ab = FiniteDifferenceObservable(
                lambda s: float(field_strength(ct, s)[0, 1]), ct)
            rhs = poisson_phys(ct, f_ab, x, pt)
            assert abs(lhs - rhs) < 1e-4
            assert abs(rhs - q[1]) < 1e-4  # nontrivial: equals coordinate a


class TestLeibnizRule:
    def test_hand_checked_instance(self):
        # D_a{B_a, B_b} and its Leibniz expansion are both exactly -1 here
        ct = transform("synthetic_coupled")
        pt = ct.point({"x": 1.3, "a": 0.4, "b": -0.6}, {"x": 0.8})
        lhs, rhs = _leibniz_sides(ct, 0, 0, 1, pt)
        assert abs(lhs + 1.0) < 1e-4
        assert abs(rhs + 1.0) < 1e-4
        assert abs(lhs - rhs) < 1e-4

    def test_random_triples(self):
        ct = transform("synthetic_bianchi")
        rng = np.random.default_rng(RNG_SEED)
        pt = ct.point(rng.uniform(0.5, 1.5, 4), [rng.uniform(-1, 1)])
        for (a, b, g) in ((0, 1, 2), (1, 0, 2), (2, 1, 0)):
            lhs, rhs = _leibniz_sides(ct, a, b, g, pt)
            assert abs(lhs - rhs) < 1e-4


def _leibniz_sides(ct, alpha, beta, gamma, pt):
    """(D_alpha {B_beta, B_gamma}, {D_alpha B_beta, B_gamma} + {B_beta, D_alpha B_gamma})."""
    bb, bg = BObservable(ct, beta), BObservable(ct, gamma)
    inner = FiniteDifferenceObservable(
        lambda s: poisson_phys(ct, bb, bg, s), ct)
    lhs = long_derivative(ct, inner, alpha, pt)
    d_bb = FiniteDifferenceObservable(
        lambda s: long_derivative(ct, bb, alpha, s), ct)
    d_bg = FiniteDifferenceObservable(
        lambda s: long_derivative(ct, bg, alpha, s), ct)
    rhs = poisson_phys(ct, d_bb, bg, pt) + poisson_phys(ct, bb, d_bg, pt)
    return lhs, rhs


class TestDeltaCommutator:
    @pytest.mark.parametrize("name", ("synthetic_coupled", "synthetic_bianchi"))
    def test_composition_rule(self, name):
        ct = transform(name)
        n_deg = ct.n - ct.r
        pt = sample_points(name, 1)[0]
        for gamma in range(n_deg):
            bg = BObservable(ct, gamma)
            for a in range(n_deg):
                for b in range(a + 1, n_deg):
                    inner_b = FiniteDifferenceObservable(
                        lambda s, _b=b: delta_b(ct, _b, bg, s), ct)
                    inner_a = FiniteDifferenceObservable(
                        lambda s, _a=a: delta_b(ct, _a, bg, s), ct)
                    lhs = (delta_b(ct, a, inner_b, pt)
                           - delta_b(ct, b, inner_a, pt))
                    generator = FiniteDifferenceObservable(
                        lambda s, _a=a, _b=b: poisson_phys(
                            ct, BObservable(ct, _a), BObservable(ct, _b), s), ct)
                    rhs = poisson_phys(ct, generator, bg, pt)
                    assert abs(lhs - rhs) < 1e-4


class TestMaxwellCurrent:
    def test_bianchi_fixture_current(self):
        ct = transform("synthetic_bianchi")
        rng = np.random.default_rng(RNG_SEED)
        for _ in range(3):
            pt = ct.point(rng.uniform(0.5, 1.5, 4), [rng.uniform(-1, 1)])
            j = maxwell_current(ct, pt)
            assert np.max(np.abs(j - np.array([0.0, -2.0, 0.0]))) < 1e-6

    def test_vanishing_field_strength_gives_no_current(self):
        for name in ("christ_lee", "cawley"):
            ct = transform(name)
            pt = sample_points(name, 1)[0]
            assert np.max(np.abs(maxwell_current(ct, pt))) < 1e-12

    def test_current_conservation(self):
        ct = transform("synthetic_bianchi")
        pt = ct.point({"x": 1.2, "a": 0.5, "b": 0.7, "c": -0.4}, {"x": 0.9})
        total = 0.0
        for alpha in range(3):
            j_alpha = FiniteDifferenceObservable(
                lambda s, _a=alpha: float(maxwell_current(ct, s)[_a]), ct)
            total += long_derivative(ct, j_alpha, alpha, pt)
        assert abs(total) < 1e-3


class TestBianchiIdentity:
    def test_three_direction_fixture(self):
        ct = transform("synthetic_bianchi")
        rng = np.random.default_rng(RNG_SEED)
        for _ in range(3):
            pt = ct.point(rng.uniform(0.5, 1.5, 4), [rng.uniform(-1, 1)])
            assert bianchi_residual(ct, pt, fd_step=1e-4) < 1e-4

    def test_small_sectors_return_zero(self):
        for name in ("mixed", "cawley", "oscillator"):
            ct = transform(name)
            pt = sample_points(name, 1)[0]
            assert bianchi_residual(ct, pt) == 0.0

    def test_limit_fixture(self):
        ct = transform("christ_lee")
        pt = sample_points("christ_lee", 1)[0]
        assert bianchi_residual(ct, pt) < 1e-12


class TestLimitIndependence:
    def test_long_derivative_equals_plain_partial(self):
        ct = transform("christ_lee")
        h = ct.hamiltonian_observable()
        for pt in phase_probes(ct)[:5]:
            res = ct.resolve(pt)
            for alpha in range(3):
                plain = res.dH_dq[ct.deg_idx[alpha]]
                assert long_derivative(ct, h, alpha, pt) == plain
