"""Core model: propensity evaluation, drift, reaction application, validation."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from jkl.model import (
    Bilinear,
    Constant,
    Dimer,
    Linear,
    MassAction,
    Reaction,
    ReactionNetwork,
    apply_reaction,
    drift_eval,
    propensity_eval,
    validate_network,
)
from jkl.parser import parse_model
from jkl.presets import get_preset

BIMOL = get_preset("bimol").network
REVERSIBLE = get_preset("reversible").network
OPEN = get_preset("reversible-open").network
CUBIC = get_preset("cubic").network


class TestPropensityEval:
    def test_bimol_state(self):
        # w = [k1, k1, k2*a*b] at (a, b) = (2, 3)
        w = propensity_eval(BIMOL, [2, 3])
        assert np.allclose(w, [1.0, 1.0, 6.0])

    def test_cubic_falling_factorial(self):
        # 3X -> X at rate 1/2: w = x(x-1)(x-2)/2 = 12 at x = 4
        w = propensity_eval(CUBIC, [4])
        assert w[0] == pytest.approx(4 * 3 * 2 / 2)
        assert w[1] == pytest.approx(4 * 3 * 2)

    def test_dimer_vanishes_below_multiplicity(self):
        net = parse_model("species A\nR: 2 A -> 0 @ 1.0")
        assert propensity_eval(net, [1])[0] == 0.0
        assert propensity_eval(net, [0])[0] == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            propensity_eval(BIMOL, [1, 2, 3])

    @given(st.lists(st.integers(min_value=0, max_value=40), min_size=2, max_size=2))
    def test_nonnegative_on_lattice(self, x):
        for net in (BIMOL, REVERSIBLE, OPEN):
            state = (x * 2)[: net.n_species]
            assert (propensity_eval(net, state) >= 0).all()


class TestDriftEval:
    def test_bimol_closed_form(self):
        # F = (k1 - k2 ab, k1 - k2 ab); (1, F) = 2 k1 - 2 k2 ab
        for a, b in [(0, 0), (2, 3), (7, 1)]:
            f = drift_eval(BIMOL, [a, b])
            assert np.allclose(f, [1.0 - a * b, 1.0 - a * b])
            assert f.sum() == pytest.approx(2.0 - 2.0 * a * b)

    def test_zero_at_fixed_point(self):
        # open reversible at unit rates: a=b=1, c=1 balances all flows
        f = drift_eval(OPEN, [1.0, 1.0, 1.0])
        assert np.allclose(f, 0.0)

    def test_cubic_zero_drift_everywhere(self):
        for x in [0, 1, 2, 3, 10, 0.5, 7.25]:
            assert drift_eval(CUBIC, [x]) == pytest.approx(0.0)

    def test_matches_minus_n_w(self):
        rng = np.random.default_rng(0)
        for net in (BIMOL, REVERSIBLE, OPEN, CUBIC):
            for _ in range(20):
                x = rng.integers(0, 30, size=net.n_species)
                expect = -(net.stoichiometry @ propensity_eval(net, x))
                assert np.array_equal(drift_eval(net, x), expect)

    def test_linear_in_rates(self):
        doubled = BIMOL.with_scaled_rates({0: 2.0, 1: 2.0, 2: 2.0})
        for x in [[0, 0], [3, 5], [10, 2]]:
            assert np.allclose(drift_eval(doubled, x), 2.0 * drift_eval(BIMOL, x))


class TestApplyReaction:
    def test_reversible_forward(self):
        assert np.array_equal(apply_reaction([1, 1, 0], REVERSIBLE, 0), [0, 0, 1])

    def test_reversible_backward(self):
        assert np.array_equal(apply_reaction([0, 0, 1], REVERSIBLE, 1), [1, 1, 0])

    def test_open_birth_from_origin(self):
        assert np.array_equal(apply_reaction([0, 0, 0], OPEN, 3), [0, 0, 1])

    def test_lattice_violation_raises(self):
        with pytest.raises(ValueError, match="lattice"):
            apply_reaction([0, 0], BIMOL, 2)

    @given(st.integers(0, 8), st.integers(0, 8), st.integers(0, 8))
    def test_conservation_law(self, a, b, c):
        # l = (1, 1, 2) annihilates both columns of the closed network
        l = np.array([1, 1, 2])
        for r in range(2):
            x = np.array([a + 1, b + 1, c + 1])
            y = apply_reaction(x, REVERSIBLE, r)
            assert l @ y == l @ x


class TestValidateNetwork:
    def test_presets_valid(self):
        for name in ("bimol", "reversible", "reversible-open", "extended-bimol",
                     "cubic", "enzyme", "enzyme-linear"):
            assert validate_network(get_preset(name).network) == []

    def test_empty_network(self):
        assert validate_network(ReactionNetwork((), (), {})) == []

    def test_constant_consuming_reaction_flagged(self):
        # "A -> 0" with a constant propensity can fire at a = 0
        bad = ReactionNetwork(
            ("A",), (Reaction("R1", (1,), Constant(1.0)),), {}
        )
        issues = validate_network(bad)
        assert len(issues) == 1
        assert issues[0].reaction == "R1"

    def test_negative_rate_flagged(self):
        bad = ReactionNetwork(("A",), (Reaction("R1", (1,), Linear(-2.0, 0)),), {})
        assert any("negative" in d.message for d in validate_network(bad))

    def test_nonfinite_rate_flagged(self):
        bad = ReactionNetwork(
            ("A",), (Reaction("R1", (1,), Linear(float("inf"), 0)),), {}
        )
        assert any("finite" in d.message for d in validate_network(bad))

    def test_underconsuming_propensity_flagged(self):
        # consumes two copies but the propensity only vanishes below one
        bad = ReactionNetwork(("A",), (Reaction("R1", (2,), Linear(1.0, 0)),), {})
        assert validate_network(bad)


class TestDomainTypes:
    def test_mass_action_order_cap(self):
        with pytest.raises(ValueError):
            MassAction(1.0, ((0, 4),))
        with pytest.raises(ValueError):
            MassAction(1.0, ((0, 2), (1, 2)))

    def test_bilinear_needs_distinct_species(self):
        with pytest.raises(ValueError):
            Bilinear(1.0, 1, 1)

    def test_duplicate_species_rejected(self):
        with pytest.raises(ValueError):
            ReactionNetwork(("A", "A"), (), {})

    def test_stoichiometry_matrix(self):
        n = BIMOL.stoichiometry
        assert n.shape == (2, 3)
        assert np.array_equal(n, [[-1, 0, 1], [0, -1, 1]])

    def test_dimer_eval(self):
        d = Dimer(2.0, 0)
        assert d([5]) == 2.0 * 5 * 4
