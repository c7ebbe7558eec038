"""Bound calculators against hand-worked exponent arithmetic.

All expected values below are frozen from pencil-and-paper evaluation of
the closed forms; nothing is recomputed through the module under test.
The coherence block checks that the operator-level calculator agrees
exactly with the sparse-form calculator under the exponent substitution
that derives one from the other.
"""

from __future__ import annotations

import math
import random

import pytest

from fracsparse.bounds import (
    BloomConstants,
    ClassicalExponents,
    DeltaWindow,
    ExponentProfile,
    FractionalBound,
    bloom_commutator_constants,
    classical_exponents,
    delta_feasible,
    fractional_two_weight_bound,
    one_weight_commutator_bound,
    one_weight_fractional_bound,
    sparse_operator_bound,
    two_weight_form_bound,
)
from fracsparse.errors import ParameterError

INF = math.inf


def form_profile(p=2.0, q=3.0, r=1.0, s=INF, alpha=0.25, **kw):
    return ExponentProfile(p=p, q=q, r=r, s=s, alpha=alpha, **kw)


def operator_profile(p0=1.0, q0=INF, p=2.0, q=4.0, n=1, m=0, alpha=None):
    if alpha is None:
        alpha = n * (1.0 / p - 1.0 / q)
    return ExponentProfile(n=n, p0=p0, q0=q0, p=p, q=q, alpha=alpha, m=m)


# ---------------------------------------------------------------------------
# profile sanity


class TestExponentProfile:
    def test_defaults_valid(self):
        pr = ExponentProfile()
        assert pr.p == pr.q == 2.0

    @pytest.mark.parametrize("kw", [
        {"n": 0},
        {"n": 1.5},
        {"p0": 0.5},
        {"q0": 1.0, "p0": 1.0},
        {"p": 3.0, "q": 2.0},
        {"p": 0.5, "q": 2.0},
        {"r": 0.0},
        {"r": -1.0},
        {"s": 1.0},
        {"alpha": -0.1},
        {"kappa": 0.0},
        {"eps": -2.0},
        {"m": -1},
        {"m": 0.5},
    ])
    def test_rejects_bad_fields(self, kw):
        with pytest.raises(ParameterError):
            ExponentProfile(**kw)

    def test_conjugates(self):
        pr = ExponentProfile(p=2.0, q=4.0, q0=INF)
        assert pr.p_prime == 2.0
        assert pr.q_prime == 4.0 / 3.0
        assert pr.q0_prime == 1.0
        assert ExponentProfile(p=1.0, q=1.0).p_prime == INF

    def test_gap_ratios(self):
        pr = ExponentProfile(p0=1.0, q0=4.0, p=2.0, q=3.0)
        assert pr.source_gap == 2.0
        assert pr.target_gap == 12.0
        # unbounded outer exponent collapses the ratio onto q
        assert ExponentProfile(q0=INF, p=2.0, q=3.0).target_gap == 3.0


# ---------------------------------------------------------------------------
# sparse-form two-weight bound


class TestTwoWeightFormBound:
    def test_all_ones_off_diagonal(self):
        assert two_weight_form_bound(form_profile(), 1.0, 1.0, 1.0) == 2.0

    def test_diagonal_positive_order(self):
        # p = q = 2: exchange exponents 3/4 and 1/4 on both terms, so equal
        # flatness constants e give e**1 + e**1
        pr = form_profile(p=2.0, q=2.0, alpha=0.5)
        got = two_weight_form_bound(pr, 1.0, math.e, math.e)
        assert got == pytest.approx(2.0 * math.e, rel=1e-15)

    def test_diagonal_zero_order_takes_split_branch(self):
        # alpha = 0 on the diagonal: one-sided split 4**(1/2) + 1**(1/2),
        # not the exchange branch (which would give 4**(3/4) + 4**(1/4))
        pr = form_profile(p=2.0, q=2.0, alpha=0.0)
        assert two_weight_form_bound(pr, 1.0, 4.0, 1.0) == 3.0

    def test_diagonal_at_exponent_one(self):
        # p = q = 1: the conjugate blows up, both exchange terms land on u
        pr = form_profile(p=1.0, q=1.0, r=0.5, s=4.0, alpha=0.25)
        assert two_weight_form_bound(pr, 1.0, 9.0, 7.0) == 18.0

    def test_split_branch_at_exponent_one(self):
        # p = 1, q = 2: the v-term exponent 1/p' degenerates to zero
        pr = form_profile(p=1.0, q=2.0, r=0.5, s=4.0, alpha=0.5)
        assert two_weight_form_bound(pr, 1.0, 16.0, 100.0) == 5.0

    def test_scales_linearly_in_joint_constant(self):
        pr = form_profile()
        base = two_weight_form_bound(pr, 1.0, 2.0, 3.0)
        assert two_weight_form_bound(pr, 2.5, 2.0, 3.0) == 2.5 * base

    def test_small_joint_constant_accepted(self):
        assert two_weight_form_bound(form_profile(), 0.25, 1.0, 1.0) == 0.5

    @pytest.mark.parametrize("kw", [
        {"r": 2.0},                 # r must stay below p
        {"r": 2.5},
        {"s": 3.0},                 # pairing exponent must exceed q
        {"alpha": 0.1},             # below 1/p - 1/q
        {"alpha": 1.0},             # at 1/r - 1/s, excluded
    ])
    def test_rejects_inadmissible_profiles(self, kw):
        with pytest.raises(ParameterError):
            two_weight_form_bound(form_profile(**kw), 1.0, 1.0, 1.0)

    @pytest.mark.parametrize("args", [
        (0.0, 1.0, 1.0),
        (-1.0, 1.0, 1.0),
        (1.0, 0.9, 1.0),
        (1.0, 1.0, 0.0),
    ])
    def test_rejects_bad_constants(self, args):
        with pytest.raises(ParameterError):
            two_weight_form_bound(form_profile(), *args)

    def test_monotone_in_each_constant(self):
        pr = form_profile(p=2.0, q=2.0, alpha=0.5)
        lo = two_weight_form_bound(pr, 1.0, 2.0, 2.0)
        assert two_weight_form_bound(pr, 1.1, 2.0, 2.0) > lo
        assert two_weight_form_bound(pr, 1.0, 2.4, 2.0) > lo
        assert two_weight_form_bound(pr, 1.0, 2.0, 2.4) > lo

    def test_at_least_two_when_inputs_trivial(self):
        rng = random.Random(7)
        for _ in range(25):
            p = rng.uniform(1.0, 3.0)
            q = p if rng.random() < 0.5 else p + rng.uniform(0.1, 2.0)
            r = rng.uniform(0.1, 0.9) * p
            s = q + rng.uniform(0.5, 3.0)
            lo = 1.0 / p - 1.0 / q
            hi = 1.0 / r - 1.0 / s
            alpha = lo + rng.uniform(0.0, 0.999) * (hi - lo)
            pr = ExponentProfile(p=p, q=q, r=r, s=s, alpha=alpha)
            assert two_weight_form_bound(pr, 1.0, 1.0, 1.0) >= 2.0


# ---------------------------------------------------------------------------
# interpolation window


class TestDeltaFeasible:
    def test_diagonal_positive_order_degenerates(self):
        win = delta_feasible(form_profile(p=2.0, q=2.0, alpha=0.5))
        assert win == DeltaWindow(1.0, 1.0, True, False)

    def test_off_diagonal_window(self):
        # caps: p/(p-r) = 2, (s-1)q/(s-q) = 9, alpha/(alpha-1/p+1/q) = 3/2,
        # q/(q-1) = 3/2
        win = delta_feasible(form_profile(p=2.0, q=3.0, r=1.0, s=4.0, alpha=0.5))
        assert win.upper == 1.5
        assert win.feasible and win.has_interior

    def test_unbounded_pairing_cap_is_q(self):
        # s unbounded turns the pairing cap into q = 3; binding caps stay 3/2
        win = delta_feasible(form_profile(p=2.0, q=3.0, r=1.0, s=INF, alpha=0.5))
        assert win.upper == 1.5

    def test_averaging_cap_can_deactivate(self):
        # r close to p blows up p/(p-r); the other caps still pin 3/2
        win = delta_feasible(form_profile(p=2.0, q=3.0, r=1.99, s=4.0, alpha=0.2))
        assert win.upper == 1.5

    def test_zero_drift_drops_order_cap(self):
        # alpha at the left end of its window: the order constraint is void
        win = delta_feasible(form_profile(p=2.0, q=3.0, r=1.0, s=4.0,
                                          alpha=0.5 - 1.0 / 3.0))
        assert win.upper == 1.5

    def test_diagonal_at_exponent_one_degenerates(self):
        win = delta_feasible(form_profile(p=1.0, q=1.0, r=0.5, s=4.0, alpha=0.3))
        assert win.upper == 1.0
        assert win.feasible and not win.has_interior

    def test_always_contains_one(self):
        rng = random.Random(11)
        for _ in range(40):
            p = rng.uniform(1.0, 3.0)
            q = p + rng.uniform(0.0, 2.0)
            r = rng.uniform(0.1, 0.95) * p
            s = q + rng.uniform(0.3, 4.0)
            lo = 1.0 / p - 1.0 / q
            hi = 1.0 / r - 1.0 / s
            alpha = lo + rng.uniform(0.0, 0.99) * (hi - lo)
            win = delta_feasible(ExponentProfile(p=p, q=q, r=r, s=s, alpha=alpha))
            assert win.feasible
            assert win.lower == 1.0 <= win.upper
            if q > p:
                assert win.has_interior


# ---------------------------------------------------------------------------
# operator-level two-weight bound


class TestFractionalTwoWeightBound:
    def test_all_ones(self):
        got = fractional_two_weight_bound(operator_profile(), 1.0, 1.0, 1.0)
        assert got.value == 2.0

    def test_metadata_dictionary(self):
        pr = operator_profile(p0=1.0, q0=4.0, p=2.0, q=3.0,
                              alpha=0.5 - 1.0 / 3.0)
        got = fractional_two_weight_bound(pr, 1.0, 1.0, 1.0)
        assert got.source_exponent == -2.0
        assert got.target_exponent == 12.0
        size, src, tgt = got.bracket
        assert size == pytest.approx(1.0 / 6.0 - 1.0 + 0.25, abs=1e-15)
        assert src == 0.5
        assert tgt == pytest.approx(1.0 / 12.0, abs=1e-16)

    def test_unbounded_outer_exponent(self):
        got = fractional_two_weight_bound(operator_profile(q=3.0), 1.0, 1.0, 1.0)
        assert got.target_exponent == 3.0
        assert got.bracket[2] == 1.0 / 3.0

    def test_value_formula(self):
        pr = operator_profile(p=2.0, q=4.0)
        got = fractional_two_weight_bound(pr, 1.5, 16.0, 9.0)
        # 1.5 * (16**(1/4) + 9**(1/2))
        assert got.value == 1.5 * 5.0

    def test_rejects_diagonal(self):
        pr = ExponentProfile(p0=1.0, q0=INF, p=2.0, q=2.0, alpha=0.0)
        with pytest.raises(ParameterError):
            fractional_two_weight_bound(pr, 1.0, 1.0, 1.0)

    @pytest.mark.parametrize("alpha", [0.1, 1.0, 2.0])
    def test_rejects_order_outside_window(self, alpha):
        # window for (p0, q0, p, q) = (1, inf, 2, 4) is [1/4, 1)
        pr = ExponentProfile(p0=1.0, q0=INF, p=2.0, q=4.0, alpha=alpha)
        with pytest.raises(ParameterError):
            fractional_two_weight_bound(pr, 1.0, 1.0, 1.0)

    def test_matches_form_bound_under_substitution(self):
        # the operator estimate is the form estimate after trading the
        # boundedness window for the averaging pair and rescaling the order
        # by the dimension; values must agree to the last bit
        rng = random.Random(23)
        checked = 0
        while checked < 50:
            n = rng.choice([1, 2, 3])
            p0 = rng.uniform(1.0, 2.0)
            p = p0 + rng.uniform(0.05, 2.0)
            q = p + rng.uniform(0.05, 2.0)
            q0 = INF if rng.random() < 0.4 else q + rng.uniform(0.3, 4.0)
            lo = n * (1.0 / p - 1.0 / q)
            hi = n * (1.0 / p0 - (0.0 if math.isinf(q0) else 1.0 / q0))
            alpha = lo + rng.uniform(0.0, 0.999) * (hi - lo)
            joint = rng.uniform(0.2, 8.0)
            u_flat = rng.uniform(1.0, 9.0)
            v_flat = rng.uniform(1.0, 9.0)
            op = ExponentProfile(n=n, p0=p0, q0=q0, p=p, q=q, alpha=alpha)
            form = ExponentProfile(n=n, p=p, q=q, r=p0, s=q0, alpha=alpha / n)
            lhs = fractional_two_weight_bound(op, joint, u_flat, v_flat).value
            rhs = two_weight_form_bound(form, joint, u_flat, v_flat)
            assert lhs == rhs
            checked += 1


# ---------------------------------------------------------------------------
# one-weight bounds


class TestOneWeightFractionalBound:
    def test_trivial_characteristics(self):
        assert one_weight_fractional_bound(operator_profile(), 1.0, 1.0) == 1.0

    def test_leading_exponent(self):
        # (p0, q0, p, q) = (1, inf, 2, 4): tails are 2/4 and 4/2, so the
        # exponent is 1 + 2 = 3
        assert one_weight_fractional_bound(operator_profile(), 2.0, 3.0) == 216.0

    def test_finite_outer_exponent(self):
        # (p0, q0, p, q) = (1, 4, 2, 3): tails 2/3 and 12/2, exponent 7
        pr = operator_profile(p0=1.0, q0=4.0, p=2.0, q=3.0)
        assert one_weight_fractional_bound(pr, 2.0, 1.0) == 128.0

    def test_monotone(self):
        pr = operator_profile()
        assert (one_weight_fractional_bound(pr, 1.2, 1.0)
                < one_weight_fractional_bound(pr, 1.3, 1.0)
                < one_weight_fractional_bound(pr, 1.3, 1.1))

    @pytest.mark.parametrize("args", [(0.5, 1.0), (1.0, 0.0)])
    def test_rejects_small_characteristics(self, args):
        with pytest.raises(ParameterError):
            one_weight_fractional_bound(operator_profile(), *args)

    def test_rejects_exponents_outside_window(self):
        with pytest.raises(ParameterError):
            one_weight_fractional_bound(
                ExponentProfile(p0=2.0, q0=INF, p=2.0, q=4.0), 1.0, 1.0)
        with pytest.raises(ParameterError):
            one_weight_fractional_bound(
                ExponentProfile(p0=1.0, q0=4.0, p=2.0, q=4.0), 1.0, 1.0)


# ---------------------------------------------------------------------------
# commutator bounds


def bloom_chars(**overrides):
    chars = {
        "target_bracket": 1.0,
        "source_bracket": 1.0,
        "source_power": 1.0,
        "target_power": 1.0,
        "source_dual": 1.0,
        "target_dual": 1.0,
    }
    chars.update(overrides)
    return chars


class TestBloomCommutatorConstants:
    def test_order_zero_trivial(self):
        got = bloom_commutator_constants(operator_profile(), bloom_chars())
        assert got == BloomConstants(1.0, 1.0, 2.0)

    def test_order_zero_reduces_to_leading_factors(self):
        # at m = 0 only the bracket constants act, each to the exponent
        # (1/q - 1/q0)(1 + max tail) = (1/4)(1 + 2) = 3/4
        got = bloom_commutator_constants(
            operator_profile(),
            bloom_chars(target_bracket=5.0, source_bracket=2.0,
                        source_power=7.0, target_power=7.0,
                        source_dual=7.0, target_dual=7.0))
        assert got.c1 == 5.0 ** 0.75
        assert got.c2 == 2.0 ** 0.75
        assert got.total == got.c1 + got.c2

    def test_iteration_exponent_three_halves(self):
        # p0 = 1, m = 2: floor split gives 2 - 2 + 4/4 + 2/4 = 3/2 on the
        # source power, complement 1/2 on the target power
        got = bloom_commutator_constants(
            operator_profile(m=2), bloom_chars(source_power=4.0))
        assert got.c1 == 8.0
        assert got.c2 == 1.0
        got = bloom_commutator_constants(
            operator_profile(m=2), bloom_chars(target_power=4.0))
        assert got.c1 == 2.0

    def test_composite_first_half(self):
        # 16**(3/4) * 4**(3/2) = 8 * 8
        got = bloom_commutator_constants(
            operator_profile(m=2),
            bloom_chars(target_bracket=16.0, source_power=4.0))
        assert got.c1 == 64.0
        assert got.total == 65.0

    def test_dual_half_with_unbounded_outer(self):
        # q0 unbounded makes its dual exponent 1, so the floor split at
        # m = 2 yields 3/2 with gain max(1, 1/(q'-1)) = 3
        got = bloom_commutator_constants(
            operator_profile(m=2), bloom_chars(source_dual=2.0))
        assert got.c1 == 1.0
        assert got.c2 == 2.0 ** 4.5

    def test_dual_half_with_finite_outer(self):
        # (p0, q0, p, q, m) = (1, 6, 2, 3, 1): dual pair (1.2, 1.5), gain 4,
        # fractional overhang 1/5 + 2/(12/5) = 31/30 on the source side
        pr = operator_profile(p0=1.0, q0=6.0, p=2.0, q=3.0, m=1)
        got = bloom_commutator_constants(pr, bloom_chars(source_dual=2.0))
        assert got.c2 == pytest.approx(2.0 ** (4.0 * 31.0 / 30.0), rel=1e-12)
        got = bloom_commutator_constants(pr, bloom_chars(target_dual=2.0))
        assert got.c2 == pytest.approx(2.0 ** (4.0 / 6.0), rel=1e-12)

    def test_missing_characteristic(self):
        chars = bloom_chars()
        del chars["source_dual"]
        with pytest.raises(ParameterError, match="missing"):
            bloom_commutator_constants(operator_profile(), chars)

    def test_unknown_characteristic(self):
        with pytest.raises(ParameterError, match="unknown"):
            bloom_commutator_constants(operator_profile(),
                                       bloom_chars(extra=2.0))

    def test_rejects_small_characteristic(self):
        with pytest.raises(ParameterError):
            bloom_commutator_constants(operator_profile(),
                                       bloom_chars(target_power=0.5))

    def test_monotone_in_each_characteristic(self):
        pr = operator_profile(p0=1.0, q0=6.0, p=2.0, q=3.0, m=2)
        base = bloom_commutator_constants(pr, bloom_chars()).total
        for key in bloom_chars():
            bumped = bloom_commutator_constants(pr, bloom_chars(**{key: 1.5}))
            assert bumped.total > base


class TestOneWeightCommutatorBound:
    def test_order_zero_matches_fractional(self):
        rng = random.Random(3)
        for _ in range(10):
            p0 = rng.uniform(1.0, 1.8)
            p = p0 + rng.uniform(0.1, 1.5)
            q = p + rng.uniform(0.1, 1.5)
            q0 = INF if rng.random() < 0.5 else q + rng.uniform(0.5, 3.0)
            pr = ExponentProfile(p0=p0, q0=q0, p=p, q=q, m=0)
            a, b = rng.uniform(1.0, 4.0), rng.uniform(1.0, 4.0)
            assert (one_weight_commutator_bound(pr, a, b)
                    == one_weight_fractional_bound(pr, a, b))

    def test_trivial_characteristics(self):
        assert one_weight_commutator_bound(operator_profile(m=3), 1.0, 1.0) == 1.0

    def test_order_penalty(self):
        # (1, inf, 2, 4, m=1): leading exponent 3, penalty max of
        # {2, 2, 4/3, 4} = 4, so (2*3)**7
        got = one_weight_commutator_bound(operator_profile(m=1), 2.0, 3.0)
        assert got == 279936.0

    def test_monotone_in_order(self):
        pr0 = operator_profile(m=1)
        pr1 = operator_profile(m=2)
        assert (one_weight_commutator_bound(pr1, 1.5, 1.0)
                > one_weight_commutator_bound(pr0, 1.5, 1.0))


# ---------------------------------------------------------------------------
# reference exponents


class TestClassicalExponents:
    def test_maximal_power(self):
        assert classical_exponents(1, 2.0, 2.0, 0.0).buckley == 1.0
        assert classical_exponents(1, 3.0, 3.0, 0.0).buckley == 0.5

    def test_fractional_power(self):
        # p = 4/3 is not representable, so the conjugate carries the
        # rounding of the input; agreement at the reporting tolerance
        got = classical_exponents(1, 4.0 / 3.0, 4.0, 0.5)
        assert got.lacey == pytest.approx(0.5, rel=1e-12)

    def test_sharp_commutator_power(self):
        got = classical_exponents(1, 4.0 / 3.0, 4.0, 0.5)
        assert got.bloom_sharp(0) == got.lacey
        assert got.bloom_sharp(2) == pytest.approx(2.5, rel=1e-12)

    def test_dual_slope(self):
        # p' / q = 2 dominates: lacey = (1 - 1/2) * 2 = 1
        got = classical_exponents(2, 2.0, 1.0, 1.0)
        assert got.lacey == 1.0
        assert got.bloom_sharp(1) == 3.0

    @pytest.mark.parametrize("args", [
        (0, 2.0, 2.0, 0.0),
        (1, 1.0, 2.0, 0.0),
        (1, 2.0, 0.5, 0.0),
        (1, 2.0, 2.0, 1.0),
        (1, 2.0, 2.0, -0.5),
    ])
    def test_rejects_bad_arguments(self, args):
        with pytest.raises(ParameterError):
            classical_exponents(*args)

    def test_rejects_fractional_order_count(self):
        got = classical_exponents(1, 2.0, 2.0, 0.0)
        with pytest.raises(ParameterError):
            got.bloom_sharp(-1)


# ---------------------------------------------------------------------------
# aggregated sparse operator


class TestSparseOperatorBound:
    def test_all_ones_split_branch(self):
        pr = ExponentProfile(p=2.0, q=3.0, alpha=0.5)
        assert sparse_operator_bound(pr, 1.0, 1.0, 1.0, 1.0) == 2.0

    def test_diagonal_exchange_branch(self):
        # p = q = 2, r = 1: exponents (1/2)**2 = 1/4 and 3/4 on omega
        pr = ExponentProfile(p=2.0, q=2.0, alpha=0.5)
        assert sparse_operator_bound(pr, 1.0, 16.0, 1.0, 1.0) == 10.0

    def test_exchange_exponents_sum_to_reciprocal(self):
        # equal flatness c collapses both terms to c**(1/r)
        pr = ExponentProfile(p=2.0, q=2.0, alpha=0.5)
        assert sparse_operator_bound(pr, 1.0, 16.0, 16.0, 1.0) == 32.0
        got = sparse_operator_bound(pr, 1.0, 16.0, 16.0, 0.5)
        assert got == pytest.approx(512.0, rel=1e-14)

    def test_order_one_leaves_exchange_branch(self):
        pr = ExponentProfile(p=2.0, q=2.0, alpha=1.0)
        assert sparse_operator_bound(pr, 1.0, 16.0, 9.0, 1.0) == 7.0

    def test_large_aggregation_exponent_matches_diagonal(self):
        # r above p clips the omega exponent at zero, same as r = p
        pr = ExponentProfile(p=2.0, q=3.0, alpha=0.5)
        at_p = sparse_operator_bound(pr, 1.5, 7.0, 8.0, 2.0)
        assert sparse_operator_bound(pr, 1.5, 7.0, 8.0, 5.0) == at_p
        assert at_p == pytest.approx(1.5 * (1.0 + 2.0), rel=1e-15)

    def test_scales_in_joint_constant(self):
        pr = ExponentProfile(p=2.0, q=3.0, alpha=0.5)
        base = sparse_operator_bound(pr, 1.0, 2.0, 2.0, 1.0)
        assert sparse_operator_bound(pr, 3.0, 2.0, 2.0, 1.0) == 3.0 * base

    @pytest.mark.parametrize("kw,r", [
        ({"p": 1.0, "q": 2.0, "alpha": 0.5}, 1.0),
        ({"p": 2.0, "q": INF, "alpha": 0.5}, 1.0),
        ({"p": 2.0, "q": 3.0, "alpha": 0.0}, 1.0),
        ({"p": 2.0, "q": 3.0, "alpha": 1.5}, 1.0),
        ({"p": 2.0, "q": 3.0, "alpha": 0.5}, 0.0),
    ])
    def test_rejects_inadmissible(self, kw, r):
        with pytest.raises(ParameterError):
            sparse_operator_bound(ExponentProfile(**kw), 1.0, 1.0, 1.0, r)

    @pytest.mark.parametrize("args", [
        (0.0, 1.0, 1.0),
        (1.0, 0.5, 1.0),
        (1.0, 1.0, 0.5),
    ])
    def test_rejects_bad_constants(self, args):
        pr = ExponentProfile(p=2.0, q=3.0, alpha=0.5)
        joint, om, sg = args
        with pytest.raises(ParameterError):
            sparse_operator_bound(pr, joint, om, sg, 1.0)

    def test_monotone(self):
        pr = ExponentProfile(p=2.0, q=2.0, alpha=0.5)
        lo = sparse_operator_bound(pr, 1.0, 2.0, 2.0, 1.0)
        assert sparse_operator_bound(pr, 1.0, 2.5, 2.0, 1.0) > lo
        assert sparse_operator_bound(pr, 1.0, 2.0, 2.5, 1.0) > lo
