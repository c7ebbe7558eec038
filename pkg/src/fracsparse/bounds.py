"""Closed-form calculators for the quantitative weighted bounds.

Every function here is pure exponent arithmetic: it turns weight
characteristics into the theoretical constant the estimates predict, so
measured constants can be reported as (measured, theoretical, ratio)
triples.  None of the calculators absorb the suppressed dimensional
factors; callers compare ratios, not absolute values.

Endpoint exponents are handled by explicit limit branches: an unbounded
outer exponent turns q0*q/(q0 - q) into q and the dual index into 1, so no
infinities ever enter a power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .errors import ParameterError


def _conjugate(x: float) -> float:
    if x == 1:
        return math.inf
    if math.isinf(x):
        return 1.0
    return x / (x - 1.0)


def _gap_ratio(outer: float, inner: float) -> float:
    """outer*inner / (outer - inner), read as inner when outer is unbounded."""
    if math.isinf(outer):
        return inner
    return outer * inner / (outer - inner)


def _check_constant(name: str, value: float) -> None:
    if not value >= 1.0:
        raise ParameterError(f"{name} must be >= 1, got {value}")


@dataclass(frozen=True)
class ExponentProfile:
    """The exponent bundle shared by the calculators.

    p0 < q0 frame the unweighted boundedness window, p <= q the weighted
    target, r and s the inner averaging exponents of sparse forms, alpha
    the fractional order (dimensionless for the form calculators, in units
    of n for the operator-level ones), kappa the functional-calculus
    scaling, eps the off-diagonal decay margin, m the commutator order.
    Each calculator enforces the orderings its estimate needs on top of
    the basic sanity checked here.
    """

    n: int = 1
    p0: float = 1.0
    q0: float = math.inf
    p: float = 2.0
    q: float = 2.0
    r: float = 1.0
    s: float = math.inf
    alpha: float = 0.0
    kappa: float = 2.0
    eps: float = 1.0
    m: int = 0

    def __post_init__(self) -> None:
        if self.n < 1 or int(self.n) != self.n:
            raise ParameterError(f"dimension must be a whole number >= 1, got {self.n}")
        if not 1 <= self.p0:
            raise ParameterError(f"inner exponent must be >= 1, got {self.p0}")
        if not self.q0 > self.p0:
            raise ParameterError(
                f"outer exponent must exceed the inner one, got {self.p0}, {self.q0}")
        if not 1 <= self.p <= self.q:
            raise ParameterError(
                f"target exponents must satisfy 1 <= p <= q, got {self.p}, {self.q}")
        if not self.r > 0:
            raise ParameterError(f"averaging exponent must be positive, got {self.r}")
        if not self.s > 1:
            raise ParameterError(f"pairing exponent must exceed 1, got {self.s}")
        if self.alpha < 0:
            raise ParameterError(f"fractional order must be >= 0, got {self.alpha}")
        if not self.kappa > 0:
            raise ParameterError(f"calculus scaling must be positive, got {self.kappa}")
        if not self.eps > 0:
            raise ParameterError(f"decay margin must be positive, got {self.eps}")
        if self.m < 0 or int(self.m) != self.m:
            raise ParameterError(f"commutator order must be a whole number, got {self.m}")

    @property
    def p_prime(self) -> float:
        return _conjugate(self.p)

    @property
    def q_prime(self) -> float:
        return _conjugate(self.q)

    @property
    def q0_prime(self) -> float:
        return _conjugate(self.q0)

    @property
    def target_gap(self) -> float:
        """q0*q/(q0 - q), the power housing the target-side weight."""
        return _gap_ratio(self.q0, self.q)

    @property
    def source_gap(self) -> float:
        """p0*p/(p - p0), the power housing the source-side weight."""
        return self.p0 * self.p / (self.p - self.p0)


# ---------------------------------------------------------------------------
# Sparse-form two-weight bound and its feasibility window


def _check_form_profile(pr: ExponentProfile) -> None:
    s_inv = 0.0 if math.isinf(pr.s) else 1.0 / pr.s
    if not pr.q < pr.s:
        raise ParameterError(f"need q < s, got {pr.q}, {pr.s}")
    if not 0 < pr.r < pr.p:
        raise ParameterError(f"need 0 < r < p, got {pr.r}, {pr.p}")
    lo = 1.0 / pr.p - 1.0 / pr.q
    hi = 1.0 / pr.r - s_inv
    if not lo <= pr.alpha < hi:
        raise ParameterError(
            f"fractional order must lie in [{lo}, {hi}), got {pr.alpha}")


def two_weight_form_bound(profile: ExponentProfile, joint: float,
                          u_flat: float, v_flat: float) -> float:
    """Theoretical constant for the sparse-form two-weight estimate.

    joint is the two-weight supremum of the transformed pair, u_flat and
    v_flat their flatness constants.  On the diagonal with positive order
    the two weights exchange through conjugate-square exponents; otherwise
    the two one-sided terms split at 1/q and 1/p'.
    """
    _check_form_profile(profile)
    if not joint > 0:
        raise ParameterError(f"joint constant must be positive, got {joint}")
    _check_constant("u flatness", u_flat)
    _check_constant("v flatness", v_flat)
    p, q = profile.p, profile.q
    if p == q and profile.alpha > 0:
        pc = _conjugate(p)
        a = 0.0 if math.isinf(pc) else 1.0 / pc ** 2
        body = (u_flat ** (1.0 - a) * v_flat ** a
                + u_flat ** (1.0 / p ** 2) * v_flat ** (1.0 - 1.0 / p ** 2))
    else:
        pc = _conjugate(p)
        dual = 0.0 if math.isinf(pc) else 1.0 / pc
        body = u_flat ** (1.0 / q) + v_flat ** dual
    return joint * body


@dataclass(frozen=True)
class DeltaWindow:
    """Admissible interpolation exponents for the inner-sum estimate:
    [lower, upper] with lower = 1; has_interior signals that the strict
    regime (the non-diagonal branch) is available."""

    lower: float
    upper: float
    feasible: bool
    has_interior: bool


def delta_feasible(profile: ExponentProfile) -> DeltaWindow:
    """Intersect the four interpolation constraints (plus the outer-power
    cap) into the window of usable exponents; degenerates to {1} exactly
    on the diagonal with positive order."""
    _check_form_profile(profile)
    p, q, r, s, alpha = (profile.p, profile.q, profile.r, profile.s,
                         profile.alpha)
    caps = [p / (p - r)]
    caps.append(q if math.isinf(s) else (s - 1.0) * q / (s - q))
    # grouped so the diagonal cancels exactly and the cap lands on 1
    drift = alpha - (1.0 / p - 1.0 / q)
    if drift > 0:
        caps.append(alpha / drift)
    if q > 1:
        caps.append(q / (q - 1.0))
    upper = min(caps)
    feasible = upper >= 1.0
    return DeltaWindow(1.0, upper, feasible, upper > 1.0)


# ---------------------------------------------------------------------------
# Operator-level two-weight and one-weight bounds


def _check_operator_profile(pr: ExponentProfile, strict: bool = True) -> None:
    if not pr.p0 < pr.p:
        raise ParameterError(f"need p > {pr.p0}, got {pr.p}")
    if strict and not pr.p < pr.q:
        raise ParameterError(f"need p < q, got {pr.p}, {pr.q}")
    if not pr.q < pr.q0:
        raise ParameterError(f"need q < {pr.q0}, got {pr.q}")


@dataclass(frozen=True)
class FractionalBound:
    """Two-weight operator bound plus the change of variables it used.

    The estimate transforms the source-side weight by source_exponent and
    the target-side one by target_exponent before taking the joint
    constant with the bracket exponents (size, source mass, target mass).
    """

    value: float
    source_exponent: float
    target_exponent: float
    bracket: tuple[float, float, float]


def fractional_two_weight_bound(profile: ExponentProfile, joint: float,
                                u_flat: float, v_flat: float) -> FractionalBound:
    """Off-diagonal two-weight bound for the fractional operator itself:
    the sparse-form constant specialized to the boundedness window, with
    the transformed-weight dictionary recorded on the result."""
    _check_operator_profile(profile)
    q0_inv = 0.0 if math.isinf(profile.q0) else 1.0 / profile.q0
    lo = profile.n * (1.0 / profile.p - 1.0 / profile.q)
    hi = profile.n * (1.0 / profile.p0 - q0_inv)
    if not lo <= profile.alpha < hi:
        raise ParameterError(
            f"fractional order must lie in [{lo}, {hi}), got {profile.alpha}")
    if not joint > 0:
        raise ParameterError(f"joint constant must be positive, got {joint}")
    _check_constant("u flatness", u_flat)
    _check_constant("v flatness", v_flat)
    value = joint * (u_flat ** (1.0 / profile.q)
                     + v_flat ** (1.0 / profile.p_prime))
    bracket = (profile.alpha / profile.n - 1.0 / profile.p0 + q0_inv,
               1.0 / profile.p0 - 1.0 / profile.p,
               1.0 / profile.q - q0_inv)
    return FractionalBound(value, -profile.source_gap, profile.target_gap,
                           bracket)


def _leading_exponent(pr: ExponentProfile) -> float:
    """1 + max of the two one-sided tails, shared by every one-weight
    calculator below."""
    return 1.0 + max(pr.source_gap / pr.q, pr.target_gap / pr.p_prime)


def one_weight_fractional_bound(profile: ExponentProfile, strength: float,
                                flatness: float) -> float:
    """One-weight bound from a strength (doubling-type) and a flatness
    (reverse-inequality) characteristic: their product to the leading
    exponent."""
    _check_operator_profile(profile)
    _check_constant("strength characteristic", strength)
    _check_constant("flatness characteristic", flatness)
    return (strength * flatness) ** _leading_exponent(profile)


# ---------------------------------------------------------------------------
# Commutator bounds


_BLOOM_KEYS = (
    "target_bracket",   # transformed target-side weight, bracket class
    "source_bracket",   # transformed source-side weight, bracket class
    "source_power",     # p-th power of the source weight, ratio class
    "target_power",     # p-th power of the target weight, ratio class
    "source_dual",      # -q'-th power of the source weight, dual ratio class
    "target_dual",      # -q'-th power of the target weight, dual ratio class
)


@dataclass(frozen=True)
class BloomConstants:
    c1: float
    c2: float
    total: float


def _floor_split(scale: float, m: int) -> tuple[float, float]:
    """The pair of iteration exponents at order m: the fractional overhang
    plus half-sum correction, and its complement inside floor(scale*m)."""
    if m == 0:
        return 0.0, 0.0
    prod = scale * m
    fl = math.floor(prod)
    lead = prod - fl + fl ** 2 / (2.0 * prod) + fl / (2.0 * prod)
    return lead, fl - fl ** 2 / (2.0 * prod) - fl / (2.0 * prod)


def bloom_commutator_constants(
    profile: ExponentProfile,
    characteristics: Mapping[str, float],
) -> BloomConstants:
    """The two-weight commutator constant as the sum of its two halves.

    characteristics must supply exactly the six named entries of
    _BLOOM_KEYS; each half combines its bracket constant at the leading
    exponent with the two iteration factors produced by the floor split
    at order m (both vanish at m = 0).
    """
    _check_operator_profile(profile)
    missing = [k for k in _BLOOM_KEYS if k not in characteristics]
    if missing:
        raise ParameterError("missing characteristics: " + ", ".join(missing))
    unknown = [k for k in characteristics if k not in _BLOOM_KEYS]
    if unknown:
        raise ParameterError("unknown characteristics: " + ", ".join(unknown))
    for key in _BLOOM_KEYS:
        _check_constant(key, characteristics[key])
    ch = characteristics

    q0_inv = 0.0 if math.isinf(profile.q0) else 1.0 / profile.q0
    lead = (1.0 / profile.q - q0_inv) * _leading_exponent(profile)

    gain = max(1.0, profile.p0 / (profile.p - profile.p0))
    up, down = _floor_split(profile.p0, profile.m)
    c1 = (ch["target_bracket"] ** lead
          * ch["source_power"] ** (gain * up)
          * ch["target_power"] ** (gain * down))

    q0c = profile.q0_prime
    qc = profile.q_prime
    if math.isinf(profile.q0):
        # q0c = 1, so q0c/(qc - q0c) collapses to q - 1 exactly
        dual_gain = max(1.0, profile.q - 1.0)
    else:
        dual_gain = max(1.0, q0c / (qc - q0c))
    up, down = _floor_split(q0c, profile.m)
    c2 = (ch["source_bracket"] ** lead
          * ch["source_dual"] ** (dual_gain * up)
          * ch["target_dual"] ** (dual_gain * down))
    return BloomConstants(c1, c2, c1 + c2)


def one_weight_commutator_bound(profile: ExponentProfile, strength: float,
                                flatness: float) -> float:
    """Single-weight commutator bound: the fractional exponent plus an
    order-m penalty built from the four endpoint products."""
    _check_operator_profile(profile)
    _check_constant("strength characteristic", strength)
    _check_constant("flatness characteristic", flatness)
    pr = profile
    q0c = pr.q0_prime
    qc = pr.q_prime
    if math.isinf(pr.q0):
        # q0c = 1: products collapse to q' and (q')' = q exactly
        dual_pair = (qc, float(pr.q))
    else:
        dual_pair = (q0c * qc, q0c ** 2 * qc / (qc - q0c))
    penalty = max(
        pr.p0 * pr.p,
        pr.p0 ** 2 * pr.p / (pr.p - pr.p0),
        *dual_pair,
    )
    expo = _leading_exponent(pr) + penalty * pr.m
    return (strength * flatness) ** expo


# ---------------------------------------------------------------------------
# Reference exponents and the sparse-operator bound


@dataclass(frozen=True)
class ClassicalExponents:
    """The known sharp powers at the Lebesgue-measure endpoints: buckley
    for the maximal function, lacey for the fractional integral; the
    commutator version grows linearly in the order."""

    buckley: float
    lacey: float
    _slope: float

    def bloom_sharp(self, m: int) -> float:
        if m < 0 or int(m) != m:
            raise ParameterError(f"order must be a whole number, got {m}")
        return self.lacey + m * self._slope


def classical_exponents(n: int, p: float, q: float,
                        alpha: float) -> ClassicalExponents:
    if n < 1 or int(n) != n:
        raise ParameterError(f"dimension must be a whole number >= 1, got {n}")
    if not p > 1:
        raise ParameterError(f"need p > 1, got {p}")
    if not q >= 1:
        raise ParameterError(f"need q >= 1, got {q}")
    if not 0 <= alpha < n:
        raise ParameterError(f"fractional order must lie in [0, {n}), got {alpha}")
    slope = max(1.0, _conjugate(p) / q)
    return ClassicalExponents(1.0 / (p - 1.0), (1.0 - alpha / n) * slope,
                              slope)


def sparse_operator_bound(profile: ExponentProfile, joint: float,
                          omega_flat: float, sigma_flat: float,
                          r: float) -> float:
    """Norm bound for the aggregated sparse operator at exponent r.

    On the strict diagonal below r the two flatness constants exchange
    through the (1 - r/p)-squared split; otherwise the bound is the
    one-sided pair with the source term clipped at exponent zero, which
    also covers r above p (where aggregation is dominated by r = p).
    """
    if not 1 < profile.p <= profile.q < math.inf:
        raise ParameterError(
            f"target exponents must satisfy 1 < p <= q < inf, "
            f"got {profile.p}, {profile.q}")
    if not r > 0:
        raise ParameterError(f"aggregation exponent must be positive, got {r}")
    if not 0 < profile.alpha <= 1:
        raise ParameterError(
            f"scaling exponent must be in (0, 1], got {profile.alpha}")
    if not joint > 0:
        raise ParameterError(f"joint constant must be positive, got {joint}")
    _check_constant("omega flatness", omega_flat)
    _check_constant("sigma flatness", sigma_flat)
    p, q = profile.p, profile.q
    if p == q and q > r and profile.alpha < 1:
        cut = (1.0 - r / p) ** 2
        body = (omega_flat ** (cut / r) * sigma_flat ** ((1.0 - cut) / r)
                + omega_flat ** ((1.0 - (r / p) ** 2) / r)
                * sigma_flat ** ((r / p) ** 2 / r))
    else:
        body = omega_flat ** max(1.0 / r - 1.0 / p, 0.0) + sigma_flat ** (1.0 / q)
    return joint * body
