"""End-to-end acceptance suite: one test per criterion, one printed
PASS/FAIL line each (visible with pytest -s; embedded in the assertion
message on failure).

Each criterion re-measures its quantities from scratch at the stated
sizes and tolerances; slack constants are recorded next to the check
they certify, with the measured values from this corpus noted where a
constant had to be frozen.
"""

from __future__ import annotations

import math
import time
import xml.etree.ElementTree as ET

import numpy as np
import pytest
import scipy.linalg

import fracsparse.cli as cli
from fracsparse import (
    CellNorm,
    ExperimentConfig,
    GridFunction,
    SparseBilinearForm,
    estimate_best_constant,
    make_domain,
    run_domination_experiment,
    run_fracpow_experiment,
    run_two_weight_experiment,
    run_weak_type_experiment,
)
from fracsparse.bounds import (
    ExponentProfile,
    bloom_commutator_constants,
    classical_exponents,
    delta_feasible,
    fractional_two_weight_bound,
    one_weight_commutator_bound,
    one_weight_fractional_bound,
    sparse_operator_bound,
    two_weight_form_bound,
)
from fracsparse.grid import (
    base_cube,
    base_cubes,
    base_lattice,
    house_triple,
    three_lattices,
)
from fracsparse.harness import substream
from fracsparse.operators import (
    approx_identity_apply,
    divergence_form,
    heat_band_integral,
    riesz_potential,
)
from fracsparse.sparse import (
    center_split_averages,
    construct_sparse,
    cov_norm_rhs,
    rehouse_family,
    sparse_selection,
    sparse_sum_bound,
    testing_norms,
    verify_sparseness,
)


def _criterion(num: int, label: str, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    print(f"[criterion {num:02d}] {status} {label}: {detail}")
    assert ok, f"criterion {num} ({label}) failed: {detail}"


def _dense(apply_one, domain) -> np.ndarray:
    cols = []
    for i in range(domain.ncells):
        e = np.zeros(domain.ncells)
        e[i] = 1.0
        cols.append(apply_one(GridFunction(domain, e)).values)
    return np.column_stack(cols)


# ---------------------------------------------------------------------------
# 1. Three-lattice theorem, exhaustively


def test_criterion_01_three_lattice_exhaustive():
    started = time.perf_counter()
    violations = 0
    checked = 0
    for dim, depth in ((1, 4), (2, 3)):
        d = make_domain(dim, 0.0, 1.0, depth)
        lattices = three_lattices(d)
        assert len(lattices) == 3 ** dim
        # index every shifted cube by (level, per-axis left edge in units
        # of side/2^level); integer arithmetic, so matches are exact
        table: dict = {}
        for lat in lattices:
            for R in lat.cubes():
                table.setdefault((R.level, R.left_units()), []).append(R)
        for Q in base_lattice(d).cubes():
            checked += 1
            left = Q.left_units()
            homes = table.get((Q.level, tuple(a - 1 for a in left)), [])
            if len(homes) != 1:
                violations += 1
                continue
            R, H = homes[0], house_triple(Q)
            if (R.shift, R.coords) != (H.shift, H.coords):
                violations += 1
            if R.side_length != 3.0 * Q.side_length:
                violations += 1
            # within the housing lattice, R is the only same-scale cube
            # containing Q
            containing = [
                Rc
                for Rc in lattices[R.shift].cubes(levels=[Q.level])
                if all(lo <= a and a + 1 <= lo + 3
                       for lo, a in zip(Rc.left_units(), left))
            ]
            if len(containing) != 1 or containing[0] != R:
                violations += 1
    elapsed = time.perf_counter() - started
    _criterion(1, "three-lattice housing", violations == 0 and elapsed < 1.0,
               f"{checked} cubes, {violations} violations, {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# 2. Sparseness certificates of the construction


def test_criterion_02_sparseness_certificates():
    started = time.perf_counter()
    d = make_domain(1, 0.0, 1.0, 8)
    T = riesz_potential(d, 0.5)
    root = base_cube(d)
    passes = 0
    runs = 100
    for seed in range(runs):
        rng = np.random.default_rng(seed)
        m = seed % 2
        b = GridFunction(d, rng.normal(size=d.ncells)) if m else None
        f = GridFunction(d, rng.exponential(1.0, d.ncells) + 0.05)
        family, stats = sparse_selection(T, b, m, f, root, 1.0, 4.0)
        merged = rehouse_family(family)
        ok = (
            family.eta == 0.5
            and verify_sparseness(family).ok
            and merged.eta == 1.0 / 6.0
            and verify_sparseness(merged).ok
            and all(r <= 0.5 for r in stats.packing_ratios)
            and all(0.25 < c <= 0.5 for c in stats.child_fractions)
        )
        passes += ok
    elapsed = time.perf_counter() - started
    _criterion(2, "sparseness certificates",
               passes == runs and elapsed < 30.0,
               f"{passes}/{runs} seeded runs, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 3. Sparse domination stability


def test_criterion_03_sparse_domination_stability():
    details = []
    ok = True
    for m in (0, 1, 2):
        rep = run_domination_experiment(ExperimentConfig(
            depth=8, operator_kind="riesz", alpha=0.5, p0=1.0, q0=4.0,
            order=m, trials=20, seed=0))
        spread = rep.c_max / rep.c_median
        ok &= all(math.isfinite(c) for c in rep.constants)
        ok &= rep.c_max <= 4.0 * rep.c_median
        details.append(f"m={m} max/median={spread:.3f}")
    _criterion(3, "domination constants", ok, ", ".join(details))


# ---------------------------------------------------------------------------
# 4. Fractional-power consistency


def test_criterion_04_fractional_power_consistency():
    started = time.perf_counter()
    rep = run_fracpow_experiment(ExperimentConfig(
        depth=8, operator_kind="divergence_form", coefficient=1.0,
        alpha=0.5, kappa=2.0, nodes=200))
    elapsed = time.perf_counter() - started
    ok = (rep.quadrature_error <= 1e-6 and rep.interior_error <= 0.05
          and elapsed < 10.0)
    _criterion(4, "fractional power two routes", ok,
               f"quadrature {rep.quadrature_error:.2e} <= 1e-06, "
               f"interior {rep.interior_error:.4f} <= 0.05, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 5. Approximate-identity calculus


def test_criterion_05_approximate_identity_calculus():
    d = make_domain(1, 0.0, 1.0, 5)
    L = divergence_form(d, 1.0, "dirichlet")
    Ld = L.dense()
    eye = np.eye(d.ncells)
    worst_low = 0.0
    for t in (0.05, 0.7):
        heat = scipy.linalg.expm(-t * Ld)
        p1 = _dense(lambda h: approx_identity_apply(L, 1, t, h), d)
        p2 = _dense(lambda h: approx_identity_apply(L, 2, t, h), d)
        ref2 = (eye + t * Ld) @ heat
        worst_low = max(
            worst_low,
            np.linalg.norm(p1 - heat, 2) / np.linalg.norm(heat, 2),
            np.linalg.norm(p2 - ref2, 2) / np.linalg.norm(ref2, 2),
        )
    t = 0.3
    worst_band = 0.0
    for order in range(1, 5):
        pn = _dense(lambda h: approx_identity_apply(L, order, t, h), d)
        band = heat_band_integral(L, order, t, nodes=300).dense()
        gap = np.linalg.norm((eye - pn) - band, 2)
        worst_band = max(worst_band,
                         gap / max(1.0, np.linalg.norm(eye - pn, 2)))
    ok = worst_low <= 1e-10 and worst_band <= 1e-6
    _criterion(5, "semigroup band calculus", ok,
               f"closed forms {worst_low:.2e} <= 1e-10, "
               f"band integral {worst_band:.2e} <= 1e-06")


# ---------------------------------------------------------------------------
# 6. Two-weight sandwich over a power-weight sweep

# One slack for the whole sweep, both directions: necessity >= 1/slack
# and measured <= slack * bound.  Measured extremes on this corpus:
# necessity in [1.0006, 1.39], measured/bound in [0.28, 0.61].
SWEEP_SLACK = 1.25


def test_criterion_06_two_weight_sandwich():
    u_powers = (-0.4, -0.15, 0.0, 0.2, 0.45)
    v_powers = (-0.35, -0.1, 0.15, 0.4)
    necessities, ratios = [], []
    for i, up in enumerate(u_powers):
        for j, vp in enumerate(v_powers):
            rep = run_two_weight_experiment(ExperimentConfig(
                depth=8, operator_kind="riesz", alpha=0.5, p0=1.0, q0=4.0,
                p=2.0, q=3.0, r=1.0, s=4.0, u_power=up, v_power=vp,
                trials=4, seed=10 * i + j))
            necessities.append(rep.extras["necessity"])
            ratios.append(rep.ratio)
    spread = max(ratios) / min(ratios)
    ok = (min(necessities) >= 1.0 / SWEEP_SLACK
          and max(ratios) <= SWEEP_SLACK
          and spread < 10.0)
    _criterion(6, "two-weight sandwich", ok,
               f"20 pairs, necessity >= {min(necessities):.4f}, "
               f"measured/bound <= {max(ratios):.4f} "
               f"(slack {SWEEP_SLACK}), spread {spread:.2f} < 10")


# ---------------------------------------------------------------------------
# 7. Testing characterization


def test_criterion_07_testing_characterization():
    d = make_domain(1, 0.0, 1.0, 6)
    T = riesz_potential(d, 0.5)
    hn = d.cell_measure
    p, q, r, s = 2.0, 3.0, 1.0, 4.0
    alpha_form = 0.5
    qc = q / (q - 1.0)
    ratios = []
    for inst in range(20):
        rng = substream(101, 7, inst)
        f0 = GridFunction(d, rng.exponential(1.0, d.ncells) + 0.05)
        g0 = GridFunction(d, rng.exponential(1.0, d.ncells) + 0.05)
        S, _ = construct_sparse(T, None, 0, f0, g0, base_cube(d),
                                1.0, 4.0, 0.5)
        u = GridFunction(d, np.exp(0.6 * rng.normal(size=d.ncells)))
        v = GridFunction(d, np.exp(0.6 * rng.normal(size=d.ncells)))
        rep = testing_norms(S, u, v, alpha_form, p, q, r, s)

        # the same per-cube coefficients drive the bilinear form whose
        # best constant the testing pair is meant to characterize
        cubes = [Q for Q in S.cubes if Q.flat_cells().size > 0]
        lam = []
        for Q in cubes:
            cells = Q.flat_cells()
            ua = u.values[cells].mean()
            va = v.values[cells].mean()
            lam_q = (cells.size * hn) ** (1.0 + alpha_form)
            lam.append(ua ** (1.0 / r - 1.0) * va ** (-1.0 / s) * lam_q)
        form = SparseBilinearForm.from_cubes(d, cubes, lam, r=1.0, t=1.0)
        norms = (CellNorm(p, u.values * hn),
                 CellNorm(qc, v.values ** (1.0 - qc) * hn))
        est = estimate_best_constant(form, norms, d, trials=4, seed=inst)
        ratios.append((rep.zeta + rep.zeta_star) / est.value)
    spread = max(ratios) / min(ratios)
    ok = all(math.isfinite(x) and x > 0 for x in ratios) and spread <= 20.0
    _criterion(7, "testing characterization", ok,
               f"20 instances, (zeta+zeta*)/N in "
               f"[{min(ratios):.3f}, {max(ratios):.3f}], "
               f"spread {spread:.2f} <= 20")


# ---------------------------------------------------------------------------
# 8. Graded-average, re-summation, and packing micro-suites

# Case (i) packing slack for the whole suite; measured maximum on this
# corpus is 0.17, so the bound certifies with no headroom spent.
SPARSE_SUM_SLACK = 1.0


def test_criterion_08_micro_suites():
    started = time.perf_counter()
    d = make_domain(1, 0.0, 1.0, 6)
    T = riesz_potential(d, 0.5)
    atoms = base_cubes(d)
    root = base_cube(d)

    graded_trials, graded_bad = 600, 0
    for trial in range(graded_trials):
        rng = substream(7, 11, trial)
        b = GridFunction(d, rng.normal(size=d.ncells))
        f = GridFunction(d, rng.normal(size=d.ncells))
        g = GridFunction(d, rng.normal(size=d.ncells))
        cube = atoms[int(rng.integers(0, len(atoms)))]
        m = int(rng.integers(1, 4))
        r = float(rng.uniform(1.0, 3.0))
        t = float(rng.uniform(1.0, 3.0)) if rng.random() < 0.8 else math.inf
        grades = center_split_averages(b, f, g, cube, m, r, t)
        cap = (grades[0] + grades[-1]) * (1 + 1e-9)
        graded_bad += sum(c > cap for c in grades)

    cov_worst = 0.0
    cov_bad = 0
    for p in (2.0, 3.0):
        for trial in range(100):
            rng = substream(8, 12, trial + (1000 if p == 3.0 else 0))
            f0 = GridFunction(d, rng.exponential(1.0, d.ncells) + 0.05)
            g0 = GridFunction(d, rng.exponential(1.0, d.ncells) + 0.05)
            S, _ = construct_sparse(T, None, 0, f0, g0, root, 1.0, 4.0, 0.5)
            omega = GridFunction(d, rng.uniform(0.2, 2.0, d.ncells))
            rhs = cov_norm_rhs(0.0, omega, p, S)
            ptw = np.zeros(d.ncells)
            for Q in S.cubes:
                cells = Q.flat_cells()
                ptw[cells] += cells.size * d.cell_measure
            direct = float(((ptw ** p) * omega.values).sum()
                           * d.cell_measure) ** (1.0 / p)
            cov_bad += rhs > direct * (1 + 1e-12)
            cov_worst = max(cov_worst, direct / rhs)

    pack_worst = 0.0
    pack_bad = 0
    for trial in range(100):
        rng = substream(9, 13, trial)
        f0 = GridFunction(d, rng.exponential(1.0, d.ncells) + 0.05)
        g0 = GridFunction(d, rng.exponential(1.0, d.ncells) + 0.05)
        S, _ = construct_sparse(T, None, 0, f0, g0, root, 1.0, 4.0, 0.5)
        omega = GridFunction(d, rng.uniform(0.2, 2.0, d.ncells))
        sigma = GridFunction(d, rng.uniform(0.2, 2.0, d.ncells))
        _, _, ratio_i = sparse_sum_bound(S, omega, sigma, 0.6, 0.2, 0.3, root)
        pack_bad += not ratio_i <= SPARSE_SUM_SLACK
        pack_worst = max(pack_worst, ratio_i)
        _, _, ratio_ii = sparse_sum_bound(S, omega, sigma, 0.0, 1.0, 0.0, root)
        pack_bad += not math.isfinite(ratio_ii)

    elapsed = time.perf_counter() - started
    ok = (graded_bad == 0 and cov_bad == 0 and cov_worst <= 10.0
          and pack_bad == 0 and elapsed < 60.0)
    _criterion(8, "micro-suites", ok,
               f"1000 trials: graded violations {graded_bad}, "
               f"cov worst {cov_worst:.3f} <= 10, "
               f"packing worst {pack_worst:.3f} <= {SPARSE_SUM_SLACK}, "
               f"{elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 9. Weak type under refinement


def test_criterion_09_weak_type_growth():
    base = dict(operator_kind="divergence_form", coefficient=1.0, alpha=0.5,
                kappa=2.0, p0=1.0, q0=math.inf, trials=4, seed=0)
    coarse = run_weak_type_experiment(
        ExperimentConfig(depth=6, **base), refine=False)
    fine = run_weak_type_experiment(
        ExperimentConfig(depth=8, **base), refine=False)
    finite = all(math.isfinite(x) and x > 0 for x in (
        coarse.power_constant, coarse.truncation_constant,
        fine.power_constant, fine.truncation_constant))
    g_pow = fine.power_constant / coarse.power_constant
    g_trunc = fine.truncation_constant / coarse.truncation_constant
    ok = finite and g_pow < 2.0 and g_trunc < 2.0
    _criterion(9, "weak-type growth 6->8", ok,
               f"power {g_pow:.3f} < 2, truncation {g_trunc:.3f} < 2")


# ---------------------------------------------------------------------------
# 10. Bound calculators, exact arithmetic


def test_criterion_10_bound_calculators_exact():
    tol = 1e-12
    checks = []

    flat = ExponentProfile(p=2.0, q=3.0, r=1.0, s=math.inf, alpha=0.25)
    checks.append(abs(two_weight_form_bound(flat, 1.0, 1.0, 1.0) - 2.0) <= tol)
    diag = ExponentProfile(p=2.0, q=2.0, r=1.0, s=math.inf, alpha=0.5)
    checks.append(abs(two_weight_form_bound(diag, 1.0, math.e, math.e)
                      - 2.0 * math.e) <= tol * math.e)
    # zero order drops the exchange branch
    diag0 = ExponentProfile(p=2.0, q=2.0, r=1.0, s=4.0, alpha=0.0)
    checks.append(abs(two_weight_form_bound(diag0, 1.0, math.e, 1.0)
                      - (math.sqrt(math.e) + 1.0)) <= tol)

    win_diag = delta_feasible(diag)
    checks.append(win_diag.lower == 1.0 and win_diag.upper == 1.0
                  and win_diag.feasible and not win_diag.has_interior)
    win_off = delta_feasible(ExponentProfile(p=2.0, q=3.0, r=1.0, s=4.0,
                                             alpha=0.5))
    checks.append(win_off.feasible and win_off.has_interior
                  and win_off.lower == 1.0 < win_off.upper)

    op = ExponentProfile(n=1, p0=1.0, q0=math.inf, p=2.0, q=4.0, alpha=0.25)
    checks.append(abs(fractional_two_weight_bound(op, 1.0, 1.0, 1.0).value
                      - 2.0) <= tol)
    # leading exponent 1 + max{source_gap/q, target_gap/p'} = 1 + 2 at
    # (1, inf, 2, 4); the one-weight value is the product to that power
    checks.append(abs(one_weight_fractional_bound(op, 2.0, 1.0) - 8.0) <= tol)
    checks.append(abs(one_weight_fractional_bound(op, 1.0, 1.0) - 1.0) <= tol)

    ones = {key: 1.0 for key in ("target_bracket", "source_bracket",
                                 "source_power", "target_power",
                                 "source_dual", "target_dual")}
    consts = bloom_commutator_constants(op, ones)
    checks.append(abs(consts.total - 2.0) <= tol
                  and consts.total == consts.c1 + consts.c2)
    checks.append(abs(one_weight_commutator_bound(op, 1.0, 1.0) - 1.0) <= tol)
    checks.append(one_weight_commutator_bound(op, 2.0, 1.0)
                  == one_weight_fractional_bound(op, 2.0, 1.0))

    ce = classical_exponents(1, 2.0, 2.0, 0.0)
    checks.append(ce.buckley == 1.0)
    checks.append(classical_exponents(1, 3.0, 3.0, 0.0).buckley == 0.5)
    lacey = classical_exponents(1, 4.0 / 3.0, 4.0, 0.5)
    checks.append(abs(lacey.lacey - 0.5) <= tol)
    checks.append(lacey.bloom_sharp(0) == lacey.lacey)

    agg = ExponentProfile(p=2.0, q=3.0, alpha=0.5)
    checks.append(abs(sparse_operator_bound(agg, 1.0, 1.0, 1.0, 1.0) - 2.0)
                  <= tol)

    failed = [i for i, good in enumerate(checks) if not good]
    _criterion(10, "bound calculators", not failed,
               f"{len(checks)} closed-form values at 1e-12"
               + (f", failed indices {failed}" if failed else ""))


# ---------------------------------------------------------------------------
# 11. Byte reproducibility of the verification run


def test_criterion_11_reproducibility(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    args = ["verify", "--seed", "42", "--csv", "--svg", "--out"]
    rc1 = cli.main([*args, str(first)])
    rc2 = cli.main([*args, str(second)])
    csv_same = ((first / "verify.csv").read_bytes()
                == (second / "verify.csv").read_bytes())
    svg_same = ((first / "verify.svg").read_bytes()
                == (second / "verify.svg").read_bytes())
    ok = rc1 == 0 and rc2 == 0 and csv_same and svg_same
    _criterion(11, "verify --seed 42 reproducibility", ok,
               f"csv identical {csv_same}, svg identical {svg_same}")
