"""Weight characteristics against brute-force cube scans.

Brute-force oracles recompute every characteristic cube by cube with plain
python sums over cell slices; the implementations use summed-area tables, so
agreement exercises independent arithmetic.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from fracsparse import GridFunction, make_domain
from fracsparse.errors import (
    BloomUndefinedError,
    DegenerateWeightError,
    ParameterError,
    TrivialityWarning,
)
from fracsparse.grid import base_lattice, three_lattices
from fracsparse.weights import (
    Weight,
    WeightConstants,
    ainf_constant,
    ap_constant,
    apq_constant,
    as_weight,
    bloom_weight,
    bmo_nu,
    default_cube_collection,
    describe_cube_collection,
    make_weight,
    power_weight,
    rh_constant,
    two_weight_constant,
)


def _dom(depth: int, dim: int = 1):
    return make_domain(dim, 0.0, 1.0, depth)


def _rand_weight(domain, seed=0, lo=0.2, hi=3.0):
    rng = np.random.default_rng(seed)
    return Weight(GridFunction(domain, rng.uniform(lo, hi, domain.ncells)))


def _cube_avg(grid, cube, power=1.0):
    vals = grid[cube.cell_slices()].ravel()
    return float((vals ** power).mean())


# ---------------------------------------------------------------------------
# Weight type


def test_weight_rejects_nonpositive_and_nonfinite():
    d = _dom(3)
    with pytest.raises(DegenerateWeightError):
        make_weight(d, np.zeros(d.ncells))
    bad = np.ones(d.ncells)
    bad[2] = -1.0
    with pytest.raises(DegenerateWeightError):
        make_weight(d, bad)
    bad[2] = math.inf
    with pytest.raises(DegenerateWeightError):
        make_weight(d, bad)
    with pytest.raises(ParameterError):
        as_weight("not a weight")


def test_power_weight_clamps_singularity():
    d = _dom(4)
    w = power_weight(d, -0.5, center=(d.h * 2.5,))  # singular cell center
    assert np.all(np.isfinite(w.values)) and w.values.min() > 0
    assert w.values.max() == (d.h / 2.0) ** -0.5


def test_weight_constants_record_invariant():
    with pytest.raises(ParameterError):
        WeightConstants("Ap", (2.0,), 0.5, "test")
    rec = WeightConstants("two-weight", (-2.0, 1.0, 1.0), 0.5, "test")
    assert rec.value == 0.5


# ---------------------------------------------------------------------------
# A_p


def test_ap_constant_weight_scores_one():
    d = _dom(4)
    w = make_weight(d, np.full(d.ncells, 5.0))
    assert ap_constant(w, 2.0) == pytest.approx(1.0, abs=1e-12)
    assert ap_constant(w, 3.5) == pytest.approx(1.0, abs=1e-12)


def test_ap_vs_bruteforce_power_weight():
    d = _dom(8)
    w = power_weight(d, 0.5, center=(0.5,))
    got = ap_constant(w, 2.0)
    best = 0.0
    for q in default_cube_collection(d):
        a = _cube_avg(w.grid, q)
        b = _cube_avg(w.grid, q, -1.0)
        best = max(best, a * b)
    assert got == pytest.approx(best, rel=1e-12)
    assert got >= 1.0


def test_ap_at_least_one_random():
    d = _dom(5)
    for seed in range(3):
        w = _rand_weight(d, seed)
        assert ap_constant(w, 2.0) >= 1.0


def test_ap_parameter_validation():
    d = _dom(3)
    w = _rand_weight(d)
    for p in (1.0, 0.5, math.inf):
        with pytest.raises(ParameterError):
            ap_constant(w, p)
    with pytest.raises(ParameterError):
        ap_constant(w, 2.0, cubes=[])


def test_ap_monotone_in_collection():
    d = _dom(5)
    w = _rand_weight(d, 4)
    all_cubes = default_cube_collection(d)
    small = all_cubes[: len(all_cubes) // 2]
    assert ap_constant(w, 2.0, cubes=small) <= ap_constant(w, 2.0, cubes=all_cubes)


# ---------------------------------------------------------------------------
# Reverse Holder


def test_rh_constant_weight_scores_one():
    d = _dom(4)
    w = make_weight(d, np.full(d.ncells, 0.7))
    assert rh_constant(w, 2.0) == pytest.approx(1.0, abs=1e-12)
    assert rh_constant(w, math.inf) == pytest.approx(1.0, abs=1e-12)


def test_rh_two_level_weight_direct():
    # w = 4 on the left half, 1 on the right; r = 2
    d = _dom(4)
    vals = np.where(d.cell_centers()[:, 0] < 0.5, 4.0, 1.0)
    w = make_weight(d, vals)
    got = rh_constant(w, 2.0)
    best = 0.0
    for q in default_cube_collection(d):
        cells = w.grid[q.cell_slices()]
        best = max(best, math.sqrt(float((cells ** 2).mean())) / float(cells.mean()))
    assert got == pytest.approx(best, rel=1e-12)
    assert got >= 1.0


def test_rh_infinity_vs_finite():
    d = _dom(5)
    w = _rand_weight(d, 9)
    r8 = rh_constant(w, 8.0)
    ri = rh_constant(w, math.inf)
    assert r8 <= ri + 1e-12


# ---------------------------------------------------------------------------
# A_{p,q}


def test_apq_constant_weight_scores_one():
    d = _dom(4)
    w = make_weight(d, np.ones(d.ncells))
    assert apq_constant(w, 2.0, 3.0) == pytest.approx(1.0, abs=1e-12)


def test_apq_consistency_identities():
    d = _dom(6)
    p, q = 2.0, 4.0
    pp = p / (p - 1.0)
    for a in (-0.1, 0.15, 0.3):
        w = power_weight(d, a, center=(0.25,))
        base = apq_constant(w, p, q)
        wq = make_weight(d, w.values ** q)
        assert ap_constant(wq, 1.0 + q / pp) == pytest.approx(base, rel=1e-10)
        wd = make_weight(d, w.values ** (-pp))
        assert ap_constant(wd, 1.0 + pp / q) == pytest.approx(
            base ** (pp / q), rel=1e-10
        )


def test_apq_parameter_validation():
    d = _dom(3)
    w = _rand_weight(d)
    for p, q in ((2.0, 2.0), (3.0, 2.0), (1.0, 2.0), (2.0, math.inf)):
        with pytest.raises(ParameterError):
            apq_constant(w, p, q)


# ---------------------------------------------------------------------------
# A_infinity (Fujii-Wilson)


def test_ainf_constant_weight_scores_one():
    d = _dom(4)
    w = make_weight(d, np.full(d.ncells, 2.0))
    assert ainf_constant(w) == pytest.approx(1.0, abs=1e-12)


def test_ainf_vs_bruteforce():
    # direct evaluation: M(w chi_Q) per cell by scanning every cube
    d = _dom(4)
    w = _rand_weight(d, 17)
    from fracsparse.grid import default_lattices

    lats = default_lattices(d)
    got = ainf_constant(w)
    hn = d.cell_measure
    best = 0.0
    for q in default_cube_collection(d):
        cells = q.flat_cells()
        restricted = np.zeros(d.ncells)
        restricted[cells] = w.values[cells]
        m = np.zeros(cells.size)
        for lat in lats:
            for r in lat.cubes():
                rc = r.flat_cells()
                if rc.size == 0:
                    continue
                avg = restricted[rc].sum() * hn / r.measure
                hit = np.isin(cells, rc)
                m[hit] = np.maximum(m[hit], avg)
        val = m.sum() * hn / (w.values[cells].sum() * hn)
        best = max(best, val)
    assert got == pytest.approx(best, rel=1e-12)


def test_ainf_tracks_ap_on_power_weights():
    # A_inf stays within a modest multiple of A_2 and grows with it
    d = _dom(6)
    for family in ((-0.2, -0.4), (0.2, 0.5, 0.8)):
        ainfs, aps = [], []
        for a in family:
            w = power_weight(d, a, center=(0.5,))
            ainfs.append(ainf_constant(w))
            aps.append(ap_constant(w, 2.0))
        assert all(ai <= 2.0 * ap for ai, ap in zip(ainfs, aps))
        assert ainfs == sorted(ainfs) and aps == sorted(aps)


def test_ainf_monotone_under_refinement():
    coarse = _dom(4)
    fine = _dom(5)
    rng = np.random.default_rng(23)
    vals = rng.uniform(0.5, 2.0, coarse.ncells)
    wc = make_weight(coarse, vals)
    wf = make_weight(fine, np.repeat(vals, 2))
    assert ainf_constant(wc) <= ainf_constant(wf) + 1e-9


def test_ainf_2d_constant_and_bruteforce_small():
    d = _dom(2, dim=2)
    w = make_weight(d, np.full(d.ncells, 3.0))
    assert ainf_constant(w) == pytest.approx(1.0, abs=1e-12)
    w = _rand_weight(d, 29)
    from fracsparse.grid import default_lattices

    lats = default_lattices(d)
    hn = d.cell_measure
    best = 0.0
    for q in default_cube_collection(d):
        cells = q.flat_cells()
        restricted = np.zeros(d.ncells)
        restricted[cells] = w.values[cells]
        m = np.zeros(cells.size)
        for lat in lats:
            for r in lat.cubes():
                rc = r.flat_cells()
                if rc.size == 0:
                    continue
                avg = restricted[rc].sum() * hn / r.measure
                hit = np.isin(cells, rc)
                m[hit] = np.maximum(m[hit], avg)
        best = max(best, m.sum() / w.values[cells].sum())
    assert ainf_constant(w) == pytest.approx(best, rel=1e-12)


# ---------------------------------------------------------------------------
# Two-weight bracket


def test_two_weight_trivial_normalization():
    d = _dom(4)
    one = make_weight(d, np.ones(d.ncells))
    assert two_weight_constant(one, one, -1.0, 1.0, 0.0) == pytest.approx(
        1.0, abs=1e-12
    )


def test_two_weight_recovers_ap():
    d = _dom(5)
    p = 2.5
    w = _rand_weight(d, 31)
    sigma = make_weight(d, w.values ** (1.0 - p / (p - 1.0)))
    got = two_weight_constant(w, sigma, -p, 1.0, p - 1.0)
    assert got == pytest.approx(ap_constant(w, p), rel=1e-12)


def test_two_weight_vs_bruteforce():
    d = _dom(4)
    u = power_weight(d, 0.3, center=(0.125,))
    v = power_weight(d, -0.2, center=(0.75,))
    alpha, beta, gamma = -1.5, 1.0, 0.5
    got = two_weight_constant(u, v, alpha, beta, gamma)
    hn = d.cell_measure
    best = 0.0
    for q in default_cube_collection(d):
        cu = u.grid[q.cell_slices()]
        cv = v.grid[q.cell_slices()]
        val = (
            (cu.size * hn) ** alpha
            * (float(cu.sum()) * hn) ** beta
            * (float(cv.sum()) * hn) ** gamma
        )
        best = max(best, val)
    assert got == pytest.approx(best, rel=1e-12)


def test_two_weight_triviality_warnings():
    d = _dom(3)
    one = make_weight(d, np.ones(d.ncells))
    with pytest.warns(TrivialityWarning):
        two_weight_constant(one, one, 0.5, 1.0, 0.0)
    with pytest.warns(TrivialityWarning):
        two_weight_constant(one, one, -1.0, 0.5, 0.25)


# ---------------------------------------------------------------------------
# Bloom weight and BMO


def test_bloom_weight_cellwise():
    d = _dom(4)
    lam = _rand_weight(d, 41, lo=0.5, hi=1.5)
    assert np.allclose(bloom_weight(lam, lam, 3).values, 1.0)
    mu = _rand_weight(d, 42)
    assert np.allclose(
        bloom_weight(mu, lam, 1).values, mu.values / lam.values, rtol=1e-14
    )
    lam3 = make_weight(d, lam.values ** 3)
    assert np.allclose(bloom_weight(lam3, lam, 2).values, lam.values, rtol=1e-12)


def test_bloom_weight_refuses_order_zero():
    d = _dom(3)
    w = _rand_weight(d)
    with pytest.raises(BloomUndefinedError):
        bloom_weight(w, w, 0)


def test_bmo_constant_vanishes():
    d = _dom(4)
    b = GridFunction(d, np.full(d.ncells, 9.0))
    nu = _rand_weight(d, 51)
    assert bmo_nu(b, nu) == 0.0


def test_bmo_unweighted_half_indicator():
    d = _dom(5)
    b = GridFunction(d, (d.cell_centers()[:, 0] < 0.5).astype(float))
    one = make_weight(d, np.ones(d.ncells))
    got = bmo_nu(b, one)
    hn = d.cell_measure
    best = 0.0
    for q in default_cube_collection(d):
        bb = b.grid[q.cell_slices()]
        dev = float(np.abs(bb - bb.mean()).sum()) * hn
        best = max(best, dev / (bb.size * hn))
    assert got == pytest.approx(best, rel=1e-12)
    # the level-0 cube realizes mean deviation 1/2
    assert got == pytest.approx(0.5, abs=1e-12)


def test_bmo_homogeneity():
    d = _dom(4)
    rng = np.random.default_rng(61)
    b = GridFunction(d, rng.normal(size=d.ncells))
    nu = _rand_weight(d, 62)
    assert bmo_nu(GridFunction(d, -3.0 * b.values), nu) == pytest.approx(
        3.0 * bmo_nu(b, nu), rel=1e-12
    )


def test_collection_descriptor_and_base_lattice_scan():
    d = _dom(4)
    cubes = default_cube_collection(d)
    desc = describe_cube_collection(d, cubes)
    assert "cubes" in desc and "levels 0" in desc
    # characteristics also accept hand-built collections
    w = _rand_weight(d, 70)
    base_only = list(base_lattice(d).cubes())
    assert ap_constant(w, 2.0, cubes=base_only) >= 1.0
