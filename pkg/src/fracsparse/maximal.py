"""Maximal-type operators over the shifted dyadic lattices.

The scan engine drives everything: each (lattice, level) pair tiles the
domain into axis-aligned windows, per-window aggregates come from
ufunc.reduceat, and a cell-to-window index map broadcasts the per-cube value
back onto cells for the running pointwise max.  Truncation operators reuse
the same windows but need per-cube corrections T(f restricted to the tripled
cube), done as one batched gather per level when a dense matrix is available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateWeightError, EmptySampleError, ParameterError
from .grid import (
    Cube,
    DyadicLattice,
    GridDomain,
    GridFunction,
    default_lattices,
    oscillation_values,
)
from .operators import OperatorRep, approx_identity_apply, fractional_power

DENSE_BATCH_BUDGET = 3 * 10 ** 7  # max gathered elements per batched level


@dataclass(frozen=True)
class LevelWindows:
    """Axis-product window structure of one (lattice, level) tiling.

    lows/highs are clipped per-axis window bounds in cell units (windows
    partition [0, cells_per_axis)); raw_lows keep the unclipped left ends;
    cell_to_window maps each cell index to its window per axis.
    """

    shift: int
    level: int
    side_length: float
    measure: float
    width_cells: int
    lows: tuple[np.ndarray, ...]
    highs: tuple[np.ndarray, ...]
    raw_lows: tuple[np.ndarray, ...]
    cell_to_window: tuple[np.ndarray, ...]


@lru_cache(maxsize=64)
def _level_windows_cached(domain: GridDomain, shifts: tuple[int, ...],
                          levels: tuple[int, ...]) -> tuple[LevelWindows, ...]:
    from .grid import _axis_lefts

    cap = domain.cells_per_axis
    out = []
    for shift in shifts:
        w_units = 1 if shift < 0 else 3
        for level in levels:
            scale = 1 << (domain.depth - level)
            width = w_units * scale
            lows, highs, raws, maps = [], [], [], []
            for a in range(domain.dim):
                raw = np.array(list(_axis_lefts(domain, shift, level, a)),
                               dtype=np.int64) * scale
                lo = np.clip(raw, 0, cap)
                hi = np.clip(raw + width, 0, cap)
                idx = np.searchsorted(raw, np.arange(cap), side="right") - 1
                lows.append(lo)
                highs.append(hi)
                raws.append(raw)
                maps.append(idx)
            side = domain.side / (1 << level) * w_units
            out.append(
                LevelWindows(
                    shift=shift,
                    level=level,
                    side_length=side,
                    measure=side ** domain.dim,
                    width_cells=width,
                    lows=tuple(lows),
                    highs=tuple(highs),
                    raw_lows=tuple(raws),
                    cell_to_window=tuple(maps),
                )
            )
    return tuple(out)


def level_windows(domain: GridDomain,
                  lattices: Sequence[DyadicLattice] | None = None) -> tuple[LevelWindows, ...]:
    if lattices is None:
        lattices = default_lattices(domain)
    shifts = tuple(lat.shift for lat in lattices)
    levels = tuple(range(0, domain.depth + 1))
    return _level_windows_cached(domain, shifts, levels)


def _window_reduce(grid: np.ndarray, lw: LevelWindows, ufunc) -> np.ndarray:
    out = ufunc.reduceat(grid, lw.lows[0], axis=0)
    if grid.ndim == 2:
        out = ufunc.reduceat(out, lw.lows[1], axis=1)
    return out


def _broadcast_to_cells(per_window: np.ndarray, lw: LevelWindows) -> np.ndarray:
    if per_window.ndim == 1:
        return per_window[lw.cell_to_window[0]]
    return per_window[np.ix_(lw.cell_to_window[0], lw.cell_to_window[1])]


def _scan_max(domain: GridDomain, windows, per_window_fn) -> np.ndarray:
    out = np.zeros(domain.shape)
    for lw in windows:
        np.maximum(out, _broadcast_to_cells(per_window_fn(lw), lw), out=out)
    return out.ravel()


def _window_average(grid_pow: np.ndarray, lw: LevelWindows, r: float,
                    cell_measure: float) -> np.ndarray:
    if math.isinf(r):
        return _window_reduce(grid_pow, lw, np.maximum)
    sums = _window_reduce(grid_pow, lw, np.add) * cell_measure
    return (sums / lw.measure) ** (1.0 / r)


# ---------------------------------------------------------------------------
# Plain, weighted, fractional maximal functions


def maximal(f: GridFunction, r: float,
            lattices: Sequence[DyadicLattice] | None = None) -> GridFunction:
    """M_r: x -> max over represented cubes containing x of the r-average."""
    if not r > 0:
        raise ParameterError(f"maximal exponent must be positive, got {r}")
    domain = f.domain
    g = np.abs(f.grid) if math.isinf(r) else np.abs(f.grid) ** r
    windows = level_windows(domain, lattices)
    vals = _scan_max(domain, windows,
                     lambda lw: _window_average(g, lw, r, domain.cell_measure))
    return GridFunction(domain, vals)


def weighted_maximal(f: GridFunction, r: float, u: GridFunction,
                     lattices: Sequence[DyadicLattice] | None = None) -> GridFunction:
    """Weighted maximal: u-averages replace Lebesgue averages; windows where
    u has no mass contribute nothing."""
    if not r > 0:
        raise ParameterError(f"maximal exponent must be positive, got {r}")
    domain = f.domain
    uv = u.grid
    if float(uv.sum()) <= 0.0:
        raise DegenerateWeightError("weight has zero total mass")
    windows = level_windows(domain, lattices)
    if math.isinf(r):
        g = np.abs(f.grid) * (uv > 0)
        vals = _scan_max(domain, windows,
                         lambda lw: _window_reduce(g, lw, np.maximum))
        return GridFunction(domain, vals)
    num = np.abs(f.grid) ** r * uv

    def per_window(lw: LevelWindows) -> np.ndarray:
        ns = _window_reduce(num, lw, np.add)
        ds = _window_reduce(uv, lw, np.add)
        with np.errstate(invalid="ignore", divide="ignore"):
            avg = np.where(ds > 0, ns / np.where(ds > 0, ds, 1.0), 0.0)
        return avg ** (1.0 / r)

    return GridFunction(domain, _scan_max(domain, windows, per_window))


def fractional_maximal(f: GridFunction, alpha: float, p: float,
                       lattices: Sequence[DyadicLattice] | None = None) -> GridFunction:
    """Smoothing maximal: max over cubes of side^alpha times the p-average."""
    domain = f.domain
    if not (0 <= alpha < domain.dim / p):
        raise ParameterError(
            f"need 0 <= alpha < n/p = {domain.dim / p}, got {alpha}"
        )
    g = np.abs(f.grid) ** p
    windows = level_windows(domain, lattices)
    vals = _scan_max(
        domain, windows,
        lambda lw: lw.side_length ** alpha
        * _window_average(g, lw, p, domain.cell_measure),
    )
    return GridFunction(domain, vals)


# ---------------------------------------------------------------------------
# Truncation maximal operators


def _osc_rows(vals: np.ndarray, s: float) -> np.ndarray:
    """Row-wise mean pairwise s-gap with geometric normalization.

    NaN entries mark cells outside the domain; they enter as zeros, so the
    triangle inequality gives osc <= 2 * q0-average exactly, protruding
    cubes included.
    """
    v = np.nan_to_num(vals, nan=0.0)
    n = v.shape[1]
    if math.isinf(s):
        return v.max(axis=1) - v.min(axis=1)
    if s == 2.0:
        m1 = v.mean(axis=1)
        m2 = (v * v).mean(axis=1)
        return np.sqrt(np.maximum(2.0 * (m2 - m1 * m1), 0.0))
    if s == 1.0:
        vs = np.sort(v, axis=1)
        coeff = 2.0 * np.arange(n, dtype=np.float64) - (n - 1.0)
        return 2.0 * (vs @ coeff) / (n * n)
    out = np.empty(v.shape[0])
    chunk = max(1, (1 << 22) // max(n * n, 1))
    for start in range(0, v.shape[0], chunk):
        block = v[start:start + chunk]
        diffs = np.abs(block[:, :, None] - block[:, None, :]) ** s
        out[start:start + chunk] = (diffs.sum(axis=(1, 2)) / (n * n)) ** (1.0 / s)
    return out


def _nan_qavg_rows(vals: np.ndarray, q0: float, cell_measure: float,
                   measure: float) -> np.ndarray:
    """Row-wise q0-average of |vals| with geometric normalization; NaN cells
    lie outside the domain and count as zero."""
    a = np.abs(vals)
    if math.isinf(q0):
        return np.nan_to_num(np.nanmax(a, axis=1), nan=0.0)
    sums = np.nansum(a ** q0, axis=1) * cell_measure
    return (sums / measure) ** (1.0 / q0)


def _truncated_rows(T: OperatorRep, f_vals: np.ndarray, Tf: np.ndarray,
                    lw: LevelWindows, domain: GridDomain,
                    sub: tuple[slice, ...] | None = None):
    """Per-cube values of T(f off the tripled cube) on the cube's cells.

    Returns (vals, keep): vals[i] has one row per kept cube, NaN where the
    cube leaves the domain; batched dense gather when affordable.
    """
    cap = domain.cells_per_axis
    n = domain.dim
    w = lw.width_cells
    axis_raws = []
    for a in range(n):
        raw = lw.raw_lows[a]
        if sub is not None:
            raw = raw[sub[a]]
        axis_raws.append(raw)
    if n == 1:
        raw0 = axis_raws[0]
        rows = raw0[:, None] + np.arange(w)[None, :]
        cols = (raw0 - w)[:, None] + np.arange(3 * w)[None, :]
    else:
        raw0, raw1 = axis_raws
        r0 = raw0[:, None] + np.arange(w)[None, :]
        r1 = raw1[:, None] + np.arange(w)[None, :]
        c0 = (raw0 - w)[:, None] + np.arange(3 * w)[None, :]
        c1 = (raw1 - w)[:, None] + np.arange(3 * w)[None, :]
        n0, n1 = raw0.size, raw1.size
        rows = (
            r0[:, None, :, None] * cap + r1[None, :, None, :]
        ).reshape(n0 * n1, w ** 2)
        rmask0 = (r0 >= 0) & (r0 < cap)
        rmask1 = (r1 >= 0) & (r1 < cap)
        rows_ok = (
            rmask0[:, None, :, None] & rmask1[None, :, None, :]
        ).reshape(n0 * n1, w ** 2)
        cols = (
            c0[:, None, :, None] * cap + c1[None, :, None, :]
        ).reshape(n0 * n1, (3 * w) ** 2)
        cmask0 = (c0 >= 0) & (c0 < cap)
        cmask1 = (c1 >= 0) & (c1 < cap)
        cols_ok = (
            cmask0[:, None, :, None] & cmask1[None, :, None, :]
        ).reshape(n0 * n1, (3 * w) ** 2)
    if n == 1:
        rows_ok = (rows >= 0) & (rows < cap)
        cols_ok = (cols >= 0) & (cols < cap)
    rows_cl = np.clip(rows, 0, cap ** n - 1) if n == 1 else np.clip(rows, 0, cap * cap - 1)
    cols_cl = np.clip(cols, 0, cap ** n - 1) if n == 1 else np.clip(cols, 0, cap * cap - 1)

    fwin = f_vals[cols_cl] * cols_ok
    nR, wR = rows_cl.shape
    wC = cols_cl.shape[1]
    batched = nR * wR * wC <= DENSE_BATCH_BUDGET
    if batched:
        try:
            dense = T.dense()
        except ParameterError:
            batched = False
    if batched:
        sub_blocks = dense[rows_cl[:, :, None], cols_cl[:, None, :]]
        sub_blocks *= cols_ok[:, None, :]
        corr = np.einsum("rwc,rc->rw", sub_blocks, fwin)
    else:
        corr = np.empty((nR, wR))
        for i in range(nR):
            live_cols = cols_cl[i][cols_ok[i]]
            live_rows = rows_cl[i]
            block = T.submatrix(live_rows, live_cols)
            corr[i] = block @ f_vals[live_cols]
    vals = Tf[rows_cl] - corr
    vals[~rows_ok] = np.nan
    return vals, rows_cl, rows_ok


def sharp_grand_truncation(T: OperatorRep, f: GridFunction, s: float,
                           lattices: Sequence[DyadicLattice] | None = None) -> GridFunction:
    """x -> max over cubes Q containing x of the s-oscillation on Q of
    T applied to f with the tripled cube cut away.

    The oscillation zero-extends outside the domain and normalizes by the
    geometric cube measure, the same convention as the averages, so the
    factor-2 domination by grand_truncation is exact on every cube.
    """
    if not s >= 1:
        raise ParameterError(f"oscillation exponent must be >= 1, got {s}")
    return _truncation_scan(
        T, f, lattices,
        lambda vals, lw: _osc_rows(vals, s),
    )


def grand_truncation(T: OperatorRep, f: GridFunction, q0: float,
                     lattices: Sequence[DyadicLattice] | None = None) -> GridFunction:
    """x -> max over cubes Q containing x of the q0-average on Q of
    T applied to f with the tripled cube cut away; dominates the sharp
    (oscillation) version pointwise up to a factor 2."""
    if not q0 >= 1:
        raise ParameterError(f"average exponent must be >= 1, got {q0}")
    domain = f.domain
    return _truncation_scan(
        T, f, lattices,
        lambda vals, lw: _nan_qavg_rows(vals, q0, domain.cell_measure, lw.measure),
    )


def _truncation_scan(T, f, lattices, row_stat) -> GridFunction:
    domain = f.domain
    Tf = T.apply_values(f.values)
    out = np.zeros(domain.shape)
    for lw in level_windows(domain, lattices):
        vals, _, _ = _truncated_rows(T, f.values, Tf, lw, domain)
        stat = row_stat(vals, lw)
        if domain.dim == 2:
            stat = stat.reshape(lw.lows[0].size, lw.lows[1].size)
        np.maximum(out, _broadcast_to_cells(stat, lw), out=out)
    return GridFunction(domain, out.ravel())


def truncation_stats_on_cube(
    T: OperatorRep, f_vals: np.ndarray, Tf: np.ndarray, cube: Cube,
    windows, s: float | None, q0: float | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Sharp (oscillation) and average truncation maximal values restricted
    to one cube's cells; the construct-time fast path.

    Returns (osc_max, avg_max) flat arrays over the cube's clipped window,
    either entry None-equivalent (zeros) when the exponent is None.
    """
    domain = cube.domain
    bounds = cube.cell_bounds()
    shape = tuple(hi - lo for lo, hi in bounds)
    osc_out = np.zeros(shape)
    avg_out = np.zeros(shape)
    for lw in windows:
        sel = []
        local_maps = []
        for a, (qlo, qhi) in enumerate(bounds):
            i0 = int(np.searchsorted(lw.highs[a], qlo, side="right"))
            i1 = int(np.searchsorted(lw.lows[a], qhi, side="left"))
            if i1 <= i0:
                sel = None
                break
            sel.append(slice(i0, i1))
            local_maps.append(lw.cell_to_window[a][qlo:qhi] - i0)
        if sel is None:
            continue
        vals, rows_cl, rows_ok = _truncated_rows(
            T, f_vals, Tf, lw, domain, sub=tuple(sel)
        )
        if s is not None:
            stat = _osc_rows(vals, s)
            grid_stat = stat.reshape([s_.stop - s_.start for s_ in sel])
            patch = (
                grid_stat[local_maps[0]]
                if domain.dim == 1
                else grid_stat[np.ix_(local_maps[0], local_maps[1])]
            )
            np.maximum(osc_out, patch, out=osc_out)
        if q0 is not None:
            stat = _nan_qavg_rows(vals, q0, domain.cell_measure, lw.measure)
            grid_stat = stat.reshape([s_.stop - s_.start for s_ in sel])
            patch = (
                grid_stat[local_maps[0]]
                if domain.dim == 1
                else grid_stat[np.ix_(local_maps[0], local_maps[1])]
            )
            np.maximum(avg_out, patch, out=avg_out)
    return osc_out.ravel(), avg_out.ravel()


def maximal_on_cube(g_pow: np.ndarray, r: float, cube: Cube, windows,
                    cell_measure: float) -> np.ndarray:
    """Restricted scan: the plain maximal of a function (|g|^r pre-raised,
    or |g| when r is inf) evaluated only on the cube's cells."""
    domain = cube.domain
    bounds = cube.cell_bounds()
    out = np.zeros(tuple(hi - lo for lo, hi in bounds))
    for lw in windows:
        sel = []
        local_maps = []
        for a, (qlo, qhi) in enumerate(bounds):
            i0 = int(np.searchsorted(lw.highs[a], qlo, side="right"))
            i1 = int(np.searchsorted(lw.lows[a], qhi, side="left"))
            if i1 <= i0:
                sel = None
                break
            sel.append((i0, i1))
            local_maps.append(lw.cell_to_window[a][qlo:qhi] - i0)
        if sel is None:
            continue
        # slice one extra start as a sentinel so the last window does not
        # swallow the rest of the axis, then trim
        ufunc = np.maximum if math.isinf(r) else np.add
        if g_pow.ndim == 1:
            (i0, i1), = sel
            agg = ufunc.reduceat(g_pow, lw.lows[0][i0:i1 + 1])[: i1 - i0]
            per = agg if math.isinf(r) else \
                (agg * cell_measure / lw.measure) ** (1.0 / r)
            patch = per[local_maps[0]]
        else:
            a0 = ufunc.reduceat(g_pow, lw.lows[0][sel[0][0]:sel[0][1] + 1],
                                axis=0)[: sel[0][1] - sel[0][0]]
            agg = ufunc.reduceat(a0, lw.lows[1][sel[1][0]:sel[1][1] + 1],
                                 axis=1)[:, : sel[1][1] - sel[1][0]]
            per = agg if math.isinf(r) else \
                (agg * cell_measure / lw.measure) ** (1.0 / r)
            patch = per[np.ix_(local_maps[0], local_maps[1])]
        np.maximum(out, patch, out=out)
    return out.ravel()


# ---------------------------------------------------------------------------
# Smoothed fractional maximal


def smoothed_fractional_maximal(
    L, N: int, alpha: float, kappa: float, q0: float, f: GridFunction,
    lattices: Sequence[DyadicLattice] | None = None,
    frac_op: OperatorRep | None = None,
) -> GridFunction:
    """x -> max over cubes Q of the q0-average on Q of the N-th order
    approximate identity at scale side(Q)^kappa applied after the negative
    fractional power of L."""
    if not (isinstance(N, (int, np.integer)) and N >= 1):
        raise ParameterError(f"order must be an integer >= 1, got {N}")
    if not q0 >= 1:
        raise ParameterError(f"average exponent must be >= 1, got {q0}")
    domain = f.domain
    if frac_op is None:
        frac_op = fractional_power(L, alpha, kappa)
    g = GridFunction(domain, frac_op.apply_values(f.values))
    windows = level_windows(domain, lattices)
    out = np.zeros(domain.shape)
    smoothed: dict[int, np.ndarray] = {}
    for lw in windows:
        key = lw.level if lw.shift < 0 else -(lw.level + 1)
        if key not in smoothed:
            t = lw.side_length ** kappa
            smoothed[key] = np.abs(
                approx_identity_apply(L, N, t, g).values
            ).reshape(domain.shape)
        u = smoothed[key]
        if math.isinf(q0):
            per = _window_reduce(u, lw, np.maximum)
        else:
            sums = _window_reduce(u ** q0, lw, np.add) * domain.cell_measure
            per = (sums / lw.measure) ** (1.0 / q0)
        np.maximum(out, _broadcast_to_cells(per, lw), out=out)
    return GridFunction(domain, out.ravel())


# ---------------------------------------------------------------------------
# Locally-weak-boundedness profile


@dataclass(frozen=True)
class WeakBoundProfile:
    """Empirical smallest constants making the local weak-type inequality
    hold on the sample, per exceptional-fraction lambda."""

    operator: str
    p0: float
    alpha: float
    sample: str
    lam_grid: np.ndarray
    phi: np.ndarray

    def __post_init__(self) -> None:
        if np.any(np.diff(self.phi) > 1e-12):
            raise ParameterError("profile must be non-increasing in lambda")
        if not (np.all(np.isfinite(self.phi)) and np.all(self.phi >= 0)):
            raise ParameterError("profile values must be finite and nonnegative")


def weak_bound_profile(
    T: OperatorRep,
    p0: float,
    alpha: float,
    lam_grid: Sequence[float],
    cube_sample: Sequence[Cube],
    f_sample: Sequence[GridFunction],
    sample_label: str = "",
) -> WeakBoundProfile:
    """For each lambda: the largest over samples (Q, f) of the smallest
    threshold tau such that |T(f restricted to Q)| exceeds
    tau * p0-average * side^alpha on at most a lambda fraction of Q."""
    domain = T.domain
    if not (0 <= alpha < domain.dim / p0):
        raise ParameterError(
            f"need 0 <= alpha < n/p0 = {domain.dim / p0}, got {alpha}"
        )
    lam_grid = np.asarray(sorted(lam_grid), dtype=np.float64)
    if lam_grid.size == 0 or not cube_sample or not f_sample:
        raise EmptySampleError("need a nonempty lambda grid and samples")
    phi = np.zeros(lam_grid.size)
    used = 0
    for cube in cube_sample:
        cells = cube.flat_cells()
        if cells.size == 0:
            continue
        n_geom = cube.measure / domain.cell_measure
        for f in f_sample:
            fv = np.zeros(domain.ncells)
            fv[cells] = f.values[cells]
            if not np.any(fv):
                continue
            used += 1
            norm = (
                (float((np.abs(fv[cells]) ** p0).sum())
                 * domain.cell_measure / cube.measure) ** (1.0 / p0)
                * cube.side_length ** alpha
            )
            tvals = np.sort(np.abs(T.apply_values(fv)[cells]))[::-1]
            for i, lam in enumerate(lam_grid):
                allowed = int(math.floor(lam * n_geom))
                tau = 0.0 if allowed >= tvals.size else float(tvals[allowed])
                phi[i] = max(phi[i], tau / norm)
    if used == 0:
        raise EmptySampleError("every sample vanished on its cube")
    # enforce monotone non-increasing in lambda
    phi = np.maximum.accumulate(phi[::-1])[::-1]
    return WeakBoundProfile(
        operator=T.name,
        p0=p0,
        alpha=alpha,
        sample=sample_label or f"{used} cube-function pairs",
        lam_grid=lam_grid,
        phi=phi,
    )


def weak_quasi_norm(values: np.ndarray, domain: GridDomain, p_target: float,
                    lam_grid: Sequence[float] | None = None) -> float:
    """sup over thresholds of lam * |{|values| > lam}|^(1/p_target); the
    grid defaults to dyadic fractions of the max."""
    tv = np.abs(np.asarray(values, dtype=np.float64)).ravel()
    top = float(tv.max())
    if top == 0.0:
        return 0.0
    if lam_grid is None:
        lam_grid = top * 2.0 ** (-np.arange(0, 24, dtype=np.float64))
    h_n = domain.cell_measure
    best = 0.0
    for lam in lam_grid:
        measure = float(np.count_nonzero(tv > lam)) * h_n
        best = max(best, lam * measure ** (1.0 / p_target))
    return best
