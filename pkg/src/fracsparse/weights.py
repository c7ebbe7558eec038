"""Weight classes: Muckenhoupt-type characteristics and Bloom machinery.

Characteristics are maxima over a finite cube collection (default: every
cube of the 3^n shifted lattices, all levels).  Averages here normalize by
the measure of Q intersected with the domain, not the geometric |Q|: that is
the only convention under which constant weights score exactly 1 on every
cube, protruding ones included, which the class definitions require.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    BloomUndefinedError,
    DegenerateWeightError,
    ParameterError,
    TrivialityWarning,
)
from .grid import (
    Cube,
    DyadicLattice,
    GridDomain,
    GridFunction,
    block_sums,
    default_lattices,
    sat_table,
    three_lattices,
)
from .maximal import LevelWindows, _window_reduce, level_windows


@dataclass(frozen=True)
class Weight:
    """A strictly positive grid function."""

    gf: GridFunction

    def __post_init__(self) -> None:
        v = self.gf.values
        if not np.all(np.isfinite(v)) or v.min() <= 0.0:
            raise DegenerateWeightError(
                "weights must be strictly positive and finite"
            )

    @property
    def domain(self) -> GridDomain:
        return self.gf.domain

    @property
    def values(self) -> np.ndarray:
        return self.gf.values

    @property
    def grid(self) -> np.ndarray:
        return self.gf.grid


def as_weight(w) -> Weight:
    if isinstance(w, Weight):
        return w
    if isinstance(w, GridFunction):
        return Weight(w)
    raise ParameterError(f"cannot interpret {type(w).__name__} as a weight")


def make_weight(domain: GridDomain, source) -> Weight:
    if callable(source):
        return Weight(GridFunction.from_callable(domain, source))
    return Weight(GridFunction(domain, np.asarray(source, dtype=np.float64)))


def power_weight(domain: GridDomain, exponent: float, center=None) -> Weight:
    """|x - c|^exponent with the distance floored at h/2, so the cell at the
    singularity carries the value half a cell away."""
    if center is None:
        center = tuple(o + domain.side / 2.0 for o in domain.origin)
    c = np.atleast_1d(np.asarray(center, dtype=np.float64))
    if c.size != domain.dim:
        raise ParameterError("center dimension does not match the domain")
    dist = np.linalg.norm(domain.cell_centers() - c[None, :], axis=1)
    dist = np.maximum(dist, domain.h / 2.0)
    return Weight(GridFunction(domain, dist ** exponent))


@dataclass(frozen=True)
class WeightConstants:
    """A computed characteristic with the data identifying it."""

    which: str
    exponents: tuple[float, ...]
    value: float
    cube_set: str

    def __post_init__(self) -> None:
        if self.which in ("Ap", "Ainf", "RHr", "Apq") and self.value < 1.0 - 1e-9:
            raise ParameterError(
                f"{self.which} characteristic must be >= 1, got {self.value}"
            )
        if not (np.isfinite(self.value) and self.value >= 0.0):
            raise ParameterError(f"characteristic must be finite >= 0, got {self.value}")


def default_cube_collection(domain: GridDomain) -> list[Cube]:
    """Every cube of the 3^n shifted lattices, levels 0..depth."""
    return [q for lat in three_lattices(domain) for q in lat.cubes()]


def describe_cube_collection(domain: GridDomain, cubes: Sequence[Cube]) -> str:
    shifts = sorted({q.shift for q in cubes})
    levels = sorted({q.level for q in cubes})
    return (f"{len(cubes)} cubes, shifts {shifts[0]}..{shifts[-1]}, "
            f"levels {levels[0]}..{levels[-1]}, depth {domain.depth}")


def _bounds_arrays(cubes: Sequence[Cube]):
    if not cubes:
        raise ParameterError("cube collection must be nonempty")
    lows = np.array([[b[0] for b in q.cell_bounds()] for q in cubes], dtype=np.int64)
    highs = np.array([[b[1] for b in q.cell_bounds()] for q in cubes], dtype=np.int64)
    counts = np.prod(np.maximum(highs - lows, 0), axis=1)
    if counts.min() <= 0:
        raise ParameterError("every cube in the collection must meet the domain")
    return lows, highs, counts


def _cube_means(values_grid: np.ndarray, lows, highs, counts) -> np.ndarray:
    sums = block_sums(sat_table(values_grid), lows, highs)
    return sums / counts


# ---------------------------------------------------------------------------
# One-weight characteristics


def ap_constant(w, p: float, cubes: Sequence[Cube] | None = None) -> float:
    """max over cubes of <w>_Q <w^(1-p')>_Q^(p-1)."""
    w = as_weight(w)
    if not 1.0 < p < math.inf:
        raise ParameterError(f"need p in (1, inf), got {p}")
    if cubes is None:
        cubes = default_cube_collection(w.domain)
    lows, highs, counts = _bounds_arrays(cubes)
    dual_exp = 1.0 - p / (p - 1.0)
    m_w = _cube_means(w.grid, lows, highs, counts)
    m_s = _cube_means(w.grid ** dual_exp, lows, highs, counts)
    if m_w.min() <= 0.0 or m_s.min() <= 0.0:
        raise DegenerateWeightError("weight averages vanished on a cube")
    return float((m_w * m_s ** (p - 1.0)).max())


def rh_constant(w, r: float, cubes: Sequence[Cube] | None = None) -> float:
    """max over cubes of <w>_(r,Q) / <w>_Q (reverse Holder ratio)."""
    w = as_weight(w)
    if not 1.0 < r:
        raise ParameterError(f"need r in (1, inf], got {r}")
    if cubes is None:
        cubes = default_cube_collection(w.domain)
    lows, highs, counts = _bounds_arrays(cubes)
    m_w = _cube_means(w.grid, lows, highs, counts)
    if m_w.min() <= 0.0:
        raise DegenerateWeightError("weight averages vanished on a cube")
    if math.isinf(r):
        tops = np.array([float(w.grid[q.cell_slices()].max()) for q in cubes])
        return float((tops / m_w).max())
    m_r = _cube_means(w.grid ** r, lows, highs, counts) ** (1.0 / r)
    return float((m_r / m_w).max())


def apq_constant(w, p: float, q: float, cubes: Sequence[Cube] | None = None) -> float:
    """max over cubes of <w^q>_Q <w^(-p')>_Q^(q/p')."""
    w = as_weight(w)
    if not 1.0 < p < q < math.inf:
        raise ParameterError(f"need 1 < p < q < inf, got p={p}, q={q}")
    if cubes is None:
        cubes = default_cube_collection(w.domain)
    lows, highs, counts = _bounds_arrays(cubes)
    pp = p / (p - 1.0)
    m_q = _cube_means(w.grid ** q, lows, highs, counts)
    m_d = _cube_means(w.grid ** (-pp), lows, highs, counts)
    if m_q.min() <= 0.0 or m_d.min() <= 0.0:
        raise DegenerateWeightError("weight averages vanished on a cube")
    return float((m_q * m_d ** (q / pp)).max())


def ainf_constant(w, cubes: Sequence[Cube] | None = None,
                  lattices: Sequence[DyadicLattice] | None = None) -> float:
    """Fujii-Wilson constant: max over cubes Q of the Q-average of the
    shifted-dyadic maximal of w restricted to Q, divided by the Q-average
    of w itself."""
    w = as_weight(w)
    domain = w.domain
    if cubes is None:
        cubes = default_cube_collection(domain)
    if not cubes:
        raise ParameterError("cube collection must be nonempty")
    windows = level_windows(domain, lattices)
    wg = w.grid
    sat = sat_table(wg)
    # per-window sums of w over the whole domain; cubes inside Q reuse these
    global_sums = {id(lw): _window_reduce(wg, lw, np.add) for lw in windows}
    hn = domain.cell_measure
    best = 0.0
    for q in cubes:
        bounds = q.cell_bounds()
        mass = float(block_sums(sat, *_single_bounds(bounds))[0])
        if mass <= 0.0:
            raise DegenerateWeightError("weight has no mass on a cube")
        local = _restricted_maximal_grid(wg, sat, bounds, windows, global_sums, hn)
        best = max(best, float(local.sum()) / mass)
    return best


def _single_bounds(bounds):
    lows = np.array([[b[0] for b in bounds]], dtype=np.int64)
    highs = np.array([[b[1] for b in bounds]], dtype=np.int64)
    return lows, highs


def _restricted_maximal_grid(wg, sat, bounds, windows, global_sums, hn):
    """Cellwise max over represented cubes R of <w chi_Q>_(1,R) on Q's cells;
    only the windows straddling Q's boundary need fresh intersected sums."""
    shape = tuple(hi - lo for lo, hi in bounds)
    out = np.zeros(shape)
    dim = len(bounds)
    for lw in windows:
        gs = global_sums[id(lw)]
        idx = []
        maps = []
        for a, (qlo, qhi) in enumerate(bounds):
            cmap = lw.cell_to_window[a]
            i0 = int(cmap[qlo])
            i1 = int(cmap[qhi - 1]) + 1
            idx.append((i0, i1))
            maps.append(cmap[qlo:qhi] - i0)
        if dim == 1:
            (i0, i1), = idx
            sums = gs[i0:i1].astype(np.float64)
            qlo, qhi = bounds[0]
            for k, win in ((0, i0), (i1 - i0 - 1, i1 - 1)):
                lo = max(int(lw.lows[0][win]), qlo)
                hi = min(int(lw.highs[0][win]), qhi)
                sums[k] = sat[hi] - sat[lo]
            patch = (sums * hn / lw.measure)[maps[0]]
        else:
            (i0, i1), (j0, j1) = idx
            sums = gs[i0:i1, j0:j1].astype(np.float64)
            frame_rows, frame_cols, flo, fhi = [], [], [], []
            for ii in {i0, i1 - 1}:
                for jj in range(j0, j1):
                    frame_rows.append(ii - i0)
                    frame_cols.append(jj - j0)
                    flo.append((max(int(lw.lows[0][ii]), bounds[0][0]),
                                max(int(lw.lows[1][jj]), bounds[1][0])))
                    fhi.append((min(int(lw.highs[0][ii]), bounds[0][1]),
                                min(int(lw.highs[1][jj]), bounds[1][1])))
            for jj in {j0, j1 - 1}:
                for ii in range(i0 + 1, i1 - 1):
                    frame_rows.append(ii - i0)
                    frame_cols.append(jj - j0)
                    flo.append((max(int(lw.lows[0][ii]), bounds[0][0]),
                                max(int(lw.lows[1][jj]), bounds[1][0])))
                    fhi.append((min(int(lw.highs[0][ii]), bounds[0][1]),
                                min(int(lw.highs[1][jj]), bounds[1][1])))
            if frame_rows:
                vals = block_sums(
                    sat,
                    np.array(flo, dtype=np.int64),
                    np.array(fhi, dtype=np.int64),
                )
                sums[frame_rows, frame_cols] = vals
            patch = (sums * hn / lw.measure)[np.ix_(maps[0], maps[1])]
        np.maximum(out, patch, out=out)
    return out


# ---------------------------------------------------------------------------
# Two-weight characteristic


def two_weight_constant(omega, sigma, alpha: float, beta: float, gamma: float,
                        cubes: Sequence[Cube] | None = None) -> float:
    """max over cubes of |Q|^alpha omega(Q)^beta sigma(Q)^gamma, with |Q| and
    the masses all taken inside the domain."""
    omega = as_weight(omega)
    sigma = as_weight(sigma)
    if omega.domain != sigma.domain:
        raise ParameterError("weights live on different domains")
    if alpha > 0.0 or alpha + beta + gamma < 0.0:
        warnings.warn(
            "two-weight class with size exponent > 0 or total homogeneity < 0 "
            "is trivial on small or large cubes",
            TrivialityWarning,
        )
    domain = omega.domain
    if cubes is None:
        cubes = default_cube_collection(domain)
    lows, highs, counts = _bounds_arrays(cubes)
    hn = domain.cell_measure
    size = counts * hn
    m_o = block_sums(sat_table(omega.grid), lows, highs) * hn
    m_s = block_sums(sat_table(sigma.grid), lows, highs) * hn
    if (beta < 0 and m_o.min() <= 0.0) or (gamma < 0 and m_s.min() <= 0.0):
        raise DegenerateWeightError("zero mass raised to a negative exponent")
    return float((size ** alpha * m_o ** beta * m_s ** gamma).max())


# ---------------------------------------------------------------------------
# Bloom weights and weighted BMO


def bloom_weight(mu, lam, m: int) -> Weight:
    """nu = (mu/lambda)^(1/m), the intermediate weight for m-th order
    commutator bounds."""
    mu = as_weight(mu)
    lam = as_weight(lam)
    if mu.domain != lam.domain:
        raise ParameterError("weights live on different domains")
    if not isinstance(m, (int, np.integer)) or m < 0:
        raise ParameterError(f"order must be an integer >= 0, got {m}")
    if m == 0:
        raise BloomUndefinedError(
            "the Bloom weight is undefined at order zero; "
            "zeroth-order statements are unweighted in b"
        )
    vals = (mu.values / lam.values) ** (1.0 / m)
    return Weight(GridFunction(mu.domain, vals))


def bmo_nu(b: GridFunction, nu, cubes: Sequence[Cube] | None = None) -> float:
    """max over cubes of the mean deviation mass of b divided by nu's mass:
    (1/nu(Q)) sum |b - <b>_Q| h^n."""
    nu = as_weight(nu)
    if b.domain != nu.domain:
        raise ParameterError("function and weight live on different domains")
    domain = b.domain
    if cubes is None:
        cubes = default_cube_collection(domain)
    if not cubes:
        raise ParameterError("cube collection must be nonempty")
    hn = domain.cell_measure
    bg = b.grid
    ng = nu.grid
    best = 0.0
    for q in cubes:
        sl = q.cell_slices()
        bb = bg[sl]
        if bb.size == 0:
            raise ParameterError("every cube in the collection must meet the domain")
        nu_mass = float(ng[sl].sum()) * hn
        if nu_mass <= 0.0:
            raise DegenerateWeightError("nu has no mass on a cube")
        dev = float(np.abs(bb - bb.mean()).sum()) * hn
        best = max(best, dev / nu_mass)
    return best
