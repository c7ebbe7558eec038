"""Dyadic grids: domains, grid functions, cubes, shifted lattices, averages.

Everything downstream works on a half-open base cube split into 2^(J*dim)
congruent cells.  Cube geometry is exact integer arithmetic: a cube at level
k covers, per axis, the half-open interval [A, A + w) in units of side/2^k,
with w = 1 for base-lattice cubes and w = 3 for cubes of the 3^n shifted
lattices.  The shifted lattice with digit vector j has level-k left endpoints
A = 3*m + (-1)^k * j_i, which keeps each lattice closed under subdivision and
houses every tripled base cube exactly once.

Cell membership is by center point; since all cube bounds are integers in
finest-cell units, a cell of index i belongs to [lo, hi) exactly when
lo <= i < hi, so clipped index ranges are the cell sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .errors import DegenerateWeightError, ParameterError, LeafError

MAX_DEPTH = {1: 14, 2: 7}


@dataclass(frozen=True)
class GridDomain:
    """A half-open cube [origin, origin+side)^dim split into 2^(J*dim) cells."""

    dim: int
    origin: tuple[float, ...]
    side: float
    depth: int

    @property
    def cells_per_axis(self) -> int:
        return 1 << self.depth

    @property
    def ncells(self) -> int:
        return self.cells_per_axis ** self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.cells_per_axis,) * self.dim

    @property
    def h(self) -> float:
        return self.side / self.cells_per_axis

    @property
    def cell_measure(self) -> float:
        return self.h ** self.dim

    def axis_centers(self, axis: int = 0) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.cells_per_axis) + 0.5) * self.h

    def cell_centers(self) -> np.ndarray:
        """Cell centers as an (ncells, dim) array in flat (C-order) cell order."""
        axes = [self.axis_centers(a) for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def make_domain(dim: int, origin, side: float, depth: int) -> GridDomain:
    if dim not in (1, 2):
        raise ParameterError(f"dim must be 1 or 2, got {dim}")
    if not side > 0:
        raise ParameterError(f"side must be positive, got {side}")
    if not (1 <= depth <= MAX_DEPTH[dim]):
        raise ParameterError(
            f"depth must lie in [1, {MAX_DEPTH[dim]}] for dim {dim}, got {depth}"
        )
    if np.isscalar(origin):
        origin = (float(origin),) * dim
    else:
        origin = tuple(float(c) for c in origin)
        if len(origin) != dim:
            raise ParameterError("origin length does not match dim")
    return GridDomain(dim=dim, origin=origin, side=float(side), depth=depth)


@dataclass
class GridFunction:
    """One real value per cell; zero-extended outside the domain."""

    domain: GridDomain
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.values.size != self.domain.ncells:
            raise ParameterError(
                f"value array has {self.values.size} entries, "
                f"domain has {self.domain.ncells} cells"
            )

    @property
    def grid(self) -> np.ndarray:
        return self.values.reshape(self.domain.shape)

    @classmethod
    def zeros(cls, domain: GridDomain) -> "GridFunction":
        return cls(domain, np.zeros(domain.ncells))

    @classmethod
    def from_callable(cls, domain: GridDomain, fn: Callable) -> "GridFunction":
        pts = domain.cell_centers()
        if domain.dim == 1:
            vals = np.asarray([fn(x[0]) for x in pts], dtype=np.float64)
        else:
            vals = np.asarray([fn(x[0], x[1]) for x in pts], dtype=np.float64)
        return cls(domain, vals)

    def copy(self) -> "GridFunction":
        return GridFunction(self.domain, self.values.copy())


def _shift_digits(shift: int, dim: int) -> tuple[int, ...]:
    return tuple((shift // 3 ** a) % 3 for a in range(dim))


@dataclass(frozen=True)
class Cube:
    """A dyadic cube of the base lattice (shift = -1) or a shifted lattice.

    coords are per-axis integers m; the covered interval per axis is
    [A, A + w) * side/2^level + origin with A = m (base) or
    A = 3m + (-1)^level * j (shifted lattice with digits j), w = 1 or 3.
    """

    domain: GridDomain
    shift: int
    level: int
    coords: tuple[int, ...]

    def __post_init__(self) -> None:
        n = self.domain.dim
        if len(self.coords) != n:
            raise ParameterError("coords length does not match domain dim")
        if not (-1 <= self.shift < 3 ** n):
            raise ParameterError(f"shift must be -1 or in [0, {3 ** n})")
        if not (0 <= self.level <= self.domain.depth):
            raise ParameterError("level must lie in [0, depth]")

    @property
    def width_units(self) -> int:
        return 1 if self.shift < 0 else 3

    def left_units(self) -> tuple[int, ...]:
        if self.shift < 0:
            return self.coords
        sgn = 1 if self.level % 2 == 0 else -1
        digits = _shift_digits(self.shift, self.domain.dim)
        return tuple(3 * m + sgn * j for m, j in zip(self.coords, digits))

    @property
    def side_length(self) -> float:
        return self.domain.side / (1 << self.level) * self.width_units

    @property
    def measure(self) -> float:
        return self.side_length ** self.domain.dim

    def span(self) -> tuple[tuple[int, int], ...]:
        """Unclipped per-axis [lo, hi) bounds in finest-cell units."""
        scale = 1 << (self.domain.depth - self.level)
        w = self.width_units
        return tuple((a * scale, (a + w) * scale) for a in self.left_units())

    def dilated_span(self, factor_power: int) -> tuple[tuple[int, int], ...]:
        """Span of 3^factor_power * Q (concentric dilation), in cell units."""
        scale = 1 << (self.domain.depth - self.level)
        w = self.width_units * scale
        pad = w * (3 ** factor_power - 1) // 2
        return tuple((lo - pad, hi + pad) for lo, hi in self.span())

    def cell_bounds(self) -> tuple[tuple[int, int], ...]:
        cap = self.domain.cells_per_axis
        return tuple(
            (max(lo, 0), min(hi, cap)) for lo, hi in self.span()
        )

    def cell_slices(self) -> tuple[slice, ...]:
        return tuple(slice(lo, max(lo, hi)) for lo, hi in self.cell_bounds())

    def cell_count(self) -> int:
        count = 1
        for lo, hi in self.cell_bounds():
            count *= max(0, hi - lo)
        return count

    def flat_cells(self) -> np.ndarray:
        """Flat indices of the cells of Q intersected with the domain."""
        bounds = self.cell_bounds()
        if any(hi <= lo for lo, hi in bounds):
            return np.empty(0, dtype=np.int64)
        if self.domain.dim == 1:
            lo, hi = bounds[0]
            return np.arange(lo, hi, dtype=np.int64)
        (l0, h0), (l1, h1) = bounds
        rows = np.arange(l0, h0, dtype=np.int64) * self.domain.cells_per_axis
        cols = np.arange(l1, h1, dtype=np.int64)
        return (rows[:, None] + cols[None, :]).ravel()

    def contains(self, other: "Cube") -> bool:
        mine, theirs = self.span(), other.span()
        return all(a[0] <= b[0] and b[1] <= a[1] for a, b in zip(mine, theirs))

    def contains_cell(self, flat_index: int) -> bool:
        cap = self.domain.cells_per_axis
        idx = (
            (flat_index,)
            if self.domain.dim == 1
            else (flat_index // cap, flat_index % cap)
        )
        return all(lo <= i < hi for i, (lo, hi) in zip(idx, self.span()))

    def geometry(self) -> tuple[tuple[float, float], ...]:
        """Per-axis real [lo, hi) endpoints."""
        step = self.domain.side / (1 << self.level)
        w = self.width_units
        return tuple(
            (self.domain.origin[a] + lo * step, self.domain.origin[a] + (lo + w) * step)
            for a, lo in enumerate(self.left_units())
        )


def base_cube(domain: GridDomain) -> Cube:
    return Cube(domain, -1, 0, (0,) * domain.dim)


def dyadic_children(cube: Cube) -> list[Cube]:
    """The 2^n congruent half-cubes of a cube, within the same lattice."""
    if cube.level >= cube.domain.depth:
        raise LeafError("cube is at the finest represented level")
    n = cube.domain.dim
    out = []
    if cube.shift < 0:
        bases = tuple(2 * m for m in cube.coords)
    else:
        sgn = 1 if cube.level % 2 == 0 else -1
        digits = _shift_digits(cube.shift, n)
        bases = tuple(2 * m + sgn * j for m, j in zip(cube.coords, digits))
    for d in range(1 << n):
        offs = tuple((d >> a) & 1 for a in range(n))
        out.append(
            Cube(cube.domain, cube.shift, cube.level + 1,
                 tuple(b + o for b, o in zip(bases, offs)))
        )
    return out


def annulus(cube: Cube, j: int) -> np.ndarray:
    """Flat cells of 3^j Q minus 3^(j-1) Q (j >= 1), or of Q itself (j = 0)."""
    if j < 0:
        raise ParameterError("annulus index must be >= 0")
    if j == 0:
        return cube.flat_cells()
    outer = _span_cells(cube.domain, cube.dilated_span(j))
    inner = _span_cells(cube.domain, cube.dilated_span(j - 1))
    return np.setdiff1d(outer, inner, assume_unique=True)


def _span_cells(domain: GridDomain, span) -> np.ndarray:
    cap = domain.cells_per_axis
    bounds = [(max(lo, 0), min(hi, cap)) for lo, hi in span]
    if any(hi <= lo for lo, hi in bounds):
        return np.empty(0, dtype=np.int64)
    if domain.dim == 1:
        lo, hi = bounds[0]
        return np.arange(lo, hi, dtype=np.int64)
    (l0, h0), (l1, h1) = bounds
    rows = np.arange(l0, h0, dtype=np.int64) * cap
    cols = np.arange(l1, h1, dtype=np.int64)
    return (rows[:, None] + cols[None, :]).ravel()


# ---------------------------------------------------------------------------
# Lattices and enumeration


@dataclass(frozen=True)
class DyadicLattice:
    """One dyadic lattice restricted to the levels represented on the domain.

    shift = -1 is the base lattice generated by the domain cube; shifts in
    [0, 3^n) are the lattices of tripled cubes.
    """

    domain: GridDomain
    shift: int
    level_min: int = 0
    level_max: int = field(default=-1)

    def __post_init__(self) -> None:
        if self.level_max < 0:
            object.__setattr__(self, "level_max", self.domain.depth)

    def cubes(self, levels: Iterable[int] | None = None) -> Iterator[Cube]:
        if levels is None:
            levels = range(self.level_min, self.level_max + 1)
        for k in levels:
            yield from _level_cubes(self.domain, self.shift, k)

    def __iter__(self) -> Iterator[Cube]:
        return self.cubes()


def _axis_lefts(domain: GridDomain, shift: int, level: int, axis: int) -> range:
    """Admissible per-axis left endpoints A (in side/2^level units) of cubes
    intersecting the domain."""
    top = 1 << level
    if shift < 0:
        return range(0, top)
    sgn = 1 if level % 2 == 0 else -1
    j = _shift_digits(shift, domain.dim)[axis]
    residue = (sgn * j) % 3
    start = -2 + (residue - (-2)) % 3
    return range(start, top, 3)


def _level_cubes(domain: GridDomain, shift: int, level: int) -> Iterator[Cube]:
    n = domain.dim
    axes = [list(_axis_lefts(domain, shift, level, a)) for a in range(n)]
    sgn = 1 if level % 2 == 0 else -1
    digits = _shift_digits(shift, n) if shift >= 0 else (0,) * n
    if n == 1:
        for A in axes[0]:
            m = A if shift < 0 else (A - sgn * digits[0]) // 3
            yield Cube(domain, shift, level, (m,))
    else:
        for A0 in axes[0]:
            m0 = A0 if shift < 0 else (A0 - sgn * digits[0]) // 3
            for A1 in axes[1]:
                m1 = A1 if shift < 0 else (A1 - sgn * digits[1]) // 3
                yield Cube(domain, shift, level, (m0, m1))


def base_lattice(domain: GridDomain) -> DyadicLattice:
    return DyadicLattice(domain, -1)


def three_lattices(domain: GridDomain) -> list[DyadicLattice]:
    """The 3^n shifted lattices jointly housing every tripled base cube."""
    return [DyadicLattice(domain, s) for s in range(3 ** domain.dim)]


def default_lattices(domain: GridDomain) -> list[DyadicLattice]:
    """Base lattice plus the 3^n shifted lattices: the cube universe used for
    every supremum 'over all cubes containing x'."""
    return [base_lattice(domain)] + three_lattices(domain)


def base_cubes(domain: GridDomain, levels: Iterable[int] | None = None) -> list[Cube]:
    return list(base_lattice(domain).cubes(levels))


def all_cubes(domain: GridDomain, levels: Iterable[int] | None = None) -> list[Cube]:
    out = base_cubes(domain, levels)
    for lat in three_lattices(domain):
        out.extend(lat.cubes(levels))
    return out


def house_triple(cube: Cube) -> Cube:
    """The cube 3Q as a member of the unique shifted lattice that contains it.

    Defined for base-lattice cubes; the returned cube has the same span as the
    concentric triple and side length 3 * side_length(Q).
    """
    if cube.shift >= 0:
        raise ParameterError("triples are housed for base-lattice cubes only")
    n = cube.domain.dim
    sgn = 1 if cube.level % 2 == 0 else -1
    digits = []
    ms = []
    for A in cube.coords:
        left = A - 1
        j = (sgn * left) % 3
        digits.append(j)
        ms.append((left - sgn * j) // 3)
    shift = sum(j * 3 ** a for a, j in enumerate(digits))
    return Cube(cube.domain, shift, cube.level, tuple(ms))


# ---------------------------------------------------------------------------
# Block iteration and prefix sums (fast paths shared with maximal/sparse)


def sat_table(grid: np.ndarray) -> np.ndarray:
    """Padded summed-area table; block sums become O(1) lookups."""
    s = grid
    for axis in range(grid.ndim):
        s = np.cumsum(s, axis=axis)
    pad = [(1, 0)] * grid.ndim
    return np.pad(s, pad)


def block_sums(sat: np.ndarray, lows: np.ndarray, highs: np.ndarray) -> np.ndarray:
    """Sums over blocks [lows, highs); lows/highs are (count, dim) int arrays
    already clipped to the grid."""
    if sat.ndim == 1:
        return sat[highs[:, 0]] - sat[lows[:, 0]]
    return (
        sat[highs[:, 0], highs[:, 1]]
        - sat[lows[:, 0], highs[:, 1]]
        - sat[highs[:, 0], lows[:, 1]]
        + sat[lows[:, 0], lows[:, 1]]
    )


@dataclass(frozen=True)
class CubeBlock:
    """All cubes of one (lattice, level) pair that meet the domain, as arrays.

    lows/highs are clipped per-axis cell bounds, shape (count, dim); raw_lows/
    raw_highs keep the unclipped spans (for triples and identity checks).
    """

    shift: int
    level: int
    lows: np.ndarray
    highs: np.ndarray
    raw_lows: np.ndarray
    raw_highs: np.ndarray
    side_length: float
    measure: float

    @property
    def count(self) -> int:
        return self.lows.shape[0]

    def counts(self) -> np.ndarray:
        return np.prod(np.maximum(self.highs - self.lows, 0), axis=1)


def cube_blocks(
    domain: GridDomain,
    lattices: Sequence[DyadicLattice],
    levels: Iterable[int] | None = None,
) -> list[CubeBlock]:
    blocks = []
    for lat in lattices:
        lvls = levels if levels is not None else range(lat.level_min, lat.level_max + 1)
        for k in lvls:
            scale = 1 << (domain.depth - k)
            w = (1 if lat.shift < 0 else 3) * scale
            axes = [np.array(list(_axis_lefts(domain, lat.shift, k, a))) * scale
                    for a in range(domain.dim)]
            if domain.dim == 1:
                raw_lo = axes[0][:, None]
            else:
                g0, g1 = np.meshgrid(axes[0], axes[1], indexing="ij")
                raw_lo = np.stack([g0.ravel(), g1.ravel()], axis=-1)
            raw_hi = raw_lo + w
            lo = np.clip(raw_lo, 0, domain.cells_per_axis)
            hi = np.clip(raw_hi, 0, domain.cells_per_axis)
            keep = np.all(hi > lo, axis=1)
            side = domain.side / (1 << k) * (1 if lat.shift < 0 else 3)
            blocks.append(
                CubeBlock(
                    shift=lat.shift,
                    level=k,
                    lows=lo[keep],
                    highs=hi[keep],
                    raw_lows=raw_lo[keep],
                    raw_highs=raw_hi[keep],
                    side_length=side,
                    measure=side ** domain.dim,
                )
            )
    return blocks


# ---------------------------------------------------------------------------
# Averages and oscillation


def _cells_view(f: GridFunction, cube: Cube) -> np.ndarray:
    return f.grid[cube.cell_slices()]


def average(f: GridFunction, cube: Cube, r: float) -> float:
    """r-average over Q: ((1/|Q|) sum |f|^r h^n)^(1/r), geometric |Q|,
    zero extension outside the domain; r = inf is the max over Q's cells."""
    if not r > 0:
        raise ParameterError("average exponent must be positive")
    vals = np.abs(_cells_view(f, cube))
    if vals.size == 0:
        return 0.0
    if math.isinf(r):
        return float(vals.max())
    total = float((vals ** r).sum()) * f.domain.cell_measure
    return (total / cube.measure) ** (1.0 / r)


def weighted_average(f: GridFunction, cube: Cube, r: float, u: GridFunction) -> float:
    """u-weighted r-average ((1/u(Q)) sum |f|^r u h^n)^(1/r)."""
    if not r > 0:
        raise ParameterError("average exponent must be positive")
    sl = cube.cell_slices()
    uv = u.grid[sl]
    mass = float(uv.sum())
    if mass <= 0.0:
        raise DegenerateWeightError("weight has zero mass on the cube")
    vals = np.abs(f.grid[sl])
    if math.isinf(r):
        return float(vals[uv > 0].max())
    return (float((vals ** r * uv).sum()) / mass) ** (1.0 / r)


def oscillation(f: GridFunction, cube: Cube, s: float) -> float:
    """Mean pairwise s-oscillation over the cells of Q inside the domain:
    ((1/|Q cap D|^2) sum sum |f(x')-f(x'')|^s h^(2n))^(1/s); s = inf gives the
    max pairwise gap."""
    if not s >= 1:
        raise ParameterError("oscillation exponent must be >= 1")
    vals = _cells_view(f, cube).ravel()
    if vals.size == 0:
        raise ParameterError("cube does not meet the domain")
    return oscillation_values(vals, s)


def oscillation_values(vals: np.ndarray, s: float) -> float:
    """Mean pairwise s-gap of a raw value array (the core of oscillation)."""
    n = vals.size
    if n == 1:
        return 0.0
    lo, hi = float(vals.min()), float(vals.max())
    if hi == lo:
        return 0.0
    if math.isinf(s):
        return hi - lo
    if s == 1.0:
        # sorted form: sum_{i,j}|v_i-v_j| = 2 sum_k (2k-n+1) v_(k)
        v = np.sort(vals)
        coeff = 2.0 * np.arange(n) - (n - 1)
        return float(2.0 * np.dot(coeff, v)) / (n * n)
    if s == 2.0:
        m = vals.mean()
        return float(math.sqrt(2.0 * np.mean((vals - m) ** 2)))
    total = 0.0
    chunk = max(1, (1 << 22) // n)
    for start in range(0, n, chunk):
        block = vals[start:start + chunk, None] - vals[None, :]
        total += float((np.abs(block) ** s).sum())
    return (total / (n * n)) ** (1.0 / s)
