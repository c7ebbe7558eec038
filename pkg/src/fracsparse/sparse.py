"""Sparse cube families and the constructive domination pipeline.

The central routine walks down from a root cube, and at each node selects
the maximal dyadic subcubes on which an exceptional set is dense.  The
exceptional set collects, for each power of the recentred symbol, the top
cells of the operator image, of its sharp truncation maximal function, and
of the plain maximal function of the localized input; its size is capped at
a fixed fraction of the cube, so the selected children cover at most half
of it and the uncovered remainder is a disjoint witness.  Re-housing the
tripled cubes into the shifted lattices then produces a single-lattice
family at sparseness 1/(2 * 3^n).

The rest of the module evaluates the bilinear forms such families dominate,
sparse operators, stopping-time families with doubling control, testing
norms for two-weight problems, and packing bounds over sub-families.
"""

from __future__ import annotations

import math
import warnings
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateWeightError,
    FormatError,
    ParameterError,
    SupportError,
)
from .grid import Cube, DyadicLattice, GridDomain, GridFunction, house_triple
from .maximal import level_windows, maximal_on_cube, truncation_stats_on_cube
from .operators import OperatorRep, commutator_apply
from .weights import ainf_constant, as_weight


def _conjugate(q: float) -> float:
    if q == 1:
        return math.inf
    if math.isinf(q):
        return 1.0
    return q / (q - 1.0)


# ---------------------------------------------------------------------------
# Family type and verification


@dataclass(frozen=True, eq=False)
class SparseFamily:
    """A cube family within one lattice with optional disjoint witnesses.

    witnesses[i] lists the flat cell indices certifying cubes[i]; when no
    witnesses are stored the verifier derives greedy ones.  eta is the
    claimed sparseness: every witness must hold at least an eta share of
    its cube's in-domain cells.
    """

    domain: GridDomain
    shift: int
    cubes: tuple[Cube, ...]
    witnesses: tuple[np.ndarray, ...] | None = None
    eta: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.eta <= 1.0:
            raise ParameterError(f"sparseness must be in (0, 1], got {self.eta}")
        if not self.cubes:
            raise ParameterError("a sparse family needs at least one cube")
        for cube in self.cubes:
            if cube.shift != self.shift:
                raise ParameterError(
                    f"family is housed in lattice {self.shift} but contains "
                    f"a cube of lattice {cube.shift}"
                )
            if cube.domain is not self.domain and cube.domain != self.domain:
                raise ParameterError("family cubes must share the domain")
        if self.witnesses is not None:
            if len(self.witnesses) != len(self.cubes):
                raise ParameterError("one witness cell set per cube required")
            object.__setattr__(
                self,
                "witnesses",
                tuple(np.unique(np.asarray(w, dtype=np.int64))
                      for w in self.witnesses),
            )

    def __len__(self) -> int:
        return len(self.cubes)


@dataclass(frozen=True, eq=False)
class SparsenessReport:
    ok: bool
    eta: float
    problems: tuple[str, ...]
    witnesses: tuple[np.ndarray, ...]


def verify_sparseness(family: SparseFamily) -> SparsenessReport:
    """Check the witness axioms, or derive greedy witnesses if none stored.

    With stored witnesses: every witness must sit inside its cube's
    in-domain cells, all witnesses must be pairwise disjoint, and each must
    hold at least the claimed share.  Without witnesses, cells are claimed
    bottom-up (deepest cubes first), each cube keeping whatever none of its
    already-processed descendants took; the achieved share is reported.
    Never raises: failures come back as diagnostics.
    """
    problems: list[str] = []
    cubes = family.cubes
    if family.witnesses is not None:
        wits = family.witnesses
        taken = np.concatenate(wits) if wits else np.empty(0, dtype=np.int64)
        if np.unique(taken).size != taken.size:
            problems.append("witness cell sets overlap")
        achieved = 1.0
        for i, (cube, w) in enumerate(zip(cubes, wits)):
            cells = cube.flat_cells()
            if np.setdiff1d(w, cells).size:
                problems.append(f"witness escapes cube {i}")
            count = cells.size
            share = w.size / count if count else 1.0
            achieved = min(achieved, share)
            if w.size + 1e-9 < family.eta * count:
                problems.append(f"witness share {share:.6g} below claim on cube {i}")
        return SparsenessReport(not problems, achieved, tuple(problems), wits)

    order = sorted(range(len(cubes)), key=lambda i: -cubes[i].level)
    claimed = np.zeros(family.domain.ncells, dtype=bool)
    wits: list[np.ndarray] = [np.empty(0, dtype=np.int64)] * len(cubes)
    achieved = 1.0
    for i in order:
        cells = cubes[i].flat_cells()
        free = cells[~claimed[cells]]
        claimed[free] = True
        wits[i] = free
        share = free.size / cells.size if cells.size else 1.0
        achieved = min(achieved, share)
        if free.size + 1e-9 < family.eta * cells.size:
            problems.append(
                f"greedy witness share {share:.6g} below claim on cube {i}"
            )
    return SparsenessReport(not problems, achieved, tuple(problems), tuple(wits))


# ---------------------------------------------------------------------------
# Serialization: header line `eta <value>`, then one cube per line
# `shift level coords... | witness cells...`


def write_family_file(family: SparseFamily, path: str | Path) -> None:
    lines = [f"eta {family.eta:.17g}"]
    wits = family.witnesses or [np.empty(0, dtype=np.int64)] * len(family.cubes)
    for cube, w in zip(family.cubes, wits):
        coords = " ".join(str(c) for c in cube.coords)
        cells = " ".join(str(int(e)) for e in w)
        lines.append(f"{cube.shift} {cube.level} {coords} | {cells}".rstrip())
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_family_file(domain: GridDomain, path: str | Path) -> SparseFamily:
    text = Path(path).read_text(encoding="ascii")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("eta "):
        raise FormatError("family file must start with an 'eta' line")
    try:
        eta = float(lines[0].split()[1])
    except (IndexError, ValueError) as exc:
        raise FormatError("malformed eta header") from exc
    cubes: list[Cube] = []
    wits: list[np.ndarray] = []
    for ln in lines[1:]:
        if ln.count("|") != 1:
            raise FormatError(f"cube line needs exactly one '|': {ln!r}")
        head, tail = ln.split("|")
        toks = head.split()
        if len(toks) != 2 + domain.dim:
            raise FormatError(f"expected shift, level and {domain.dim} "
                              f"coordinates, got {ln!r}")
        try:
            shift, level = int(toks[0]), int(toks[1])
            coords = tuple(int(t) for t in toks[2:])
            cells = np.array([int(t) for t in tail.split()], dtype=np.int64)
        except ValueError as exc:
            raise FormatError(f"non-integer token in {ln!r}") from exc
        if shift < -1 or shift >= 3 ** domain.dim:
            raise FormatError(f"lattice id {shift} out of range")
        if not 0 <= level <= domain.depth:
            raise FormatError(f"level {level} out of range")
        cube = Cube(domain, shift, level, coords)
        if cube.cell_count() == 0:
            raise FormatError(f"cube misses the domain: {ln!r}")
        if cells.size and (cells.min() < 0 or cells.max() >= domain.ncells):
            raise FormatError(f"witness cell index out of range in {ln!r}")
        cubes.append(cube)
        wits.append(cells)
    if not cubes:
        raise FormatError("family file lists no cubes")
    stored = None if all(w.size == 0 for w in wits) else tuple(wits)
    return SparseFamily(domain, cubes[0].shift, tuple(cubes), stored, eta)


# ---------------------------------------------------------------------------
# Constructive selection


@dataclass(frozen=True)
class SelectionStats:
    """Recursion diagnostics: per interior node the share of the cube the
    selected children cover (at most 1/2), and per selected child the share
    of it the exceptional set fills (in (2^-(n+1), 1/2])."""

    depth: int
    node_count: int
    leaf_count: int
    packing_ratios: tuple[float, ...]
    child_fractions: tuple[float, ...]


def _dyadic_children(cube: Cube) -> list[Cube]:
    return [
        Cube(cube.domain, cube.shift, cube.level + 1,
             tuple(2 * c + d for c, d in zip(cube.coords, delta)))
        for delta in product((0, 1), repeat=cube.domain.dim)
    ]


def _top_cells(vals: np.ndarray, cap: int) -> np.ndarray:
    """Positions of the up-to-cap largest strictly positive entries,
    breaking value ties by position so reruns select identically."""
    if cap <= 0:
        return np.empty(0, dtype=np.int64)
    pos = np.nonzero(vals > 0.0)[0]
    if pos.size == 0:
        return pos
    order = np.lexsort((pos, -vals[pos]))
    return pos[order[:cap]]


def sparse_selection(
    T: OperatorRep,
    b: GridFunction | None,
    m: int,
    f: GridFunction,
    Q0: Cube,
    p0: float,
    q0: float,
) -> tuple[SparseFamily, SelectionStats]:
    """Run the selection recursion below Q0 and return the base-lattice
    family with exact disjoint witnesses at sparseness 1/2.

    Per node Q the localized inputs are (b - <b>_3Q)^k f on 3Q for
    k = 0..m; the exceptional set takes, for each k, the highest cells on Q
    of |T input|, of the sharp truncation maximal function at exponent q0,
    and of the p0-maximal function, each capped at a 1/(3(m+1)2^(n+2))
    share of the cube.  Children are the maximal dyadic subcubes holding
    more than a 2^-(n+1) share of the exceptional set; cubes too small to
    afford a single exceptional cell terminate.
    """
    domain = f.domain
    n = domain.dim
    if Q0.shift != -1:
        raise ParameterError("the root must be a base-lattice cube")
    if m < 0 or int(m) != m:
        raise ParameterError(f"commutator order must be a whole number, got {m}")
    if not 1 <= p0 < math.inf:
        raise ParameterError(f"inner exponent must be finite and >= 1, got {p0}")
    if not q0 > p0:
        raise ParameterError(f"outer exponent must exceed {p0}, got {q0}")
    if b is None:
        if m:
            raise ParameterError("a symbol is required for positive order")
        b = GridFunction.zeros(domain)
    outside = np.ones(domain.ncells, dtype=bool)
    outside[Q0.flat_cells()] = False
    if np.any(f.values[outside] != 0.0):
        raise SupportError("input support escapes the root cube")

    windows = level_windows(domain)
    hn = domain.cell_measure
    share_denom = 3 * (m + 1) * 2 ** (n + 2)
    bvals, fvals = b.values, f.values
    threshold = 2 ** (n + 1)

    cubes: list[Cube] = []
    wits: list[np.ndarray] = []
    packing: list[float] = []
    fractions: list[float] = []
    leaf_count = 0
    max_depth = 0

    def select_children(Q: Cube, omega: np.ndarray) -> list[Cube]:
        chosen: list[Cube] = []

        def descend(C: Cube) -> None:
            count = int(omega[C.cell_slices()].sum())
            if count == 0:
                return
            total = C.cell_count()
            if count * threshold > total:
                chosen.append(C)
                fractions.append(count / total)
                return
            if C.level == domain.depth:
                return
            for child in _dyadic_children(C):
                descend(child)

        for child in _dyadic_children(Q):
            descend(child)
        return chosen

    def visit(Q: Cube, depth: int) -> None:
        nonlocal leaf_count, max_depth
        max_depth = max(max_depth, depth)
        qcells = Q.flat_cells()
        cap = Q.cell_count() // share_denom
        children: list[Cube] = []
        if cap > 0 and Q.level < domain.depth:
            omega = np.zeros(domain.shape, dtype=bool)
            omega_flat = omega.reshape(-1)
            cells3 = house_triple(Q).flat_cells()
            center = float(bvals[cells3].mean())
            local_b = bvals[cells3] - center
            for k in range(m + 1):
                loc = np.zeros(domain.ncells)
                loc[cells3] = local_b ** k * fvals[cells3]
                if not np.any(loc):
                    continue
                image = T.apply_values(loc)
                if not np.any(image):
                    # the operator ignores this grade: nothing to dominate,
                    # so it contributes no exceptional cells
                    continue
                direct = np.abs(image[qcells])
                osc, _ = truncation_stats_on_cube(
                    T, loc, image, Q, windows, q0, None)
                plain = maximal_on_cube(
                    np.abs(loc).reshape(domain.shape) ** p0, p0, Q, windows, hn)
                for vals in (direct, osc, plain):
                    sel = _top_cells(vals, cap)
                    omega_flat[qcells[sel]] = True
            children = select_children(Q, omega)
            if children:
                taken = np.concatenate([c.flat_cells() for c in children])
                packing.append(taken.size / qcells.size)
                free = np.setdiff1d(qcells, taken, assume_unique=True)
            else:
                packing.append(0.0)
                free = qcells
        else:
            free = qcells
        cubes.append(Q)
        wits.append(free)
        if not children:
            leaf_count += 1
        for child in children:
            visit(child, depth + 1)

    visit(Q0, 0)
    family = SparseFamily(domain, -1, tuple(cubes), tuple(wits), 0.5)
    stats = SelectionStats(max_depth, len(cubes), leaf_count,
                           tuple(packing), tuple(fractions))
    return family, stats


def rehouse_family(family: SparseFamily) -> SparseFamily:
    """Replace every cube by its housed triple, keep the lattice receiving
    the largest in-domain measure, and scale the sparseness claim by 3^-n.
    Witnesses carry over unchanged (each sits inside its original cube)."""
    if family.shift != -1:
        raise ParameterError("only base-lattice families re-house")
    n = family.domain.dim
    housed = [house_triple(Q) for Q in family.cubes]
    totals: dict[int, int] = {}
    for R in housed:
        totals[R.shift] = totals.get(R.shift, 0) + R.cell_count()
    best = max(totals.values())
    winner = min(s for s, t in totals.items() if t == best)
    keep = [i for i, R in enumerate(housed) if R.shift == winner]
    wits = None
    if family.witnesses is not None:
        wits = tuple(family.witnesses[i] for i in keep)
    return SparseFamily(
        family.domain, winner, tuple(housed[i] for i in keep),
        wits, family.eta / 3 ** n,
    )


# ---------------------------------------------------------------------------
# Domination report


@dataclass(frozen=True)
class DominationReport:
    """Both sides of the domination inequality for one constructed family.

    lhs integrates |T_b^m f| |g|; form_left puts the symbol power on the
    first argument, form_right on the second; split_forms grades the power
    across both arguments.  constant = lhs / (form_left + form_right) and
    split_constant = lhs / sum(split_forms), both zero when the lhs is.
    """

    lhs: float
    form_left: float
    form_right: float
    constant: float
    split_forms: tuple[float, ...]
    split_constant: float
    stats: SelectionStats

    def __post_init__(self) -> None:
        entries = (self.lhs, self.form_left, self.form_right, self.constant,
                   self.split_constant, *self.split_forms)
        for x in entries:
            if not (math.isfinite(x) and x >= 0.0):
                raise ParameterError(f"report entry {x} is not finite and >= 0")


def _graded_forms(
    family: SparseFamily, b: GridFunction, m: int,
    f: GridFunction, g: GridFunction,
    p0: float, q0: float, alpha: float,
) -> tuple[float, ...]:
    """For k = 0..m the sums over the family of the p0-average of
    |b - <b>_Q|^(m-k) |f| times the conjugate-q0-average of
    |b - <b>_Q|^k |g| times |Q|^(1 + alpha/n)."""
    n = family.domain.dim
    hn = family.domain.cell_measure
    q0c = _conjugate(q0)
    out = np.zeros(m + 1)
    for Q in family.cubes:
        cells = Q.flat_cells()
        if cells.size == 0:
            continue
        dev = np.abs(b.values[cells] - b.values[cells].mean())
        fa = np.abs(f.values[cells])
        ga = np.abs(g.values[cells])
        measure = cells.size * hn
        scale = measure ** (1.0 + alpha / n)
        for k in range(m + 1):
            left = np.mean((dev ** (m - k) * fa) ** p0) ** (1.0 / p0)
            if math.isinf(q0c):
                right = (dev ** k * ga).max(initial=0.0)
            else:
                right = np.mean((dev ** k * ga) ** q0c) ** (1.0 / q0c)
            out[k] += left * right * scale
    return tuple(float(x) for x in out)


def construct_sparse(
    T: OperatorRep,
    b: GridFunction | None,
    m: int,
    f: GridFunction,
    g: GridFunction,
    Q0: Cube,
    p0: float,
    q0: float,
    alpha: float,
) -> tuple[SparseFamily, DominationReport]:
    """Build the single-lattice sparse family below Q0 and measure the
    domination constant for the commutator of order m.

    Both inputs must be supported in Q0.  The returned family re-houses the
    tripled selection into the best shifted lattice (sparseness
    1/(2 * 3^n)); the report evaluates the integral of |T_b^m f| |g|
    against the two one-sided forms and the graded split over the family.
    """
    domain = f.domain
    n = domain.dim
    if not 0 <= alpha < n / p0:
        raise ParameterError(
            f"fractional order must lie in [0, {n / p0}), got {alpha}")
    outside = np.ones(domain.ncells, dtype=bool)
    outside[Q0.flat_cells()] = False
    if np.any(g.values[outside] != 0.0):
        raise SupportError("pairing support escapes the root cube")

    base_family, stats = sparse_selection(T, b, m, f, Q0, p0, q0)
    family = rehouse_family(base_family)
    if b is None:
        b = GridFunction.zeros(domain)

    pairing = commutator_apply(T, b, m, f)
    lhs = float(np.abs(pairing.values) @ np.abs(g.values) * domain.cell_measure)
    split = _graded_forms(family, b, m, f, g, p0, q0, alpha)
    form_left, form_right = split[0], split[-1]
    two_sum = form_left + form_right
    full_sum = sum(split)
    if lhs == 0.0:
        constant = split_constant = 0.0
    elif two_sum == 0.0:
        raise ParameterError("positive pairing against vanishing forms")
    else:
        constant = lhs / two_sum
        split_constant = lhs / full_sum
    report = DominationReport(lhs, form_left, form_right, constant,
                              split, split_constant, stats)
    return family, report


# ---------------------------------------------------------------------------
# Forms and operators over a family


def center_split_averages(
    b: GridFunction, f: GridFunction, g: GridFunction, cube: Cube,
    m: int, r: float, t: float,
) -> tuple[float, ...]:
    """The graded products c_k on one cube: the r-average of
    |b - <b>_Q|^(m-k) |f| times the t-average of |b - <b>_Q|^k |g|.
    The extreme grades bound every middle one: c_k <= c_0 + c_m."""
    cells = cube.flat_cells()
    if cells.size == 0:
        raise ParameterError("cube misses the domain")
    dev = np.abs(b.values[cells] - b.values[cells].mean())
    fa = np.abs(f.values[cells])
    ga = np.abs(g.values[cells])

    def avg(vals: np.ndarray, p: float) -> float:
        if math.isinf(p):
            return float(vals.max(initial=0.0))
        return float(np.mean(vals ** p) ** (1.0 / p))

    return tuple(
        avg(dev ** (m - k) * fa, r) * avg(dev ** k * ga, t)
        for k in range(m + 1)
    )


def sparse_form(
    S: SparseFamily,
    b: GridFunction | None,
    m: int,
    f: GridFunction,
    g: GridFunction,
    p0: float,
    q0: float,
    alpha: float,
    side: str = "left",
) -> float:
    """Sum over the family of the p0-average of one argument times the
    conjugate-q0-average of the other times |Q|^(1 + alpha/n); side picks
    which argument carries the |b - <b>_Q|^m factor ("left" puts it on f).
    Families that fail verification are refused."""
    if side not in ("left", "right"):
        raise ParameterError(f"side must be 'left' or 'right', got {side!r}")
    if m < 0 or int(m) != m:
        raise ParameterError(f"commutator order must be a whole number, got {m}")
    if not 1 <= p0 < math.inf:
        raise ParameterError(f"inner exponent must be finite and >= 1, got {p0}")
    if not q0 > 1:
        raise ParameterError(f"outer exponent must exceed 1, got {q0}")
    if alpha < 0:
        raise ParameterError(f"fractional order must be >= 0, got {alpha}")
    check = verify_sparseness(S)
    if not check.ok:
        raise ParameterError(
            "family does not verify as sparse: " + "; ".join(check.problems))
    if b is None:
        if m:
            raise ParameterError("a symbol is required for positive order")
        b = GridFunction.zeros(S.domain)
    n = S.domain.dim
    hn = S.domain.cell_measure
    q0c = _conjugate(q0)
    total = 0.0
    for Q in S.cubes:
        cells = Q.flat_cells()
        if cells.size == 0:
            continue
        dev = np.abs(b.values[cells] - b.values[cells].mean()) ** m
        fa = np.abs(f.values[cells])
        ga = np.abs(g.values[cells])
        if side == "left":
            fa = dev * fa
        else:
            ga = dev * ga
        left = np.mean(fa ** p0) ** (1.0 / p0)
        if math.isinf(q0c):
            right = ga.max(initial=0.0)
        else:
            right = np.mean(ga ** q0c) ** (1.0 / q0c)
        total += left * right * (cells.size * hn) ** (1.0 + alpha / n)
    return float(total)


def sparse_operator(S: SparseFamily, r: float, alpha: float,
                    f: GridFunction) -> GridFunction:
    """Cellwise (sum over the family of (|Q|^-alpha integral_Q f)^r on the
    cube)^(1/r), for nonnegative f."""
    if not r > 0:
        raise ParameterError(f"aggregation exponent must be positive, got {r}")
    if not 0 < alpha <= 1:
        raise ParameterError(f"scaling exponent must be in (0, 1], got {alpha}")
    if np.any(f.values < 0):
        raise ParameterError("the sparse operator is defined for "
                             "nonnegative inputs")
    hn = S.domain.cell_measure
    acc = np.zeros(S.domain.ncells)
    for Q in S.cubes:
        cells = Q.flat_cells()
        if cells.size == 0:
            continue
        integral = f.values[cells].sum() * hn
        acc[cells] += ((cells.size * hn) ** (-alpha) * integral) ** r
    return GridFunction(S.domain, acc ** (1.0 / r))


def iterated_sparse_avg(Sprime: SparseFamily | Sequence[Cube],
                        nu: GridFunction, k: int,
                        f: GridFunction) -> GridFunction:
    """k-fold application of f -> (sum over the family of <f>_Q on the
    cube) * nu; k = 0 returns f unchanged."""
    if k < 0 or int(k) != k:
        raise ParameterError(f"iteration count must be a whole number, got {k}")
    cubes = Sprime.cubes if isinstance(Sprime, SparseFamily) else tuple(Sprime)
    weight = as_weight(nu)
    cell_sets = [Q.flat_cells() for Q in cubes]
    vals = f.values
    for _ in range(k):
        acc = np.zeros(vals.size)
        for cells in cell_sets:
            if cells.size:
                acc[cells] += vals[cells].mean()
        vals = acc * weight.values
    return GridFunction(f.domain, vals)


# ---------------------------------------------------------------------------
# Stopping-time families


@dataclass(frozen=True, eq=False)
class StoppingFamily:
    """Cubes where the weighted r-average doubles relative to the previous
    stopping ancestor, with the parent map over all visited cubes."""

    cubes: tuple[Cube, ...]
    parent_map: dict[Cube, Cube]
    averages: dict[Cube, float]
    masses: dict[Cube, float]
    doubling_verified: bool
    pruned: tuple[Cube, ...]

    def carleson_sum(self) -> float:
        return sum(self.averages[F] * self.masses[F] for F in self.cubes)


def stopping_family(
    collection: SparseFamily | DyadicLattice | Iterable[Cube],
    f: GridFunction,
    u: GridFunction,
    r: float,
    Q0: Cube,
) -> StoppingFamily:
    """Select, below the maximal cube Q0, the cubes whose u-weighted
    r-average of |f| more than doubles the average of their stopping
    ancestor; returns the family, the parent map for every visited cube,
    and whether the doubling control holds throughout.

    Cubes carrying no u-mass are pruned with a warning.
    """
    if not r > 0:
        raise ParameterError(f"average exponent must be positive, got {r}")
    if np.any(u.values < 0):
        raise DegenerateWeightError("stopping weight must be nonnegative")
    if isinstance(collection, SparseFamily):
        cubes = list(collection.cubes)
    else:
        cubes = list(collection)
    cubes = [Q for Q in cubes if Q0.contains(Q) and Q.cell_count() > 0]
    if not any(Q == Q0 for Q in cubes):
        cubes.append(Q0)
    # largest first; ties in either key cannot nest
    cubes.sort(key=lambda Q: (Q.level, Q.coords))

    hn = f.domain.cell_measure
    fpow = np.abs(f.values) ** r
    avgs: dict[Cube, float] = {}
    masses: dict[Cube, float] = {}
    pruned: list[Cube] = []
    live: list[Cube] = []
    for Q in cubes:
        cells = Q.flat_cells()
        mass = float(u.values[cells].sum() * hn)
        if mass <= 0.0:
            pruned.append(Q)
            continue
        masses[Q] = mass
        avgs[Q] = float(
            ((fpow[cells] * u.values[cells]).sum() * hn / mass) ** (1.0 / r))
        live.append(Q)
    if pruned:
        warnings.warn(
            f"pruned {len(pruned)} cube(s) without weight mass",
            UserWarning, stacklevel=2,
        )
    if Q0 in pruned:
        raise DegenerateWeightError("the root cube carries no weight mass")

    family: list[Cube] = [Q0]
    queue = [Q0]
    while queue:
        F = queue.pop()
        bar = 2.0 * avgs[F]
        selected: list[Cube] = []
        for Q in live:
            if Q == F or not F.contains(Q):
                continue
            if avgs[Q] > bar and not any(S.contains(Q) for S in selected):
                selected.append(Q)
        family.extend(selected)
        queue.extend(selected)

    family.sort(key=lambda Q: (Q.level, Q.coords))
    parent: dict[Cube, Cube] = {}
    verified = True
    for Q in live:
        holders = [F for F in family if F.contains(Q)]
        pi = min(holders, key=lambda F: F.cell_count())
        parent[Q] = pi
        if avgs[Q] > 2.0 * avgs[pi]:
            verified = False
    return StoppingFamily(tuple(family), parent, avgs, masses,
                          verified, tuple(pruned))


# ---------------------------------------------------------------------------
# Testing norms


@dataclass(frozen=True, eq=False)
class TestingReport:
    """Per-cube localized testing norms and their suprema.

    For each family cube R, norms_u[i] is the L^q(v) norm of the localized
    sum T_R applied to u and scales_u[i] the normalizer u(R)^(1/p); the
    starred entries swap the roles.  zeta and zeta_star are the largest
    ratios.
    """

    cubes: tuple[Cube, ...]
    norms_u: tuple[float, ...]
    scales_u: tuple[float, ...]
    norms_v: tuple[float, ...]
    scales_v: tuple[float, ...]
    zeta: float
    zeta_star: float

    def __post_init__(self) -> None:
        if not (self.zeta >= 0.0 and self.zeta_star >= 0.0):
            raise ParameterError("testing suprema must be nonnegative")


def _weighted_norm(vals: np.ndarray, weight: np.ndarray, p: float,
                   hn: float) -> float:
    if math.isinf(p):
        mask = weight > 0
        return float(np.abs(vals[mask]).max(initial=0.0))
    return float((np.abs(vals) ** p * weight).sum() * hn) ** (1.0 / p)


def _as_lam_rule(lam_rule: float | Callable[[Cube], float],
                 hn: float) -> Callable[[Cube], float]:
    """A numeric rule a stands for lam_Q = |Q|^(1 + a)."""
    if callable(lam_rule):
        return lam_rule
    expo = 1.0 + float(lam_rule)

    def rule(Q: Cube) -> float:
        return (Q.cell_count() * hn) ** expo

    return rule


def testing_norms(
    S: SparseFamily,
    u: GridFunction,
    v: GridFunction,
    lam_rule: float | Callable[[Cube], float],
    p: float,
    q: float,
    r: float,
    s: float,
) -> TestingReport:
    """Localized testing norms for the weight pair (u, v).

    Each cube carries tau_Q = <u>_Q^(1/r - 1) <v>_Q^(-1/s) lam_Q / |Q|; the
    localized operator at R sums tau_Q <h>_Q over family cubes inside R.
    zeta tests it on u in L^q(v) against u(R)^(1/p), zeta_star on v in
    L^p'(u) against v(R)^(1/q').  A numeric lam_rule a means
    lam_Q = |Q|^(1 + a); a callable receives the cube.
    """
    if not 1 <= p <= q < s:
        raise ParameterError(
            f"exponents must satisfy 1 <= p <= q < s, got {(p, q, s)}")
    if not 0 < r < p:
        raise ParameterError(f"inner exponent must lie in (0, {p}), got {r}")
    check = verify_sparseness(S)
    if not check.ok:
        raise ParameterError(
            "family does not verify as sparse: " + "; ".join(check.problems))
    domain = S.domain
    hn = domain.cell_measure
    lam_fn = _as_lam_rule(lam_rule, hn)
    cubes = S.cubes
    cells_list = [Q.flat_cells() for Q in cubes]
    u_mass = np.array([u.values[c].sum() * hn for c in cells_list])
    v_mass = np.array([v.values[c].sum() * hn for c in cells_list])
    meas = np.array([c.size * hn for c in cells_list])
    if np.any(u_mass <= 0) or np.any(v_mass <= 0):
        raise DegenerateWeightError("a family cube carries no weight mass")
    lam = np.array([lam_fn(Q) for Q in cubes], dtype=np.float64)
    if np.any(lam < 0):
        raise ParameterError("cube coefficients must be nonnegative")
    u_avg, v_avg = u_mass / meas, v_mass / meas
    s_inv = 0.0 if math.isinf(s) else 1.0 / s
    tau = u_avg ** (1.0 / r - 1.0) * v_avg ** (-s_inv) * lam / meas

    lows = np.array([[sp[0] for sp in Q.span()] for Q in cubes])
    highs = np.array([[sp[1] for sp in Q.span()] for Q in cubes])

    pc = _conjugate(p)
    qc = _conjugate(q)
    norms_u, scales_u, norms_v, scales_v = [], [], [], []
    for i, R in enumerate(cubes):
        inside = np.nonzero(
            (lows >= lows[i]).all(axis=1) & (highs <= highs[i]).all(axis=1)
        )[0]
        acc_u = np.zeros(domain.ncells)
        acc_v = np.zeros(domain.ncells)
        for j in inside:
            acc_u[cells_list[j]] += tau[j] * u_avg[j]
            acc_v[cells_list[j]] += tau[j] * v_avg[j]
        norms_u.append(_weighted_norm(acc_u, v.values, q, hn))
        scales_u.append(u_mass[i] ** (1.0 / p))
        norms_v.append(_weighted_norm(acc_v, u.values, pc, hn))
        scales_v.append(v_mass[i] ** (1.0 / qc) if not math.isinf(qc) else 1.0)
    zeta = max(nu / sc for nu, sc in zip(norms_u, scales_u))
    zeta_star = max(nv / sc for nv, sc in zip(norms_v, scales_v))
    return TestingReport(cubes, tuple(norms_u), tuple(scales_u),
                         tuple(norms_v), tuple(scales_v), zeta, zeta_star)


# ---------------------------------------------------------------------------
# Norm re-summation and packing bounds


def cov_norm_rhs(
    lam_rule: float | Callable[[Cube], float],
    omega: GridFunction,
    p: float,
    S: SparseFamily,
) -> float:
    """Re-summed L^p(omega) norm of the cube-coefficient sum: each cube
    contributes lam_Q times the (p-1) power of the omega-normalized partial
    sum over its family subcubes, integrated against omega."""
    if not p >= 1:
        raise ParameterError(f"norm exponent must be >= 1, got {p}")
    hn = S.domain.cell_measure
    lam_fn = _as_lam_rule(lam_rule, hn)
    cubes = S.cubes
    cells_list = [Q.flat_cells() for Q in cubes]
    mass = np.array([omega.values[c].sum() * hn for c in cells_list])
    if np.any(mass <= 0):
        raise DegenerateWeightError("a family cube carries no weight mass")
    lam = np.array([lam_fn(Q) for Q in cubes], dtype=np.float64)
    if np.any(lam < 0):
        raise ParameterError("cube coefficients must be nonnegative")
    lows = np.array([[sp[0] for sp in Q.span()] for Q in cubes])
    highs = np.array([[sp[1] for sp in Q.span()] for Q in cubes])
    total = 0.0
    for i in range(len(cubes)):
        inside = (lows >= lows[i]).all(axis=1) & (highs <= highs[i]).all(axis=1)
        inner = float((lam[inside] * mass[inside]).sum()) / mass[i]
        total += lam[i] * inner ** (p - 1.0) * mass[i]
    return float(total ** (1.0 / p))


def sparse_sum_bound(
    S: SparseFamily,
    omega: GridFunction,
    sigma: GridFunction,
    alpha: float,
    beta: float,
    gamma: float,
    R: Cube,
) -> tuple[float, float, float]:
    """Packing bound for sum of |Q|^alpha sigma(Q)^beta omega(Q)^gamma over
    family cubes inside R: against the same expression at R alone when
    alpha > 0, with the flatness constants of both weights thrown in when
    alpha = 0.  Returns (lhs, rhs, lhs/rhs)."""
    if alpha < 0 or beta < 0 or gamma < 0:
        raise ParameterError("exponents must be nonnegative")
    if alpha + beta + gamma < 1:
        raise ParameterError("exponents must sum to at least 1")
    if np.any(omega.values < 0) or np.any(sigma.values < 0):
        raise DegenerateWeightError("weights must be nonnegative")
    hn = S.domain.cell_measure

    def term(cube: Cube) -> float:
        cells = cube.flat_cells()
        if cells.size == 0:
            return 0.0
        return (
            (cells.size * hn) ** alpha
            * (sigma.values[cells].sum() * hn) ** beta
            * (omega.values[cells].sum() * hn) ** gamma
        )

    lhs = sum(term(Q) for Q in S.cubes if R.contains(Q))
    core = term(R)
    if alpha > 0:
        rhs = core
    else:
        rhs = (ainf_constant(sigma) ** beta
               * ainf_constant(omega) ** gamma * core)
    ratio = lhs / rhs if rhs > 0 else 0.0
    return float(lhs), float(rhs), float(ratio)
