"""Domain types: interaction matrices, set tuples with quadrature grids,
weights, degree schedules, configurations, and the standing-hypothesis checks
for possibly intersecting sets."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import (
    DegenerateConfigError,
    DimensionError,
    GeometryError,
    MatrixError,
    WeightError,
)

DEFAULT_PSD_TOL = 1e-10


# ---------------------------------------------------------------------------
# set pieces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    """Closed real interval [a, b]."""

    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)) or self.a >= self.b:
            raise GeometryError(f"degenerate interval [{self.a}, {self.b}]")

    @property
    def measure(self):
        return self.b - self.a


@dataclass(frozen=True)
class Disc:
    """Closed filled disc, gridded by area cells."""

    cx: float
    cy: float
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise GeometryError("disc needs positive radius")

    @property
    def center(self):
        return complex(self.cx, self.cy)

    @property
    def measure(self):
        return np.pi * self.radius**2


@dataclass(frozen=True)
class Circle:
    """Boundary circle, gridded by arclength cells."""

    cx: float
    cy: float
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise GeometryError("circle needs positive radius")

    @property
    def center(self):
        return complex(self.cx, self.cy)

    @property
    def measure(self):
        return 2.0 * np.pi * self.radius


def _segment_extreme_dists(piece: Interval, c: complex):
    """Min and max distance from point c to the segment [a,b] on the real axis."""
    x = min(max(c.real, piece.a), piece.b)
    dmin = abs(c - complex(x, 0.0))
    dmax = max(abs(c - complex(piece.a, 0.0)), abs(c - complex(piece.b, 0.0)))
    return dmin, dmax


def pieces_intersect(p, q) -> bool:
    """Exact geometric intersection test for interval/disc/circle pieces."""
    if isinstance(p, Interval) and isinstance(q, Interval):
        return max(p.a, q.a) <= min(p.b, q.b)
    if isinstance(q, Interval):
        p, q = q, p
    if isinstance(p, Interval):
        dmin, dmax = _segment_extreme_dists(p, q.center)
        if isinstance(q, Disc):
            return dmin <= q.radius
        return dmin <= q.radius <= dmax  # circle meets segment
    # two round pieces
    dist = abs(p.center - q.center)
    if isinstance(p, Disc) and isinstance(q, Disc):
        return dist <= p.radius + q.radius
    if isinstance(p, Circle) and isinstance(q, Circle):
        return abs(p.radius - q.radius) <= dist <= p.radius + q.radius
    circ, disc = (p, q) if isinstance(p, Circle) else (q, p)
    # closest approach of the circle to the disc center
    return abs(dist - circ.radius) <= disc.radius


# ---------------------------------------------------------------------------
# gridded component sets
# ---------------------------------------------------------------------------

def _grid_interval(piece: Interval, n: int):
    if n < 2:
        n = 2
    nodes = np.linspace(piece.a, piece.b, n).astype(np.complex128)
    h = (piece.b - piece.a) / (n - 1)
    weights = np.full(n, h)
    weights[0] = weights[-1] = 0.5 * h
    sizes = weights.copy()  # cell length doubles as diameter in 1-D
    return nodes, weights, sizes


def _grid_circle(piece: Circle, n: int):
    if n < 3:
        n = 3
    theta = 2.0 * np.pi * np.arange(n) / n
    nodes = piece.center + piece.radius * np.exp(1j * theta)
    arc = piece.measure / n
    return nodes, np.full(n, arc), np.full(n, arc)


def _grid_disc(piece: Disc, n: int):
    pitch = np.sqrt(piece.measure / max(n, 4))
    m = int(np.ceil(piece.radius / pitch)) + 1
    ax = piece.cx + pitch * np.arange(-m, m + 1)
    ay = piece.cy + pitch * np.arange(-m, m + 1)
    gx, gy = np.meshgrid(ax, ay)
    pts = (gx + 1j * gy).ravel()
    inside = np.abs(pts - piece.center) <= piece.radius
    nodes = pts[inside]
    if nodes.size == 0:
        nodes = np.array([piece.center], dtype=np.complex128)
    area = np.full(nodes.size, pitch**2)
    return nodes, area, np.full(nodes.size, pitch * np.sqrt(2.0))


@dataclass(frozen=True)
class ComponentSet:
    """One compact set: union of pieces plus its quadrature grid.

    `weights` carry the arclength/area measure of each cell and `cell_sizes`
    the cell diameters used for self-energy regularization and snap tests.
    """

    pieces: tuple
    nodes: np.ndarray
    weights: np.ndarray
    cell_sizes: np.ndarray

    def __post_init__(self):
        if self.nodes.size == 0 or float(np.sum(self.weights)) <= 0:
            raise GeometryError("component has empty grid or zero quadrature mass")
        if self.nodes.size != self.weights.size or self.nodes.size != self.cell_sizes.size:
            raise DimensionError("grid arrays disagree in length")

    @property
    def size(self):
        return self.nodes.size

    @property
    def total_mass(self):
        return float(np.sum(self.weights))

    @property
    def is_real_interval_union(self):
        return all(isinstance(p, Interval) for p in self.pieces)

    def snap_tolerances(self):
        return 0.5 * self.cell_sizes

    def nearest_node(self, z: complex):
        idx = int(np.argmin(np.abs(self.nodes - z)))
        return idx, abs(self.nodes[idx] - z)

    def contains(self, z: complex) -> bool:
        """Membership up to half the local grid spacing."""
        idx, dist = self.nearest_node(z)
        return dist <= 0.5 * self.cell_sizes[idx] * (1.0 + 1e-12) + 1e-15

    def intersects(self, other: "ComponentSet") -> bool:
        return any(pieces_intersect(p, q) for p in self.pieces for q in other.pieces)


def build_component(pieces, resolution: int) -> ComponentSet:
    """Grid a union of pieces, splitting `resolution` nodes by piece measure."""
    pieces = tuple(pieces)
    if not pieces:
        raise GeometryError("component with no pieces")
    total = sum(p.measure for p in pieces)
    nodes, weights, sizes = [], [], []
    for p in pieces:
        n = max(2, int(round(resolution * p.measure / total)))
        if isinstance(p, Interval):
            nd, w, s = _grid_interval(p, n)
        elif isinstance(p, Circle):
            nd, w, s = _grid_circle(p, n)
        elif isinstance(p, Disc):
            nd, w, s = _grid_disc(p, n)
        else:
            raise GeometryError(f"unknown piece type {type(p)!r}")
        nodes.append(nd)
        weights.append(w)
        sizes.append(s)
    return ComponentSet(
        pieces=pieces,
        nodes=np.concatenate(nodes),
        weights=np.concatenate(weights),
        cell_sizes=np.concatenate(sizes),
    )


@dataclass(frozen=True)
class CompactSetTuple:
    """Tuple of gridded compact sets; disjointness is computed, not declared."""

    components: tuple

    def __post_init__(self):
        if len(self.components) == 0:
            raise GeometryError("need at least one component")

    @property
    def d(self):
        return len(self.components)

    def disjointness_matrix(self) -> np.ndarray:
        """Boolean matrix; entry (i, j) is True when K_i and K_j intersect."""
        d = self.d
        out = np.zeros((d, d), dtype=bool)
        for i in range(d):
            out[i, i] = True
            for j in range(i + 1, d):
                hit = self.components[i].intersects(self.components[j])
                out[i, j] = out[j, i] = hit
        return out

    def pairwise_disjoint(self) -> bool:
        m = self.disjointness_matrix()
        return not np.any(m[~np.eye(self.d, dtype=bool)])

    def common_grid_cell(self, indices) -> bool:
        """Proxy for positive capacity of an intersection: some node of one
        member lies inside every other member up to snap tolerance."""
        indices = list(indices)
        if len(indices) <= 1:
            return True
        base = min(indices, key=lambda i: self.components[i].size)
        rest = [i for i in indices if i != base]
        for z in self.components[base].nodes:
            if all(self.components[i].contains(z) for i in rest):
                return True
        return False


def make_interval_set(*bounds, resolution=400) -> CompactSetTuple:
    """Convenience: one interval per component."""
    comps = [build_component([Interval(a, b)], resolution) for a, b in bounds]
    return CompactSetTuple(tuple(comps))


# ---------------------------------------------------------------------------
# interaction matrix and masses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InteractionMatrix:
    """Symmetric positive semidefinite coupling matrix with no zero column."""

    c: np.ndarray
    psd_tol: float = DEFAULT_PSD_TOL

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise MatrixError("interaction matrix must be square")
        if not np.array_equal(c, c.T):
            raise MatrixError("interaction matrix must be symmetric")
        if np.any(np.all(c == 0.0, axis=0)):
            raise MatrixError("interaction matrix has a zero column")
        lam = np.linalg.eigvalsh(c)
        if lam[0] < -self.psd_tol:
            raise MatrixError(f"matrix not PSD: min eigenvalue {lam[0]:.3e}")
        object.__setattr__(self, "c", c)

    @property
    def d(self):
        return self.c.shape[0]

    def entry(self, i, j):
        return float(self.c[i, j])


def angelesco_matrix(d: int) -> InteractionMatrix:
    c = np.full((d, d), 0.5)
    np.fill_diagonal(c, 1.0)
    return InteractionMatrix(c)


def nikishin_matrix(d: int) -> InteractionMatrix:
    c = np.eye(d)
    for i in range(d - 1):
        c[i, i + 1] = c[i + 1, i] = -0.5
    return InteractionMatrix(c)


def beta_matrix(beta: float) -> InteractionMatrix:
    if beta <= 0:
        raise MatrixError("beta must be positive")
    return InteractionMatrix(np.array([[beta]]))


@dataclass(frozen=True)
class MassVector:
    """Prescribed component masses r_1, ..., r_d."""

    r: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float).ravel()
        if r.size == 0 or np.any(r <= 0) or not np.all(np.isfinite(r)):
            raise DimensionError("masses must be finite and strictly positive")
        object.__setattr__(self, "r", r)

    @property
    def d(self):
        return self.r.size

    @property
    def total(self):
        return float(np.sum(self.r))


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------

class Weight:
    """External field on one component, evaluable at planar points."""

    admissibility = "continuous"

    def values(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ZeroWeight(Weight):
    def values(self, z):
        return np.zeros(np.asarray(z).shape, dtype=float)


class CallableWeight(Weight):
    def __init__(self, fn, admissibility="continuous"):
        self.fn = fn
        self.admissibility = admissibility

    def values(self, z):
        z = np.asarray(z, dtype=np.complex128)
        out = np.asarray(self.fn(z), dtype=float)
        return np.broadcast_to(out, z.shape).astype(float)


class TabulatedWeight(Weight):
    """Weight known only at grid nodes; off-node queries snap to the nearest
    node within its cell radius."""

    admissibility = "usc-upper-approximated"

    def __init__(self, nodes, table, cell_sizes=None):
        self.nodes = np.asarray(nodes, dtype=np.complex128)
        self.table = np.asarray(table, dtype=float)
        self.cell_sizes = (
            np.asarray(cell_sizes, dtype=float) if cell_sizes is not None else None
        )
        if not np.any(np.isfinite(self.table)):
            raise WeightError("tabulated weight has no finite values")

    def values(self, z):
        z = np.asarray(z, dtype=np.complex128)
        flat = z.ravel()
        out = np.empty(flat.shape, dtype=float)
        for k, zz in enumerate(flat):
            dist = np.abs(self.nodes - zz)
            idx = int(np.argmin(dist))
            if self.cell_sizes is not None:
                tol = 0.5 * self.cell_sizes[idx] * (1 + 1e-12) + 1e-15
                if dist[idx] > tol:
                    raise WeightError("query point off the tabulation grid")
            out[k] = self.table[idx]
        return out.reshape(z.shape)


class EnvelopeWeight(Weight):
    """Lipschitz upper envelope of a tabulated field:
    Q(z) = max_w (u(w) - L |z - w|), evaluable anywhere."""

    admissibility = "continuous"

    def __init__(self, anchor_nodes, anchor_values, lipschitz):
        anchors = np.asarray(anchor_nodes, dtype=np.complex128)
        vals = np.asarray(anchor_values, dtype=float)
        finite = np.isfinite(vals)
        if not np.any(finite):
            raise WeightError("envelope source has no finite values")
        self.anchors = anchors[finite]
        self.anchor_values = vals[finite]
        self.lipschitz = float(lipschitz)

    def values(self, z):
        z = np.asarray(z, dtype=np.complex128)
        flat = z.ravel()
        out = np.empty(flat.shape, dtype=float)
        for k, zz in enumerate(flat):
            out[k] = np.max(self.anchor_values - self.lipschitz * np.abs(self.anchors - zz))
        return out.reshape(z.shape)


@dataclass(frozen=True)
class WeightTuple:
    """One external field per component."""

    weights: tuple

    @classmethod
    def zero(cls, d: int) -> "WeightTuple":
        return cls(tuple(ZeroWeight() for _ in range(d)))

    @property
    def d(self):
        return len(self.weights)

    def __getitem__(self, i) -> Weight:
        return self.weights[i]

    def validate_on(self, K: CompactSetTuple):
        """Each field must be finite on nodes of positive quadrature mass."""
        if self.d != K.d:
            raise DimensionError("weight tuple and set tuple disagree in dimension")
        for i in range(self.d):
            vals = self.weights[i].values(K.components[i].nodes)
            finite = np.isfinite(vals) & (vals < np.inf)
            if float(np.sum(K.components[i].weights[finite])) <= 0.0:
                raise WeightError(f"weight {i} infinite on all of component {i}")


def weight_values(Q, K: CompactSetTuple, i: int) -> np.ndarray:
    """Field values of component i on its grid; zeros when Q is None."""
    if Q is None:
        return np.zeros(K.components[i].size)
    return Q[i].values(K.components[i].nodes).astype(float)


# ---------------------------------------------------------------------------
# degree schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DegreeSchedule:
    """Tuples m_k, k = 1..k_max, with coordinatewise ratios tending to r_i/r_j."""

    r: MassVector
    tuples: np.ndarray  # (k_max, d) integers

    def __post_init__(self):
        t = np.asarray(self.tuples, dtype=int)
        if t.ndim != 2 or t.shape[1] != self.r.d:
            raise DimensionError("schedule shape does not match mass vector")
        if np.any(t < 1):
            raise DimensionError("schedule entries must be positive")
        if np.any(np.diff(t, axis=0) < 0):
            raise DimensionError("schedule must be nondecreasing in k")
        object.__setattr__(self, "tuples", t)

    @property
    def k_max(self):
        return self.tuples.shape[0]

    def degrees(self, k: int) -> np.ndarray:
        if not 1 <= k <= self.k_max:
            raise DimensionError(f"k={k} outside schedule 1..{self.k_max}")
        return self.tuples[k - 1]

    def total(self, k: int) -> int:
        return int(np.sum(self.degrees(k)))

    def ratio_errors(self) -> np.ndarray:
        """max_ij |m_ik/m_jk - r_i/r_j| per k."""
        r = self.r.r
        target = r[:, None] / r[None, :]
        out = np.empty(self.k_max)
        for k in range(self.k_max):
            m = self.tuples[k].astype(float)
            out[k] = np.max(np.abs(m[:, None] / m[None, :] - target))
        return out


def make_degree_schedule(r: MassVector, k_max: int, strict: bool = False) -> DegreeSchedule:
    """m_{i,k} = max(1, round(k r_i)); with strict=True a repair pass forces
    strict coordinatewise increase (+1 whenever a step would stall)."""
    if k_max < 1:
        raise DimensionError("k_max must be at least 1")
    rows = []
    prev = None
    for k in range(1, k_max + 1):
        m = np.maximum(1, np.rint(k * r.r).astype(int))
        if prev is not None:
            m = np.maximum(m, prev)  # round() is monotone here; keep it safe
            if strict:
                m = np.where(m <= prev, prev + 1, m)
        rows.append(m)
        prev = m
    return DegreeSchedule(r=r, tuples=np.array(rows, dtype=int))


# ---------------------------------------------------------------------------
# configurations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Configuration:
    """Point lists, one per component; points within a component distinct."""

    points: tuple  # of complex ndarrays

    def __post_init__(self):
        pts = tuple(np.asarray(p, dtype=np.complex128).ravel() for p in self.points)
        object.__setattr__(self, "points", pts)

    @property
    def d(self):
        return len(self.points)

    @property
    def sizes(self):
        return np.array([p.size for p in self.points], dtype=int)

    @property
    def total(self):
        return int(np.sum(self.sizes))

    def validate(self, K: CompactSetTuple, allow_coincident=False):
        if self.d != K.d:
            raise DimensionError("configuration and set tuple disagree in dimension")
        for i, pts in enumerate(self.points):
            comp = K.components[i]
            for z in pts:
                if not comp.contains(z):
                    raise GeometryError(f"point {z} not in component {i} (snap test)")
            if not allow_coincident and pts.size > 1:
                diff = np.abs(pts[:, None] - pts[None, :])
                np.fill_diagonal(diff, np.inf)
                if np.min(diff) == 0.0:
                    raise DegenerateConfigError(f"coincident points in component {i}")
        return self

    def scaled(self, alpha: complex) -> "Configuration":
        return Configuration(tuple(alpha * p for p in self.points))

    def translated(self, shift: complex) -> "Configuration":
        return Configuration(tuple(p + shift for p in self.points))


def configuration_from_indices(K: CompactSetTuple, indices) -> Configuration:
    return Configuration(tuple(K.components[i].nodes[np.asarray(ix, dtype=int)]
                               for i, ix in enumerate(indices)))


# ---------------------------------------------------------------------------
# standing hypotheses for intersecting sets
# ---------------------------------------------------------------------------

@dataclass
class HypothesisReport:
    """Outcome of the intersecting-set checks.

    `sign_pass` covers the range-vector condition, `nonneg_pass` the
    nonnegative-coupling condition on intersecting pairs, and
    `independence_pass` the dependent-columns/ capacity condition.
    """

    disjoint_matrix: np.ndarray
    intersecting_pairs: list
    nonneg_violations: list
    nonneg_pass: bool
    range_vector: np.ndarray | None
    sign_pass: bool
    dependent_flagged: list
    independence_pass: bool
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return self.nonneg_pass and self.sign_pass and self.independence_pass


def _intersection_clusters(d, pairs):
    parent = list(range(d))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
    groups = {}
    for i in range(d):
        groups.setdefault(find(i), []).append(i)
    # only clusters actually touched by an intersection constrain the sign
    touched = {i for p in pairs for i in p}
    return [g for g in groups.values() if any(i in touched for i in g)]


def _range_vector_search(c: np.ndarray, clusters):
    """Feasibility search for y = Cx with a fixed strict sign per cluster."""
    d = c.shape[0]
    constrained = [i for g in clusters for i in g]
    if not constrained:
        return np.zeros(d), True
    n_cl = len(clusters)
    for bits in itertools.product((1.0, -1.0), repeat=max(0, n_cl - 1)):
        signs = (1.0,) + bits  # global sign flip is free, pin the first cluster
        a_rows = []
        for s, g in zip(signs, clusters):
            for i in g:
                a_rows.append(-s * c[i])
        res = linprog(
            c=np.zeros(d),
            A_ub=np.array(a_rows),
            b_ub=-np.ones(len(a_rows)),
            bounds=[(None, None)] * d,
            method="highs",
        )
        if res.status == 0:
            return c @ res.x, True
    return None, False


def validate_hypotheses(C: InteractionMatrix, K: CompactSetTuple) -> HypothesisReport:
    """Check the standing assumptions that keep the theory valid when the
    sets may intersect: nonnegative couplings across intersecting pairs, a
    strict-sign range vector, and no dependent column group sharing a cell."""
    if C.d != K.d:
        raise DimensionError(f"matrix has d={C.d}, sets have d={K.d}")
    d = C.d
    inter = K.disjointness_matrix()
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d) if inter[i, j]]

    nonneg_violations = [(i, j) for i, j in pairs if C.entry(i, j) < 0]
    nonneg_pass = not nonneg_violations

    clusters = _intersection_clusters(d, pairs)
    y, sign_pass = _range_vector_search(C.c, clusters)

    dependent_flagged = []
    for size in range(2, d + 1):
        for subset in itertools.combinations(range(d), size):
            cols = C.c[:, list(subset)]
            if np.linalg.matrix_rank(cols, tol=1e-10) < size:
                if K.common_grid_cell(subset):
                    dependent_flagged.append(tuple(subset))
    independence_pass = not dependent_flagged

    notes = []
    if not pairs:
        notes.append("all sets pairwise disjoint; intersection hypotheses vacuous")
    return HypothesisReport(
        disjoint_matrix=inter,
        intersecting_pairs=pairs,
        nonneg_violations=nonneg_violations,
        nonneg_pass=nonneg_pass,
        range_vector=y,
        sign_pass=sign_pass,
        dependent_flagged=dependent_flagged,
        independence_pass=independence_pass,
        notes=notes,
    )
