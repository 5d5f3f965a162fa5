"""Weighted Vandermonde products, grid-restricted Fekete optimization, k-th
order diameters, the finite-k scaling identity, and rational approximation of
the interaction matrix."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    CompactSetTuple,
    Configuration,
    DegreeSchedule,
    InteractionMatrix,
    MassVector,
    configuration_from_indices,
    weight_values,
)
from .errors import (
    DegenerateConfigError,
    DimensionError,
    DomainError,
    GeometryError,
    MatrixError,
)
from .potential import DiscreteVectorMeasure, atoms_measure


@dataclass(frozen=True)
class VdmValue:
    """log |VDM|, its weighted version, and the diameter normalization."""

    log_vdm: float
    log_vdm_weighted: float
    exponent: float  # 2 |r|^2 / (|m| (|m| - 1))

    @staticmethod
    def _normalize(log_value, exponent):
        if math.isinf(exponent):  # |m| < 2: empty product convention
            if log_value == 0.0:
                return 1.0
            return 0.0 if log_value < 0 else float("inf")
        return float(np.exp(exponent * log_value))

    @property
    def normalized(self):
        return self._normalize(self.log_vdm, self.exponent)

    @property
    def normalized_weighted(self):
        return self._normalize(self.log_vdm_weighted, self.exponent)


def vdm_exponent(m, r: MassVector) -> float:
    total = int(np.sum(m))
    if total < 2:
        return float("inf")
    return 2.0 * r.total**2 / (total * (total - 1))


def _pair_log_sum(z: np.ndarray) -> float:
    if z.size < 2:
        return 0.0
    diff = np.abs(z[:, None] - z[None, :])
    iu = np.triu_indices(z.size, k=1)
    vals = diff[iu]
    if np.any(vals == 0.0):
        return float("-inf")
    return float(np.sum(np.log(vals)))


def _cross_log_sum(za: np.ndarray, zb: np.ndarray) -> float:
    if za.size == 0 or zb.size == 0:
        return 0.0
    diff = np.abs(za[:, None] - zb[None, :])
    if np.any(diff == 0.0):
        return float("-inf")
    return float(np.sum(np.log(diff)))


def log_vdm(Z: Configuration, C: InteractionMatrix, m, r: MassVector, Q=None,
            K: CompactSetTuple | None = None, permissive=False) -> VdmValue:
    """log of the interaction Vandermonde product

        sum_i c_ii sum_{l<p} log|z_il - z_ip|
      + sum_{i<j} c_ij sum_{l,p} log|z_il - z_jp|

    with the weighted variant subtracting sum_i (m_i/r_i) sum_l Q_i(z_il)."""
    m = np.asarray(m, dtype=int)
    if Z.d != C.d or m.size != Z.d or r.d != Z.d:
        raise DimensionError("configuration, matrix, degrees, masses disagree")
    if not np.array_equal(Z.sizes, m):
        raise DimensionError(f"configuration sizes {Z.sizes} != degrees {m}")
    total = 0.0
    for i in range(Z.d):
        cii = C.entry(i, i)
        if cii == 0.0:
            continue
        s = _pair_log_sum(Z.points[i])
        if s == float("-inf"):
            if not permissive:
                raise DegenerateConfigError(f"coincident points in component {i}")
            return VdmValue(float("-inf"), float("-inf"), vdm_exponent(m, r))
        total += cii * s
    for i in range(Z.d):
        for j in range(i + 1, Z.d):
            cij = C.entry(i, j)
            if cij == 0.0:
                continue
            total += cij * _cross_log_sum(Z.points[i], Z.points[j])
    weighted = total
    if Q is not None:
        for i in range(Z.d):
            qv = Q[i].values(Z.points[i])
            weighted -= (m[i] / r.r[i]) * float(np.sum(qv))
    return VdmValue(total, weighted, vdm_exponent(m, r))


@dataclass(frozen=True)
class ScalingCheck:
    lhs: float                 # log|VDM(alpha Z)| - log|VDM(Z)|
    rhs: float                 # closed-form finite-k exponent times log|alpha|
    finite_k_exponent: float   # sum_i c_ii m_i(m_i-1)/2 + sum_{i<j} c_ij m_i m_j
    asymptotic_exponent: float  # B = sum_ij c_ij r_i r_j


def scaling_check(Z: Configuration, alpha: complex, C: InteractionMatrix, m,
                  r: MassVector) -> ScalingCheck:
    """Exact finite-k scaling identity for dilation by alpha."""
    if alpha == 0:
        raise DomainError("scaling factor must be nonzero")
    m = np.asarray(m, dtype=int)
    base = log_vdm(Z, C, m, r)
    scaled = log_vdm(Z.scaled(alpha), C, m, r)
    expo = 0.0
    for i in range(C.d):
        expo += C.entry(i, i) * m[i] * (m[i] - 1) / 2.0
        for j in range(i + 1, C.d):
            expo += C.entry(i, j) * m[i] * m[j]
    B = float(r.r @ C.c @ r.r)
    return ScalingCheck(
        lhs=scaled.log_vdm - base.log_vdm,
        rhs=expo * math.log(abs(alpha)),
        finite_k_exponent=expo,
        asymptotic_exponent=B,
    )


# ---------------------------------------------------------------------------
# grid-restricted Fekete optimization
# ---------------------------------------------------------------------------

@dataclass
class FeketeOptions:
    gain_tol: float = 1e-10
    max_passes: int = 200


@dataclass
class FeketeResult:
    configuration: Configuration
    node_indices: tuple
    value: VdmValue
    empirical_measure: DiscreteVectorMeasure
    greedy_insertions: int
    exchange_moves: int
    exchange_passes: int


class _GainTable:
    """Per-component node scores S_i[g] = sum_j c_ij sum_p log|node_g - z_jp|,
    maintained incrementally as points enter and leave the configuration."""

    def __init__(self, C, K, qpen):
        self.C = C
        self.K = K
        self.d = K.d
        self.qpen = qpen  # (m_i/r_i) Q_i(nodes), subtracted from gains
        self.S = [np.zeros(K.components[i].size) for i in range(self.d)]
        self.selected = [[] for _ in range(self.d)]  # node indices per component

    def _log_row(self, i, z):
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.K.components[i].nodes - z))

    def add(self, comp, node_idx):
        z = self.K.components[comp].nodes[node_idx]
        for i in range(self.d):
            cij = self.C.entry(i, comp)
            if cij == 0.0:
                continue
            self.S[i] += cij * self._log_row(i, z)
        self.selected[comp].append(node_idx)

    def remove(self, comp, node_idx):
        self.selected[comp].remove(node_idx)
        z = self.K.components[comp].nodes[node_idx]
        for i in range(self.d):
            cij = self.C.entry(i, comp)
            if cij == 0.0:
                continue
            self.S[i] -= cij * self._log_row(i, z)
        # -inf - (-inf) at the vacated node: rebuild that one entry
        self._repair_entry(comp, node_idx)

    def _repair_entry(self, comp, node_idx):
        z = self.K.components[comp].nodes[node_idx]
        val = 0.0
        for j in range(self.d):
            cij = self.C.entry(comp, j)
            if cij == 0.0:
                continue
            for g in self.selected[j]:
                val += cij * math.log(abs(self.K.components[j].nodes[g] - z))
        self.S[comp][node_idx] = val

    def gains(self, comp):
        g = self.S[comp] - self.qpen[comp]
        if self.selected[comp]:
            g = g.copy()
            g[np.asarray(self.selected[comp], dtype=int)] = -np.inf
        return g


def fekete_optimize(C: InteractionMatrix, K: CompactSetTuple, Q, r: MassVector,
                    m, opts: FeketeOptions | None = None) -> FeketeResult:
    """Greedy insertion at the argmax of marginal gain, then single-point
    exchange passes until no move improves by more than gain_tol.  Restricted
    to grid nodes; ties break to the lowest node index."""
    opts = opts or FeketeOptions()
    m = np.asarray(m, dtype=int)
    if C.d != K.d or m.size != K.d or r.d != K.d:
        raise DimensionError("matrix, sets, degrees, masses disagree")
    if np.any(m < 1):
        raise DimensionError("need at least one point per component")
    for i in range(K.d):
        if m[i] > K.components[i].size:
            raise GeometryError(
                f"component {i}: {m[i]} points exceed {K.components[i].size} grid nodes"
            )

    qpen = [(m[i] / r.r[i]) * weight_values(Q, K, i) for i in range(K.d)]
    table = _GainTable(C, K, qpen)

    # round-robin insertion keeps symmetric problems balanced while growing
    insertions = 0
    counts = np.zeros(K.d, dtype=int)
    while np.any(counts < m):
        for i in range(K.d):
            if counts[i] >= m[i]:
                continue
            g = int(np.argmax(table.gains(i)))
            table.add(i, g)
            counts[i] += 1
            insertions += 1

    moves = 0
    passes = 0
    for passes in range(1, opts.max_passes + 1):
        improved = False
        for i in range(K.d):
            for slot in range(m[i]):
                old = table.selected[i][slot]
                table.remove(i, old)
                gains = table.gains(i)
                best = int(np.argmax(gains))
                if gains[best] > gains[old] + opts.gain_tol:
                    table.add(i, best)
                    # keep slot order stable for deterministic scans
                    table.selected[i].remove(best)
                    table.selected[i].insert(slot, best)
                    moves += 1
                    improved = True
                else:
                    table.add(i, old)
                    table.selected[i].remove(old)
                    table.selected[i].insert(slot, old)
        if not improved:
            break

    indices = tuple(np.array(table.selected[i], dtype=int) for i in range(K.d))
    config = configuration_from_indices(K, indices)
    value = log_vdm(config, C, m, r, Q)
    measure = atoms_measure(K, indices, r)
    return FeketeResult(
        configuration=config,
        node_indices=indices,
        value=value,
        empirical_measure=measure,
        greedy_insertions=insertions,
        exchange_moves=moves,
        exchange_passes=passes,
    )


@dataclass(frozen=True)
class DiameterEstimate:
    k: int
    degrees: np.ndarray
    total_degree: int
    log_vdm: float
    log_vdm_weighted: float
    delta_hat: float
    energy_reference: float  # exp(-E_Q(minimizer)) from the solver
    gap: float               # | log delta_hat + E_Q(minimizer) |


def transfinite_diameter_estimate(C: InteractionMatrix, K: CompactSetTuple, Q,
                                  r: MassVector, schedule: DegreeSchedule, k_range,
                                  opts: FeketeOptions | None = None,
                                  equilibrium_solution=None,
                                  solver_opts=None) -> list:
    """Fekete value per k next to the solver's energy benchmark."""
    from .equilibrium import solve_equilibrium

    ks = list(k_range)
    if any(k > schedule.k_max for k in ks):
        raise DimensionError("k_range extends beyond the schedule")
    if equilibrium_solution is None:
        equilibrium_solution = solve_equilibrium(C, K, Q, r, solver_opts)
    e_star = equilibrium_solution.energy
    out = []
    for k in ks:
        m = schedule.degrees(k)
        res = fekete_optimize(C, K, Q, r, m, opts)
        delta = res.value.normalized_weighted
        out.append(
            DiameterEstimate(
                k=k,
                degrees=m,
                total_degree=int(np.sum(m)),
                log_vdm=res.value.log_vdm,
                log_vdm_weighted=res.value.log_vdm_weighted,
                delta_hat=delta,
                energy_reference=float(np.exp(-e_star)),
                gap=abs(math.log(delta) + e_star),
            )
        )
    return out


# ---------------------------------------------------------------------------
# rational approximation of the interaction matrix
# ---------------------------------------------------------------------------

def rationalize_matrix(C: InteractionMatrix, denominator_bound: int) -> InteractionMatrix:
    """Round every entry up to the next multiple of 1/bound (so the result
    dominates C entrywise and Vandermonde products on sets inside a radius-1/2
    disc can only shrink), then certify positive semidefiniteness, nudging
    exact-valued diagonals up by one step if needed."""
    if denominator_bound < 1:
        raise DomainError("denominator bound must be a positive integer")
    q = int(denominator_bound)
    c = np.ceil(C.c * q) / q
    c = 0.5 * (c + c.T)  # ceil preserves symmetry; keep it exact
    lam = np.linalg.eigvalsh(c)
    if lam[0] < -C.psd_tol:
        bump = np.ceil(C.c.diagonal() * q) == C.c.diagonal() * q
        c = c + np.diag(np.where(bump, 1.0 / q, 0.0))
        lam = np.linalg.eigvalsh(c)
        if lam[0] < -C.psd_tol:
            raise MatrixError(
                "cannot certify PSD within the 1/bound entrywise budget"
            )
    try:
        return InteractionMatrix(c, psd_tol=C.psd_tol)
    except MatrixError as exc:  # e.g. rounding created a zero column
        raise MatrixError(f"rationalization failed: {exc}") from exc
