"""Energy minimization over products of scaled simplices, the variational
certificate for minimizers, fixed-point checks for potential-type weights,
and Lipschitz upper approximation of usc weights."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    CompactSetTuple,
    EnvelopeWeight,
    InteractionMatrix,
    MassVector,
    TabulatedWeight,
    WeightTuple,
    weight_values,
)
from .errors import DimensionError, GeometryError, WeightError
from .metrics import bl_distance
from .potential import (
    CELL_CONSTANT,
    DiscreteVectorMeasure,
    log_kernel,
    uniform_measure,
    vector_energy,
)


@dataclass
class SolverOptions:
    tol: float = 5e-3            # sup-norm variational residual target
    max_iter: int = 20000
    check_every: int = 25
    armijo_c: float = 1e-4
    mass_floor_factor: float = 1e-9
    cell_constant: float = CELL_CONSTANT
    endpoint_exclusion: float = 0.0  # radius near piece endpoints ignored in (<=) check


@dataclass
class ResidualReport:
    robin_constants: np.ndarray
    residual_lower: np.ndarray    # violation of >= F_i off support, per component
    residual_support: np.ndarray  # violation of <= F_i on support, per component
    tol: float
    qe_convention: str = "every grid node"

    @property
    def max_residual(self):
        return float(max(self.residual_lower.max(), self.residual_support.max()))

    @property
    def passed(self):
        return self.max_residual < self.tol


@dataclass
class EquilibriumSolution:
    minimizer: DiscreteVectorMeasure
    robin_constants: np.ndarray
    residual_lower: np.ndarray
    residual_support: np.ndarray
    iterations: int
    converged: bool
    energy: float                 # E_Q at the minimizer
    energy_history_checks: list = field(default_factory=list)

    @property
    def max_residual(self):
        return float(max(self.residual_lower.max(), self.residual_support.max()))


def project_simplex(v: np.ndarray, mass: float) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = mass} (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - mass
    ind = np.arange(1, v.size + 1)
    cond = u - css / ind > 0
    rho = ind[cond][-1]
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def _weighted_median(values, weights):
    order = np.argsort(values)
    cw = np.cumsum(weights[order])
    idx = int(np.searchsorted(cw, 0.5 * cw[-1]))
    return float(values[order][min(idx, values.size - 1)])


def _endpoint_mask(K, i, radius):
    """Nodes within `radius` of an interval endpoint, to optionally exempt
    from the support-side residual."""
    comp = K.components[i]
    mask = np.zeros(comp.size, dtype=bool)
    if radius <= 0:
        return mask
    for p in comp.pieces:
        if hasattr(p, "a"):
            mask |= np.abs(comp.nodes - p.a) <= radius
            mask |= np.abs(comp.nodes - p.b) <= radius
    return mask


def _residuals_from_fields(w_list, fields, r, opts, K=None):
    d = len(w_list)
    F = np.zeros(d)
    res_lo = np.zeros(d)
    res_sup = np.zeros(d)
    for i in range(d):
        w, e = w_list[i], fields[i]
        support = w > opts.mass_floor_factor * r.r[i]
        if not np.any(support):
            support = w == w.max()
        F[i] = _weighted_median(e[support], w[support])
        res_lo[i] = max(0.0, float(np.max(F[i] - e)))
        sup_mask = support.copy()
        if K is not None and opts.endpoint_exclusion > 0:
            sup_mask &= ~_endpoint_mask(K, i, opts.endpoint_exclusion)
        if np.any(sup_mask):
            res_sup[i] = max(0.0, float(np.max(e[sup_mask] - F[i])))
    return F, res_lo, res_sup


class _QuadraticForm:
    """Cached kernel blocks for E_Q(w) = sum c_ij w_i.G_ij.w_j + 2 sum q_i.w_i."""

    def __init__(self, C, K, Q, opts):
        self.C = C
        self.K = K
        self.d = K.d
        self.blocks = {}
        for i in range(self.d):
            gi = K.components[i]
            if gi.size == 0:
                raise GeometryError(f"component {i} has an empty grid")
            for j in range(i, self.d):
                if C.entry(i, j) == 0.0 and i != j:
                    continue
                gj = K.components[j]
                G = log_kernel(gi.nodes, gj.nodes, gi.cell_sizes, same=(i == j),
                               cell_constant=opts.cell_constant)
                if i != j and np.isinf(G).any():
                    G = np.where(np.isinf(G), 0.0, G)
                self.blocks[(i, j)] = G
        self.q = [weight_values(Q, K, i) for i in range(self.d)]
        # nodes with an infinite field can never carry mass
        self.allowed = [np.isfinite(q) for q in self.q]
        self.qsafe = [np.where(a, q, 0.0) for q, a in zip(self.q, self.allowed)]

    def apply(self, w_list):
        """Per component: sum_j c_ij G_ij w_j (the potential part of the field)."""
        out = [np.zeros_like(w) for w in w_list]
        for i in range(self.d):
            for j in range(self.d):
                cij = self.C.entry(i, j)
                if cij == 0.0:
                    continue
                a, b = min(i, j), max(i, j)
                G = self.blocks[(a, b)]
                out[i] += cij * (G @ w_list[j] if i == a else G.T @ w_list[j])
        return out

    def fields(self, w_list):
        pot = self.apply(w_list)
        return [p + q for p, q in zip(pot, self.qsafe)]

    def energy(self, w_list, pot=None):
        pot = self.apply(w_list) if pot is None else pot
        e = 0.0
        for i in range(self.d):
            e += float(w_list[i] @ pot[i]) + 2.0 * float(w_list[i] @ self.qsafe[i])
        return e


def solve_equilibrium(C: InteractionMatrix, K: CompactSetTuple, Q, r: MassVector,
                      opts: SolverOptions | None = None) -> EquilibriumSolution:
    """Projected-gradient descent (Barzilai-Borwein trial step, Armijo-checked
    exact line search on the quadratic) over the product of scaled simplices.
    Stops when the variational residual drops below opts.tol."""
    opts = opts or SolverOptions()
    if C.d != K.d or C.d != r.d:
        raise DimensionError("matrix, sets and masses disagree in dimension")
    form = _QuadraticForm(C, K, Q, opts)
    d = K.d

    w = []
    for i in range(d):
        base = np.where(form.allowed[i], K.components[i].weights, 0.0)
        s = base.sum()
        if s <= 0:
            raise WeightError(f"no admissible nodes in component {i}")
        w.append(base * (r.r[i] / s))

    pot = form.apply(w)
    energy = form.energy(w, pot)
    grad = [2.0 * (p + q) for p, q in zip(pot, form.qsafe)]
    step = 1.0 / max(max(np.max(np.abs(g)) for g in grad), 1e-12)
    history = []
    converged = False
    it = 0

    def residuals(fields):
        return _residuals_from_fields(w, fields, r, opts, K)

    F = res_lo = res_sup = None
    def project(vec, i):
        out = np.zeros_like(vec)
        ok = form.allowed[i]
        out[ok] = project_simplex(vec[ok], r.r[i])
        return out

    stalls = 0
    for it in range(1, opts.max_iter + 1):
        proj = [project(w[i] - step * grad[i], i) for i in range(d)]
        direction = [p - wi for p, wi in zip(proj, w)]
        slope = sum(float(g @ dd) for g, dd in zip(grad, direction))
        if slope > -1e-18:
            stalls += 1
            step *= 2.0
            if stalls >= 60:  # stationary: no feasible descent at any scale
                fields = [p + q for p, q in zip(pot, form.qsafe)]
                F, res_lo, res_sup = residuals(fields)
                converged = max(res_lo.max(), res_sup.max()) < opts.tol
                break
            continue
        stalls = 0
        pot_d = form.apply(direction)
        curv = sum(float(dd @ pd) for dd, pd in zip(direction, pot_d))
        s_star = 1.0 if curv <= 0 else min(1.0, -slope / (2.0 * curv))
        # Armijo backtracking from the exact quadratic step
        s_try = s_star
        for _ in range(60):
            new_energy = energy + s_try * slope + s_try * s_try * curv
            if new_energy <= energy + opts.armijo_c * s_try * slope:
                break
            s_try *= 0.5
        w_new = [wi + s_try * dd for wi, dd in zip(w, direction)]
        pot_new = [p + s_try * pd for p, pd in zip(pot, pot_d)]
        grad_new = [2.0 * (p + q) for p, q in zip(pot_new, form.qsafe)]
        dw = np.concatenate([a - b for a, b in zip(w_new, w)])
        dg = np.concatenate([a - b for a, b in zip(grad_new, grad)])
        dwdg = float(dw @ dg)
        step = float(dw @ dw) / dwdg if dwdg > 1e-30 else step * 2.0
        step = min(max(step, 1e-14), 1e14)
        w, pot, grad = w_new, pot_new, grad_new
        energy = energy + s_try * slope + s_try * s_try * curv

        if it % opts.check_every == 0:
            if it % (opts.check_every * 40) == 0:
                pot = form.apply(w)  # shed incremental float drift
                energy = form.energy(w, pot)
                grad = [2.0 * (p + q) for p, q in zip(pot, form.qsafe)]
            fields = [p + q for p, q in zip(pot, form.qsafe)]
            F, res_lo, res_sup = residuals(fields)
            history.append((it, energy))
            if max(res_lo.max(), res_sup.max()) < opts.tol:
                converged = True
                break

    if F is None:
        fields = [p + q for p, q in zip(pot, form.qsafe)]
        F, res_lo, res_sup = residuals(fields)
    minimizer = DiscreteVectorMeasure.from_grid(K, w, r, renormalize=True)
    return EquilibriumSolution(
        minimizer=minimizer,
        robin_constants=F,
        residual_lower=res_lo,
        residual_support=res_sup,
        iterations=it,
        converged=converged,
        energy=energy,
        energy_history_checks=history,
    )


def verify_variational(sol_or_mu, C: InteractionMatrix, K: CompactSetTuple, Q=None,
                       tol=5e-3, opts: SolverOptions | None = None) -> ResidualReport:
    """Evaluate the two variational inequalities of the minimizer on the grid:
    field >= F_i at every node and field <= F_i on the support.  The
    quasi-everywhere exception set is taken to be empty at grid scale."""
    opts = opts or SolverOptions(tol=tol)
    mu = sol_or_mu.minimizer if hasattr(sol_or_mu, "minimizer") else sol_or_mu
    if mu.d != C.d or mu.d != K.d:
        raise DimensionError("measure, matrix and sets disagree in dimension")
    form = _QuadraticForm(C, K, Q, opts)
    w = mu.weight_arrays()
    fields = form.fields(w)
    F, res_lo, res_sup = _residuals_from_fields(w, fields, mu.r, opts, K)
    return ResidualReport(
        robin_constants=F,
        residual_lower=res_lo,
        residual_support=res_sup,
        tol=tol,
    )


@dataclass
class FixedPointReport:
    weight: WeightTuple
    recovered: DiscreteVectorMeasure
    transport_distance: float
    energy_gap: float
    passed: bool


def verify_nonadmissible_fixed_point(mu: DiscreteVectorMeasure, C: InteractionMatrix,
                                     K: CompactSetTuple, tol=1e-3, dist_tol=0.05,
                                     opts: SolverOptions | None = None) -> FixedPointReport:
    """Any finite-energy measure is its own minimizer for the potential-type
    weight u_i = -sum_j c_ij U^{mu_j}; rerun the solver with that weight and
    measure how far it lands from mu."""
    opts = opts or SolverOptions()
    form = _QuadraticForm(C, K, None, opts)
    pot = form.apply(mu.weight_arrays())
    weights = []
    for i in range(K.d):
        comp = K.components[i]
        weights.append(TabulatedWeight(comp.nodes, -pot[i], comp.cell_sizes))
    u = WeightTuple(tuple(weights))
    sol = solve_equilibrium(C, K, u, mu.r, opts)
    gap = (
        vector_energy(sol.minimizer, C, u, cell_constant=opts.cell_constant).weighted_energy
        - vector_energy(mu, C, u, cell_constant=opts.cell_constant).weighted_energy
    )
    dist = bl_distance(K, sol.minimizer, mu)
    return FixedPointReport(
        weight=u,
        recovered=sol.minimizer,
        transport_distance=dist,
        energy_gap=float(gap),
        passed=(gap <= tol) and (dist <= dist_tol),
    )


def usc_upper_approx(u_values, nodes, level: int, base_lipschitz=1.0) -> EnvelopeWeight:
    """Continuous upper approximation of a tabulated usc field at level n:
    Q_n(z) = max_w (u(w) - 2^n L0 |z - w|).  Monotone nonincreasing in n and
    >= u at the nodes."""
    if level < 0:
        raise WeightError("level must be nonnegative")
    vals = np.asarray(u_values, dtype=float)
    if not np.any(np.isfinite(vals)):
        raise WeightError("usc field is infinite everywhere on the grid")
    return EnvelopeWeight(nodes, vals, lipschitz=(2.0**level) * base_lipschitz)
