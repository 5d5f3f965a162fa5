"""Gibbs ensembles over point configurations: the normalized squared
Vandermonde density, its partition function (exact enumeration or stochastic
stepping-stone estimate), a single-site Metropolis sampler, neighborhood
functionals, and rate-function diagnostics for the large-deviation behavior."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import (
    CompactSetTuple,
    DegreeSchedule,
    InteractionMatrix,
    MassVector,
    configuration_from_indices,
    weight_values,
)
from .errors import (
    BudgetError,
    DimensionError,
    MixingWarning,
    StatisticsError,
)
from .fekete import vdm_exponent
from .metrics import bl_distance, bl_gradient_component
from .potential import DiscreteVectorMeasure, atoms_measure

EXACT_STATE_BUDGET = 10**7


@dataclass
class EnsembleSpec:
    """Everything needed to define the configuration-space Gibbs measure:
    sets, couplings, masses, external fields, degree schedule, the reference
    measure (a density against the quadrature weights), and the rng seed."""

    C: InteractionMatrix
    K: CompactSetTuple
    Q: object  # WeightTuple or None
    r: MassVector
    schedule: DegreeSchedule
    nu_density: object = None  # None -> density 1 (the quadrature measure)
    seed: int = 0

    def __post_init__(self):
        if not (self.C.d == self.K.d == self.r.d):
            raise DimensionError("spec dimensions disagree")
        self._equilibrium = None

    def nu_weights(self, i: int) -> np.ndarray:
        comp = self.K.components[i]
        if self.nu_density is None:
            w = comp.weights.astype(float)
        else:
            w = comp.weights * np.asarray(
                self.nu_density[i].values(comp.nodes), dtype=float
            )
        if np.any(w < 0) or w.sum() <= 0:
            raise DimensionError(f"reference measure not positive on component {i}")
        return w

    def log_nu_total(self, k: int) -> float:
        m = self.schedule.degrees(k)
        return float(
            sum(m[i] * math.log(self.nu_weights(i).sum()) for i in range(self.K.d))
        )

    def equilibrium(self, solver_opts=None):
        from .equilibrium import solve_equilibrium

        if self._equilibrium is None:
            self._equilibrium = solve_equilibrium(
                self.C, self.K, self.Q, self.r, solver_opts
            )
        return self._equilibrium


class _ChainContext:
    """Precomputed tables for one ensemble level k."""

    def __init__(self, spec: EnsembleSpec, k: int):
        self.spec = spec
        self.k = k
        self.m = spec.schedule.degrees(k)
        self.d = spec.K.d
        self.nodes = [spec.K.components[i].nodes for i in range(self.d)]
        self.qv = [weight_values(spec.Q, spec.K, i) for i in range(self.d)]
        self.qfac = [self.m[i] / spec.r.r[i] for i in range(self.d)]
        nu = [spec.nu_weights(i) for i in range(self.d)]
        self.nubar = [v / v.sum() for v in nu]
        self.cum = [np.cumsum(v) for v in self.nubar]
        self.c = spec.C.c
        self.exponent = vdm_exponent(self.m, spec.r)
        for i in range(self.d):
            if self.m[i] > self.nodes[i].size:
                raise DimensionError(
                    f"component {i}: m={self.m[i]} exceeds grid {self.nodes[i].size}"
                )

    def delta_move(self, idx, i, l, new) -> float:
        """Change of log|VDM^Q|^2 when point l of component i moves to `new`."""
        old = idx[i][l]
        if new == old:
            return 0.0
        z_new = self.nodes[i][new]
        z_old = self.nodes[i][old]
        delta = 0.0
        for j in range(self.d):
            cij = self.c[i, j]
            if cij == 0.0:
                continue
            zj = self.nodes[j][idx[j]]
            if j == i:
                zj = np.delete(zj, l)
                if zj.size == 0:
                    continue
            dn = np.abs(z_new - zj)
            if np.any(dn == 0.0):
                return float("-inf") if cij > 0 else float("inf")
            do = np.abs(z_old - zj)
            delta += cij * float(np.sum(np.log(dn)) - np.sum(np.log(do)))
        delta -= self.qfac[i] * (self.qv[i][new] - self.qv[i][old])
        return 2.0 * delta

    def log_vdm2_weighted(self, idx) -> float:
        """2 log|VDM^Q| of the configuration given by node indices."""
        total = 0.0
        for i in range(self.d):
            zi = self.nodes[i][idx[i]]
            cii = self.c[i, i]
            if cii != 0.0 and zi.size > 1:
                diff = np.abs(zi[:, None] - zi[None, :])
                iu = np.triu_indices(zi.size, k=1)
                vals = diff[iu]
                if np.any(vals == 0.0):
                    return float("-inf")
                total += cii * float(np.sum(np.log(vals)))
            for j in range(i + 1, self.d):
                cij = self.c[i, j]
                if cij == 0.0:
                    continue
                zj = self.nodes[j][idx[j]]
                cross = np.abs(zi[:, None] - zj[None, :])
                if np.any(cross == 0.0):
                    total += cij * float("-inf")
                else:
                    total += cij * float(np.sum(np.log(cross)))
            total -= self.qfac[i] * float(np.sum(self.qv[i][idx[i]]))
        return 2.0 * total


@dataclass
class SamplerOptions:
    burn_in: int = 200       # sweeps discarded before the first draw
    thin: int = 2            # sweeps between retained draws
    chains: int = 1
    threads: int = 1
    beta: float = 1.0        # inverse-temperature multiplier on log|VDM^Q|^2
    refresh_every: int = 64  # draws between exact log-density recomputations


@dataclass
class SampleBatch:
    k: int
    degrees: np.ndarray
    draw_indices: list                 # per draw: tuple of index arrays
    log_vdm2_weighted: np.ndarray      # per draw
    acceptance_rate: float
    sweeps: int
    chains: int
    stalled_sweeps: int = 0

    @property
    def n_draws(self):
        return len(self.draw_indices)

    def configurations(self, K: CompactSetTuple):
        return [configuration_from_indices(K, ix) for ix in self.draw_indices]

    def empirical_measures(self, K: CompactSetTuple, r: MassVector):
        return [atoms_measure(K, ix, r) for ix in self.draw_indices]

    def mean_empirical_weights(self, K: CompactSetTuple, r: MassVector):
        """Average of the per-draw empirical weight vectors, per component."""
        acc = [np.zeros(K.components[i].size) for i in range(K.d)]
        for ix in self.draw_indices:
            for i in range(K.d):
                np.add.at(acc[i], ix[i], r.r[i] / ix[i].size)
        return [a / max(1, self.n_draws) for a in acc]

    def normalized_values(self, exponent: float):
        """Per-draw |VDM^Q|^{2 |r|^2 / (|m|(|m|-1))}."""
        return np.exp(0.5 * exponent * self.log_vdm2_weighted)


def _run_chain(ctx: _ChainContext, rng, n_draws, opts: SamplerOptions):
    d, m = ctx.d, ctx.m
    idx = [
        rng.choice(ctx.nodes[i].size, size=int(m[i]), replace=False, p=ctx.nubar[i])
        for i in range(d)
    ]
    logv = ctx.log_vdm2_weighted(idx)
    draws, logs = [], []
    accepted = proposed = 0
    stalled = 0
    total_sweeps = opts.burn_in + n_draws * opts.thin
    draws_done = 0
    for sweep in range(total_sweeps):
        acc_before = accepted
        for i in range(d):
            cum = ctx.cum[i]
            for l in range(int(m[i])):
                proposed += 1
                new = int(np.searchsorted(cum, rng.random()))
                delta = ctx.delta_move(idx, i, l, new)
                if delta >= 0 or math.log(rng.random()) < opts.beta * delta:
                    idx[i][l] = new
                    accepted += 1
                    logv += delta
        if accepted == acc_before:
            stalled += 1
        if sweep >= opts.burn_in and (sweep - opts.burn_in + 1) % opts.thin == 0:
            draws.append(tuple(a.copy() for a in idx))
            if len(draws) % opts.refresh_every == 0:
                logv = ctx.log_vdm2_weighted(idx)
            logs.append(logv)
            draws_done += 1
            if draws_done >= n_draws:
                break
    return draws, np.array(logs), accepted, proposed, stalled


def sample_prob_k(spec: EnsembleSpec, k: int, n_draws: int,
                  opts: SamplerOptions | None = None) -> SampleBatch:
    """Metropolis sweeps with single-site reference-measure proposals; the
    acceptance ratio is the local change of log|VDM^Q|^2, so the stationary
    law on the grid is exactly the Gibbs configuration measure."""
    opts = opts or SamplerOptions()
    ctx = _ChainContext(spec, k)
    per_chain = [n_draws // opts.chains] * opts.chains
    for c in range(n_draws % opts.chains):
        per_chain[c] += 1

    def work(chain_id):
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence((spec.seed, k, chain_id)))
        )
        return _run_chain(ctx, rng, per_chain[chain_id], opts)

    if opts.threads > 1 and opts.chains > 1:
        with ThreadPoolExecutor(max_workers=opts.threads) as pool:
            results = list(pool.map(work, range(opts.chains)))
    else:
        results = [work(c) for c in range(opts.chains)]

    draws, logs = [], []
    accepted = proposed = stalled = 0
    for dr, lg, acc, prop, st in results:
        draws.extend(dr)
        logs.append(lg)
        accepted += acc
        proposed += prop
        stalled += st
    if stalled > 0:
        warnings.warn(
            f"{stalled} sweeps accepted no move at k={k}", MixingWarning
        )
    return SampleBatch(
        k=k,
        degrees=ctx.m,
        draw_indices=draws,
        log_vdm2_weighted=np.concatenate(logs) if logs else np.zeros(0),
        acceptance_rate=accepted / max(1, proposed),
        sweeps=opts.burn_in + max(per_chain) * opts.thin,
        chains=opts.chains,
        stalled_sweeps=stalled,
    )


# ---------------------------------------------------------------------------
# exact enumeration machinery (toy scale)
# ---------------------------------------------------------------------------

def _coord_layout(ctx: _ChainContext):
    coords = [(i, l) for i in range(ctx.d) for l in range(int(ctx.m[i]))]
    radices = tuple(ctx.nodes[i].size for i, _ in coords)
    size = 1
    for rdx in radices:
        size *= rdx
    return coords, radices, size


def state_space_size(spec: EnsembleSpec, k: int) -> int:
    return _coord_layout(_ChainContext(spec, k))[2]


def _chunk_log_density(ctx, coords, radices, sids):
    """log of |VDM^Q|^2 * prod nu(z_t) for a chunk of linear state ids."""
    digits = np.array(np.unravel_index(sids, radices))  # (T, chunk)
    logw = np.zeros(sids.size)
    T = len(coords)
    lognu = [np.log(ctx.spec.nu_weights(i)) for i in range(ctx.d)]
    with np.errstate(divide="ignore"):
        for t in range(T):
            i, _ = coords[t]
            logw += lognu[i][digits[t]]
            logw -= 2.0 * ctx.qfac[i] * ctx.qv[i][digits[t]]
            z_t = ctx.nodes[i][digits[t]]
            for u in range(t + 1, T):
                j, _ = coords[u]
                cij = ctx.c[i, j]
                if cij == 0.0:
                    continue
                dist = np.abs(z_t - ctx.nodes[j][digits[u]])
                logw += 2.0 * cij * np.log(dist)
    return digits, logw


def _iter_chunks(size, chunk):
    lo = 0
    while lo < size:
        hi = min(size, lo + chunk)
        yield np.arange(lo, hi)
        lo = hi


@dataclass
class PartitionEstimate:
    log_value: float
    stderr_log: float
    mode: str                  # "exact" | "stochastic"
    total_degree: int
    exponent: float            # 2|r|^2/(|m|(|m|-1))
    state_space: int
    rungs: int = 0

    @property
    def value(self):
        return math.exp(self.log_value)

    @property
    def normalized(self):
        """Z^{|r|^2/(|m|(|m|-1))}, the quantity that tends to the diameter."""
        return math.exp(0.5 * self.exponent * self.log_value)


@dataclass
class PartitionOptions:
    budget: int = EXACT_STATE_BUDGET
    chunk: int = 200_000
    rung_target: float = 0.4     # max (delta beta) * std(log density) per rung
    sweeps_per_rung: int = 60
    burn_in_sweeps: int = 20


def partition_function(spec: EnsembleSpec, k: int, mode: str = "auto",
                       opts: PartitionOptions | None = None) -> PartitionEstimate:
    """Z_k = integral of |VDM^Q|^2 against the product reference measure.
    Exact summation over grid tuples when the state space fits the budget,
    otherwise a stepping-stone chain of self-normalized ratio estimates along
    an inverse-temperature ladder."""
    opts = opts or PartitionOptions()
    ctx = _ChainContext(spec, k)
    coords, radices, size = _coord_layout(ctx)
    if mode == "auto":
        mode = "exact" if size <= opts.budget else "stochastic"
    if mode == "exact":
        if size > opts.budget:
            raise BudgetError(
                f"state space {size} exceeds exact budget {opts.budget}"
            )
        parts = []
        for sids in _iter_chunks(size, opts.chunk):
            _, logw = _chunk_log_density(ctx, coords, radices, sids)
            parts.append(logsumexp(logw))
        return PartitionEstimate(
            log_value=float(logsumexp(np.array(parts))),
            stderr_log=0.0,
            mode="exact",
            total_degree=int(np.sum(ctx.m)),
            exponent=ctx.exponent,
            state_space=size,
        )
    return _stepping_stone(spec, ctx, opts)


def _stepping_stone(spec, ctx, opts: PartitionOptions) -> PartitionEstimate:
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence((spec.seed, ctx.k, 977)))
    )
    d, m = ctx.d, ctx.m
    idx = [
        rng.choice(ctx.nodes[i].size, size=int(m[i]), replace=False, p=ctx.nubar[i])
        for i in range(d)
    ]
    log_z = sum(float(m[i]) * math.log(ctx.spec.nu_weights(i).sum()) for i in range(d))
    beta = 0.0
    var_total = 0.0
    rungs = 0

    def sweep(beta_now):
        for i in range(d):
            cum = ctx.cum[i]
            for l in range(int(m[i])):
                new = int(np.searchsorted(cum, rng.random()))
                delta = ctx.delta_move(idx, i, l, new)
                if delta >= 0 or math.log(rng.random()) < beta_now * delta:
                    idx[i][l] = new

    while beta < 1.0:
        for _ in range(opts.burn_in_sweeps):
            sweep(beta)
        us = np.empty(opts.sweeps_per_rung)
        for s in range(opts.sweeps_per_rung):
            sweep(beta)
            us[s] = ctx.log_vdm2_weighted(idx)
        finite = us[np.isfinite(us)]
        if finite.size == 0:
            raise StatisticsError("all sampled configurations degenerate")
        sd = float(finite.std()) + 1e-12
        dbeta = min(1.0 - beta, opts.rung_target / sd)
        a = dbeta * us
        amax = float(np.max(a[np.isfinite(a)]))
        wts = np.exp(np.where(np.isfinite(a), a - amax, -np.inf))
        ratio = amax + math.log(float(wts.mean()))
        log_z += ratio
        var_total += float(wts.var()) / (wts.size * float(wts.mean()) ** 2)
        beta += dbeta
        rungs += 1
    return PartitionEstimate(
        log_value=log_z,
        stderr_log=math.sqrt(var_total),
        mode="stochastic",
        total_degree=int(np.sum(m)),
        exponent=ctx.exponent,
        state_space=_coord_layout(ctx)[2],
        rungs=rungs,
    )


# ---------------------------------------------------------------------------
# transition matrix on enumerable instances
# ---------------------------------------------------------------------------

def transition_matrix(spec: EnsembleSpec, k: int, beta: float = 1.0,
                      cap: int = 20000):
    """Dense one-sweep kernel of the sampler (same scan order), for oracle
    checks on tiny grids.  Returns (P, decode) with decode(s) -> index tuple."""
    ctx = _ChainContext(spec, k)
    coords, radices, size = _coord_layout(ctx)
    if size > cap:
        raise BudgetError(f"state space {size} too large for a dense kernel")

    def decode(sid):
        digits = np.unravel_index(sid, radices)
        idx = []
        t = 0
        for i in range(ctx.d):
            idx.append(np.array(digits[t:t + int(ctx.m[i])], dtype=int))
            t += int(ctx.m[i])
        return tuple(idx)

    P = np.eye(size)
    for t, (i, l) in enumerate(coords):
        Pt = np.zeros((size, size))
        stride = int(np.prod(radices[t + 1:], dtype=int)) if t + 1 < len(radices) else 1
        n_i = radices[t]
        for s in range(size):
            idx = decode(s)
            old = idx[i][l]
            stay = 0.0
            for new in range(n_i):
                prob = ctx.nubar[i][new]
                if new == old:
                    stay += prob
                    continue
                delta = ctx.delta_move(idx, i, l, new)
                acc = 1.0 if delta >= 0 else math.exp(max(beta * delta, -745.0))
                target = s + (new - old) * stride
                Pt[s, target] += prob * acc
                stay += prob * (1.0 - acc)
            Pt[s, s] += stay
        P = P @ Pt
    return P, decode


def exact_distribution(spec: EnsembleSpec, k: int):
    """Normalized Gibbs probabilities of every grid tuple (oracle scale)."""
    ctx = _ChainContext(spec, k)
    coords, radices, size = _coord_layout(ctx)
    if size > 200000:
        raise BudgetError("state space too large to enumerate")
    _, logw = _chunk_log_density(ctx, coords, radices, np.arange(size))
    logw -= logsumexp(logw)
    return np.exp(logw)


# ---------------------------------------------------------------------------
# neighborhoods, rate function, concentration
# ---------------------------------------------------------------------------

@dataclass
class NeighborhoodSpec:
    """Ball (sum of per-component bounded-Lipschitz distances) around a
    center measure; radius None means the whole space."""

    center: DiscreteVectorMeasure | None
    radius: float | None

    @classmethod
    def whole_space(cls):
        return cls(center=None, radius=None)

    def contains(self, K: CompactSetTuple, weight_arrays) -> bool:
        if self.radius is None:
            return True
        if self.radius <= 0:
            raise DimensionError("neighborhood radius must be positive")
        return bl_distance(K, weight_arrays, self.center) <= self.radius


@dataclass
class NeighborhoodValues:
    w: float
    j: float
    empty: bool
    mode: str


def neighborhood_functionals(spec: EnsembleSpec, k: int, G: NeighborhoodSpec,
                             mode: str = "auto",
                             batch: SampleBatch | None = None,
                             z_estimate: PartitionEstimate | None = None,
                             sampler_opts: SamplerOptions | None = None,
                             partition_opts: PartitionOptions | None = None,
                             n_draws: int = 2000,
                             enumeration_cap: int = 200000) -> NeighborhoodValues:
    """W_k(G): the best normalized |VDM^Q| over configurations whose empirical
    measure lies in G.  J_k(G): the nu-average of |VDM^Q|^2 over the same set,
    taken to the half-exponent."""
    ctx = _ChainContext(spec, k)
    coords, radices, size = _coord_layout(ctx)
    if mode == "auto":
        mode = "exact" if size <= enumeration_cap else "sample"
    expo = ctx.exponent

    if mode == "exact":
        if size > enumeration_cap:
            raise BudgetError("state space too large for exact functionals")
        best = float("-inf")
        parts = []
        for sids in _iter_chunks(size, 50000):
            digits, logw = _chunk_log_density(ctx, coords, radices, sids)
            logv = logw.copy()
            for t, (i, _) in enumerate(coords):
                logv -= np.log(ctx.spec.nu_weights(i).sum() * ctx.nubar[i][digits[t]])
            keep = np.zeros(sids.size, dtype=bool)
            for s in range(sids.size):
                idx = []
                t0 = 0
                for i in range(ctx.d):
                    idx.append(digits[t0:t0 + int(ctx.m[i]), s])
                    t0 += int(ctx.m[i])
                wts = [
                    np.bincount(idx[i], weights=None, minlength=ctx.nodes[i].size)
                    * (spec.r.r[i] / ctx.m[i])
                    for i in range(ctx.d)
                ]
                keep[s] = G.contains(spec.K, wts)
            if np.any(keep):
                best = max(best, float(np.max(logv[keep])))
                parts.append(logsumexp(logw[keep]))
        if not parts:
            return NeighborhoodValues(0.0, 0.0, True, "exact")
        log_j = float(logsumexp(np.array(parts)))
        return NeighborhoodValues(
            w=math.exp(0.5 * expo * best),
            j=math.exp(0.5 * expo * log_j),
            empty=False,
            mode="exact",
        )

    if batch is None:
        batch = sample_prob_k(spec, k, n_draws, sampler_opts)
    if z_estimate is None:
        z_estimate = partition_function(spec, k, "auto", partition_opts)
    inside = np.zeros(batch.n_draws, dtype=bool)
    for s, ix in enumerate(batch.draw_indices):
        wts = [
            np.bincount(ix[i], minlength=ctx.nodes[i].size) * (spec.r.r[i] / ctx.m[i])
            for i in range(ctx.d)
        ]
        inside[s] = G.contains(spec.K, wts)
    if not np.any(inside):
        return NeighborhoodValues(0.0, 0.0, True, "sample")
    best = float(np.max(batch.log_vdm2_weighted[inside]))
    sigma_hat = float(np.mean(inside))
    log_j = z_estimate.log_value + math.log(sigma_hat)
    return NeighborhoodValues(
        w=math.exp(0.5 * expo * best),
        j=math.exp(0.5 * expo * log_j),
        empty=False,
        mode="sample",
    )


def rate_function(mu: DiscreteVectorMeasure, spec: EnsembleSpec,
                  equilibrium=None, clamp_tol: float = 1e-6,
                  solver_opts=None) -> float:
    """E_Q(mu) - E_Q(minimizer), clamped to zero inside the tolerance."""
    from .potential import vector_energy

    if mu.d != spec.K.d:
        raise DimensionError("measure dimension does not match the spec")
    for i in range(mu.d):
        ri = spec.r.r[i]
        if abs(mu.components[i].mass - ri) > 1e-9 * max(1.0, ri):
            raise DimensionError(f"component {i} mass differs from prescribed r_i")
    eq = equilibrium or spec.equilibrium(solver_opts)
    val = vector_energy(mu, spec.C, spec.Q).weighted_energy - eq.energy
    if -clamp_tol <= val < 0:
        return 0.0
    return float(val)


# ---------------------------------------------------------------------------
# ball-constrained energy minimization (rate-function infima over balls)
# ---------------------------------------------------------------------------

@dataclass
class ConstrainedMinResult:
    measure: DiscreteVectorMeasure
    energy: float
    distance: float
    iterations: int
    converged: bool


def ball_constrained_minimum(C, K, Q, r, center: DiscreteVectorMeasure,
                             radius: float, iters: int = 400,
                             lambdas=(1e1, 1e2, 1e3, 1e4)) -> ConstrainedMinResult:
    """Penalized projected gradient for min E_Q over the bounded-Lipschitz
    ball around `center`.  The result is blended back onto the ball boundary
    (the metric is a norm, so the blend is exact), giving a certified upper
    bound that is tight for convex balls."""
    from .equilibrium import SolverOptions, _QuadraticForm, project_simplex

    opts = SolverOptions()
    form = _QuadraticForm(C, K, Q, opts)
    d = K.d
    cw = center.weight_arrays()
    w = [arr.copy() for arr in cw]
    it_done = 0

    def dist_and_grad(w_list):
        total = 0.0
        grads = []
        for i in range(d):
            di, gi = bl_gradient_component(K.components[i], w_list[i], cw[i])
            total += di
            grads.append(gi)
        return total, grads

    for lam in lambdas:
        step = 1e-3
        pot = form.apply(w)
        energy = form.energy(w, pot)
        dist, dgr = dist_and_grad(w)

        def objective(w_list):
            e = form.energy(w_list)
            dd, _ = dist_and_grad(w_list)
            return e + lam * max(0.0, dd - radius) ** 2, e, dd

        fval = energy + lam * max(0.0, dist - radius) ** 2
        for _ in range(iters):
            it_done += 1
            hinge = max(0.0, dist - radius)
            grad = [
                2.0 * (pot[i] + form.qsafe[i]) + 2.0 * lam * hinge * dgr[i]
                for i in range(d)
            ]
            trial = [
                project_simplex(w[i] - step * grad[i], r.r[i]) for i in range(d)
            ]
            f_new, e_new, d_new = objective(trial)
            if f_new <= fval - 1e-14:
                w = trial
                fval = f_new
                dist = d_new
                pot = form.apply(w)
                _, dgr = dist_and_grad(w)
                step *= 1.3
            else:
                step *= 0.5
                if step < 1e-12:
                    break

    dist, _ = dist_and_grad(w)
    if dist > radius:
        t = radius / dist  # norm-homogeneous blend back to the boundary
        w = [cw[i] + t * (w[i] - cw[i]) for i in range(d)]
        dist, _ = dist_and_grad(w)
    measure = DiscreteVectorMeasure.from_grid(K, w, r, renormalize=True)
    return ConstrainedMinResult(
        measure=measure,
        energy=form.energy([c.weights for c in measure.components]),
        distance=dist,
        iterations=it_done,
        converged=dist <= radius * (1 + 1e-9),
    )


# ---------------------------------------------------------------------------
# concentration / LDP experiment
# ---------------------------------------------------------------------------

@dataclass
class ConcentrationReport:
    ks: list
    total_degrees: list
    speeds: np.ndarray             # |m_k|(|m_k|-1)/(2|r|^2)
    p_below: np.ndarray            # fraction of draws under the (delta - eta) bar
    q_hits: dict                   # G index -> per-k fraction of draws in G
    fitted_rates: dict             # G index -> (rate, stderr)
    predicted_rates: dict          # G index -> ball-constrained rate infimum
    delta_reference: float
    eta: float


def ldp_concentration_experiment(spec: EnsembleSpec, k_range, eta: float,
                                 neighborhoods, n_draws: int = 4000,
                                 sampler_opts: SamplerOptions | None = None,
                                 predict: bool = True,
                                 solver_opts=None) -> ConcentrationReport:
    """Sample the configuration Gibbs measure along the degree schedule,
    track the mass under the near-optimal Vandermonde threshold, and fit the
    exponential decay rate of neighborhood probabilities against the speed."""
    eq = spec.equilibrium(solver_opts)
    delta_ref = math.exp(-eq.energy)
    ks = list(k_range)
    speeds, p_vals = [], []
    q_hits = {g: [] for g in range(len(neighborhoods))}
    for k in ks:
        batch = sample_prob_k(spec, k, n_draws, sampler_opts)
        expo = vdm_exponent(batch.degrees, spec.r)
        speeds.append(1.0 / expo)
        norm_vals = batch.normalized_values(expo)
        p_vals.append(float(np.mean(norm_vals < (delta_ref - eta))))
        for g, G in enumerate(neighborhoods):
            inside = 0
            for ix in batch.draw_indices:
                wts = [
                    np.bincount(ix[i], minlength=spec.K.components[i].size)
                    * (spec.r.r[i] / batch.degrees[i])
                    for i in range(spec.K.d)
                ]
                if G.contains(spec.K, wts):
                    inside += 1
            q_hits[g].append(inside / max(1, batch.n_draws))

    speeds = np.array(speeds)
    fitted = {}
    for g in q_hits:
        q = np.array(q_hits[g])
        ok = q > 0
        if int(np.sum(ok)) < 3:
            raise StatisticsError(
                f"neighborhood {g}: only {int(np.sum(ok))} levels with hits"
            )
        x = speeds[ok]
        y = np.log(q[ok])
        A = np.vstack([x, np.ones_like(x)]).T
        coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
        slope = coef[0]
        nfit = x.size
        resid = y - A @ coef
        s2 = float(resid @ resid) / max(1, nfit - 2)
        se = math.sqrt(s2 / float(np.sum((x - x.mean()) ** 2)))
        fitted[g] = (-slope, se)

    predicted = {}
    if predict:
        for g, G in enumerate(neighborhoods):
            if G.radius is None:
                predicted[g] = 0.0
                continue
            res = ball_constrained_minimum(
                spec.C, spec.K, spec.Q, spec.r, G.center, G.radius
            )
            predicted[g] = max(0.0, res.energy - eq.energy)

    return ConcentrationReport(
        ks=ks,
        total_degrees=[int(np.sum(spec.schedule.degrees(k))) for k in ks],
        speeds=speeds,
        p_below=np.array(p_vals),
        q_hits={g: np.array(v) for g, v in q_hits.items()},
        fitted_rates=fitted,
        predicted_rates=predicted,
        delta_reference=delta_ref,
        eta=eta,
    )
