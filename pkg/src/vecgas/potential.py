"""Logarithmic kernels, potentials and the quadratic interaction energy of
discrete vector measures living on quadrature grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CompactSetTuple, InteractionMatrix, MassVector, weight_values
from .errors import DimensionError

# Self-interaction of one grid cell of diameter h and mass w is modelled as
# w^2 (log(1/h) + CELL_CONSTANT); 3/2 is exact for a uniform interval cell,
# which makes grid energies converge to the continuous ones as h -> 0.
CELL_CONSTANT = 1.5

MASS_TOL = 1e-12


@dataclass(frozen=True)
class ComponentMeasure:
    """Nonnegative weights on the grid nodes of one component."""

    nodes: np.ndarray
    weights: np.ndarray
    cell_sizes: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != self.nodes.shape:
            raise DimensionError("weights and nodes disagree in length")
        if np.any(w < -MASS_TOL):
            raise DimensionError("negative weight in component measure")
        object.__setattr__(self, "weights", np.maximum(w, 0.0))

    @property
    def mass(self):
        return float(np.sum(self.weights))


@dataclass(frozen=True)
class DiscreteVectorMeasure:
    """Tuple of component measures with prescribed masses."""

    components: tuple
    r: MassVector

    def __post_init__(self):
        if len(self.components) != self.r.d:
            raise DimensionError("component count does not match mass vector")
        for i, comp in enumerate(self.components):
            ri = self.r.r[i]
            if abs(comp.mass - ri) > MASS_TOL * max(1.0, ri):
                raise DimensionError(
                    f"component {i} mass {comp.mass!r} != prescribed {ri!r}"
                )

    @property
    def d(self):
        return len(self.components)

    def weight_arrays(self):
        return [c.weights for c in self.components]

    @classmethod
    def from_grid(cls, K: CompactSetTuple, weight_arrays, r: MassVector,
                  renormalize=False) -> "DiscreteVectorMeasure":
        comps = []
        for i in range(K.d):
            w = np.asarray(weight_arrays[i], dtype=float).copy()
            if renormalize:
                s = w.sum()
                if s <= 0:
                    raise DimensionError(f"component {i} weights sum to {s}")
                w *= r.r[i] / s
            grid = K.components[i]
            comps.append(ComponentMeasure(grid.nodes, w, grid.cell_sizes))
        return cls(tuple(comps), r)


def uniform_measure(K: CompactSetTuple, r: MassVector) -> DiscreteVectorMeasure:
    """Quadrature measure normalized to the prescribed masses."""
    return DiscreteVectorMeasure.from_grid(
        K, [c.weights for c in K.components], r, renormalize=True
    )


def atoms_measure(K: CompactSetTuple, indices, r: MassVector) -> DiscreteVectorMeasure:
    """Equal-weight atoms r_i/m_i at the given node indices of each component."""
    arrays = []
    for i in range(K.d):
        w = np.zeros(K.components[i].size)
        ix = np.asarray(indices[i], dtype=int)
        np.add.at(w, ix, r.r[i] / ix.size)
        arrays.append(w)
    return DiscreteVectorMeasure.from_grid(K, arrays, r)


# ---------------------------------------------------------------------------
# kernels and potentials
# ---------------------------------------------------------------------------

def log_kernel(nodes_a, nodes_b, cell_sizes_a=None, same=False,
               cell_constant=CELL_CONSTANT) -> np.ndarray:
    """Matrix of log(1/|z - t|); with same=True the diagonal carries the
    regularized cell self-interaction log(1/h) + c0."""
    dist = np.abs(nodes_a[:, None] - nodes_b[None, :])
    with np.errstate(divide="ignore"):
        G = -np.log(dist)
    if same:
        np.fill_diagonal(G, -np.log(cell_sizes_a) + cell_constant)
    return G


def log_potential(mu_i: ComponentMeasure, z, cell_constant=CELL_CONSTANT,
                  strict_coincident=False):
    """U^mu(z) = sum w log(1/|z - t|); a query exactly on a charged node uses
    the regularized cell value unless strict mode asks for the +inf sentinel."""
    z = np.asarray(z, dtype=np.complex128)
    scalar = z.ndim == 0
    zf = np.atleast_1d(z)
    dist = np.abs(zf[:, None] - mu_i.nodes[None, :])
    hit = dist == 0.0
    with np.errstate(divide="ignore"):
        L = -np.log(dist)
    if np.any(hit):
        rows, cols = np.nonzero(hit)
        if strict_coincident:
            # +inf only where an actual atom sits; zero-weight nodes drop out
            L[rows, cols] = np.where(mu_i.weights[cols] > 0, np.inf, 0.0)
        else:
            L[rows, cols] = -np.log(mu_i.cell_sizes[cols]) + cell_constant
    out = L @ mu_i.weights
    return float(out[0]) if scalar else out.reshape(z.shape)


def partial_potential(mu: DiscreteVectorMeasure, C: InteractionMatrix, i: int, z,
                      cell_constant=CELL_CONSTANT):
    """Field of component i: sum_j c_ij U^{mu_j}(z)."""
    if not 0 <= i < mu.d:
        raise DimensionError(f"component index {i} out of range 0..{mu.d - 1}")
    if C.d != mu.d:
        raise DimensionError("matrix and measure disagree in dimension")
    out = None
    for j in range(mu.d):
        cij = C.entry(i, j)
        if cij == 0.0:
            continue
        term = cij * log_potential(mu.components[j], z, cell_constant)
        out = term if out is None else out + term
    return out


def mutual_energy(mu_i: ComponentMeasure, mu_j: ComponentMeasure,
                  cell_constant=CELL_CONSTANT) -> float:
    """Double sum of w w' log(1/|z - t|).  Measures sharing one node set get
    the regularized diagonal, so I(mu, mu) approximates the continuous
    self-energy instead of diverging."""
    same = mu_i is mu_j or (
        mu_i.nodes.shape == mu_j.nodes.shape and np.array_equal(mu_i.nodes, mu_j.nodes)
    )
    G = log_kernel(mu_i.nodes, mu_j.nodes, mu_i.cell_sizes, same=same,
                   cell_constant=cell_constant)
    if not same and np.isinf(G).any():
        # coincident atoms across genuinely different supports
        mask = np.isinf(G)
        charged = (mu_i.weights[:, None] * mu_j.weights[None, :])[mask]
        if np.any(charged > 0):
            return float("inf")
        G = np.where(mask, 0.0, G)
    return float(mu_i.weights @ G @ mu_j.weights)


@dataclass(frozen=True)
class EnergyBreakdown:
    """Pairwise mutual energies, external-field terms, and the two totals."""

    pair_energies: np.ndarray  # (d, d)
    external: np.ndarray       # (d,)
    energy: float              # sum c_ij I_ij
    weighted_energy: float     # energy + 2 sum external

    def csv_rows(self):
        rows = [("i", "j", "value")]
        d = self.pair_energies.shape[0]
        for i in range(d):
            for j in range(d):
                rows.append((i, j, repr(self.pair_energies[i, j])))
        for i in range(d):
            rows.append(("Q", i, repr(self.external[i])))
        rows.append(("E", "", repr(self.energy)))
        rows.append(("E_Q", "", repr(self.weighted_energy)))
        return rows


def vector_energy(mu: DiscreteVectorMeasure, C: InteractionMatrix, Q=None,
                  K: CompactSetTuple | None = None,
                  cell_constant=CELL_CONSTANT) -> EnergyBreakdown:
    """Full interaction energy sum c_ij I(mu_i, mu_j) plus external fields."""
    if C.d != mu.d:
        raise DimensionError("matrix and measure disagree in dimension")
    d = mu.d
    I = np.zeros((d, d))
    for i in range(d):
        for j in range(i, d):
            I[i, j] = I[j, i] = mutual_energy(
                mu.components[i], mu.components[j], cell_constant
            )
    external = np.zeros(d)
    if Q is not None:
        if Q.d != d:
            raise DimensionError("weight tuple and measure disagree in dimension")
        for i in range(d):
            qv = Q[i].values(mu.components[i].nodes)
            w = mu.components[i].weights
            live = w > 0
            external[i] = float(np.dot(w[live], qv[live]))
    energy = float(np.sum(C.c * I))
    return EnergyBreakdown(
        pair_energies=I,
        external=external,
        energy=energy,
        weighted_energy=energy + 2.0 * float(np.sum(external)),
    )


def field_on_grid(mu: DiscreteVectorMeasure, C: InteractionMatrix,
                  K: CompactSetTuple, Q=None, cell_constant=CELL_CONSTANT):
    """Per component: U_i^mu + Q_i evaluated at every grid node of K_i.

    Component i's own grid reuses the regularized kernel so that
    sum_i w_i . field_i equals E(mu) + sum_i int Q_i dmu_i exactly.
    """
    fields = []
    for i in range(K.d):
        nodes = K.components[i].nodes
        acc = np.zeros(nodes.size)
        for j in range(mu.d):
            cij = C.entry(i, j)
            if cij == 0.0:
                continue
            same = np.array_equal(nodes, mu.components[j].nodes)
            G = log_kernel(nodes, mu.components[j].nodes,
                           K.components[i].cell_sizes, same=same,
                           cell_constant=cell_constant)
            if not same:
                bad = np.isinf(G)
                if bad.any():
                    G = np.where(bad, 0.0, G)
            acc += cij * (G @ mu.components[j].weights)
        acc += weight_values(Q, K, i)
        fields.append(acc)
    return fields
