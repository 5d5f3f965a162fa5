"""Sup-norm versus L^2-norm ratios for polynomial and rational families on a
candidate base measure.  The exact grid maximizer of the ratio is the peak of
the reproducing kernel of the measure, computed through a QR factorization of
the weighted Vandermonde matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .core import CompactSetTuple, ComponentSet
from .errors import DimensionError, GeometryError, RankError

RANK_RTOL = 1e-13


def _chebyshev_basis(comp: ComponentSet, degree: int):
    """Basis evaluations at the grid; Chebyshev on the bounding interval for
    real sets, radius-scaled monomials for planar ones."""
    nodes = comp.nodes
    if comp.is_real_interval_union:
        lo = min(p.a for p in comp.pieces)
        hi = max(p.b for p in comp.pieces)
        t = (2.0 * nodes.real - (lo + hi)) / (hi - lo)
        return np.polynomial.chebyshev.chebvander(t, degree)
    center = nodes.mean()
    scale = max(np.max(np.abs(nodes - center)), 1e-12)
    t = (nodes - center) / scale
    return np.vander(t, degree + 1, increasing=True)


def _kernel_sup(basis_rows, nu, eval_rows):
    """max over evaluation rows of b^T Gram^{-1} b with Gram = rows^T diag(nu) rows,
    via a twice-orthogonalized QR of the weighted rows."""
    W = np.sqrt(nu)[:, None] * basis_rows
    Q1, R1 = np.linalg.qr(W)
    diag = np.abs(np.diag(R1))
    if diag.min() <= RANK_RTOL * max(diag.max(), 1e-300):
        raise RankError(
            f"Gram matrix rank deficient at dimension {basis_rows.shape[1]}"
        )
    Q2, R2 = np.linalg.qr(Q1)  # second pass sharpens orthogonality
    R = R2 @ R1
    S = solve_triangular(R.conj().T, eval_rows.conj().T, lower=True)
    return float(np.sqrt(np.max(np.sum(np.abs(S) ** 2, axis=0))))


@dataclass(frozen=True)
class BmRatioCurve:
    """Per-degree ratio maxima M_k and the root sequence M_k^{1/k}."""

    ks: np.ndarray
    ratios: np.ndarray
    sample_max: np.ndarray | None = None

    @property
    def roots(self):
        return self.ratios ** (1.0 / np.maximum(self.ks, 1))


def _normalize_measure(comp, nu_i):
    nu = np.asarray(nu_i, dtype=float)
    if nu.shape != comp.nodes.shape:
        raise DimensionError("base measure and grid disagree in length")
    if np.any(nu < 0) or nu.sum() <= 0:
        raise GeometryError("base measure must be nonnegative with positive mass")
    return nu / nu.sum()


def bm_ratio_poly(K_i: ComponentSet, nu_i, Q_i=None, k_range=range(1, 31),
                  samples: int = 0, seed: int = 0) -> BmRatioCurve:
    """For each degree k: the exact grid maximum of
    sup_K |p e^{-kQ}| / ||p e^{-kQ}||_{L^2(nu)} over polynomials of degree k,
    plus an optional random-coefficient sample maximum as a cross-check."""
    nu = _normalize_measure(K_i, nu_i)
    qv = Q_i.values(K_i.nodes) if Q_i is not None else None
    rng = np.random.default_rng(seed)
    ks, ratios, smax = [], [], []
    for k in k_range:
        B = _chebyshev_basis(K_i, int(k))
        damp = np.exp(-k * qv) if qv is not None else None
        rows = B * damp[:, None] if damp is not None else B
        M = _kernel_sup(rows, nu, rows)
        ks.append(int(k))
        ratios.append(M)
        if samples > 0:
            best = 0.0
            for _ in range(samples):
                coef = rng.standard_normal(B.shape[1])
                vals = np.abs(rows @ coef)
                l2 = np.sqrt(np.sum(nu * vals**2))
                if l2 > 0:
                    best = max(best, float(vals.max() / l2))
            smax.append(best)
    return BmRatioCurve(
        ks=np.array(ks),
        ratios=np.array(ratios),
        sample_max=np.array(smax) if samples > 0 else None,
    )


@dataclass(frozen=True)
class RationalFamilySpec:
    """Rational test family for one component: numerators of degree <= a k,
    denominators of degree <= b k with all zeros on the other components."""

    component: int
    pole_nodes: np.ndarray
    pole_weights: np.ndarray
    numerator_factor: float = 1.0
    denominator_factor: float = 1.0
    samples_per_degree: int = 8

    @classmethod
    def from_sets(cls, K: CompactSetTuple, i: int, a: float = 1.0, b: float = 1.0,
                  samples_per_degree: int = 8) -> "RationalFamilySpec":
        if not 0 <= i < K.d:
            raise DimensionError(f"component {i} out of range")
        others = [j for j in range(K.d) if j != i]
        if b > 0:
            if not others:
                raise GeometryError("rational family needs at least two components")
            for j in others:
                if K.components[i].intersects(K.components[j]):
                    raise GeometryError("pole set must be disjoint from the component")
            nodes = np.concatenate([K.components[j].nodes for j in others])
            weights = np.concatenate([K.components[j].weights for j in others])
        else:
            nodes = np.zeros(0, dtype=np.complex128)
            weights = np.zeros(0)
        return cls(
            component=i,
            pole_nodes=nodes,
            pole_weights=weights,
            numerator_factor=a,
            denominator_factor=b,
            samples_per_degree=samples_per_degree,
        )


def bm_ratio_rational(spec: RationalFamilySpec, K_i: ComponentSet, nu_i, Q_i=None,
                      k_range=range(1, 31), samples: int | None = None,
                      seed: int = 0) -> BmRatioCurve:
    """Ratio maxima over p/q with random pole draws from the pole-set
    arclength measure; each draw reduces to the polynomial kernel against the
    pole-damped measure |q|^{-2} dnu.  With b = 0 this is bm_ratio_poly."""
    if spec.denominator_factor == 0 or spec.pole_nodes.size == 0:
        return bm_ratio_poly(K_i, nu_i, Q_i, k_range, samples=0, seed=seed)
    nu = _normalize_measure(K_i, nu_i)
    qv = Q_i.values(K_i.nodes) if Q_i is not None else None
    draws = samples if samples is not None else spec.samples_per_degree
    pw = spec.pole_weights / spec.pole_weights.sum()
    rng = np.random.default_rng(seed)
    ks, ratios = [], []
    for k in k_range:
        deg_num = max(0, int(np.floor(spec.numerator_factor * k)))
        deg_den = max(0, int(np.floor(spec.denominator_factor * k)))
        B = _chebyshev_basis(K_i, deg_num)
        damp = np.exp(-k * qv) if qv is not None else np.ones(K_i.nodes.size)
        best = 0.0
        for _ in range(max(1, draws)):
            poles = rng.choice(spec.pole_nodes, size=deg_den, p=pw)
            logq = np.sum(
                np.log(np.abs(K_i.nodes[:, None] - poles[None, :])), axis=1
            )
            rows = B * (damp * np.exp(-logq))[:, None]
            best = max(best, _kernel_sup(rows, nu, rows))
        ks.append(int(k))
        ratios.append(best)
    return BmRatioCurve(ks=np.array(ks), ratios=np.array(ratios))
