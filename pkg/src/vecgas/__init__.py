"""Numerical toolkit for vector equilibrium measures on compact planar sets,
weighted Fekete arrays, k-th order vector transfinite diameters, and the
Gibbs configuration ensembles built from squared Vandermonde densities."""

__version__ = "0.1.0"

from .core import (
    Circle,
    CompactSetTuple,
    Configuration,
    DegreeSchedule,
    Disc,
    InteractionMatrix,
    Interval,
    MassVector,
    WeightTuple,
    angelesco_matrix,
    beta_matrix,
    build_component,
    make_degree_schedule,
    make_interval_set,
    nikishin_matrix,
    validate_hypotheses,
)
from .potential import (
    DiscreteVectorMeasure,
    EnergyBreakdown,
    atoms_measure,
    log_potential,
    mutual_energy,
    partial_potential,
    uniform_measure,
    vector_energy,
)
from .equilibrium import (
    EquilibriumSolution,
    SolverOptions,
    solve_equilibrium,
    usc_upper_approx,
    verify_nonadmissible_fixed_point,
    verify_variational,
)
from .fekete import (
    FeketeOptions,
    FeketeResult,
    VdmValue,
    fekete_optimize,
    log_vdm,
    rationalize_matrix,
    scaling_check,
    transfinite_diameter_estimate,
)
from .metrics import bl_distance, bl_distance_component
from .ensemble import (
    EnsembleSpec,
    NeighborhoodSpec,
    SampleBatch,
    SamplerOptions,
    ball_constrained_minimum,
    ldp_concentration_experiment,
    neighborhood_functionals,
    partition_function,
    rate_function,
    sample_prob_k,
    transition_matrix,
)
from .bmtest import BmRatioCurve, RationalFamilySpec, bm_ratio_poly, bm_ratio_rational
