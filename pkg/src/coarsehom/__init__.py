"""Uniformly finite 0-homology on finite windows of model spaces.

Flow/min-cut decisions with certificates (:mod:`decider`), isoperimetric
and Foelner evidence (:mod:`amenability`) and discrete spectral counting
checks (:mod:`spectral`).
"""
from .space import (
    Region,
    SpaceError,
    SpaceSpec,
    Window,
    WindowBudgetError,
    ball,
    build_window,
    r_boundary,
    region_volume,
)
from .chains import Chain0, Chain1, ChainError, boundary, full_boundary, throughput, uf_norm0
from .decider import (
    PSC,
    CapacityResult,
    DecideConfig,
    DecisionError,
    FlowProblem,
    InfeasibleDemandError,
    NonConvergenceError,
    Obstruction,
    TailSet,
    Verdict,
    decide,
    exhaustive_c_star,
    extract_tails,
    make_demand,
    min_capacity,
    psc_verdict,
    solve_feasibility,
)
from .amenability import (
    FoelnerReport,
    IsoperimetricProfile,
    cross_check_equivalence,
    foelner_search,
    isoperimetric_profile,
)
from .spectral import (
    MeshSpec,
    SpectralError,
    SpectrumReport,
    WeylReport,
    closed_form_spectrum,
    counting_function,
    covering_number,
    laplacian_spectrum,
    packing_count,
    verify_eigen_covering_bound,
    weyl_check,
)

__version__ = "0.1.0"
