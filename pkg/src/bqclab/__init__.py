"""Blended quasicontinuum energies on a periodic atomic chain."""

from .blend import (
    BlendFunction,
    BlendShape,
    bqce_alpha_beta,
    bqnl_alpha_beta,
    build_blend,
    coupling_seminorm,
    cubic_shape,
    get_shape,
    ghost_seminorm,
    linear_shape,
    optimal_shape,
    quintic_shape,
)
from .energy import (
    AdmissibilityError,
    EnergyModel,
    atomistic,
    bqce,
    bqnl,
    cauchy_born,
    custom_bqc,
    first_variation,
    hessian_coeff_gap,
    qce,
    qnl,
    second_variation,
    value,
)
from .lattice import (
    Deformation,
    Displacement,
    DualFunctional,
    LatticeConfig,
    dual_norm,
    forces_to_dual,
    lp_norm,
)
from .potential import LennardJones, Morse, Potential, get_potential
from .solve import DeadLoad, SolveOptions, continuation, equilibrate
from .stability import (
    StabilityReport,
    a_posteriori_stability_bound,
    a_priori_stability_bound,
    coercivity,
    critical_strain,
)

__version__ = "0.1.0"
