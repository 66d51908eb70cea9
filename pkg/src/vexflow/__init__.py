"""Variable-exponent p(t,x)-Laplacian diffusion flows on 2D grids.

Discrete calculus, variable-exponent functionals (Luxemburg norms, mixed
TV/modular energies), a regularized explicit flow with weak-inequality
checkers, a proximal semigroup solver, and an image-restoration CLI.
"""

from . import backends
from .exponent import (
    ExponentField,
    ExponentSchedule,
    critical_mask,
    edge_adaptive_exponent,
    schedule_from_rule,
    validate_gap,
)
from .flow import (
    FidelitySpec,
    FlowConfig,
    FlowDivergedError,
    FlowResult,
    flux_constraints,
    monotonicity_gap,
    regularized_flux,
    rhs,
    run_flow,
    stability_dt,
    weak_residual,
)
from .functionals import (
    EnergyBreakdown,
    Trajectory,
    luxemburg_norm,
    modular,
    psi_energy,
    psi_energy_smoothed,
    total_variation,
    vpv,
    vpv_p,
)
from .grid import Grid2D, MatrixField, VectorField, divergence, gradient, inner, norm
from .proximal import ProxConfig, prox_step, run_semigroup, subgradient_check

__version__ = "0.1.0"
