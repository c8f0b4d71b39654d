"""kcsim: simulation and verification toolkit for kinetic Cucker-Smale
flocking with velocity-space noise.

Two solvers for the same equation: a mean-field particle method (RK4 /
Euler-Maruyama) and a conservative phase-space grid method (Strang-split
upwind transport, alignment drift, velocity diffusion), plus diagnostics that
numerically check the conservation, dissipation, support, growth, stability,
and vanishing-noise properties of the model.
"""

from .config import RunConfig, parse_config
from .diagnostics import (
    DiagnosticsSeries,
    DiagRecord,
    dissipation_rate,
    energy_ledger,
    grid_norms,
    pairwise_distance,
    support_bound_check,
)
from .errors import (
    BlowUpError,
    ConfigError,
    ExtrapolationError,
    GeometryError,
    InvalidStateError,
    KcsError,
    SnapshotFormatError,
    StepSizeError,
)
from .grid import (
    BumpCompact,
    Maxwellian,
    PhaseGrid,
    TwoBeam,
    full_step,
    init_grid,
    sample_density,
    substep_diffuse_v,
    substep_drift_v,
    substep_transport_x,
)
from .model import (
    FieldPair,
    KernelSpec,
    SimParams,
    WeightSpec,
    alignment_field_grid,
    eval_kernel,
    eval_L,
    eval_weights,
    validate_kernel_bounds,
)
from .particles import (
    CharacteristicState,
    NoiseStream,
    ParticleEnsemble,
    density_along_characteristic,
    empirical_moments,
    pairwise_force,
    solve_characteristic,
    step_deterministic,
    step_stochastic,
)
from .runner import simulate_grid, simulate_particles

__version__ = "0.1.0"
