"""Simulation lab for a discrete-time walker riding a stirred lattice environment.

Marks (transition-probability vectors) sit one per site and get exchanged
by rate-gamma edge clocks; a discrete-time walker steps by the vector under
its feet.  The package provides the environment types, the stirring
simulator, quenched/annealed/refresh walkers, exact kernel numerics with
independent oracles, and seeded experiment drivers with deterministic
CSV/JSON output.
"""

from .env import (
    EnvironmentWindow,
    InvalidSimplexError,
    MuDistribution,
    SiteClass,
    ToleranceSchedule,
    TransitionVector,
    TypeIndex,
    WindowTruncationError,
    annealed_drift,
    drift,
    empirical_density,
    is_good,
    type_of,
    type_probabilities,
    window_from_iid,
)
from .interchange import (
    BoxGeometry,
    EventSchedule,
    SwapEvent,
    evolve,
    required_buffer,
    sample_schedule,
    snapshot_series,
    stir_sites,
)
from .kernel import (
    KernelTable,
    ball_kernel,
    build_table,
    crown_error_sums,
    crown_extremes,
    exact_mean,
    gaussian_kernel,
    kernel,
    kernel_1d,
    lclt_error,
)
from .walker import (
    ProjectionFrame,
    WalkSample,
    WalkSeeds,
    project,
    projection_frame,
    run_annealed,
    run_infinite_gamma,
    run_quenched,
    step,
)

__version__ = "0.1.0"
