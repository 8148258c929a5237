"""Spectral Galerkin Monte Carlo simulator for variable-density
incompressible flow driven by Brownian and Lévy jump noise."""

__version__ = "0.1.0"

from .basis import build_basis, eval_velocity, grad_sq_norm, weighted_inner  # noqa: E402,F401
from .config import RunConfig, parse_config  # noqa: E402,F401
from .forcing import builtin as forcing_builtin  # noqa: E402,F401
from .forcing import verify_contract  # noqa: E402,F401
from .galerkin import assemble_mass, convection_rhs, project_force, step  # noqa: E402,F401
from .harness import (  # noqa: E402,F401
    gronwall_comparator,
    increment_statistic,
    ito_isometry_check,
    run_ensemble,
    simulate_path,
    stopping_time,
)
from .noise import (  # noqa: E402,F401
    compensated_increment,
    make_measure,
    sample_brownian,
    sample_jumps,
    sample_noise_path,
)
from .transport import advance_density, reciprocal_check  # noqa: E402,F401
