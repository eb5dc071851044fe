"""Pseudo-spectral Navier-Stokes on the periodic box, with mild-solution,
local-regularity and critical-norm diagnostics."""

__version__ = "0.1.0"

from .spectral import (  # noqa: E402
    Grid,
    PhysicalField,
    ScalarSpectralField,
    SpectralVelocity,
    curl,
    divergence,
    energy,
    gradient,
    hs_norm,
    laplacian_power,
    leray_project,
    lp_norm,
    nonlinear_term,
    riesz_multiply,
    tail_fraction,
    to_physical,
    to_spectral,
)
from .mild import (  # noqa: E402
    Caps,
    CFLError,
    Outcome,
    PicardError,
    SolveReport,
    Trajectory,
    detect_blowup_proxy,
    duhamel_bilinear,
    evolve,
    heat_propagate,
    picard_solve,
    stokes_mild,
    x_norm,
)
from .pressure import (  # noqa: E402
    harmonic_oscillation_ratio,
    pressure_from_velocity,
    windowed_pressure_split,
)
from .experiments import InitialDataSpec, make_initial_data  # noqa: E402

__all__ = [
    "__version__",
    "Grid",
    "PhysicalField",
    "ScalarSpectralField",
    "SpectralVelocity",
    "curl",
    "divergence",
    "energy",
    "gradient",
    "hs_norm",
    "laplacian_power",
    "leray_project",
    "lp_norm",
    "nonlinear_term",
    "riesz_multiply",
    "tail_fraction",
    "to_physical",
    "to_spectral",
    "Caps",
    "CFLError",
    "Outcome",
    "PicardError",
    "SolveReport",
    "Trajectory",
    "detect_blowup_proxy",
    "duhamel_bilinear",
    "evolve",
    "heat_propagate",
    "picard_solve",
    "stokes_mild",
    "x_norm",
    "harmonic_oscillation_ratio",
    "pressure_from_velocity",
    "windowed_pressure_split",
    "InitialDataSpec",
    "make_initial_data",
]
