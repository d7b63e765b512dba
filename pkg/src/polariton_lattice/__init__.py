"""Driven stationary-light polaritons in a periodic lattice.

Parameter mapping, nonlinear transmission spectra with multi-valued branches,
and linear stability of the stationary solutions.
"""

__version__ = "0.1.0"

from .coupled_modes import (FieldSolution, Grid, SolverSettings, integrate_ivp, output_roots,  # noqa: E402
                            solve_linear, solve_nonlinear)
from .params import EffectiveParams, OpticalParams, derive_effective, sweep_effective  # noqa: E402
from .spectrum import (Spectrum, SpectrumPoint, find_peaks, scan_linear, scan_nonlinear,  # noqa: E402
                       shift_study)
from .stability import (GaussianSeed, StabilityOptions, StabilityReport, classify_branches,  # noqa: E402
                        evolve_perturbation, growth_rate_xi, linearized_rhs)

__all__ = [
    "EffectiveParams", "FieldSolution", "GaussianSeed", "Grid", "OpticalParams", "SolverSettings",
    "Spectrum", "SpectrumPoint", "StabilityOptions", "StabilityReport", "classify_branches",
    "derive_effective", "evolve_perturbation", "find_peaks", "growth_rate_xi", "integrate_ivp",
    "linearized_rhs", "output_roots", "scan_linear", "scan_nonlinear", "shift_study", "solve_linear",
    "solve_nonlinear", "sweep_effective",
]
