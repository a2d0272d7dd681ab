"""Steady-state light forces and semiclassical Monte-Carlo for a
two-level atom near a weakly pumped nanophotonic waveguide cavity.

Layers, bottom up: `quantum` (truncated master equation, Liouvillian
factorizations), `weakdrive` (closed-form single-excitation limits),
`fields` (mode profile, two-color trap, calibration), `coefficients`
(numeric force/friction/diffusion and the 3D interpolation grid),
`thermo` (equilibrium-temperature maps), `langevin` (trajectory
ensembles), `config`/`cli` (YAML ingestion and artifact export).
"""
from .config import VERSION as __version__
from .config import DEFAULTS, RunConfig, default_config_yaml, parse_config
from .coefficients import (CoefficientGrid, CoefficientPoint, ScalarTable,
                           build_grid, coefficient_point, diffusion_numeric,
                           force_numeric, friction_numeric,
                           scalar_coefficients)
from .errors import (CalibrationError, CavityCoolError, ConfigError,
                     ContractViolationError, GridMetadataError,
                     IntegratorDivergenceError, NonUniqueSteadyStateError,
                     NumericalSolveError, RegressionInstabilityError,
                     TruncationError)
from .fields import (CalibrationTargets, ModeGeometry, TrapParams, calibrate,
                     coupling, total_conservative_force, trap_minimum_z,
                     trap_potential)
from .langevin import (AtomState, EnsembleStats, LoadingCurve, SimConfig,
                       Trajectory, fit_effective_friction, loading_rate,
                       make_cooling_sampler, make_loading_sampler,
                       noise_amplitude, run_ensemble, run_trajectory, step,
                       trap_probability_curve)
from .quantum import (LiouvillianWorkspace, SystemParams, build_hamiltonian,
                      build_liouvillian, observables, steady_state)
from .thermo import (TeqMap, teq, teq_cross_sections, teq_modal,
                     teq_scan_detuning_z)
from .weakdrive import (diffusion_weak, force_weak, friction_weak,
                        regression_oracle_diffusion)

__all__ = [name for name in dir() if not name.startswith("_")]
