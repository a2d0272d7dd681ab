"""Shared test utilities: parameter factories, random draws within the
default parameter magnitudes, and synthetic constant-coefficient grids
for integrator tests."""
import numpy as np

from cavitycool import constants as c
from cavitycool import _kernel
from cavitycool.coefficients import CoefficientGrid, GRID_FORMAT, mat_to_sym6
from cavitycool.fields import TrapParams
from cavitycool.langevin import noise_amplitude
from cavitycool.quantum import SystemParams


def default_params(**kw) -> SystemParams:
    base = dict(kappa=c.KAPPA, gamma=c.GAMMA, delta_a=c.DELTA_P,
                delta_c=c.DELTA_P, epsilon=c.EPSILON,
                k_photon=c.TWO_PI / c.WAVELENGTH, mass=c.CS_MASS,
                n_max=c.N_MAX)
    base.update(kw)
    return SystemParams(**base)


def draw_params(rng: np.random.Generator, n_max: int = 2) -> SystemParams:
    """Random physical parameter set within the default magnitudes."""
    mhz = c.TWO_PI * 1e6
    return SystemParams(
        kappa=rng.uniform(20.0, 200.0) * mhz,
        gamma=rng.uniform(0.5, 10.0) * mhz,
        delta_a=rng.uniform(-300.0, 300.0) * mhz,
        delta_c=rng.uniform(-300.0, 300.0) * mhz,
        epsilon=rng.uniform(0.05, 10.0) * mhz,
        k_photon=c.TWO_PI / c.WAVELENGTH,
        mass=c.CS_MASS,
        n_max=n_max)


def draw_coupling(rng: np.random.Generator):
    """(g, grad_g) with |grad g / g| around the evanescent 10/um scale."""
    g = rng.uniform(0.0, 300.0) * c.TWO_PI * 1e6
    grad = rng.standard_normal(3) * g * 1e7
    return g, grad


def const_grid(force=(0.0, 0.0, 0.0), beta=None, d_dp=None, d_se=0.0,
               box=((-0.1, 0.1), (-0.1, 0.1), (1e-9, 0.99))) -> CoefficientGrid:
    """Uniform-coefficient grid (2x2x2 nodes) for integrator tests.

    The z-range reaches down to nm scale so escape-barrier path scans
    stay inside the box.
    """
    beta = np.zeros((3, 3)) if beta is None else np.asarray(beta, dtype=float)
    d_dp = np.zeros((3, 3)) if d_dp is None else np.asarray(d_dp, dtype=float)
    axes = tuple(np.linspace(lo, hi, 2) for lo, hi in box)
    row = np.zeros(_kernel.NFIELDS)
    row[_kernel.F0:_kernel.F0 + 3] = force
    row[_kernel.BETA0:_kernel.BETA0 + 6] = mat_to_sym6(beta)
    row[_kernel.DDP0:_kernel.DDP0 + 6] = mat_to_sym6(d_dp)
    row[_kernel.DSE] = d_se
    row[_kernel.B0:_kernel.B0 + 6] = mat_to_sym6(
        noise_amplitude(d_dp + d_se * np.eye(3)))
    table = np.broadcast_to(row, (2, 2, 2, _kernel.NFIELDS)).copy()
    return CoefficientGrid(axes, table,
                           {"format": GRID_FORMAT, "synthetic": True})


def soft_trap() -> TrapParams:
    """Trap with amplitudes too small to matter (constructor still wants
    u_blue > 0 > u_red and c4 > 0)."""
    return TrapParams(u_blue=1e-45, u_red=-1e-45, d_blue=80e-9,
                      d_red=120e-9, k_red=c.K_RED, q_blue=c.Q_BLUE,
                      q_red=c.Q_RED, c4=1e-80, lambda_tilde=136e-9)


def wide_escape() -> np.ndarray:
    """Escape bounds that a slow particle near z = 0.5 m never reaches."""
    return np.array([0.099, 0.099, 2e-9, 0.98])
