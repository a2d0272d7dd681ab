"""Closed-form weak-driving results and the quantum-regression oracle.

Everything in this module is analytic in the system parameters. The
scalar helpers (suffix `_scalar`) return the coefficient multiplying
the geometric factor: forces carry one factor of grad g, friction and
dipole-force diffusion carry the rank-1 tensor outer(grad g, grad g).
They accept array-valued g so parameter scans stay vectorized.

Each scalar is exactly proportional to epsilon**2; the `eps` argument
can therefore be set to 1.0 by callers that only need ratios (the
equilibrium-temperature scans rely on this for exact pump-rate
invariance).
"""
from dataclasses import dataclass

import numpy as np

from .constants import HBAR
from .errors import RegressionInstabilityError
from .quantum import SystemParams


@dataclass(frozen=True)
class WeakDriveContext:
    """Position-dependent inputs of the weak-driving formulas."""

    q_complex: complex
    chi: float
    g: float
    grad_g: np.ndarray

    @classmethod
    def at(cls, params: SystemParams, g: float, grad_g) -> "WeakDriveContext":
        q = q_factor(params, g)
        chi = abs(q) ** 2 - (params.gamma ** 2 + params.delta_a ** 2 + g ** 2) \
            * params.epsilon ** 2
        return cls(q_complex=q, chi=chi, g=float(g),
                   grad_g=np.asarray(grad_g, dtype=float))


def q_factor(params: SystemParams, g):
    """Q = Gamma kappa + g^2 - Da Dc - i (Dc Gamma + Da kappa)."""
    return (params.gamma * params.kappa + np.asarray(g) ** 2
            - params.delta_a * params.delta_c
            - 1j * (params.delta_c * params.gamma
                    + params.delta_a * params.kappa))


def rho0_weak(ctx: WeakDriveContext, params: SystemParams) -> np.ndarray:
    """Steady state on {|1,g>, |0,e>, |0,g>} to second order in the pump."""
    q = ctx.q_complex
    q2 = abs(q) ** 2
    g, eps = ctx.g, params.epsilon
    da, gamma = params.delta_a, params.gamma
    rho = np.array([
        [(gamma ** 2 + da ** 2) * eps ** 2, g * (da + 1j * gamma) * eps ** 2,
         q.conjugate() * (gamma - 1j * da) * eps],
        [g * (da - 1j * gamma) * eps ** 2, g ** 2 * eps ** 2,
         -1j * q.conjugate() * g * eps],
        [q * (gamma + 1j * da) * eps, 1j * q * g * eps, ctx.chi],
    ], dtype=complex)
    return rho / q2


def n_bar_weak(params: SystemParams, g):
    q2 = np.abs(q_factor(params, g)) ** 2
    return (params.gamma ** 2 + params.delta_a ** 2) * params.epsilon ** 2 / q2


def p_e_weak(params: SystemParams, g):
    q2 = np.abs(q_factor(params, g)) ** 2
    return np.asarray(g) ** 2 * params.epsilon ** 2 / q2


def force_scalar(params: SystemParams, g, eps=None):
    """Scalar s(g) with <F> = s(g) * grad g; equals -hbar grad(g^2) Da eps^2/|Q|^2."""
    eps = params.epsilon if eps is None else eps
    q2 = np.abs(q_factor(params, g)) ** 2
    return -2.0 * HBAR * params.delta_a * np.asarray(g) * eps ** 2 / q2


def force_weak(ctx: WeakDriveContext, params: SystemParams) -> np.ndarray:
    return force_scalar(params, ctx.g) * ctx.grad_g


def friction_scalar(params: SystemParams, g, eps=None):
    """Scalar b(g) with beta_ij = b(g) * d_i g d_j g.

    Verbatim transcription of the two-part polynomial expression; the
    numeric linear-response path is the independent check on it.
    """
    eps = params.epsilon if eps is None else eps
    g = np.asarray(g, dtype=float)
    da, dc = params.delta_a, params.delta_c
    ga, ka = params.gamma, params.kappa
    q2 = np.abs(q_factor(params, g)) ** 2
    t1 = (-da ** 3 * dc ** 4 * ga - da ** 2 * dc ** 3 * g ** 2 * ga
          + da * dc ** 2 * g ** 4 * ga + dc * g ** 6 * ga
          - da * dc ** 4 * ga ** 3 + dc ** 3 * g ** 2 * ga ** 3
          - 2 * da ** 3 * dc ** 2 * g ** 2 * ka + 2 * da * g ** 6 * ka
          + 2 * dc * g ** 4 * ga ** 2 * ka
          - 2 * da ** 3 * dc ** 2 * ga * ka ** 2
          - da ** 2 * dc * g ** 2 * ga * ka ** 2
          + 3 * da * g ** 4 * ga * ka ** 2
          - 2 * da * dc ** 2 * ga ** 3 * ka ** 2
          + dc * g ** 2 * ga ** 3 * ka ** 2
          - 2 * da ** 3 * g ** 2 * ka ** 3
          - da ** 3 * ga * ka ** 4 - da * ga ** 3 * ka ** 4)
    t2 = (-2 * da ** 2 * dc ** 2 * ga + 2 * g ** 4 * ga - 2 * dc ** 2 * ga ** 3
          - 4 * da ** 3 * dc * ka + 4 * da ** 2 * g ** 2 * ka
          - 4 * da * dc * ga ** 2 * ka + 4 * g ** 2 * ga ** 2 * ka
          + 2 * da ** 2 * ga * ka ** 2 + 2 * ga ** 3 * ka ** 2)
    return -4.0 * HBAR * eps ** 2 * (t1 + da * g ** 2 * t2) / q2 ** 3


def friction_weak(ctx: WeakDriveContext, params: SystemParams) -> np.ndarray:
    return friction_scalar(params, ctx.g) * np.outer(ctx.grad_g, ctx.grad_g)


def diffusion_dp_scalar(params: SystemParams, g, eps=None):
    """Scalar d(g) with D_dp,ij = d(g) * d_i g d_j g."""
    eps = params.epsilon if eps is None else eps
    g = np.asarray(g, dtype=float)
    q2 = np.abs(q_factor(params, g)) ** 2
    bracket = 1.0 + 4.0 * params.delta_a * g ** 2 \
        * (params.delta_c * params.gamma + params.delta_a * params.kappa) \
        / (params.gamma * q2)
    return HBAR ** 2 * eps ** 2 * params.gamma / q2 * bracket


def diffusion_se_scalar(params: SystemParams, g, eps=None):
    """Isotropic spontaneous-emission diffusion, hbar^2 k^2 Gamma p_e."""
    eps = params.epsilon if eps is None else eps
    q2 = np.abs(q_factor(params, g)) ** 2
    return (HBAR ** 2 * params.k_photon ** 2 * params.gamma
            * np.asarray(g) ** 2 * eps ** 2 / q2)


def diffusion_weak(ctx: WeakDriveContext,
                   params: SystemParams) -> tuple[np.ndarray, float]:
    """(D_dp tensor, D_se scalar); total D is D_dp + D_se * identity."""
    d_dp = diffusion_dp_scalar(params, ctx.g) * np.outer(ctx.grad_g, ctx.grad_g)
    return d_dp, float(diffusion_se_scalar(params, ctx.g))


def pump_potential_scalar(params: SystemParams, g, eps=None):
    """Pseudo-potential phi(g) with force_weak = -grad phi(g(x)).

    The weak-driving force is a function of g times grad g, hence
    conservative; this is its explicit antiderivative, used for energy
    bookkeeping in the Monte-Carlo module.
    """
    eps = params.epsilon if eps is None else eps
    g = np.asarray(g, dtype=float)
    a = params.gamma * params.kappa - params.delta_a * params.delta_c
    b = params.delta_c * params.gamma + params.delta_a * params.kappa
    if b == 0.0:
        # undriven-detuning corner: F ~ -hbar Da grad(g^2) eps^2/(a+g^2)^2
        return HBAR * params.delta_a * eps ** 2 * (1.0 / a - 1.0 / (a + g ** 2))
    return HBAR * params.delta_a * eps ** 2 / b \
        * (np.arctan((a + g ** 2) / b) - np.arctan(a / b))


def regression_system(ctx: WeakDriveContext, params: SystemParams):
    """Drift matrices and steady initial conditions of the two-time system.

    Returns (A, C, ic_y, ic_ydag, ic_x): A drives the first moments
    Y = (a, sigma_-); C drives the quadratic vector X = (a^dag sigma_-
    + sigma_+ a, (a^dag sigma_- - sigma_+ a)/i, a^dag a, sigma_+ sigma_-);
    the initial conditions are products with delta X_1 evaluated on the
    weak-driving steady state.
    """
    g = ctx.g
    da, dc = params.delta_a, params.delta_c
    ga, ka = params.gamma, params.kappa
    eps = params.epsilon
    q = ctx.q_complex
    q2 = abs(q) ** 2

    a_mat = np.array([[1j * dc - ka, -1j * g],
                      [-1j * g, 1j * da - ga]], dtype=complex)
    c_mat = np.array([[-(ga + ka), -(da - dc), 0.0, 0.0],
                      [da - dc, -(ga + ka), -2.0 * g, 2.0 * g],
                      [0.0, g, -2.0 * ka, 0.0],
                      [0.0, -g, 0.0, -2.0 * ga]], dtype=complex)

    sigma_p = 1j * q * g * eps / q2
    a_dag = q * (ga + 1j * da) * eps / q2
    p_e = g ** 2 * eps ** 2 / q2
    n_bar = (ga ** 2 + da ** 2) * eps ** 2 / q2
    sp_a = g * (da + 1j * ga) * eps ** 2 / q2
    ad_sm = g * (da - 1j * ga) * eps ** 2 / q2

    ic_y = np.zeros(2, dtype=complex)            # <delta X_1 . Y> vanishes at O(eps^2)
    ic_ydag = np.array([sigma_p, a_dag], dtype=complex)
    ic_x = np.array([p_e + n_bar, -1j * (p_e - n_bar), sp_a, ad_sm],
                    dtype=complex)
    return a_mat, c_mat, ic_y, ic_ydag, ic_x


def regression_oracle_diffusion(ctx: WeakDriveContext,
                                params: SystemParams) -> np.ndarray:
    """D_dp from the Laplace-domain quantum-regression route.

    Independent of the closed form in diffusion_weak: integrates the
    two-time correlation of delta X_1 by solving the s = 0 Laplace
    equations of the coupled moment system, L{x} = -(drift)^-1 x(0).
    """
    a_mat, c_mat, ic_y, ic_ydag, ic_x = regression_system(ctx, params)
    for name, m in (("A", a_mat), ("C", c_mat)):
        if np.linalg.eigvals(m).real.max() >= 0.0:
            raise RegressionInstabilityError(
                f"regression drift {name} has a non-decaying mode")
    l_y = -np.linalg.solve(a_mat, ic_y)
    l_ydag = -np.linalg.solve(a_mat.conj(), ic_ydag)
    l_inhom = np.array([l_y[1] + l_ydag[1],
                        -1j * (l_y[1] - l_ydag[1]),
                        l_y[0] + l_ydag[0],
                        0.0], dtype=complex)
    l_x = -np.linalg.solve(c_mat, ic_x + params.epsilon * l_inhom)
    scalar = HBAR ** 2 * l_x[0].real
    return scalar * np.outer(ctx.grad_g, ctx.grad_g)
