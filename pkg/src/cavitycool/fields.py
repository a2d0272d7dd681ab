"""Coupling profile, two-color trap with surface interaction, calibration.

The guided mode enters only through four numbers (surface coupling g0,
axial wavenumber, transverse cosine scale, evanescent decay length):

    g(x, y, z) = g0 cos(k_ax x) cos(y/q) exp(-z/d)

The optical trap is a blue travelling wave plus a red standing wave,
with the atom-surface interaction modeled as -C4/(z^3 (z + lambda_t)):

    U = u_b cos^2(y/q_b) e^{-2z/d_b}
      + u_r cos^2(k_r x) cos^2(y/q_r) e^{-2z/d_r}
      - C4 / (z^3 (z + lambda_t))

Neither the mode solver output nor the trap intensities are direct
inputs; `calibrate` reconstructs them from two anchors: the cooling
optimum sits at z_c, the trap minimum at z_t with a chosen depth. The kernel twin of the potential lives in _kernel.py and is
pinned to this one by a test.
"""
import io
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from . import constants as c
from .constants import K_B, TWO_PI
from .errors import CalibrationError, ContractViolationError
from .quantum import SystemParams
from .weakdrive import diffusion_dp_scalar, friction_scalar


@dataclass(frozen=True)
class ModeGeometry:
    g0: float = 0.0              # rad/s; 0 means "not yet calibrated"
    k_ax: float = c.K_AX         # rad/m
    q_len: float = c.Q_LEN       # m
    d_len: float = c.DECAY_LENGTH  # m

    def __post_init__(self):
        if self.g0 < 0 or self.k_ax <= 0 or self.q_len <= 0 or self.d_len <= 0:
            raise ContractViolationError("ModeGeometry lengths/rates must be positive")


@dataclass(frozen=True)
class TrapParams:
    u_blue: float                # J, > 0
    u_red: float                 # J, < 0
    d_blue: float = c.D_BLUE
    d_red: float = c.D_RED
    k_red: float = c.K_RED
    q_blue: float = c.Q_BLUE
    q_red: float = c.Q_RED
    c4: float = c.C4
    lambda_tilde: float = c.LAMBDA_TILDE

    def __post_init__(self):
        if self.u_blue <= 0:
            raise ContractViolationError("u_blue must be positive (repulsive)")
        if self.u_red >= 0:
            raise ContractViolationError("u_red must be negative (attractive)")
        if not self.d_blue < self.d_red:
            raise ContractViolationError("need d_blue < d_red for a near-surface barrier")
        if self.c4 <= 0:
            raise ContractViolationError("c4 must be positive")


def coupling(x, geom: ModeGeometry):
    """(g, grad_g) at position x = (x, y, z); broadcasts over trailing axes."""
    x = np.asarray(x, dtype=float)
    xx, yy, zz = x[..., 0], x[..., 1], x[..., 2]
    cx = np.cos(geom.k_ax * xx)
    cy = np.cos(yy / geom.q_len)
    ez = np.exp(-zz / geom.d_len)
    g = geom.g0 * cx * cy * ez
    grad = np.stack([
        -geom.g0 * geom.k_ax * np.sin(geom.k_ax * xx) * cy * ez,
        -geom.g0 * cx * np.sin(yy / geom.q_len) / geom.q_len * ez,
        -g / geom.d_len,
    ], axis=-1)
    return g, grad


def trap_potential(x, trap: TrapParams):
    """(U, grad_U) of the conservative trap + surface potential; requires z > 0."""
    x = np.asarray(x, dtype=float)
    xx, yy, zz = x[..., 0], x[..., 1], x[..., 2]
    if np.any(zz <= 0):
        raise ContractViolationError("trap_potential defined for z > 0 only")
    cb = np.cos(yy / trap.q_blue)
    cr_y = np.cos(yy / trap.q_red)
    cr_x = np.cos(trap.k_red * xx)
    eb = np.exp(-2.0 * zz / trap.d_blue)
    er = np.exp(-2.0 * zz / trap.d_red)
    blue = trap.u_blue * cb ** 2 * eb
    red = trap.u_red * cr_x ** 2 * cr_y ** 2 * er
    cp_den = zz ** 3 * (zz + trap.lambda_tilde)
    cp = -trap.c4 / cp_den
    u = blue + red + cp

    du_dx = trap.u_red * cr_y ** 2 * er \
        * (-2.0 * trap.k_red * cr_x * np.sin(trap.k_red * xx))
    du_dy = (trap.u_blue * eb * (-2.0 * cb * np.sin(yy / trap.q_blue) / trap.q_blue)
             + trap.u_red * cr_x ** 2 * er
             * (-2.0 * cr_y * np.sin(yy / trap.q_red) / trap.q_red))
    dcp_dz = trap.c4 * (3.0 * zz ** 2 * (zz + trap.lambda_tilde) + zz ** 3) \
        / cp_den ** 2
    du_dz = (-2.0 / trap.d_blue) * blue + (-2.0 / trap.d_red) * red + dcp_dz
    return u, np.stack([du_dx, du_dy, du_dz], axis=-1)


def total_conservative_force(x, trap: TrapParams):
    """-grad U of the trap + surface potential."""
    _, grad = trap_potential(x, trap)
    return -grad


@dataclass(frozen=True)
class CalibrationTargets:
    d_len: float = c.DECAY_LENGTH
    z_cool: float = c.Z_COOL         # T_eq minimum position at delta_ref
    z_trap: float = c.Z_TRAP
    depth: float = c.TRAP_DEPTH
    delta_ref: float = c.DELTA_P     # pump detuning anchoring z_cool


def optimal_coupling(params: SystemParams, bounds_mhz=(1.0, 1000.0)) -> float:
    """Coupling that minimizes the weak-driving equilibrium temperature.

    Pump-rate independent: the temperature is a ratio of two
    epsilon^2-homogeneous scalars, evaluated here with eps = 1.
    """
    def teq_of(g_mhz: float) -> float:
        g = TWO_PI * g_mhz * 1e6
        t = -diffusion_dp_scalar(params, g, eps=1.0) \
            / friction_scalar(params, g, eps=1.0) / K_B
        return t if t > 0 else np.inf

    res = minimize_scalar(teq_of, bounds=bounds_mhz, method="bounded",
                          options={"xatol": 1e-7})
    if not res.success or not np.isfinite(res.fun):
        raise CalibrationError(f"T_eq minimization failed: {res.message}")
    lo, hi = bounds_mhz
    if res.x < lo * 1.001 or res.x > hi * 0.999:
        raise CalibrationError(
            f"T_eq minimum pinned to search bound at {res.x:.3f} MHz; "
            f"bracket was [{lo}, {hi}] MHz")
    return TWO_PI * res.x * 1e6


def calibrate(targets: CalibrationTargets | None = None,
              params: SystemParams | None = None,
              geom_kw: dict | None = None,
              trap_kw: dict | None = None) -> tuple[ModeGeometry, TrapParams]:
    """Solve for g0 and the trap amplitudes from the calibration anchors.

    geom_kw/trap_kw override the non-calibrated defaults (decay
    lengths, wavenumbers, transverse scales) before solving.
    """
    targets = targets or CalibrationTargets()
    params = params or SystemParams()
    params = params.replace(delta_a=targets.delta_ref, delta_c=targets.delta_ref)

    g_star = optimal_coupling(params)
    geom_kw = dict(geom_kw or {})
    geom_kw.setdefault("d_len", targets.d_len)
    geom = ModeGeometry(g0=g_star * np.exp(targets.z_cool / geom_kw["d_len"]),
                        **geom_kw)

    trap_kw = dict(trap_kw or {})
    d_b = trap_kw.get("d_blue", c.D_BLUE)
    d_r = trap_kw.get("d_red", c.D_RED)
    c4 = trap_kw.get("c4", c.C4)
    lam = trap_kw.get("lambda_tilde", c.LAMBDA_TILDE)
    z_t = targets.z_trap
    cp_den = z_t ** 3 * (z_t + lam)
    cp = -c4 / cp_den
    dcp = c4 * (3.0 * z_t ** 2 * (z_t + lam) + z_t ** 3) / cp_den ** 2
    a = np.array([[np.exp(-2 * z_t / d_b), np.exp(-2 * z_t / d_r)],
                  [(-2 / d_b) * np.exp(-2 * z_t / d_b),
                   (-2 / d_r) * np.exp(-2 * z_t / d_r)]])
    rhs = np.array([-targets.depth - cp, -dcp])
    try:
        u_b, u_r = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise CalibrationError(f"trap amplitude solve singular: {exc}") from exc
    if u_b <= 0 or u_r >= 0:
        raise CalibrationError(
            f"trap calibration produced unphysical amplitudes "
            f"u_blue = {u_b:.3e} J, u_red = {u_r:.3e} J; "
            f"check decay lengths (d_blue = {d_b:.2e}, d_red = {d_r:.2e})")
    trap = TrapParams(u_blue=float(u_b), u_red=float(u_r), **trap_kw)

    _check_single_minimum(trap, z_t)
    return geom, trap


def trap_minimum_z(trap: TrapParams, bounds=(50e-9, 500e-9)) -> float:
    """Height of the on-axis trap minimum."""
    res = minimize_scalar(
        lambda z: trap_potential(np.array([0.0, 0.0, z]), trap)[0],
        bounds=bounds, method="bounded", options={"xatol": 1e-13})
    if not res.success:
        raise CalibrationError(f"trap minimum search failed: {res.message}")
    return float(res.x)


def _check_single_minimum(trap: TrapParams, z_t: float):
    zs = np.linspace(50e-9, 500e-9, 2000)
    pts = np.zeros((zs.size, 3))
    pts[:, 2] = zs
    _, grad = trap_potential(pts, trap)
    signs = np.sign(grad[:, 2])
    crossings = np.nonzero(np.diff(signs) != 0)[0]
    if len(crossings) != 1:
        raise CalibrationError(
            f"trap U(0,0,z) has {len(crossings)} stationary points on "
            f"(50, 500) nm, expected exactly one minimum near z_t")
    z_min = zs[crossings[0]]
    if abs(z_min - z_t) > 10e-9:
        raise CalibrationError(
            f"trap minimum at {z_min * 1e9:.1f} nm, target {z_t * 1e9:.1f} nm")


def calibration_report(geom: ModeGeometry, trap: TrapParams,
                       targets: CalibrationTargets | None = None) -> str:
    """Human-readable summary persisted alongside grid caches."""
    targets = targets or CalibrationTargets()
    zs = np.linspace(60e-9, 790e-9, 4000)
    pts = np.zeros((zs.size, 3))
    pts[:, 2] = zs
    u, _ = trap_potential(pts, trap)
    i_min = int(np.argmin(u))
    buf = io.StringIO()
    w = buf.write
    w("calibration report\n")
    w(f"  g0/2pi            = {geom.g0 / TWO_PI / 1e6:.4f} MHz\n")
    w(f"  g(z_cool)/2pi     = {geom.g0 * np.exp(-targets.z_cool / geom.d_len) / TWO_PI / 1e6:.4f} MHz\n")
    w(f"  d                 = {geom.d_len * 1e9:.2f} nm\n")
    w(f"  k_ax              = {geom.k_ax:.6e} rad/m\n")
    w(f"  q                 = {geom.q_len * 1e9:.3f} nm\n")
    w(f"  u_blue            = {trap.u_blue / K_B * 1e3:.4f} mK*kB"
      f" (d_blue = {trap.d_blue * 1e9:.1f} nm)\n")
    w(f"  u_red             = {trap.u_red / K_B * 1e3:.4f} mK*kB"
      f" (d_red = {trap.d_red * 1e9:.1f} nm)\n")
    w(f"  k_red             = {trap.k_red:.6e} rad/m\n")
    w(f"  trap minimum      = {u[i_min] / K_B * 1e3:.4f} mK*kB"
      f" at z = {zs[i_min] * 1e9:.1f} nm\n")
    w(f"  U(0,0,500nm)      = {u[np.argmin(abs(zs - 500e-9))] / K_B * 1e6:.2f} uK*kB\n")
    return buf.getvalue()
