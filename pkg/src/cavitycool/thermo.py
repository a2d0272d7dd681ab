"""Local equilibrium-temperature estimates and parameter-scan maps.

Temperatures are signed: a positive friction eigenvalue means heating
and shows up as a negative T. Two estimators coexist on purpose. `teq`
is the literal trace formula k_B T = -Tr(D beta^-1)/3 and flags
singular friction with NaN. `teq_modal` projects onto the non-null
friction eigenmodes, which is what the scan maps need: in weak driving
beta is exactly rank one (a scalar profile times the grad-g outer
product), so the literal inverse never exists there and the modal
estimate reduces to -D_nn/beta_nn along the single cooled direction.

Scan maps use the weak-driving scalar profiles with the pump rate
divided out (both tensors scale as epsilon^2), which makes the maps
exactly pump-independent, bit for bit.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import weakdrive
from .constants import K_B, TWO_PI
from .errors import CalibrationError
from .fields import ModeGeometry, TrapParams, coupling, trap_potential
from .quantum import SystemParams

COND_LIMIT = 1e12


def teq(beta, d_total) -> float:
    """Signed k_B T = -Tr(D beta^-1)/(3 k_B); NaN flags singular beta."""
    beta = np.asarray(beta, dtype=float)
    d_total = np.asarray(d_total, dtype=float)
    cond = np.linalg.cond(beta)
    if not np.isfinite(cond) or cond >= COND_LIMIT:
        return float("nan")
    return -np.trace(np.linalg.solve(beta, d_total)) / (3.0 * K_B)


def teq_modal(beta, d_total, rank_tol: float = 1e-10) -> float:
    """Trace formula restricted to the non-null friction eigenmodes.

    Equals `teq` for well-conditioned beta; for the weak-driving
    rank-one tensors it returns the single-mode -D/beta ratio instead
    of a flag. NaN only if beta vanishes entirely.
    """
    beta = 0.5 * (np.asarray(beta, dtype=float)
                  + np.asarray(beta, dtype=float).T)
    lam, v = np.linalg.eigh(beta)
    scale = np.abs(lam).max()
    if scale == 0.0:
        return float("nan")
    keep = np.abs(lam) > rank_tol * scale
    lam = lam[keep]
    v = v[:, keep]
    proj = np.einsum("ik,ij,jk->k", v, np.asarray(d_total, dtype=float), v)
    return -np.sum(proj / lam) / (lam.size * K_B)


@dataclass
class TeqMap:
    """2D signed-temperature map with companion tensor-component maps.

    values[i, j] corresponds to (axis1[i], axis2[j]); beta6/d_dp6 hold
    the sym6 components (xx, yy, zz, xy, xz, yz) per cell and flags
    marks cells where the temperature estimate is undefined.
    """
    axis1: np.ndarray
    axis2: np.ndarray
    values: np.ndarray
    beta6: np.ndarray
    d_dp6: np.ndarray
    flags: np.ndarray
    axis_names: tuple[str, str]
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        bad = ~(np.isfinite(self.values) | self.flags)
        if np.any(bad):
            raise CalibrationError("non-finite map cells without flags")

    def minimum(self):
        """(T_min, axis1 value, axis2 value) over positive-T cells."""
        vals = np.where(self.flags, np.nan, self.values)
        vals = np.where(vals > 0, vals, np.nan)
        if np.all(np.isnan(vals)):
            return float("nan"), float("nan"), float("nan")
        i, j = np.unravel_index(np.nanargmin(vals), vals.shape)
        return float(vals[i, j]), float(self.axis1[i]), float(self.axis2[j])


def _as_axis(rng, n: int) -> np.ndarray:
    rng = np.asarray(rng, dtype=float)
    if rng.ndim == 1 and rng.size > 2:
        return rng
    return np.linspace(rng.flat[0], rng.flat[-1], n)


def _scalar_profiles(params: SystemParams, g):
    """(T_signed, beta_s, d_dp_s) ratios with the pump rate divided out."""
    beta_s = weakdrive.friction_scalar(params, g, eps=1.0)
    d_s = weakdrive.diffusion_dp_scalar(params, g, eps=1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -d_s / beta_s / K_B
    return t, beta_s, d_s


def teq_scan_detuning_z(dp_range, z_range, params: SystemParams,
                        geom: ModeGeometry, shape=(200, 200)) -> TeqMap:
    """Signed T_eq over (pump detuning, height) on the (0, 0, z) axis.

    Pump and cavity detunings track each other (resonances aligned).
    The friction tensor on the axis is rank one along z, so each cell
    carries the modal -D_zz/beta_zz value.
    """
    dps = _as_axis(dp_range, shape[0])
    zs = _as_axis(z_range, shape[1])
    pts = np.zeros((zs.size, 3))
    pts[:, 2] = zs
    g, grad = coupling(pts, geom)
    dzg2 = grad[:, 2] ** 2

    values = np.empty((dps.size, zs.size))
    beta6 = np.zeros((dps.size, zs.size, 6))
    d6 = np.zeros((dps.size, zs.size, 6))
    flags = np.zeros((dps.size, zs.size), dtype=bool)
    for i, dp in enumerate(dps):
        p = params.replace(delta_a=float(dp), delta_c=float(dp))
        t, beta_s, d_s = _scalar_profiles(p, g)
        values[i] = t
        flags[i] = ~np.isfinite(t)
        beta6[i, :, 2] = beta_s * dzg2
        d6[i, :, 2] = d_s * dzg2
    return TeqMap(axis1=dps, axis2=zs, values=values, beta6=beta6, d_dp6=d6,
                  flags=flags, axis_names=("delta_p_rad_s", "z_m"),
                  fixed={"x_m": 0.0, "y_m": 0.0})


def _plane_map(params, geom, ax1, ax2, names, builder, fixed) -> TeqMap:
    p1, p2 = np.meshgrid(ax1, ax2, indexing="ij")
    pts = builder(p1, p2)
    g, grad = coupling(pts, geom)
    t, beta_s, d_s = _scalar_profiles(params, g)
    op6 = np.stack([grad[..., i] * grad[..., j]
                    for i, j in ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))],
                   axis=-1)
    return TeqMap(axis1=ax1, axis2=ax2, values=t,
                  beta6=beta_s[..., None] * op6, d_dp6=d_s[..., None] * op6,
                  flags=~np.isfinite(t), axis_names=names, fixed=fixed)


def teq_cross_sections(planes, params: SystemParams, geom: ModeGeometry,
                       trap: TrapParams, shape=(200, 200)) -> dict:
    """Fig.-style T_eq cross sections through the calibrated trap.

    planes: mapping of plane name ("yz", "xy", "xz") to ((lo1, hi1),
    (lo2, hi2)) range overrides, or None for defaults spanning one
    axial period, the full transverse width, and z in [50, 600] nm.
    The xy plane sits at the trap minimum height; returns the three
    TeqMaps plus a 1D cut dict under "z_cut".
    """
    from .fields import trap_minimum_z
    z_t = trap_minimum_z(trap)
    x_half = np.pi / geom.k_ax
    from .constants import WIDTH
    defaults = {
        "yz": ((-WIDTH / 2, WIDTH / 2), (50e-9, 600e-9)),
        "xy": ((-x_half, x_half), (-WIDTH / 2, WIDTH / 2)),
        "xz": ((-x_half, x_half), (50e-9, 600e-9)),
    }
    if planes:
        defaults.update(planes)
    ax = {k: (_as_axis(v[0], shape[0]), _as_axis(v[1], shape[1]))
          for k, v in defaults.items()}

    def stack3(x, y, z):
        out = np.empty(np.broadcast(x, y, z).shape + (3,))
        out[..., 0], out[..., 1], out[..., 2] = x, y, z
        return out

    maps = {
        "yz": _plane_map(params, geom, *ax["yz"], ("y_m", "z_m"),
                         lambda a, b: stack3(0.0, a, b), {"x_m": 0.0}),
        "xy": _plane_map(params, geom, *ax["xy"], ("x_m", "y_m"),
                         lambda a, b: stack3(a, b, z_t), {"z_m": z_t}),
        "xz": _plane_map(params, geom, *ax["xz"], ("x_m", "z_m"),
                         lambda a, b: stack3(a, 0.0, b), {"y_m": 0.0}),
    }
    zs = _as_axis((50e-9, 600e-9), max(shape))
    cut_pts = np.zeros((zs.size, 3))
    cut_pts[:, 2] = zs
    g, _ = coupling(cut_pts, geom)
    t, beta_s, d_s = _scalar_profiles(params, g)
    maps["z_cut"] = {"z": zs, "t_eq": t, "beta_s": beta_s, "d_dp_s": d_s,
                     "z_t": z_t}
    return maps


def optimal_teq_at(params: SystemParams, bounds_mhz=(1.0, 1000.0)):
    """(T_min, g_at_min) of the weak-driving temperature over g."""
    def t_of(g_mhz):
        t, _, _ = _scalar_profiles(params, TWO_PI * g_mhz * 1e6)
        return float(t) if t > 0 else np.inf

    res = minimize_scalar(t_of, bounds=bounds_mhz, method="bounded",
                          options={"xatol": 1e-7})
    if not res.success:
        raise CalibrationError(f"T_eq minimization failed: {res.message}")
    return float(res.fun), TWO_PI * float(res.x) * 1e6
