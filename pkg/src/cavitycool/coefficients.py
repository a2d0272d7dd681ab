"""Numeric force, friction, and diffusion from the full truncated-space
steady state, and dense coefficient grids for the Monte-Carlo engine.

Per-point recipes (all linear solves against one LU factorization):

    force:     F_i = -hbar * (d_i g) * Tr(G rho0),  G = a'sm + a sp
    friction:  solve L drho = -(dL/dg) rho0, then L rho1 = drho;
               beta_ij = -hbar (d_i g)(d_j g) Tr(G rho1)
    diffusion: y = (-L^-1)(G rho0 - <G> rho0) on the traceless subspace;
               d_dp_ij = hbar^2 (d_i g)(d_j g) Re Tr(G y)
               d_se    = hbar^2 k^2 Gamma p_e

Position enters only through the scalar g(x), so every tensor is a
scalar profile times the outer product of grad g. Grid building
exploits that: the four scalar profiles are solved on a dense 1D table
in g (a few thousand LU factorizations) and splined onto the 3D grid.
The per-point path (g_table_size=None) keeps the direct route alive;
tests compare the two. Parity in g (force odd, the rest even) is exact:
conjugating the coupling operator by the photon-parity unitary flips
the sign of g without touching the dissipators.
"""
import json
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline

from . import _kernel
from .constants import HBAR, TWO_PI
from .errors import ContractViolationError, GridMetadataError, NumericalSolveError
from .fields import ModeGeometry, coupling
from .quantum import LiouvillianWorkspace, SystemParams, unvec, vec

SYM6 = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))

GRID_FORMAT = "CAVGRID/1"


def sym6_to_mat(v):
    """(..., 6) sym6 components (xx,yy,zz,xy,xz,yz) -> (..., 3, 3)."""
    v = np.asarray(v)
    m = np.empty(v.shape[:-1] + (3, 3), dtype=v.dtype)
    for k, (i, j) in enumerate(SYM6):
        m[..., i, j] = v[..., k]
        m[..., j, i] = v[..., k]
    return m


def mat_to_sym6(m):
    m = np.asarray(m)
    return np.stack([m[..., i, j] for i, j in SYM6], axis=-1)


@dataclass(frozen=True)
class ScalarCoefficients:
    """g-dependent scalar profiles; tensors are these times grad-g outer
    products."""
    g: float
    force: float       # N per (rad/s/m) of gradient
    beta: float
    d_dp: float
    d_se: float        # full scalar, no gradient factor
    n_bar: float
    p_e: float


def scalar_coefficients(ws: LiouvillianWorkspace, g: float) -> ScalarCoefficients:
    pt = ws.factor(g)
    rho0 = pt.steady_state()
    params = ws.params
    corr = np.trace(ws.g_op @ rho0).real
    n_bar = np.trace(ws.num_op @ rho0).real
    p_e = np.trace(ws.pe_op @ rho0).real

    drho = pt.drho_dg(rho0)
    rho1 = unvec(pt.constrained_solve(vec(drho)))
    beta_s = -HBAR * np.trace(ws.g_op @ rho1).real

    dev = ws.g_op @ rho0 - corr * rho0
    y = unvec(pt.constrained_solve(-vec(dev)))
    d_dp_s = HBAR ** 2 * np.trace(ws.g_op @ y).real

    d_se = HBAR ** 2 * params.k_photon ** 2 * params.gamma * p_e
    return ScalarCoefficients(g=g, force=-HBAR * corr, beta=beta_s,
                              d_dp=d_dp_s, d_se=d_se, n_bar=n_bar, p_e=p_e)


@dataclass(frozen=True)
class CoefficientPoint:
    position: np.ndarray   # (3,) m
    force: np.ndarray      # (3,) N
    beta: np.ndarray       # (3,3) kg/s
    d_dp: np.ndarray       # (3,3) kg^2 m^2 / s^3
    d_se: float            # kg^2 m^2 / s^3

    def __post_init__(self):
        for name, t in (("beta", self.beta), ("d_dp", self.d_dp)):
            scale = np.abs(t).max()
            if scale > 0 and np.abs(t - t.T).max() > 1e-10 * scale:
                raise ContractViolationError(f"{name} tensor not symmetric")
        if self.d_se < 0:
            raise ContractViolationError("d_se must be non-negative")


def coefficient_point(x, params: SystemParams, geometry: ModeGeometry,
                      workspace: LiouvillianWorkspace | None = None) -> CoefficientPoint:
    x = np.asarray(x, dtype=float)
    if x[2] <= 0:
        raise ContractViolationError("coefficients defined for z > 0 only")
    ws = workspace or LiouvillianWorkspace(params)
    g, grad = coupling(x, geometry)
    s = scalar_coefficients(ws, float(g))
    op = np.outer(grad, grad)
    beta = s.beta * op
    return CoefficientPoint(position=x, force=s.force * grad,
                            beta=0.5 * (beta + beta.T),
                            d_dp=s.d_dp * op, d_se=s.d_se)


def force_numeric(x, params: SystemParams, geometry: ModeGeometry,
                  workspace=None) -> np.ndarray:
    return coefficient_point(x, params, geometry, workspace).force


def friction_numeric(x, params: SystemParams, geometry: ModeGeometry,
                     workspace=None) -> np.ndarray:
    return coefficient_point(x, params, geometry, workspace).beta


def diffusion_numeric(x, params: SystemParams, geometry: ModeGeometry,
                      workspace=None) -> tuple[np.ndarray, float]:
    pt = coefficient_point(x, params, geometry, workspace)
    return pt.d_dp, pt.d_se


class ScalarTable:
    """Dense cubic-spline tables of the scalar profiles over |g|."""

    def __init__(self, params: SystemParams, g_max: float, size: int,
                 progress=None):
        if size < 16:
            raise ContractViolationError("g table needs at least 16 nodes")
        ws = LiouvillianWorkspace(params)
        gs = np.linspace(0.0, g_max * (1.0 + 1e-12), size)
        cols = np.empty((size, 4))
        for k, g in enumerate(gs):
            try:
                s = scalar_coefficients(ws, float(g))
            except Exception as exc:
                raise NumericalSolveError(
                    f"coefficient solve failed at g/2pi = "
                    f"{g / TWO_PI / 1e6:.4f} MHz: {exc}") from exc
            cols[k] = (s.force, s.beta, s.d_dp, s.d_se)
            if progress is not None and (k + 1) % max(1, size // 20) == 0:
                progress((k + 1) / size, "coefficient table")
        self.g_nodes = gs
        self._spl = [CubicSpline(gs, cols[:, i]) for i in range(4)]
        # phi(g) = -int_0^g force_scalar; even in g since force is odd
        phi = -cumulative_trapezoid(cols[:, 0], gs, initial=0.0)
        self._spl_phi = CubicSpline(gs, phi)

    def __call__(self, g):
        """Scalar profiles at signed g: (force, beta, d_dp, d_se, phi)."""
        g = np.asarray(g, dtype=float)
        a = np.abs(g)
        if np.any(a > self.g_nodes[-1]):
            raise ContractViolationError("g outside tabulated range")
        return (np.sign(g) * self._spl[0](a), self._spl[1](a),
                self._spl[2](a), self._spl[3](a), self._spl_phi(a))


class CoefficientGrid:
    """Dense coefficient fields on a uniform box, ready for the kernel.

    The table layout is _kernel's 23-field one; `interpolate` serves
    tensors re-assembled from the sym6 storage.
    """

    def __init__(self, axes, table, meta):
        x, y, z = (np.asarray(a, dtype=float) for a in axes)
        for name, a in (("x", x), ("y", y), ("z", z)):
            if a.ndim != 1 or a.size < 1:
                raise ContractViolationError(f"{name} axis must be a 1D array")
            if a.size > 1:
                d = np.diff(a)
                if np.any(d <= 0):
                    raise ContractViolationError(
                        f"{name} axis must be strictly increasing")
                if np.abs(d - d[0]).max() > 1e-9 * abs(d[0]):
                    raise ContractViolationError(f"{name} axis must be uniform")
        table = np.ascontiguousarray(table, dtype=np.float64)
        expect = (x.size, y.size, z.size, _kernel.NFIELDS)
        if table.shape != expect:
            raise ContractViolationError(
                f"table shape {table.shape} != expected {expect}")
        self.x, self.y, self.z = x, y, z
        self.table = table
        self.meta = dict(meta)

    def _axis_args(self):
        def one(a):
            step = float(a[1] - a[0]) if a.size > 1 else 1.0
            return float(a[0]), step, a.size
        x0, dx, nx = one(self.x)
        y0, dy, ny = one(self.y)
        z0, dz, nz = one(self.z)
        return x0, dx, nx, y0, dy, ny, z0, dz, nz

    def kernel_args(self):
        """(table, x0, dx, nx, y0, dy, ny, z0, dz, nz) for _kernel calls."""
        return (self.table,) + self._axis_args()

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        ok = np.ones(pts.shape[0], dtype=bool)
        for i, a in enumerate((self.x, self.y, self.z)):
            ok &= (pts[:, i] >= a[0]) & (pts[:, i] <= a[-1])
        return ok

    def interpolate(self, pts) -> dict:
        """Trilinear fields at points (N, 3) inside the grid box."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if not self.contains(pts).all():
            raise ContractViolationError("interpolation point outside grid box")
        raw = _kernel.interpolate_many(
            self.table, *self._axis_args(), np.ascontiguousarray(pts))
        return {
            "force": raw[:, _kernel.F0:_kernel.F0 + 3],
            "beta": sym6_to_mat(raw[:, _kernel.BETA0:_kernel.BETA0 + 6]),
            "d_dp": sym6_to_mat(raw[:, _kernel.DDP0:_kernel.DDP0 + 6]),
            "d_se": raw[:, _kernel.DSE],
            "noise_b": sym6_to_mat(raw[:, _kernel.B0:_kernel.B0 + 6]),
            "phi": raw[:, _kernel.PHI],
        }

    def point(self, i: int, j: int, k: int) -> CoefficientPoint:
        row = self.table[i, j, k]
        return CoefficientPoint(
            position=np.array([self.x[i], self.y[j], self.z[k]]),
            force=row[_kernel.F0:_kernel.F0 + 3].copy(),
            beta=sym6_to_mat(row[_kernel.BETA0:_kernel.BETA0 + 6]),
            d_dp=sym6_to_mat(row[_kernel.DDP0:_kernel.DDP0 + 6]),
            d_se=float(row[_kernel.DSE]))

    def save(self, path):
        np.savez(path, x=self.x, y=self.y, z=self.z, table=self.table,
                 meta=np.frombuffer(
                     json.dumps(self.meta, sort_keys=True).encode(),
                     dtype=np.uint8))

    @classmethod
    def load(cls, path) -> "CoefficientGrid":
        with np.load(path) as f:
            try:
                meta = json.loads(bytes(f["meta"]).decode())
                axes = (f["x"], f["y"], f["z"])
                table = f["table"]
            except KeyError as exc:
                raise GridMetadataError(f"not a coefficient grid cache: {exc}")
        if meta.get("format") != GRID_FORMAT:
            raise GridMetadataError(
                f"unsupported grid format {meta.get('format')!r}, "
                f"expected {GRID_FORMAT!r}")
        return cls(axes, table, meta)

    def validate_against(self, params: SystemParams, geom: ModeGeometry):
        """Reject use with parameters other than the ones it was built for."""
        want = _grid_meta_core(params, geom)
        got = {k: self.meta.get(k) for k in want}
        bad = [k for k in want if got[k] != want[k]]
        if bad:
            detail = ", ".join(f"{k}: cache {got[k]!r} != current {want[k]!r}"
                               for k in bad)
            raise GridMetadataError(f"grid cache metadata mismatch: {detail}")


def _grid_meta_core(params: SystemParams, geom: ModeGeometry) -> dict:
    return {
        "format": GRID_FORMAT,
        "kappa": params.kappa, "gamma": params.gamma,
        "delta_a": params.delta_a, "delta_c": params.delta_c,
        "epsilon": params.epsilon, "k_photon": params.k_photon,
        "mass": params.mass, "n_max": params.n_max,
        "g0": geom.g0, "k_ax": geom.k_ax,
        "q_len": geom.q_len, "d_len": geom.d_len,
    }


def default_region(geom: ModeGeometry):
    """One axial period by full transverse span by the escape z-range."""
    x_half = np.pi / geom.k_ax
    from .constants import WIDTH
    return ((-x_half, x_half), (-WIDTH / 2, WIDTH / 2), (21e-9, 808e-9))


DEFAULT_SHAPE = (52, 96, 158)


def build_grid(region, resolutions, params: SystemParams,
               geometry: ModeGeometry, *, g_table_size: int | None = 4096,
               progress=None) -> CoefficientGrid:
    """Evaluate all coefficient fields over a uniform box.

    region: ((x0,x1),(y0,y1),(z0,z1)) or None for the default;
    resolutions: point counts per axis or None. g_table_size picks the
    dense-1D-table route (position enters only through g); None forces
    one Liouvillian solve per grid point.
    """
    if region is None:
        region = default_region(geometry)
    if resolutions is None:
        resolutions = DEFAULT_SHAPE
    (xr, yr, zr) = region
    if zr[0] <= 20e-9:
        raise ContractViolationError(
            f"grid z_min = {zr[0] * 1e9:.1f} nm; calibrated geometry is "
            "only trusted for z > 20 nm")
    nx, ny, nz = (int(n) for n in resolutions)
    if min(nx, ny, nz) < 1:
        raise ContractViolationError("grid needs at least one point per axis")
    axes = (np.linspace(xr[0], xr[1], nx), np.linspace(yr[0], yr[1], ny),
            np.linspace(zr[0], zr[1], nz))

    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    g, grad = coupling(pts, geometry)

    table = np.empty((nx, ny, nz, _kernel.NFIELDS))
    if g_table_size is not None:
        tab = ScalarTable(params, float(np.abs(g).max()), g_table_size,
                          progress=progress)
        f_s, beta_s, d_s, dse_s, phi_s = tab(g)
    else:
        ws = LiouvillianWorkspace(params)
        flat_g = g.ravel()
        cols = np.empty((flat_g.size, 4))
        for k, gk in enumerate(flat_g):
            try:
                s = scalar_coefficients(ws, float(gk))
            except Exception as exc:
                pos = np.unravel_index(k, g.shape)
                xyz = tuple(float(axes[i][pos[i]]) * 1e9 for i in range(3))
                raise NumericalSolveError(
                    f"coefficient solve failed at grid point "
                    f"(x,y,z) = ({xyz[0]:.1f}, {xyz[1]:.1f}, {xyz[2]:.1f}) nm"
                    f": {exc}") from exc
            cols[k] = (s.force, s.beta, s.d_dp, s.d_se)
            if progress is not None and (k + 1) % max(1, flat_g.size // 50) == 0:
                progress((k + 1) / flat_g.size, "grid points")
        f_s, beta_s, d_s, dse_s = (c.reshape(g.shape) for c in cols.T)
        # phi still comes from a 1D quadrature table; it only feeds
        # diagnostics and bound/unbound classification
        tab = ScalarTable(params, float(np.abs(g).max()), 1024)
        phi_s = tab(g)[4]

    # d_se is a rate times a population, >= 0 exactly; the spline route
    # undershoots by ~1e-60 near g = 0, which is floored silently, while
    # material negatives would flag a bad table and are counted
    n_dse_clamped = int(np.count_nonzero(
        dse_s < -1e-12 * float(dse_s.max())))
    dse_s = np.maximum(dse_s, 0.0)

    table[..., _kernel.F0:_kernel.F0 + 3] = f_s[..., None] * grad
    op6 = np.stack([grad[..., i] * grad[..., j] for i, j in SYM6], axis=-1)
    table[..., _kernel.BETA0:_kernel.BETA0 + 6] = beta_s[..., None] * op6
    table[..., _kernel.DDP0:_kernel.DDP0 + 6] = d_s[..., None] * op6
    table[..., _kernel.DSE] = dse_s
    b6, n_clamped = _noise_table(d_s, dse_s, grad)
    n_clamped += n_dse_clamped
    table[..., _kernel.B0:_kernel.B0 + 6] = b6
    table[..., _kernel.PHI] = phi_s

    meta = _grid_meta_core(params, geometry)
    meta.update({
        "region": [list(map(float, r)) for r in region],
        "shape": [nx, ny, nz],
        "g_table_size": g_table_size,
        "clamped_points": int(n_clamped),
        "steady_rtol": 1e-10,
        "constrained_rtol": 1e-9,
    })
    if progress is not None:
        progress(1.0, "grid assembled")
    return CoefficientGrid(axes, table, meta)


def _noise_table(d_s, dse_s, grad):
    """sym6 noise amplitude for D = d_s*(grad x grad) + d_se*I.

    The total diffusion has one eigenvalue d_se + d_s|grad|^2 along
    grad and d_se (twice) across it, so B follows in closed form;
    negative parallel eigenvalues are clamped to zero and counted.
    """
    gg = np.einsum("...i,...i->...", grad, grad)
    lam_par = dse_s + d_s * gg
    clamped = lam_par < 0
    lam_par = np.where(clamped, 0.0, lam_par)
    s_perp = np.sqrt(2.0 * dse_s)
    s_par = np.sqrt(2.0 * lam_par)
    safe_gg = np.where(gg > 0, gg, 1.0)
    coef = np.where(gg > 0, (s_par - s_perp) / safe_gg, 0.0)
    b6 = np.empty(d_s.shape + (6,))
    for k, (i, j) in enumerate(SYM6):
        b6[..., k] = coef * grad[..., i] * grad[..., j]
        if i == j:
            b6[..., k] += s_perp
    return b6, int(np.count_nonzero(clamped))
