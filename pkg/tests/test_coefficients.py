"""Numeric coefficient families: weak-driving consistency, independent
oracles for the linear-response and resolvent routes, and the
precomputed grid (dual-route equivalence, interpolation error,
symmetry, metadata)."""
import numpy as np
import pytest

from helpers import default_params
from cavitycool import _kernel
from cavitycool.constants import HBAR, TWO_PI
from cavitycool.coefficients import (ScalarTable, build_grid,
                                     coefficient_point, diffusion_numeric,
                                     mat_to_sym6, scalar_coefficients,
                                     sym6_to_mat)
from cavitycool.errors import ContractViolationError, GridMetadataError
from cavitycool.fields import coupling
from cavitycool.quantum import LiouvillianWorkspace, unvec, vec
from cavitycool.weakdrive import (diffusion_dp_scalar, diffusion_se_scalar,
                                  force_scalar, friction_scalar)

MHZ = TWO_PI * 1e6


def axis_points(n, lo=150e-9, hi=700e-9):
    z = np.linspace(lo, hi, n)
    return np.column_stack([np.zeros_like(z), np.zeros_like(z), z])


def test_sym6_roundtrip():
    rng = np.random.default_rng(2)
    m = rng.standard_normal((3, 3))
    m = m + m.T
    assert np.array_equal(sym6_to_mat(mat_to_sym6(m)), m)


def test_weak_driving_consistency(geom):
    # numeric route against the closed forms at eps = 2pi*0.1 MHz
    p = default_params(epsilon=0.1 * MHZ)
    ws = LiouvillianWorkspace(p)
    pts = axis_points(20)
    g, grad = coupling(pts, geom)
    num = {"f": [], "b": [], "d": []}
    for gi in g:
        s = scalar_coefficients(ws, float(gi))
        num["f"].append(s.force)
        num["b"].append(s.beta)
        num["d"].append(s.d_dp)
    for key, fn in (("f", force_scalar), ("b", friction_scalar),
                    ("d", diffusion_dp_scalar)):
        got = np.asarray(num[key])
        want = fn(p, g)
        assert np.abs(got - want).max() <= 1e-3 * np.abs(want).max(), key


def test_on_axis_tensors_are_axial(params, geom):
    # x = y = 0 is a transverse extremum of g, so the gradient and
    # everything built from it live on the z axis alone
    pt = coefficient_point(np.array([0.0, 0.0, 300e-9]), params, geom)
    assert pt.force[0] == 0.0 and pt.force[1] == 0.0
    assert pt.force[2] != 0.0
    off = pt.beta.copy()
    off[2, 2] = 0.0
    assert np.abs(off).max() == 0.0
    assert pt.beta[2, 2] != 0.0
    assert np.count_nonzero(pt.d_dp) == 1


def test_coefficient_point_contracts(params, geom):
    pt = coefficient_point(np.array([20e-9, 40e-9, 250e-9]), params, geom)
    assert np.abs(pt.beta - pt.beta.T).max() <= 1e-10 * np.abs(pt.beta).max()
    assert np.abs(pt.d_dp - pt.d_dp.T).max() <= 1e-10 * np.abs(pt.d_dp).max()
    assert pt.d_se >= 0.0
    with pytest.raises(ContractViolationError):
        coefficient_point(np.array([0.0, 0.0, -1e-9]), params, geom)


def test_rank_one_diffusion_structure(params, geom):
    x = np.array([15e-9, 60e-9, 280e-9])
    d_dp, _ = diffusion_numeric(x, params, geom)
    _, grad = coupling(x, geom)
    op = np.outer(grad, grad)
    mask = np.abs(op) > 0
    ratio = d_dp[mask] / op[mask]
    assert np.abs(ratio - ratio[0]).max() <= 1e-6 * abs(ratio[0])


def test_friction_solver_vs_finite_difference(params, geom):
    # d_z rho0 from the differentiated steady-state equation against a
    # central difference of steady states 0.1 nm apart
    ws = LiouvillianWorkspace(params)
    x = np.array([0.0, 0.0, 260e-9])
    h = 0.05e-9
    g, grad = coupling(x, geom)
    pt = ws.factor(float(g))
    rho0 = pt.steady_state()
    drho_dg = pt.drho_dg(rho0)
    drho_dz = drho_dg * grad[2]

    g_hi, _ = coupling(x + [0, 0, h], geom)
    g_lo, _ = coupling(x - [0, 0, h], geom)
    fd = (ws.factor(float(g_hi)).steady_state()
          - ws.factor(float(g_lo)).steady_state()) / (2 * h)
    assert np.abs(drho_dz - fd).max() <= 1e-5 * np.abs(fd).max()


def test_time_domain_diffusion_oracle(params, geom):
    # brute-force integration of the force autocorrelation against the
    # resolvent value; z puts the coupling at ~2pi*60 MHz where the
    # correlation decays on cavity scales and 20/kappa truncates below
    # the 1% budget
    p = default_params(epsilon=3 * MHZ)
    ws = LiouvillianWorkspace(p)
    x = np.array([0.0, 0.0, 228e-9])
    g, _ = coupling(x, geom)
    s = scalar_coefficients(ws, float(g))

    lv = ws.liouvillian(float(g))
    rho0 = ws.factor(float(g)).steady_state()
    g_op = ws.g_op
    corr0 = np.trace(g_op @ rho0).real
    xi = vec(g_op @ rho0 - corr0 * rho0)
    t_max = 20.0 / p.kappa
    nst = 400
    dt = t_max / nst
    vals = np.empty(nst + 1)
    vals[0] = np.trace(g_op @ unvec(xi)).real
    for k in range(nst):
        k1 = lv @ xi
        k2 = lv @ (xi + 0.5 * dt * k1)
        k3 = lv @ (xi + 0.5 * dt * k2)
        k4 = lv @ (xi + dt * k3)
        xi = xi + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        vals[k + 1] = np.trace(g_op @ unvec(xi)).real
    d_time = HBAR ** 2 * np.trapezoid(vals, dx=dt)
    assert d_time == pytest.approx(s.d_dp, rel=1e-2)


def test_saturation_shortfall_grows_with_pump(geom):
    zs = axis_points(60, 200e-9, 600e-9)
    ratios = []
    for eps_mhz in (5.0, 25.0):
        p = default_params(epsilon=eps_mhz * MHZ)
        ws = LiouvillianWorkspace(p)
        g, grad = coupling(zs, geom)
        fz_num = np.array([scalar_coefficients(ws, float(gi)).force
                           for gi in g]) * grad[:, 2]
        fz_weak = force_scalar(p, g) * grad[:, 2]
        ratios.append(np.abs(fz_num).max() / np.abs(fz_weak).max())
    assert ratios[0] > ratios[1]
    assert ratios[1] < 0.75


def test_scalar_table_matches_direct_solves(params):
    tab = ScalarTable(params, 300 * MHZ, 1024)
    ws = LiouvillianWorkspace(params)
    rng = np.random.default_rng(19)
    gs = rng.uniform(0.0, 300 * MHZ, 40)
    f_t, b_t, d_t, dse_t, _ = tab(gs)
    for k, g in enumerate(gs):
        s = scalar_coefficients(ws, float(g))
        assert f_t[k] == pytest.approx(s.force, rel=1e-4, abs=1e-40)
        assert b_t[k] == pytest.approx(s.beta, rel=1e-4, abs=1e-40)
        assert d_t[k] == pytest.approx(s.d_dp, rel=1e-4, abs=1e-80)
        assert dse_t[k] == pytest.approx(s.d_se, rel=1e-4, abs=1e-80)


def test_scalar_table_odd_force_even_rest(params):
    tab = ScalarTable(params, 100 * MHZ, 256)
    g = np.array([40 * MHZ])
    plus = tab(g)
    minus = tab(-g)
    assert minus[0][0] == -plus[0][0]          # force scalar odd in g
    for i in (1, 2, 3, 4):
        assert minus[i][0] == plus[i][0]       # the rest even


def test_one_point_grid_is_exact(params, geom):
    x = np.array([0.0, 0.0, 210e-9])
    region = ((x[0], x[0]), (x[1], x[1]), (x[2], x[2]))
    grid = build_grid(region, (1, 1, 1), params, geom, g_table_size=None)
    pt = grid.point(0, 0, 0)
    want = coefficient_point(x, params, geom)
    assert np.array_equal(pt.force, want.force)
    assert np.array_equal(pt.d_dp, want.d_dp)
    assert pt.d_se == want.d_se
    # interpolation at the single node returns the stored row
    out = grid.interpolate(x)
    assert np.array_equal(out["force"][0], want.force)


def test_midcell_interpolation_error(params, geom):
    # 5 nm z-spacing, 10 nm transverse, window around the trap minimum
    region = ((-50e-9, 50e-9), (-100e-9, 100e-9), (150e-9, 300e-9))
    grid = build_grid(region, (11, 21, 31), params, geom, g_table_size=512)
    ws = LiouvillianWorkspace(params)

    # z-refinement: mid-cell along z with transverse coordinates on
    # nodes isolates the 5 nm axis, <= 2% of the field scale
    zmids = np.stack(np.meshgrid(
        grid.x[::5], grid.y[::10],
        0.5 * (grid.z[:-1] + grid.z[1:])[::3], indexing="ij"),
        axis=-1).reshape(-1, 3)
    # full mid-cell: all three axes off-node; transverse curvature of
    # the friction flank dominates and roughly doubles the error
    amids = np.stack(np.meshgrid(
        0.5 * (grid.x[:-1] + grid.x[1:])[::4],
        0.5 * (grid.y[:-1] + grid.y[1:])[::8],
        0.5 * (grid.z[:-1] + grid.z[1:])[::6], indexing="ij"),
        axis=-1).reshape(-1, 3)
    for pts, budget in ((zmids, 0.02), (amids, 0.04)):
        interp = grid.interpolate(pts)
        exact = [coefficient_point(m, params, geom, ws) for m in pts]
        exact_f = np.array([e.force for e in exact])
        exact_b = np.array([e.beta for e in exact])
        assert np.abs(interp["force"] - exact_f).max() \
            <= budget * np.abs(exact_f).max()
        assert np.abs(interp["beta"] - exact_b).max() \
            <= budget * np.abs(exact_b).max()


def test_grid_reflection_equivariance(grid):
    # g is even in y: tensor components with one y index flip sign
    # under y -> -y, everything else is mirror-symmetric
    pts_p = np.array([[30e-9, 200e-9, 250e-9], [80e-9, 350e-9, 400e-9]])
    pts_m = pts_p * np.array([1.0, -1.0, 1.0])
    a = grid.interpolate(pts_p)
    b = grid.interpolate(pts_m)
    scale = np.abs(a["beta"]).max()
    flip = np.array([[1, -1, 1], [-1, 1, -1], [1, -1, 1]], dtype=float)
    assert np.abs(a["force"] * [1, -1, 1] - b["force"]).max() \
        <= 1e-9 * np.abs(a["force"]).max()
    assert np.abs(a["beta"] * flip - b["beta"]).max() <= 1e-9 * scale
    assert np.abs(a["d_se"] - b["d_se"]).max() <= 1e-9 * np.abs(a["d_se"]).max()


def test_grid_dse_nonnegative_and_clamp_count(grid):
    assert grid.table[..., _kernel.DSE].min() >= 0.0
    assert grid.meta["clamped_points"] == 0


def test_grid_noise_consistent_with_diffusion(grid):
    # BB^T/2 must reproduce d_dp + d_se*I at the stored nodes
    rng = np.random.default_rng(29)
    for _ in range(20):
        i = rng.integers(0, grid.x.size)
        j = rng.integers(0, grid.y.size)
        k = rng.integers(0, grid.z.size)
        row = grid.table[i, j, k]
        b = sym6_to_mat(row[_kernel.B0:_kernel.B0 + 6])
        d = sym6_to_mat(row[_kernel.DDP0:_kernel.DDP0 + 6]) \
            + row[_kernel.DSE] * np.eye(3)
        assert np.abs(b @ b.T / 2.0 - d).max() <= 1e-10 * max(
            np.abs(d).max(), 1e-300)


def test_grid_save_load_roundtrip(params, geom, tmp_path):
    region = ((-20e-9, 20e-9), (-30e-9, 30e-9), (180e-9, 240e-9))
    grid = build_grid(region, (3, 3, 5), params, geom, g_table_size=64)
    path = tmp_path / "cache.npz"
    grid.save(path)
    from cavitycool.coefficients import CoefficientGrid
    back = CoefficientGrid.load(path)
    assert np.array_equal(back.table, grid.table)
    assert np.array_equal(back.x, grid.x)
    assert back.meta == grid.meta
    back.validate_against(params, geom)


def test_grid_metadata_mismatch_rejected(params, geom, grid):
    with pytest.raises(GridMetadataError):
        grid.validate_against(params.replace(epsilon=5 * MHZ), geom)


def test_grid_rejects_shallow_region(params, geom):
    with pytest.raises(ContractViolationError):
        build_grid(((0, 0), (0, 0), (10e-9, 300e-9)), (1, 1, 8),
                   params, geom, g_table_size=64)


def test_load_rejects_foreign_npz(tmp_path):
    from cavitycool.coefficients import CoefficientGrid
    path = tmp_path / "foreign.npz"
    np.savez(path, a=np.arange(3))
    with pytest.raises(GridMetadataError):
        CoefficientGrid.load(path)


def test_interpolate_outside_box_raises(grid):
    with pytest.raises(ContractViolationError):
        grid.interpolate(np.array([[0.0, 0.0, 900e-9]]))
