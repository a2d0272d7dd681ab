"""Compiled inner loops: fused trilinear interpolation and the SDE stepper.

This module is deliberately free of package imports so the compiled
signatures stay primitive (arrays and scalars). The field table is a
C-contiguous (nx, ny, nz, NFIELDS) float64 array; symmetric tensors are
stored in 6-component order (xx, yy, zz, xy, xz, yz). Field layout:

    0:3    mean force vector (N)
    3:9    friction tensor beta (kg/s), sym6
    9:15   dipole-fluctuation diffusion d_dp (kg^2 m^2/s^3), sym6
    15     spontaneous-emission diffusion d_se (scalar, kg^2 m^2/s^3)
    16:22  Langevin noise amplitude B with BB^T/2 = d_dp + d_se*I, sym6
    22     pump pseudo-potential phi (J), -d(phi)/dg = force scalar

The trap potential here is an exact twin of fields.trap_potential; a
unit test pins the two against each other.

Interpolation queries clamp to the grid box: RK4 sub-stages can
overshoot the escape boundaries by at most |v|*dt, and the clamped
lookup keeps those stage evaluations finite. Escape detection in the
driver loop uses the unclamped positions.
"""
import numpy as np
from numba import njit

F0 = 0
BETA0 = 3
DDP0 = 9
DSE = 15
B0 = 16
PHI = 22
NFIELDS = 23

OUT_RUNNING = 0
OUT_Z_LOW = 1
OUT_Z_HIGH = 2
OUT_X = 3
OUT_Y = 4
OUT_NAN = 5


@njit(cache=True)
def _interp_fields(table, x0, dx, nx, y0, dy, ny, z0, dz, nz,
                   px, py, pz, out):
    if nx > 1:
        fx = (px - x0) / dx
        if fx < 0.0:
            fx = 0.0
        if fx > nx - 1.0:
            fx = nx - 1.0
        ix = int(fx)
        if ix > nx - 2:
            ix = nx - 2
        tx = fx - ix
    else:
        ix = 0
        tx = 0.0
    if ny > 1:
        fy = (py - y0) / dy
        if fy < 0.0:
            fy = 0.0
        if fy > ny - 1.0:
            fy = ny - 1.0
        iy = int(fy)
        if iy > ny - 2:
            iy = ny - 2
        ty = fy - iy
    else:
        iy = 0
        ty = 0.0
    if nz > 1:
        fz = (pz - z0) / dz
        if fz < 0.0:
            fz = 0.0
        if fz > nz - 1.0:
            fz = nz - 1.0
        iz = int(fz)
        if iz > nz - 2:
            iz = nz - 2
        tz = fz - iz
    else:
        iz = 0
        tz = 0.0

    jx = ix + 1 if nx > 1 else 0
    jy = iy + 1 if ny > 1 else 0
    jz = iz + 1 if nz > 1 else 0

    w000 = (1.0 - tx) * (1.0 - ty) * (1.0 - tz)
    w100 = tx * (1.0 - ty) * (1.0 - tz)
    w010 = (1.0 - tx) * ty * (1.0 - tz)
    w110 = tx * ty * (1.0 - tz)
    w001 = (1.0 - tx) * (1.0 - ty) * tz
    w101 = tx * (1.0 - ty) * tz
    w011 = (1.0 - tx) * ty * tz
    w111 = tx * ty * tz

    for f in range(NFIELDS):
        out[f] = (w000 * table[ix, iy, iz, f] + w100 * table[jx, iy, iz, f]
                  + w010 * table[ix, jy, iz, f] + w110 * table[jx, jy, iz, f]
                  + w001 * table[ix, iy, jz, f] + w101 * table[jx, iy, jz, f]
                  + w011 * table[ix, jy, jz, f] + w111 * table[jx, jy, jz, f])


@njit(cache=True)
def interpolate_many(table, x0, dx, nx, y0, dy, ny, z0, dz, nz, pts):
    n = pts.shape[0]
    out = np.empty((n, NFIELDS))
    for i in range(n):
        _interp_fields(table, x0, dx, nx, y0, dy, ny, z0, dz, nz,
                       pts[i, 0], pts[i, 1], pts[i, 2], out[i])
    return out


@njit(cache=True)
def trap_u_grad(tp, px, py, pz, grad):
    """Potential and gradient of the two-color trap + surface interaction.

    tp = (u_blue, u_red, d_blue, d_red, k_red, q_blue, q_red,
          c4, lambda_tilde); returns U, writes grad in place.
    """
    u_b = tp[0]
    u_r = tp[1]
    d_b = tp[2]
    d_r = tp[3]
    k_r = tp[4]
    q_b = tp[5]
    q_r = tp[6]
    c4 = tp[7]
    lam = tp[8]
    cb = np.cos(py / q_b)
    sb = np.sin(py / q_b)
    crx = np.cos(k_r * px)
    srx = np.sin(k_r * px)
    cry = np.cos(py / q_r)
    sry = np.sin(py / q_r)
    eb = np.exp(-2.0 * pz / d_b)
    er = np.exp(-2.0 * pz / d_r)
    blue = u_b * cb * cb * eb
    red = u_r * crx * crx * cry * cry * er
    den = pz ** 3 * (pz + lam)
    grad[0] = u_r * cry * cry * er * (-2.0 * k_r * crx * srx)
    grad[1] = (u_b * eb * (-2.0 * cb * sb / q_b)
               + u_r * crx * crx * er * (-2.0 * cry * sry / q_r))
    grad[2] = ((-2.0 / d_b) * blue + (-2.0 / d_r) * red
               + c4 * (3.0 * pz * pz * (pz + lam) + pz ** 3) / (den * den))
    return blue + red - c4 / den


@njit(cache=True)
def _drift_accel(table, x0, dx, nx, y0, dy, ny, z0, dz, nz, tp, mass,
                 px, py, pz, vx, vy, vz, fld, tg):
    """(ax, ay, az) of the deterministic part (F + beta*v - grad U)/m."""
    _interp_fields(table, x0, dx, nx, y0, dy, ny, z0, dz, nz, px, py, pz, fld)
    u = trap_u_grad(tp, px, py, pz, tg)
    bxx = fld[3]
    byy = fld[4]
    bzz = fld[5]
    bxy = fld[6]
    bxz = fld[7]
    byz = fld[8]
    ax = (fld[0] + bxx * vx + bxy * vy + bxz * vz - tg[0]) / mass
    ay = (fld[1] + bxy * vx + byy * vy + byz * vz - tg[1]) / mass
    az = (fld[2] + bxz * vx + byz * vy + bzz * vz - tg[2]) / mass
    return ax, ay, az, u


@njit(cache=True)
def rk4_em_step(table, x0, dx, nx, y0, dy, ny, z0, dz, nz, tp, mass, dt,
                px, py, pz, vx, vy, vz, xix, xiy, xiz, fld, tg):
    """One hybrid step: RK4 on the drift, then an Euler-Maruyama kick.

    Noise amplitude B is taken at the step-start position (Ito
    convention). Returns the new state plus the trap potential and pump
    pseudo-potential at the step start for energy bookkeeping.
    """
    a1x, a1y, a1z, u1 = _drift_accel(table, x0, dx, nx, y0, dy, ny, z0, dz,
                                     nz, tp, mass, px, py, pz, vx, vy, vz,
                                     fld, tg)
    # stage-1 field values are reused below; later stages overwrite fld
    b_xx = fld[16]
    b_yy = fld[17]
    b_zz = fld[18]
    b_xy = fld[19]
    b_xz = fld[20]
    b_yz = fld[21]
    phi1 = fld[22]

    h = 0.5 * dt
    v1x = vx + h * a1x
    v1y = vy + h * a1y
    v1z = vz + h * a1z
    a2x, a2y, a2z, _ = _drift_accel(table, x0, dx, nx, y0, dy, ny, z0, dz,
                                    nz, tp, mass,
                                    px + h * vx, py + h * vy, pz + h * vz,
                                    v1x, v1y, v1z, fld, tg)
    v2x = vx + h * a2x
    v2y = vy + h * a2y
    v2z = vz + h * a2z
    a3x, a3y, a3z, _ = _drift_accel(table, x0, dx, nx, y0, dy, ny, z0, dz,
                                    nz, tp, mass,
                                    px + h * v1x, py + h * v1y, pz + h * v1z,
                                    v2x, v2y, v2z, fld, tg)
    v3x = vx + dt * a3x
    v3y = vy + dt * a3y
    v3z = vz + dt * a3z
    a4x, a4y, a4z, _ = _drift_accel(table, x0, dx, nx, y0, dy, ny, z0, dz,
                                    nz, tp, mass,
                                    px + dt * v2x, py + dt * v2y,
                                    pz + dt * v2z,
                                    v3x, v3y, v3z, fld, tg)

    sixth = dt / 6.0
    npx = px + sixth * (vx + 2.0 * v1x + 2.0 * v2x + v3x)
    npy = py + sixth * (vy + 2.0 * v1y + 2.0 * v2y + v3y)
    npz = pz + sixth * (vz + 2.0 * v1z + 2.0 * v2z + v3z)
    nvx = vx + sixth * (a1x + 2.0 * a2x + 2.0 * a3x + a4x)
    nvy = vy + sixth * (a1y + 2.0 * a2y + 2.0 * a3y + a4y)
    nvz = vz + sixth * (a1z + 2.0 * a2z + 2.0 * a3z + a4z)

    s = np.sqrt(dt) / mass
    nvx += s * (b_xx * xix + b_xy * xiy + b_xz * xiz)
    nvy += s * (b_xy * xix + b_yy * xiy + b_yz * xiz)
    nvz += s * (b_xz * xix + b_yz * xiy + b_zz * xiz)
    return npx, npy, npz, nvx, nvy, nvz, u1, phi1


@njit(cache=True)
def advance_one(table, x0, dx, nx, y0, dy, ny, z0, dz, nz, tp, mass, dt,
                px, py, pz, vx, vy, vz, xix, xiy, xiz):
    fld = np.empty(NFIELDS)
    tg = np.empty(3)
    return rk4_em_step(table, x0, dx, nx, y0, dy, ny, z0, dz, nz, tp, mass,
                       dt, px, py, pz, vx, vy, vz, xix, xiy, xiz, fld, tg)


@njit(cache=True)
def run_single(table, x0, dx, nx, y0, dy, ny, z0, dz, nz, tp, mass, dt,
               nsteps, px, py, pz, vx, vy, vz, noise, esc,
               win_steps, v2sum, pesum, wcount,
               stride, samples, status):
    """Integrate one trajectory, accumulating windowed statistics.

    noise: (nsteps, 3) standard normals. esc: (|x|max, |y|max, zmin,
    zmax). v2sum (nwin, 3), pesum (nwin,), wcount (nwin,) are shared
    ensemble accumulators updated with start-of-step states. samples
    rows get (t, x, y, z, vx, vy, vz) every `stride` steps when the
    array is non-empty. status receives
    (outcome, steps_done, t, x, y, z, vx, vy, vz).
    """
    fld = np.empty(NFIELDS)
    tg = np.empty(3)
    nwin = v2sum.shape[0]
    nsamp = samples.shape[0]
    outcome = OUT_RUNNING
    done = nsteps
    for s in range(nsteps):
        if nsamp > 0 and s % stride == 0:
            k = s // stride
            if k < nsamp:
                samples[k, 0] = s * dt
                samples[k, 1] = px
                samples[k, 2] = py
                samples[k, 3] = pz
                samples[k, 4] = vx
                samples[k, 5] = vy
                samples[k, 6] = vz
        npx, npy, npz, nvx, nvy, nvz, u1, phi1 = rk4_em_step(
            table, x0, dx, nx, y0, dy, ny, z0, dz, nz, tp, mass, dt,
            px, py, pz, vx, vy, vz,
            noise[s, 0], noise[s, 1], noise[s, 2], fld, tg)
        w = s // win_steps
        if w < nwin:
            v2sum[w, 0] += vx * vx
            v2sum[w, 1] += vy * vy
            v2sum[w, 2] += vz * vz
            pesum[w] += u1 + phi1
            wcount[w] += 1
        if not (np.isfinite(npx) and np.isfinite(npy) and np.isfinite(npz)
                and np.isfinite(nvx) and np.isfinite(nvy)
                and np.isfinite(nvz)):
            # leave px..vz at the last valid state for the error report
            outcome = OUT_NAN
            done = s + 1
            break
        px = npx
        py = npy
        pz = npz
        vx = nvx
        vy = nvy
        vz = nvz
        if pz < esc[2]:
            outcome = OUT_Z_LOW
            done = s + 1
            break
        if pz > esc[3]:
            outcome = OUT_Z_HIGH
            done = s + 1
            break
        if px < -esc[0] or px > esc[0]:
            outcome = OUT_X
            done = s + 1
            break
        if py < -esc[1] or py > esc[1]:
            outcome = OUT_Y
            done = s + 1
            break
    status[0] = outcome
    status[1] = done
    status[2] = done * dt
    status[3] = px
    status[4] = py
    status[5] = pz
    status[6] = vx
    status[7] = vy
    status[8] = vz
