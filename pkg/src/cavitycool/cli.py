"""Command-line entry point.

Every subcommand reads one YAML config, writes CSV artifacts plus a
JSON summary into the output directory, and returns 0 on success, 2 on
configuration problems, 3 on numerical failure. CSV cells are written
with repr() so read-back reproduces the exact binary doubles and a
rerun with the same config hash is byte-identical; wall-clock timing
lives only in the JSON summary.
"""
import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import constants as c
from .coefficients import CoefficientGrid, build_grid, scalar_coefficients
from .config import package_version, parse_config
from .constants import K_B, TWO_PI
from .errors import CavityCoolError, ConfigError, GridMetadataError
from .fields import calibration_report, coupling, trap_minimum_z
from .langevin import (SimConfig, fit_effective_friction, loading_rate,
                       make_cooling_sampler, make_loading_sampler,
                       run_ensemble, trap_probability_curve)
from .quantum import LiouvillianWorkspace, observables
from .thermo import optimal_teq_at, teq_cross_sections, teq_scan_detuning_z
from . import weakdrive


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path: Path, columns, rows, cfg_hash: str, version: str,
              comments=()) -> None:
    lines = [f"# config_hash={cfg_hash} version={version}"]
    lines.extend(f"# {text}" for text in comments)
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def read_csv(path: Path):
    """(meta, columns, rows) with numeric cells restored to the exact
    doubles that were written."""
    meta = {}
    columns = None
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            for token in line[1:].split():
                if "=" in token:
                    key, _, val = token.partition("=")
                    meta.setdefault(key, val)
            continue
        cells = line.split(",")
        if columns is None:
            columns = cells
            continue
        parsed = []
        for cell in cells:
            try:
                parsed.append(float(cell))
            except ValueError:
                parsed.append(cell)
        rows.append(parsed)
    return meta, columns, rows


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, Path):
        return str(v)
    raise TypeError(f"not JSON-serializable: {type(v).__name__}")


def _eps_tag(eps_mhz: float) -> str:
    return "eps" + f"{eps_mhz:g}".replace(".", "p").replace("-", "m")


def _strong_weak_positions(run):
    """Probe heights for the photon-number spectra: one where the atom
    is strongly coupled (g = 1.5 kappa unless overridden), one far out."""
    sw = run.sweeps
    if sw["z_strong_nm"] is not None:
        z_strong = c.nm(sw["z_strong_nm"])
    else:
        g_target = 1.5 * run.params.kappa
        if run.geometry.g0 <= g_target:
            raise ConfigError(
                "sweeps.z_strong_nm: cannot derive a strong-coupling height "
                f"(peak coupling g0/2pi = {c.to_mhz(run.geometry.g0):.1f} MHz "
                f"never reaches 1.5 kappa); set it explicitly")
        z_strong = run.geometry.d_len * math.log(run.geometry.g0 / g_target)
    return z_strong, c.nm(sw["z_weak_nm"])


def cmd_steady_state(run, out: Path, args) -> dict:
    detunings_mhz = np.linspace(run.sweeps["detuning_range_mhz"][0],
                                run.sweeps["detuning_range_mhz"][1],
                                run.sweeps["n_detuning"])
    z_strong, z_weak = _strong_weak_positions(run)
    pts = np.array([[0.0, 0.0, z_strong], [0.0, 0.0, z_weak]])
    g_pair, _ = coupling(pts, run.geometry)

    rows = []
    for dp_mhz in detunings_mhz:
        dp = c.mhz(dp_mhz)
        ws = LiouvillianWorkspace(run.params.replace(delta_a=dp, delta_c=dp))
        obs = [observables(ws.factor(g).steady_state()) for g in g_pair]
        rows.append((dp_mhz, obs[0][0], obs[0][1], obs[1][0], obs[1][1]))
    table = np.array(rows)
    write_csv(out / "steady_state.csv",
              ("delta_p_mhz", "n_bar_strong", "p_e_strong",
               "n_bar_weak", "p_e_weak"),
              rows, run.config_hash, package_version(),
              comments=(f"z_strong_nm={z_strong * 1e9!r} "
                        f"z_weak_nm={z_weak * 1e9!r}",))

    dps, n_strong, n_weak = table[:, 0], table[:, 1], table[:, 3]
    summary = {
        "z_strong_nm": z_strong * 1e9,
        "z_weak_nm": z_weak * 1e9,
        "g_strong_mhz": c.to_mhz(g_pair[0]),
        "g_weak_mhz": c.to_mhz(g_pair[1]),
        "weak_peak_mhz": float(dps[np.argmax(n_weak)]),
        "rows": len(rows),
        "csv": "steady_state.csv",
    }
    neg, pos = dps < 0, dps > 0
    if neg.any() and pos.any():
        lo = float(dps[neg][np.argmax(n_strong[neg])])
        hi = float(dps[pos][np.argmax(n_strong[pos])])
        summary["strong_peaks_mhz"] = [lo, hi]
        summary["dressed_splitting_mhz"] = (hi - lo) / 2.0
    return summary


def _axis_sweep(run):
    z_lo, z_hi = run.sweeps["z_range_nm"]
    zs = np.linspace(c.nm(z_lo), c.nm(z_hi), run.sweeps["n_z"])
    pts = np.zeros((zs.size, 3))
    pts[:, 2] = zs
    g, grad = coupling(pts, run.geometry)
    return zs, g, grad[:, 2]


def cmd_force_sweep(run, out: Path, args) -> dict:
    zs, g, dzg = _axis_sweep(run)
    columns = ["z_nm", "g_mhz"]
    data = [zs * 1e9, g / (TWO_PI * 1e6)]
    summary = {"csv": "force_sweep.csv", "rows": zs.size, "per_epsilon": {}}
    for eps_mhz in run.sweeps["epsilon_list_mhz"]:
        p = run.params.replace(epsilon=c.mhz(eps_mhz))
        ws = LiouvillianWorkspace(p)
        f_weak = np.array([weakdrive.force_scalar(p, gi) for gi in g]) * dzg
        f_num = np.array([scalar_coefficients(ws, gi).force for gi in g]) * dzg
        tag = _eps_tag(eps_mhz)
        columns += [f"f_z_weak_{tag}", f"f_z_num_{tag}"]
        data += [f_weak, f_num]
        i_w, i_n = np.argmax(np.abs(f_weak)), np.argmax(np.abs(f_num))
        summary["per_epsilon"][tag] = {
            "epsilon_mhz": eps_mhz,
            "peak_ratio_num_over_weak": float(np.abs(f_num[i_n])
                                              / np.abs(f_weak[i_w])),
            "z_peak_weak_nm": float(zs[i_w] * 1e9),
            "z_peak_num_nm": float(zs[i_n] * 1e9),
            "g_peak_weak_mhz": float(g[i_w] / (TWO_PI * 1e6)),
        }
    dp, kp, gm = run.params.delta_a, run.params.kappa, run.params.gamma
    summary["g_peak_law_mhz"] = ((dp ** 2 + gm ** 2) * (dp ** 2 + kp ** 2)) \
        ** 0.25 / (TWO_PI * 1e6)
    write_csv(out / "force_sweep.csv", columns, zip(*data),
              run.config_hash, package_version())
    return summary


def cmd_coeff_sweep(run, out: Path, args) -> dict:
    zs, g, dzg = _axis_sweep(run)
    dzg2 = dzg ** 2
    columns = ["z_nm", "g_mhz"]
    data = [zs * 1e9, g / (TWO_PI * 1e6)]
    summary = {"csv": "coeff_sweep.csv", "rows": zs.size, "per_epsilon": {}}
    for eps_mhz in run.sweeps["epsilon_list_mhz"]:
        p = run.params.replace(epsilon=c.mhz(eps_mhz))
        ws = LiouvillianWorkspace(p)
        beta_w = np.array([weakdrive.friction_scalar(p, gi) for gi in g]) * dzg2
        d_w = np.array([weakdrive.diffusion_dp_scalar(p, gi) for gi in g]) * dzg2
        num = [scalar_coefficients(ws, gi) for gi in g]
        beta_n = np.array([s.beta for s in num]) * dzg2
        d_n = np.array([s.d_dp for s in num]) * dzg2
        dse_n = np.array([s.d_se for s in num])
        tag = _eps_tag(eps_mhz)
        columns += [f"beta_zz_weak_{tag}", f"beta_zz_num_{tag}",
                    f"d_dp_zz_weak_{tag}", f"d_dp_zz_num_{tag}",
                    f"d_se_num_{tag}"]
        data += [beta_w, beta_n, d_w, d_n, dse_n]
        summary["per_epsilon"][tag] = {
            "epsilon_mhz": eps_mhz,
            "beta_max_rel_dev": float(np.max(np.abs(beta_n - beta_w))
                                      / np.max(np.abs(beta_w))),
            "d_dp_max_rel_dev": float(np.max(np.abs(d_n - d_w))
                                      / np.max(np.abs(d_w))),
            "d_se_peak": float(dse_n.max()),
        }
    write_csv(out / "coeff_sweep.csv", columns, zip(*data),
              run.config_hash, package_version())
    return summary


_AXIS_UNITS = {
    "delta_p_rad_s": ("delta_p_mhz", 1.0 / (TWO_PI * 1e6)),
    "x_m": ("x_nm", 1e9),
    "y_m": ("y_nm", 1e9),
    "z_m": ("z_nm", 1e9),
}


def _write_map_csv(path, tmap, cfg_hash, version):
    name1, s1 = _AXIS_UNITS[tmap.axis_names[0]]
    name2, s2 = _AXIS_UNITS[tmap.axis_names[1]]
    a1 = np.repeat(tmap.axis1 * s1, tmap.axis2.size)
    a2 = np.tile(tmap.axis2 * s2, tmap.axis1.size)
    flat = lambda arr: arr.reshape(-1)
    cols = ("param1", "param2", "T_eq_K",
            "beta_xx", "beta_yy", "beta_zz", "D_xx", "D_yy", "D_zz", "flag")
    rows = zip(a1, a2, flat(tmap.values),
               flat(tmap.beta6[..., 0]), flat(tmap.beta6[..., 1]),
               flat(tmap.beta6[..., 2]), flat(tmap.d_dp6[..., 0]),
               flat(tmap.d_dp6[..., 1]), flat(tmap.d_dp6[..., 2]),
               flat(tmap.flags.astype(int)))
    fixed = " ".join(f"{k}={v!r}" for k, v in sorted(tmap.fixed.items()))
    write_csv(path, cols, rows, cfg_hash, version,
              comments=(f"param1={name1} param2={name2} {fixed}".strip(),
                        "beta/D columns: tensor diagonals, SI; pump-rate "
                        "scaled out (epsilon = 1)"))


def cmd_teq_map(run, out: Path, args) -> dict:
    tm = run.teq_map
    shape = tuple(tm["shape"])
    dp_range = (c.mhz(tm["delta_p_range_mhz"][0]),
                c.mhz(tm["delta_p_range_mhz"][1]))
    z_range = (c.nm(tm["z_range_nm"][0]), c.nm(tm["z_range_nm"][1]))
    version = package_version()

    tmap = teq_scan_detuning_z(dp_range, z_range, run.params, run.geometry,
                               shape)
    _write_map_csv(out / "teq_map.csv", tmap, run.config_hash, version)
    t_min, dp_min, z_min = tmap.minimum()

    maps = teq_cross_sections(None, run.params, run.geometry, run.trap, shape)
    for plane in ("yz", "xy", "xz"):
        _write_map_csv(out / f"teq_cross_{plane}.csv", maps[plane],
                       run.config_hash, version)
    cut = maps["z_cut"]
    write_csv(out / "teq_zcut.csv",
              ("z_nm", "T_eq_K", "beta_s", "d_dp_s"),
              zip(cut["z"] * 1e9, cut["t_eq"], cut["beta_s"], cut["d_dp_s"]),
              run.config_hash, version,
              comments=(f"x_m=0.0 y_m=0.0 z_trap_nm={cut['z_t'] * 1e9!r}",))
    pos = cut["t_eq"] > 0
    i_cut = np.argmin(np.where(pos, cut["t_eq"], np.inf))
    t_opt, g_opt = optimal_teq_at(run.params)
    return {
        "csv": ["teq_map.csv", "teq_cross_yz.csv", "teq_cross_xy.csv",
                "teq_cross_xz.csv", "teq_zcut.csv"],
        "map_min_uk": t_min * 1e6,
        "map_min_delta_p_mhz": dp_min / (TWO_PI * 1e6),
        "map_min_z_nm": z_min * 1e9,
        "zcut_min_uk": float(cut["t_eq"][i_cut]) * 1e6,
        "zcut_min_z_nm": float(cut["z"][i_cut]) * 1e9,
        "optimal_teq_uk": t_opt * 1e6,
        "optimal_g_mhz": g_opt / (TWO_PI * 1e6),
    }


def _grid_cache_path(run, args) -> Path:
    if getattr(args, "grid_cache", None):
        return Path(args.grid_cache)
    return run.output_dir / "grid.npz"


def cmd_build_grid(run, out: Path, args) -> dict:
    region = run.grid_region()
    shape = tuple(run.grid["shape"])
    grid = build_grid(region, shape, run.params, run.geometry,
                      g_table_size=run.grid["g_table_size"])
    cache = _grid_cache_path(run, args)
    cache.parent.mkdir(parents=True, exist_ok=True)
    grid.save(cache)

    report = calibration_report(run.geometry, run.trap)
    (out / "calibration.txt").write_text(report)
    rows = []
    for name, axis in zip("xyz", (grid.x, grid.y, grid.z)):
        step = axis[1] - axis[0] if axis.size > 1 else 0.0
        rows.append((name, axis.size, axis[0] * 1e9, axis[-1] * 1e9,
                     step * 1e9))
    write_csv(out / "grid_axes.csv",
              ("axis", "n", "min_nm", "max_nm", "step_nm"), rows,
              run.config_hash, package_version())
    return {
        "csv": "grid_axes.csv",
        "grid_cache": cache,
        "shape": list(shape),
        "region_nm": [[lo * 1e9, hi * 1e9] for lo, hi in region],
        "g_table_size": run.grid["g_table_size"],
        "clamped_noise_points": grid.meta.get("clamped_points", 0),
        "calibration_report": "calibration.txt",
    }


def _load_grid(run, args) -> CoefficientGrid:
    cache = _grid_cache_path(run, args)
    if not cache.is_file():
        raise GridMetadataError(
            f"grid cache not found at {cache}; run "
            f"`cavitycool build-grid --config <same config> "
            f"--grid-cache {cache}` first")
    grid = CoefficientGrid.load(cache)
    grid.validate_against(run.params, run.geometry)
    return grid


def _sim_config(run, grid, t_max: float) -> SimConfig:
    mc = run.mc
    return SimConfig(grid=grid, trap=run.trap, mass=run.params.mass,
                     dt=mc["dt_ns"] * 1e-9, t_max=t_max, seed=mc["seed"],
                     sample_stride=mc["sample_stride"],
                     window=mc["window_us"] * 1e-6)


def cmd_simulate(run, out: Path, args) -> dict:
    grid = _load_grid(run, args)
    mc = run.mc
    cfg = _sim_config(run, grid, mc["t_max_ms"] * 1e-3)
    if mc["protocol"] == "cooling":
        z0 = (c.nm(mc["z_start_nm"]) if mc["z_start_nm"] is not None
              else trap_minimum_z(run.trap))
        sampler = make_cooling_sampler(z0, c.cm_s(mc["v0_cm_s"]))
        protocol = {"protocol": "cooling", "z_start_nm": z0 * 1e9,
                    "v0_cm_s": mc["v0_cm_s"]}
    else:
        ld = run.loading
        ek = c.uk(ld["ek_uk"][0])
        sampler = make_loading_sampler(
            ek, grid, run.trap, z0=c.nm(ld["z0_nm"]), mass=run.params.mass,
            cone_half_angle=math.radians(ld["cone_half_angle_deg"]))
        protocol = {"protocol": "loading", "ek_uk": ld["ek_uk"][0],
                    "z0_nm": ld["z0_nm"]}

    stats, trajs = run_ensemble(mc["n_trajectories"], sampler, cfg,
                                store_samples=mc["store_samples"])
    version = package_version()
    uk = lambda arr: np.asarray(arr) / K_B * 1e6
    write_csv(out / "simulate_windows.csv",
              ("t_us", "ke_x_uk", "ke_y_uk", "ke_z_uk", "pe_uk", "te_uk",
               "n_samples"),
              zip(stats.times * 1e6, uk(stats.kinetic[:, 0]),
                  uk(stats.kinetic[:, 1]), uk(stats.kinetic[:, 2]),
                  uk(stats.potential), uk(stats.total),
                  stats.window_counts.astype(int)),
              run.config_hash, version)
    write_csv(out / "simulate_outcomes.csv",
              ("traj", "outcome", "loss_direction", "loss_time_us"),
              [(i, o, d or "", (t * 1e6 if t is not None else float("nan")))
               for i, (o, d, t) in enumerate(stats.outcomes)],
              run.config_hash, version)
    if mc["store_samples"]:
        rows = []
        for i, tr in enumerate(trajs):
            for s in tr.samples:
                rows.append((i, s[0] * 1e6, s[1] * 1e9, s[2] * 1e9,
                             s[3] * 1e9, s[4] * 1e2, s[5] * 1e2, s[6] * 1e2))
        write_csv(out / "simulate_trajectories.csv",
                  ("traj", "t_us", "x_nm", "y_nm", "z_nm",
                   "vx_cm_s", "vy_cm_s", "vz_cm_s"),
                  rows, run.config_hash, version)

    fit = fit_effective_friction(stats)
    with np.errstate(divide="ignore"):
        relax_ms = np.where(fit.success, -1e3 / fit.rates, np.nan)
    return {
        "csv": ["simulate_windows.csv", "simulate_outcomes.csv"]
        + (["simulate_trajectories.csv"] if mc["store_samples"] else []),
        **protocol,
        "n_trajectories": stats.n_total,
        "n_trapped": stats.n_trapped,
        "n_lost": stats.n_lost,
        "n_failed": stats.n_failed,
        "trapped_fraction": stats.trapped_fraction,
        "trapped_ci95": list(stats.ci95),
        "escape_barrier_uk": stats.escape_barrier / K_B * 1e6,
        "fit_rates_per_ms": (fit.rates * 1e-3).tolist(),
        "fit_rate_errors_per_ms": (fit.rate_errors * 1e-3).tolist(),
        "fit_plateaus_uk": uk(fit.plateaus).tolist(),
        "fit_teq_equivalent_uk": (2.0 * uk(fit.plateaus)).tolist(),
        "fit_relax_time_ms": relax_ms.tolist(),
        "fit_success": fit.success.tolist(),
        "seed": mc["seed"],
    }


def cmd_load_sweep(run, out: Path, args) -> dict:
    grid = _load_grid(run, args)
    ld = run.loading
    cfg = _sim_config(run, grid, ld["t_max_us"] * 1e-6)
    curve = trap_probability_curve(
        [c.uk(e) for e in ld["ek_uk"]], ld["n_per_point"], cfg,
        z0=c.nm(ld["z0_nm"]),
        cone_half_angle=math.radians(ld["cone_half_angle_deg"]))
    write_csv(out / "load_sweep.csv",
              ("ek_uk", "trapped_fraction", "ci_low", "ci_high",
               "n_per_point"),
              zip(curve.ek / K_B * 1e6, curve.fraction, curve.ci_low,
                  curve.ci_high, [curve.n_per_point] * curve.ek.size),
              run.config_hash, package_version())
    return {
        "csv": "load_sweep.csv",
        "n_per_point": curve.n_per_point,
        "t_max_us": ld["t_max_us"],
        "fit": {"p0": curve.p0, "t_eff_uk": curve.t_eff * 1e6,
                "p0_error": curve.p0_error,
                "t_eff_error_uk": curve.t_eff_error * 1e6,
                "success": curve.success},
        "seed": run.mc["seed"],
    }


def cmd_load_rate(run, out: Path, args) -> dict:
    ld = run.loading
    if ld["p0"] is not None and ld["t_eff_uk"] is not None:
        p0, t_eff_uk = ld["p0"], ld["t_eff_uk"]
        source = "config"
    elif getattr(args, "fit_summary", None):
        data = json.loads(Path(args.fit_summary).read_text())
        fit = data.get("fit", {})
        p0, t_eff_uk = fit.get("p0"), fit.get("t_eff_uk")
        if not fit.get("success") or p0 is None or t_eff_uk is None:
            raise ConfigError(
                f"{args.fit_summary} has no successful loading fit; "
                "rerun load-sweep with more trajectories per point")
        source = str(args.fit_summary)
    else:
        raise ConfigError(
            "load-rate needs the fitted capture law: either set "
            "loading.p0 and loading.t_eff_uk in the config or pass "
            "--fit-summary <load_sweep summary JSON> (run load-sweep first)")
    fit_pair = (p0, t_eff_uk * 1e-6)
    flux = ld["flux_per_ms"] * 1e3
    temps_uk = np.linspace(1.0, 100.0, 199)
    rates = [loading_rate(t * 1e-6, flux, fit_pair, run.params.mass) * 1e-3
             for t in temps_uk]
    write_csv(out / "load_rate.csv", ("temperature_uk", "rate_per_ms"),
              zip(temps_uk, rates), run.config_hash, package_version(),
              comments=(f"p0={p0!r} t_eff_uk={t_eff_uk!r} "
                        f"flux_per_ms={ld['flux_per_ms']!r}",))
    at_t = loading_rate(ld["temperature_uk"] * 1e-6, flux, fit_pair,
                        run.params.mass) * 1e-3
    return {
        "csv": "load_rate.csv",
        "fit_source": source,
        "p0": p0,
        "t_eff_uk": t_eff_uk,
        "flux_per_ms": ld["flux_per_ms"],
        "temperature_uk": ld["temperature_uk"],
        "rate_per_ms_at_temperature": at_t,
        "cold_limit_rate_per_ms": ld["flux_per_ms"] * p0,
    }


_COMMANDS = {
    "steady-state": cmd_steady_state,
    "force-sweep": cmd_force_sweep,
    "coeff-sweep": cmd_coeff_sweep,
    "teq-map": cmd_teq_map,
    "build-grid": cmd_build_grid,
    "simulate": cmd_simulate,
    "load-sweep": cmd_load_sweep,
    "load-rate": cmd_load_rate,
}

_HELP = {
    "steady-state": "photon number and excited-state population vs detuning",
    "force-sweep": "axial force profiles, analytic weak-driving vs numeric",
    "coeff-sweep": "friction and diffusion profiles vs height",
    "teq-map": "equilibrium temperature maps and cross sections",
    "build-grid": "precompute the 3D coefficient grid cache",
    "simulate": "Monte-Carlo trajectory ensemble on a cached grid",
    "load-sweep": "trapping probability vs incoming kinetic energy",
    "load-rate": "Boltzmann-averaged loading rate vs source temperature",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cavitycool",
        description="steady-state cavity optomechanics coefficients and "
                    "semiclassical Monte-Carlo for an atom near a pumped "
                    "nanophotonic waveguide")
    parser.add_argument("--version", action="version",
                        version=package_version())
    sub = parser.add_subparsers(dest="subcommand", required=True,
                                metavar="subcommand")
    for name, func in _COMMANDS.items():
        sp = sub.add_parser(name, help=_HELP[name])
        sp.add_argument("--config", default=None,
                        help="YAML config file (omit for built-in defaults)")
        sp.add_argument("--seed", type=int, default=None,
                        help="override mc.seed")
        sp.add_argument("--out", default=None,
                        help="output directory (overrides output.dir)")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker thread budget (current build is serial)")
        sp.add_argument("--grid-cache", default=None,
                        help="coefficient grid cache path "
                             "(default <out>/grid.npz)")
        if name == "load-rate":
            sp.add_argument("--fit-summary", default=None,
                            help="load-sweep summary JSON supplying the "
                                 "fitted (p0, t_eff)")
        sp.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError(f"--threads must be >= 1, got {args.threads}")
        overrides = {}
        if args.seed is not None:
            overrides["mc.seed"] = args.seed
        if args.out is not None:
            overrides["output.dir"] = args.out
        run = parse_config(args.config, overrides)
        out = run.output_dir
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        extra = args.func(run, out, args)
        summary = {
            "subcommand": args.subcommand,
            "version": package_version(),
            "config_hash": run.config_hash,
            "config_source": run.source,
            "threads": args.threads,
            "runtime_s": round(time.perf_counter() - t0, 3),
            **extra,
        }
        name = args.subcommand.replace("-", "_") + "_summary.json"
        (out / name).write_text(
            json.dumps(summary, sort_keys=True, indent=2, default=_jsonable)
            + "\n")
        print(f"{args.subcommand}: ok ({summary['runtime_s']} s), "
              f"summary {out / name}")
        return 0
    except (ConfigError, GridMetadataError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CavityCoolError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
