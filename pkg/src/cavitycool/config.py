"""Config ingestion: YAML in presentation units, validated once at the
boundary, resolved to SI dataclasses.

Units in config files follow the presentation conventions: frequencies
and rates in MHz (meaning omega/2pi), lengths in nm, speeds in cm/s,
energies as temperatures in uK or mK. Everything downstream works in
SI angular frequencies, meters, and joules.

Unknown keys are hard errors (anti-typo). Every leaf carries
provenance ("user" or "default") and the resolved tree minus the
output section is hashed so artifacts can state exactly which physics
configuration produced them.
"""
import copy
import hashlib
import json
import math
import subprocess
from dataclasses import dataclass
from pathlib import Path

import yaml

from . import constants as c
from .constants import CS_MASS, HBAR, K_B, TWO_PI
from .errors import ConfigError
from .fields import CalibrationTargets, ModeGeometry, TrapParams, calibrate
from .quantum import SystemParams

VERSION = "0.1.0"

DEFAULTS = {
    "config_version": 1,
    "system": {
        "kappa_mhz": 100.0,
        "gamma_mhz": 2.61,
        "delta_p_mhz": 10.0,
        "delta_a_mhz": None,        # null: track delta_p
        "delta_c_mhz": None,        # null: track delta_p
        "epsilon_mhz": 10.0,
        "wavelength_nm": 852.0,
        "mass_kg": CS_MASS,
        "n_max": 4,
    },
    "geometry": {
        "decay_length_nm": 100.0,
        "width_nm": 950.0,
        "n_eff": 1.685,
        "g0_mhz": None,             # null: calibrate from z_cool anchor
        "z_cool_nm": 224.0,
        "calibration_detuning_mhz": 10.0,
    },
    "trap": {
        "d_blue_nm": 80.0,
        "d_red_nm": 120.0,
        "lambda_red_nm": 937.0,
        "n_eff_red": 1.6,
        "z_trap_nm": 200.0,
        "depth_mk": 2.0,
        "u_blue_mk": None,          # null: calibrate from z_trap/depth
        "u_red_mk": None,
        "c4_hz_um4": 267.0,
        "lambda_tilde_nm": 136.0,
    },
    "grid": {
        "shape": [52, 96, 158],
        "x_range_nm": None,         # null: one axial coupling period
        "y_range_nm": None,         # null: +-width/2
        "z_range_nm": [21.0, 808.0],
        "g_table_size": 4096,       # null: exact solve at every node
    },
    "mc": {
        "n_trajectories": 50,
        "dt_ns": 8.0,
        "t_max_ms": 3.0,
        "seed": 20260814,
        "protocol": "cooling",
        "v0_cm_s": 45.0,
        "z_start_nm": None,         # null: trap minimum
        "sample_stride": 100,
        "window_us": 0.8,
        "store_samples": False,
    },
    "loading": {
        "ek_uk": [2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 16.0, 20.0],
        "n_per_point": 120,
        "z0_nm": 500.0,
        "cone_half_angle_deg": 0.0,
        "t_max_us": 800.0,
        "temperature_uk": 40.0,
        "flux_per_ms": 400.0,
        "p0": None,                 # null: take from a load-sweep summary
        "t_eff_uk": None,
    },
    "sweeps": {
        "z_range_nm": [120.0, 500.0],
        "n_z": 100,
        "epsilon_list_mhz": [0.1, 5.0, 10.0, 25.0],
        "detuning_range_mhz": [-300.0, 300.0],
        "n_detuning": 601,
        "z_strong_nm": None,        # null: z where g = 1.5 kappa
        "z_weak_nm": 500.0,
    },
    "teq_map": {
        "delta_p_range_mhz": [0.5, 40.0],
        "z_range_nm": [150.0, 600.0],
        "shape": [200, 200],
    },
    "output": {
        "dir": ".",
    },
}


def _merge(defaults: dict, user: dict, path: str, prov: dict) -> dict:
    out = {}
    for key, dval in defaults.items():
        dotted = f"{path}{key}" if not path else f"{path}.{key}"
        if key in user:
            uval = user[key]
            if isinstance(dval, dict):
                if not isinstance(uval, dict):
                    raise ConfigError(
                        f"{dotted}: expected a mapping, got {type(uval).__name__}")
                out[key] = _merge(dval, uval, dotted, prov)
            else:
                out[key] = copy.deepcopy(uval)
                prov[dotted] = "user"
        else:
            out[key] = copy.deepcopy(dval)
            if isinstance(dval, dict):
                _merge(dval, {}, dotted, prov)
            else:
                prov[dotted] = "default"
    unknown = set(user) - set(defaults)
    if unknown:
        name = sorted(unknown)[0]
        dotted = f"{path}.{name}" if path else name
        raise ConfigError(
            f"unknown config key: {dotted} (valid keys here: "
            f"{', '.join(sorted(defaults))})")
    return out


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _num(tree, path, *, gt=None, ge=None, lt=None, le=None, optional=False):
    v = _leaf(tree, path)
    if v is None:
        if optional:
            return
        raise ConfigError(f"{path}: value required")
    if not _is_num(v) or not math.isfinite(v):
        raise ConfigError(f"{path}: expected a finite number, got {v!r}")
    if gt is not None and not v > gt:
        raise ConfigError(f"{path}: must be > {gt}, got {v}")
    if ge is not None and not v >= ge:
        raise ConfigError(f"{path}: must be >= {ge}, got {v}")
    if lt is not None and not v < lt:
        raise ConfigError(f"{path}: must be < {lt}, got {v}")
    if le is not None and not v <= le:
        raise ConfigError(f"{path}: must be <= {le}, got {v}")


def _int(tree, path, *, ge=None, lt=None):
    v = _leaf(tree, path)
    if not isinstance(v, int) or isinstance(v, bool):
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    if ge is not None and v < ge:
        raise ConfigError(f"{path}: must be >= {ge}, got {v}")
    if lt is not None and v >= lt:
        raise ConfigError(f"{path}: must be < {lt}, got {v}")


def _pair(tree, path, *, gt=None, optional=False):
    v = _leaf(tree, path)
    if v is None and optional:
        return
    if (not isinstance(v, (list, tuple)) or len(v) != 2
            or not all(_is_num(u) and math.isfinite(u) for u in v)):
        raise ConfigError(f"{path}: expected [low, high] numbers, got {v!r}")
    if v[0] >= v[1]:
        raise ConfigError(f"{path}: range must be ascending, got {v!r}")
    if gt is not None and v[0] <= gt:
        raise ConfigError(f"{path}: lower bound must be > {gt}, got {v[0]}")


def _num_list(tree, path, *, gt=None):
    v = _leaf(tree, path)
    if (not isinstance(v, (list, tuple)) or len(v) == 0
            or not all(_is_num(u) and math.isfinite(u) for u in v)):
        raise ConfigError(f"{path}: expected a non-empty number list, got {v!r}")
    if gt is not None and any(u <= gt for u in v):
        raise ConfigError(f"{path}: entries must be > {gt}, got {v!r}")


def _int_list(tree, path, n, *, ge=1):
    v = _leaf(tree, path)
    if (not isinstance(v, (list, tuple)) or len(v) != n
            or not all(isinstance(u, int) and not isinstance(u, bool)
                       and u >= ge for u in v)):
        raise ConfigError(
            f"{path}: expected {n} integers >= {ge}, got {v!r}")


def _leaf(tree, path):
    node = tree
    for part in path.split("."):
        node = node[part]
    return node


def _validate(tree: dict) -> None:
    if tree["config_version"] != 1:
        raise ConfigError(
            f"config_version: unsupported version {tree['config_version']!r}"
            " (this build reads version 1)")
    _num(tree, "system.kappa_mhz", gt=0)
    _num(tree, "system.gamma_mhz", gt=0)
    _num(tree, "system.delta_p_mhz")
    _num(tree, "system.delta_a_mhz", optional=True)
    _num(tree, "system.delta_c_mhz", optional=True)
    _num(tree, "system.epsilon_mhz", ge=0)
    _num(tree, "system.wavelength_nm", gt=0)
    _num(tree, "system.mass_kg", gt=0)
    _int(tree, "system.n_max", ge=1)
    _num(tree, "geometry.decay_length_nm", gt=0)
    _num(tree, "geometry.width_nm", gt=0)
    _num(tree, "geometry.n_eff", gt=0)
    _num(tree, "geometry.g0_mhz", gt=0, optional=True)
    _num(tree, "geometry.z_cool_nm", gt=0)
    _num(tree, "geometry.calibration_detuning_mhz")
    _num(tree, "trap.d_blue_nm", gt=0)
    _num(tree, "trap.d_red_nm", gt=tree["trap"]["d_blue_nm"])
    _num(tree, "trap.lambda_red_nm", gt=0)
    _num(tree, "trap.n_eff_red", gt=0)
    _num(tree, "trap.z_trap_nm", gt=0)
    _num(tree, "trap.depth_mk", gt=0)
    _num(tree, "trap.u_blue_mk", gt=0, optional=True)
    _num(tree, "trap.u_red_mk", lt=0, optional=True)
    if (tree["trap"]["u_blue_mk"] is None) != (tree["trap"]["u_red_mk"] is None):
        raise ConfigError(
            "trap.u_blue_mk / trap.u_red_mk: set both or neither "
            "(mixing one explicit amplitude with calibration is ambiguous)")
    _num(tree, "trap.c4_hz_um4", gt=0)
    _num(tree, "trap.lambda_tilde_nm", gt=0)
    _int_list(tree, "grid.shape", 3, ge=1)
    _pair(tree, "grid.x_range_nm", optional=True)
    _pair(tree, "grid.y_range_nm", optional=True)
    _pair(tree, "grid.z_range_nm", gt=20.0)
    gts = tree["grid"]["g_table_size"]
    if gts is not None:
        _int(tree, "grid.g_table_size", ge=16)
    _int(tree, "mc.n_trajectories", ge=1)
    _num(tree, "mc.dt_ns", gt=0, le=20.0)
    _num(tree, "mc.t_max_ms", gt=0)
    _int(tree, "mc.seed", ge=0, lt=2 ** 64)
    if tree["mc"]["protocol"] not in ("cooling", "loading"):
        raise ConfigError(
            f"mc.protocol: expected 'cooling' or 'loading', "
            f"got {tree['mc']['protocol']!r}")
    _num(tree, "mc.v0_cm_s")
    _num(tree, "mc.z_start_nm", gt=0, optional=True)
    _int(tree, "mc.sample_stride", ge=1)
    _num(tree, "mc.window_us", gt=0)
    if not isinstance(tree["mc"]["store_samples"], bool):
        raise ConfigError("mc.store_samples: expected true/false")
    _num_list(tree, "loading.ek_uk", gt=0)
    _int(tree, "loading.n_per_point", ge=1)
    _num(tree, "loading.z0_nm", gt=0)
    _num(tree, "loading.cone_half_angle_deg", ge=0, le=90)
    _num(tree, "loading.t_max_us", gt=0)
    _num(tree, "loading.temperature_uk", ge=0)
    _num(tree, "loading.flux_per_ms", gt=0)
    _num(tree, "loading.p0", gt=0, le=1, optional=True)
    _num(tree, "loading.t_eff_uk", gt=0, optional=True)
    _pair(tree, "sweeps.z_range_nm", gt=0)
    _int(tree, "sweeps.n_z", ge=2)
    _num_list(tree, "sweeps.epsilon_list_mhz", gt=0)
    _pair(tree, "sweeps.detuning_range_mhz")
    _int(tree, "sweeps.n_detuning", ge=2)
    _num(tree, "sweeps.z_strong_nm", gt=0, optional=True)
    _num(tree, "sweeps.z_weak_nm", gt=0)
    _pair(tree, "teq_map.delta_p_range_mhz", gt=0)
    _pair(tree, "teq_map.z_range_nm", gt=0)
    _int_list(tree, "teq_map.shape", 2, ge=2)
    if not isinstance(tree["output"]["dir"], str):
        raise ConfigError("output.dir: expected a path string")


@dataclass(frozen=True)
class RunConfig:
    params: SystemParams
    geometry: ModeGeometry
    trap: TrapParams
    tree: dict
    provenance: dict
    config_hash: str
    source: str

    @property
    def grid(self) -> dict:
        return self.tree["grid"]

    @property
    def mc(self) -> dict:
        return self.tree["mc"]

    @property
    def loading(self) -> dict:
        return self.tree["loading"]

    @property
    def sweeps(self) -> dict:
        return self.tree["sweeps"]

    @property
    def teq_map(self) -> dict:
        return self.tree["teq_map"]

    @property
    def output_dir(self) -> Path:
        return Path(self.tree["output"]["dir"])

    def grid_region(self):
        """Grid box in meters, null ranges filled from the geometry."""
        g = self.grid
        if g["x_range_nm"] is not None:
            xr = (c.nm(g["x_range_nm"][0]), c.nm(g["x_range_nm"][1]))
        else:
            half = math.pi / self.geometry.k_ax
            xr = (-half, half)
        if g["y_range_nm"] is not None:
            yr = (c.nm(g["y_range_nm"][0]), c.nm(g["y_range_nm"][1]))
        else:
            half = self.geometry.q_len * math.pi / 2.0
            yr = (-half, half)
        zr = (c.nm(g["z_range_nm"][0]), c.nm(g["z_range_nm"][1]))
        return (xr, yr, zr)


def config_hash(tree: dict) -> str:
    physics = {k: v for k, v in tree.items() if k != "output"}
    blob = json.dumps(physics, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _resolve(tree: dict) -> tuple[SystemParams, ModeGeometry, TrapParams]:
    sy = tree["system"]
    dp = c.mhz(sy["delta_p_mhz"])
    wavelength = c.nm(sy["wavelength_nm"])
    params = SystemParams(
        kappa=c.mhz(sy["kappa_mhz"]),
        gamma=c.mhz(sy["gamma_mhz"]),
        delta_a=c.mhz(sy["delta_a_mhz"]) if sy["delta_a_mhz"] is not None else dp,
        delta_c=c.mhz(sy["delta_c_mhz"]) if sy["delta_c_mhz"] is not None else dp,
        epsilon=c.mhz(sy["epsilon_mhz"]),
        k_photon=TWO_PI / wavelength,
        mass=sy["mass_kg"],
        n_max=sy["n_max"],
    )

    ge = tree["geometry"]
    tr = tree["trap"]
    d_len = c.nm(ge["decay_length_nm"])
    q_len = c.nm(ge["width_nm"]) / math.pi
    k_ax = ge["n_eff"] * TWO_PI / wavelength
    geom_kw = {"k_ax": k_ax, "q_len": q_len, "d_len": d_len}
    trap_kw = {
        "d_blue": c.nm(tr["d_blue_nm"]),
        "d_red": c.nm(tr["d_red_nm"]),
        "k_red": tr["n_eff_red"] * TWO_PI / c.nm(tr["lambda_red_nm"]),
        "q_blue": q_len,
        "q_red": q_len,
        "c4": TWO_PI * tr["c4_hz_um4"] * HBAR * (1e-6) ** 4,
        "lambda_tilde": c.nm(tr["lambda_tilde_nm"]),
    }
    need_geom = ge["g0_mhz"] is None
    need_trap = tr["u_blue_mk"] is None
    if need_geom or need_trap:
        targets = CalibrationTargets(
            d_len=d_len,
            z_cool=c.nm(ge["z_cool_nm"]),
            z_trap=c.nm(tr["z_trap_nm"]),
            depth=K_B * tr["depth_mk"] * 1e-3,
            delta_ref=c.mhz(ge["calibration_detuning_mhz"]))
        cal_geom, cal_trap = calibrate(targets, params, geom_kw, trap_kw)
    geom = (cal_geom if need_geom
            else ModeGeometry(g0=c.mhz(ge["g0_mhz"]), **geom_kw))
    trap = (cal_trap if need_trap
            else TrapParams(u_blue=K_B * tr["u_blue_mk"] * 1e-3,
                            u_red=K_B * tr["u_red_mk"] * 1e-3, **trap_kw))
    return params, geom, trap


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Load, merge, validate, and resolve a YAML config file.

    path None means all defaults. overrides maps dotted paths (e.g.
    "mc.seed") to values applied on top of the file, recorded with
    user provenance; they pass through the same validation.
    """
    user: dict = {}
    source = "<defaults>"
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            loaded = yaml.safe_load(p.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {p} is not valid YAML: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(
                f"config file {p} must contain a mapping at top level")
        user = loaded
        source = str(p)
    prov: dict = {}
    tree = _merge(DEFAULTS, user, "", prov)
    for dotted, value in (overrides or {}).items():
        node = tree
        parts = dotted.split(".")
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"unknown config key: {dotted}")
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigError(f"unknown config key: {dotted}")
        node[parts[-1]] = value
        prov[dotted] = "user"
    _validate(tree)
    params, geom, trap = _resolve(tree)
    return RunConfig(params=params, geometry=geom, trap=trap, tree=tree,
                     provenance=prov, config_hash=config_hash(tree),
                     source=source)


def default_config_yaml() -> str:
    """Reference config: the defaults, serialized; parsing it equals
    parsing an empty file."""
    header = ("# Reference configuration. All values shown are the built-in\n"
              "# defaults; an empty config file resolves identically.\n"
              "# Units: *_mhz are omega/2pi in MHz, lengths nm, speeds cm/s,\n"
              "# energies as temperatures (uk/mk suffix). null means derived.\n")
    return header + yaml.safe_dump(DEFAULTS, sort_keys=False,
                                   default_flow_style=None)


def package_version() -> str:
    """git-describe style version string, falling back to the release tag."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).parent, capture_output=True, text=True,
            timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{VERSION}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return VERSION
