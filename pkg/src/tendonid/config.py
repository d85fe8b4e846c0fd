"""Declarative run configuration.

INI-style key-value files with one section per pipeline stage. Every key
has a documented default, so an empty (or absent) file reproduces the
stock experiment; unknown sections or keys fail loudly rather than being
silently ignored.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .errors import ConfigError
from .library import LibrarySpec
from .mpc import MpcConfig
from .n4sid import N4sidConfig
from .plantsim import ExcitationSpec, SnakePlantConfig

_ALLOWED = {
    "global": {"sample_time_s", "seed"},
    "plant": {"inertia_diag", "gravity_gain", "viscous_coeff",
              "coulomb_coeff", "moment_arm_m", "coupling_eps",
              "force_bias_N"},
    "excitation": {"kind", "duration_s", "amplitude_N"},
    "n4sid": {"block_rows_i", "order", "sv_threshold"},
    "arx": {"na", "nb", "nk"},
    "sindyc": {"threshold", "poly_degree_state", "poly_degree_input",
               "include_constant", "include_trig",
               "include_state_input_products"},
    "mpc": {"horizon", "q_weight", "qf_weight", "r_weight", "u_min",
            "u_max", "x_min", "x_max", "slack_weight"},
}


@dataclass
class RunConfig:
    sample_time_s: float = 0.03
    seed: int = 0
    plant: SnakePlantConfig = field(default_factory=SnakePlantConfig)
    excitation_kind: str = "multisine"
    excitation_duration_s: float = 120.0
    excitation_amplitude_N: float = 56.0
    n4sid: N4sidConfig = field(default_factory=N4sidConfig)
    arx_na: int = 8
    arx_nb: int = 8
    arx_nk: int = 1
    library: LibrarySpec = field(default_factory=LibrarySpec)
    sindy_threshold: float = 0.0035
    mpc: MpcConfig = field(default_factory=MpcConfig)

    def excitation(self, kind: str | None = None,
                   seed_offset: int = 0) -> ExcitationSpec:
        return ExcitationSpec(
            kind=kind if kind is not None else self.excitation_kind,
            duration_s=self.excitation_duration_s,
            amplitude_N=self.excitation_amplitude_N,
            seed=self.seed + seed_offset,
            bias_N=self.plant.force_bias_N,
        )


def _pair(raw: str, key: str) -> tuple[float, float]:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"{key} expects two comma-separated values")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def _get(section, key: str, conv, default):
    if key not in section:
        return default
    raw = section[key].strip()
    try:
        return conv(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def _int_or_auto(raw: str):
    if raw.lower() == "auto":
        return None
    return int(raw)


def _bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw}")


def load_run_config(path=None) -> RunConfig:
    """Parse a config file; path None means all defaults."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    # keys carry unit suffixes like force_bias_N; do not lowercase them
    parser.optionxform = str
    if path is not None:
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")

    for sec in parser.sections():
        if sec not in _ALLOWED:
            raise ConfigError(f"unknown config section [{sec}]")
        for key in parser[sec]:
            if key not in _ALLOWED[sec]:
                raise ConfigError(f"unknown key {key!r} in section [{sec}]")

    cfg = RunConfig()
    if parser.has_section("global"):
        g = parser["global"]
        cfg.sample_time_s = _get(g, "sample_time_s", float, cfg.sample_time_s)
        cfg.seed = _get(g, "seed", int, cfg.seed)

    if parser.has_section("plant"):
        s = parser["plant"]
        base = SnakePlantConfig()
        try:
            cfg.plant = SnakePlantConfig(
                inertia_diag=_get(s, "inertia_diag",
                                  lambda r: _pair(r, "inertia_diag"),
                                  base.inertia_diag),
                gravity_gain=_get(s, "gravity_gain",
                                  lambda r: _pair(r, "gravity_gain"),
                                  base.gravity_gain),
                viscous_coeff=_get(s, "viscous_coeff",
                                   lambda r: _pair(r, "viscous_coeff"),
                                   base.viscous_coeff),
                coulomb_coeff=_get(s, "coulomb_coeff",
                                   lambda r: _pair(r, "coulomb_coeff"),
                                   base.coulomb_coeff),
                moment_arm_m=_get(s, "moment_arm_m", float, base.moment_arm_m),
                coupling_eps=_get(s, "coupling_eps", float, base.coupling_eps),
                force_bias_N=_get(s, "force_bias_N", float, base.force_bias_N),
            )
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(f"invalid plant config: {exc}") from exc

    if parser.has_section("excitation"):
        s = parser["excitation"]
        cfg.excitation_kind = _get(s, "kind", str, cfg.excitation_kind)
        cfg.excitation_duration_s = _get(s, "duration_s", float,
                                         cfg.excitation_duration_s)
        cfg.excitation_amplitude_N = _get(s, "amplitude_N", float,
                                          cfg.excitation_amplitude_N)

    if parser.has_section("n4sid"):
        s = parser["n4sid"]
        base = N4sidConfig()
        try:
            cfg.n4sid = N4sidConfig(
                block_rows_i=_get(s, "block_rows_i", _int_or_auto,
                                  base.block_rows_i),
                order=_get(s, "order", _int_or_auto, base.order),
                sv_threshold=_get(s, "sv_threshold", float, base.sv_threshold),
            )
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(f"invalid n4sid config: {exc}") from exc

    if parser.has_section("arx"):
        s = parser["arx"]
        cfg.arx_na = _get(s, "na", int, cfg.arx_na)
        cfg.arx_nb = _get(s, "nb", int, cfg.arx_nb)
        cfg.arx_nk = _get(s, "nk", int, cfg.arx_nk)

    if parser.has_section("sindyc"):
        s = parser["sindyc"]
        cfg.sindy_threshold = _get(s, "threshold", float, cfg.sindy_threshold)
        base = LibrarySpec()
        try:
            cfg.library = LibrarySpec(
                include_constant=_get(s, "include_constant", _bool,
                                      base.include_constant),
                poly_degree_state=_get(s, "poly_degree_state", int,
                                       base.poly_degree_state),
                poly_degree_input=_get(s, "poly_degree_input", int,
                                       base.poly_degree_input),
                include_state_input_products=_get(
                    s, "include_state_input_products", _bool,
                    base.include_state_input_products),
                include_trig=_get(s, "include_trig", _bool, base.include_trig),
            )
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(f"invalid sindyc config: {exc}") from exc

    if parser.has_section("mpc"):
        s = parser["mpc"]
        base = MpcConfig()
        import numpy as np

        try:
            cfg.mpc = MpcConfig(
                horizon=_get(s, "horizon", int, base.horizon),
                Q=_get(s, "q_weight", float, 1.0) * np.eye(2),
                Qf=_get(s, "qf_weight", float, 1.0) * np.eye(2),
                R=_get(s, "r_weight", float, 0.1) * np.eye(4),
                u_min=np.full(4, _get(s, "u_min", float, 20.0)),
                u_max=np.full(4, _get(s, "u_max", float, 190.0)),
                x_min=np.full(2, _get(s, "x_min", float, -1.0)),
                x_max=np.full(2, _get(s, "x_max", float, 1.0)),
                sample_time_s=cfg.sample_time_s,
                slack_weight=_get(s, "slack_weight", float, base.slack_weight),
            )
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(f"invalid mpc config: {exc}") from exc
    else:
        cfg.mpc = MpcConfig(sample_time_s=cfg.sample_time_s)

    return cfg


def dump_run_config(cfg: RunConfig) -> str:
    """Render the effective configuration in the same INI format, for
    provenance files."""
    lines = ["[global]",
             f"sample_time_s = {cfg.sample_time_s}",
             f"seed = {cfg.seed}",
             "",
             "[plant]",
             f"inertia_diag = {cfg.plant.inertia_diag[0]}, {cfg.plant.inertia_diag[1]}",
             f"gravity_gain = {cfg.plant.gravity_gain[0]}, {cfg.plant.gravity_gain[1]}",
             f"viscous_coeff = {cfg.plant.viscous_coeff[0]}, {cfg.plant.viscous_coeff[1]}",
             f"coulomb_coeff = {cfg.plant.coulomb_coeff[0]}, {cfg.plant.coulomb_coeff[1]}",
             f"moment_arm_m = {cfg.plant.moment_arm_m}",
             f"coupling_eps = {cfg.plant.coupling_eps}",
             f"force_bias_N = {cfg.plant.force_bias_N}",
             "",
             "[excitation]",
             f"kind = {cfg.excitation_kind}",
             f"duration_s = {cfg.excitation_duration_s}",
             f"amplitude_N = {cfg.excitation_amplitude_N}",
             "",
             "[n4sid]",
             f"block_rows_i = {'auto' if cfg.n4sid.block_rows_i is None else cfg.n4sid.block_rows_i}",
             f"order = {'auto' if cfg.n4sid.order is None else cfg.n4sid.order}",
             f"sv_threshold = {cfg.n4sid.sv_threshold}",
             "",
             "[arx]",
             f"na = {cfg.arx_na}",
             f"nb = {cfg.arx_nb}",
             f"nk = {cfg.arx_nk}",
             "",
             "[sindyc]",
             f"threshold = {cfg.sindy_threshold}",
             f"poly_degree_state = {cfg.library.poly_degree_state}",
             f"poly_degree_input = {cfg.library.poly_degree_input}",
             f"include_constant = {cfg.library.include_constant}",
             f"include_trig = {cfg.library.include_trig}",
             f"include_state_input_products = {cfg.library.include_state_input_products}",
             "",
             "[mpc]",
             f"horizon = {cfg.mpc.horizon}",
             f"q_weight = {cfg.mpc.Q[0, 0]}",
             f"qf_weight = {cfg.mpc.Qf[0, 0]}",
             f"r_weight = {cfg.mpc.R[0, 0]}",
             f"u_min = {cfg.mpc.u_min[0]}",
             f"u_max = {cfg.mpc.u_max[0]}",
             f"x_min = {cfg.mpc.x_min[0]}",
             f"x_max = {cfg.mpc.x_max[0]}",
             f"slack_weight = {cfg.mpc.slack_weight}",
             ""]
    return "\n".join(lines)
