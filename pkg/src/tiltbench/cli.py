"""Command-line front end: config loading and the three experiment flows.

Config files are YAML with five sections (geometry, fabric, object,
controller(s), experiment) plus output settings; every key has a default,
unknown keys are rejected, and the fully-resolved config is echoed into
every JSON output for reproducibility. Dotted-path overrides come from
``--set section.key=value`` flags or from environment variables named
``TILTBENCH_SECTION__KEY`` (double underscore separates path segments).

Exit codes are stable: 0 success, 1 trial timed out, 2 configuration error,
3 object fell off, 4 simulation toppled/diverged, 5 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass

import yaml

from .controller import (
    ControllerConfig,
    DEFAULT_EUCLIDEAN_GAINS,
    DEFAULT_MANHATTAN_GAINS,
    EUCLIDEAN,
    MANHATTAN,
    euclidean_config,
    manhattan_config,
)
from .evaluation import (
    GridSpec,
    SuccessGrid,
    diff_grids,
    improvement_summary,
    rates_csv,
    run_grid,
    write_grid_outputs,
)
from .geometry import ModuleGeometry
from .pid import PidGains
from .plant import (
    APPROXIMATE_PRESETS,
    ConfigurationError,
    FabricConfig,
    OBJECT_PRESETS,
    ObjectSpec,
)
from .trial import (
    FELL_OFF,
    SUCCESS,
    TIMEOUT,
    TOPPLED,
    TrialConfig,
    atomic_write_text,
    run_trial,
    write_record,
)

ENV_PREFIX = "TILTBENCH_"

EXIT_SUCCESS = 0
EXIT_TIMEOUT = 1
EXIT_CONFIG = 2
EXIT_FELL_OFF = 3
EXIT_TOPPLED = 4
EXIT_IO = 5

OUTCOME_EXIT = {SUCCESS: EXIT_SUCCESS, TIMEOUT: EXIT_TIMEOUT, FELL_OFF: EXIT_FELL_OFF, TOPPLED: EXIT_TOPPLED}


class ConfigError(ValueError):
    """Bad run configuration; maps to exit code 2."""


@dataclass
class TrialExperiment:
    start_xy: tuple[float, float] = (0.0, 0.0)
    target_xy: tuple[float, float] = (0.1, 0.1)
    runtime_s: float = 10.0
    seed: int = 0
    success_dwell: int = 3


@dataclass
class GridExperiment:
    grid: GridSpec
    runtime_s: float = 10.0
    success_dwell: int = 3


@dataclass
class RunConfig:
    geometry: ModuleGeometry
    fabric: FabricConfig
    object_spec: ObjectSpec
    object_name: str | None
    controller: ControllerConfig
    controllers: dict[str, ControllerConfig] | None
    experiment: TrialExperiment | GridExperiment
    output_dir: str
    run_id: str | None


# ----------------------------------------------------------------------
# parsing helpers

def _reject_unknown(section: dict, allowed: set[str], ctx: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {ctx}: {', '.join(unknown)}")


def _mapping(raw: dict, key: str) -> dict:
    value = raw.get(key, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"section {key!r} must be a mapping")
    return dict(value)


def _xy(value, ctx: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{ctx} must be a [x, y] pair")
    return float(value[0]), float(value[1])


def _parse_geometry(raw: dict) -> ModuleGeometry:
    sec = _mapping(raw, "geometry")
    _reject_unknown(
        sec, {"width_m", "depth_m", "z0", "actuator_travel", "max_tilt_deg"}, "geometry"
    )
    kwargs = {k: float(v) for k, v in sec.items() if k != "max_tilt_deg"}
    if "max_tilt_deg" in sec:
        kwargs["max_tilt"] = math.radians(float(sec["max_tilt_deg"]))
    return ModuleGeometry(**kwargs)


_FABRIC_KEYS = {
    "grid_nx", "grid_ny", "width_m", "depth_m", "node_mass", "k_struct", "k_shear",
    "k_bend", "damping", "pretension", "gravity", "physics_dt", "substeps",
    "actuator_rate_limit", "contact_stiffness", "contact_damping", "rolling_resistance",
    "settle_time", "sensor_latency_samples", "sensor_quantization_m",
}
_FABRIC_INTS = {"grid_nx", "grid_ny", "substeps", "sensor_latency_samples"}


def _parse_fabric(raw: dict, geo: ModuleGeometry) -> FabricConfig:
    sec = _mapping(raw, "fabric")
    _reject_unknown(sec, _FABRIC_KEYS, "fabric")
    kwargs = {k: (int(v) if k in _FABRIC_INTS else float(v)) for k, v in sec.items()}
    kwargs.setdefault("width_m", geo.width_m)
    kwargs.setdefault("depth_m", geo.depth_m)
    return FabricConfig(**kwargs)


_OBJECT_KEYS = {"shape", "mass", "radius", "half_extents", "height", "friction_mu", "label"}


def _parse_object(raw: dict) -> tuple[ObjectSpec, str | None]:
    value = raw.get("object", "sphere")
    if isinstance(value, str):
        if value not in OBJECT_PRESETS:
            raise ConfigError(
                f"unknown object preset {value!r}; choose from {sorted(OBJECT_PRESETS)}"
            )
        return OBJECT_PRESETS[value], value
    if not isinstance(value, dict):
        raise ConfigError("object must be a preset name or a mapping")
    _reject_unknown(value, _OBJECT_KEYS, "object")
    kwargs = dict(value)
    if "half_extents" in kwargs and kwargs["half_extents"] is not None:
        kwargs["half_extents"] = _xy(kwargs["half_extents"], "object.half_extents")
    return ObjectSpec(**kwargs), None


_CONTROLLER_KEYS = {
    "variant", "kp", "ki", "kd", "integral_limit", "alpha",
    "control_frequency", "tolerance_eps", "rng_seed",
}


def _parse_controller(sec: dict, geo: ModuleGeometry, ctx: str, default_variant=None) -> ControllerConfig:
    _reject_unknown(sec, _CONTROLLER_KEYS, ctx)
    variant = sec.get("variant", default_variant)
    if variant not in (MANHATTAN, EUCLIDEAN):
        raise ConfigError(f"{ctx}.variant must be '{MANHATTAN}' or '{EUCLIDEAN}'")
    reference = DEFAULT_MANHATTAN_GAINS if variant == MANHATTAN else DEFAULT_EUCLIDEAN_GAINS
    gains = PidGains(
        kp=float(sec.get("kp", reference.kp)),
        ki=float(sec.get("ki", reference.ki)),
        kd=float(sec.get("kd", reference.kd)),
        integral_limit=float(sec.get("integral_limit", geo.max_tilt)),
    )
    kwargs = dict(
        alpha=float(sec.get("alpha", 0.0)),
        control_frequency=float(sec.get("control_frequency", 10.0)),
        tolerance_eps=float(sec.get("tolerance_eps", 0.02)),
        rng_seed=int(sec.get("rng_seed", 0)),
    )
    factory = manhattan_config if variant == MANHATTAN else euclidean_config
    return factory(gains=gains, **kwargs)


_TRIAL_KEYS = {"kind", "start_xy", "target_xy", "runtime_s", "seed", "success_dwell"}
_GRID_KEYS = {"kind", "cells_x", "cells_y", "trials_per_cell", "master_seed", "runtime_s", "success_dwell"}


def _parse_experiment(raw: dict) -> TrialExperiment | GridExperiment:
    sec = _mapping(raw, "experiment")
    kind = sec.get("kind", "trial")
    if kind == "trial":
        _reject_unknown(sec, _TRIAL_KEYS, "experiment")
        return TrialExperiment(
            start_xy=_xy(sec.get("start_xy", [0.0, 0.0]), "experiment.start_xy"),
            target_xy=_xy(sec.get("target_xy", [0.1, 0.1]), "experiment.target_xy"),
            runtime_s=float(sec.get("runtime_s", 10.0)),
            seed=int(sec.get("seed", 0)),
            success_dwell=int(sec.get("success_dwell", 3)),
        )
    if kind == "grid":
        _reject_unknown(sec, _GRID_KEYS, "experiment")
        return GridExperiment(
            grid=GridSpec(
                cells_x=int(sec.get("cells_x", 20)),
                cells_y=int(sec.get("cells_y", 20)),
                trials_per_cell=int(sec.get("trials_per_cell", 10)),
                master_seed=int(sec.get("master_seed", 0)),
            ),
            runtime_s=float(sec.get("runtime_s", 10.0)),
            success_dwell=int(sec.get("success_dwell", 3)),
        )
    raise ConfigError(f"experiment.kind must be 'trial' or 'grid', got {kind!r}")


_TOP_KEYS = {"geometry", "fabric", "object", "controller", "controllers", "experiment", "output_dir", "run_id"}


def parse_run_config(raw: dict) -> RunConfig:
    """Validate and resolve a raw config mapping into typed sections."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    _reject_unknown(raw, _TOP_KEYS, "config root")
    geo = _parse_geometry(raw)
    fabric = _parse_fabric(raw, geo)
    object_spec, object_name = _parse_object(raw)
    controller = _parse_controller(
        _mapping(raw, "controller"), geo, "controller", default_variant=MANHATTAN
    )
    controllers = None
    if "controllers" in raw:
        sec = _mapping(raw, "controllers")
        _reject_unknown(sec, {MANHATTAN, EUCLIDEAN}, "controllers")
        controllers = {
            name: _parse_controller(
                _mapping(sec, name), geo, f"controllers.{name}", default_variant=name
            )
            for name in (MANHATTAN, EUCLIDEAN)
        }
        for name, cfg in controllers.items():
            if cfg.variant != name:
                raise ConfigError(f"controllers.{name} must keep variant {name!r}")
    experiment = _parse_experiment(raw)
    output_dir = str(raw.get("output_dir") or "out")
    run_id = raw.get("run_id")
    return RunConfig(
        geometry=geo,
        fabric=fabric,
        object_spec=object_spec,
        object_name=object_name,
        controller=controller,
        controllers=controllers,
        experiment=experiment,
        output_dir=output_dir,
        run_id=str(run_id) if run_id is not None else None,
    )


def _set_path(raw: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = raw
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override {dotted}: {p} is not a mapping")
    node[parts[-1]] = value


def _env_overrides() -> list[str]:
    out = []
    for name, value in sorted(os.environ.items()):
        if name.startswith(ENV_PREFIX) and "__" in name[len(ENV_PREFIX):]:
            path = name[len(ENV_PREFIX):].lower().replace("__", ".")
            out.append(f"{path}={value}")
    return out


def load_run_config(path: str, sets: list[str], seed: int | None, out: str | None) -> RunConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    for item in _env_overrides() + list(sets):
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        dotted, _, text = item.partition("=")
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse override value {text!r}: {exc}") from exc
        _set_path(raw, dotted.strip(), value)
    if seed is not None:
        sec = raw.setdefault("experiment", {}) or {}
        raw["experiment"] = sec
        key = "master_seed" if sec.get("kind") == "grid" else "seed"
        sec[key] = seed
    if out is not None:
        raw["output_dir"] = out
    return parse_run_config(raw)


# ----------------------------------------------------------------------
# config echo (fully resolved, file-schema shaped)

def config_echo(cfg: RunConfig) -> dict:
    geo, fab, ctrl = cfg.geometry, cfg.fabric, cfg.controller

    def ctrl_echo(c: ControllerConfig) -> dict:
        gains = c.gains_x if c.variant == MANHATTAN else c.gains_r
        return {
            "variant": c.variant,
            "kp": gains.kp,
            "ki": gains.ki,
            "kd": gains.kd,
            "integral_limit": gains.integral_limit,
            "alpha": c.alpha,
            "control_frequency": c.control_frequency,
            "tolerance_eps": c.tolerance_eps,
            "rng_seed": c.rng_seed,
        }

    echo = {
        "geometry": {
            "width_m": geo.width_m,
            "depth_m": geo.depth_m,
            "z0": geo.z0,
            "actuator_travel": geo.actuator_travel,
            "max_tilt_deg": math.degrees(geo.max_tilt),
        },
        "fabric": {
            "grid_nx": fab.grid_nx,
            "grid_ny": fab.grid_ny,
            "width_m": fab.width_m,
            "depth_m": fab.depth_m,
            "node_mass": fab.node_mass,
            "k_struct": fab.k_struct,
            "k_shear": fab.k_shear,
            "k_bend": fab.k_bend,
            "damping": fab.damping,
            "pretension": fab.pretension,
            "gravity": fab.gravity,
            "physics_dt": fab.physics_dt,
            "substeps": fab.substeps,
            "actuator_rate_limit": fab.actuator_rate_limit,
            "contact_stiffness": fab.contact_stiffness,
            "contact_damping": fab.contact_damping,
            "rolling_resistance": fab.rolling_resistance,
            "settle_time": fab.settle_time,
            "sensor_latency_samples": fab.sensor_latency_samples,
            "sensor_quantization_m": fab.sensor_quantization_m,
        },
        "object": {
            "preset": cfg.object_name,
            "shape": cfg.object_spec.shape,
            "mass": cfg.object_spec.mass,
            "radius": cfg.object_spec.radius,
            "half_extents": list(cfg.object_spec.half_extents)
            if cfg.object_spec.half_extents
            else None,
            "height": cfg.object_spec.height,
            "friction_mu": cfg.object_spec.friction_mu,
            "label": cfg.object_spec.label,
        },
        "controller": ctrl_echo(ctrl),
        "output_dir": cfg.output_dir,
    }
    if cfg.controllers:
        echo["controllers"] = {name: ctrl_echo(c) for name, c in cfg.controllers.items()}
    exp = cfg.experiment
    if isinstance(exp, TrialExperiment):
        echo["experiment"] = {
            "kind": "trial",
            "start_xy": list(exp.start_xy),
            "target_xy": list(exp.target_xy),
            "runtime_s": exp.runtime_s,
            "seed": exp.seed,
            "success_dwell": exp.success_dwell,
        }
    else:
        echo["experiment"] = {
            "kind": "grid",
            "cells_x": exp.grid.cells_x,
            "cells_y": exp.grid.cells_y,
            "trials_per_cell": exp.grid.trials_per_cell,
            "master_seed": exp.grid.master_seed,
            "runtime_s": exp.runtime_s,
            "success_dwell": exp.success_dwell,
        }
    return echo


# ----------------------------------------------------------------------
# commands

def _warn_approximate_object(cfg: RunConfig) -> None:
    if cfg.object_name in APPROXIMATE_PRESETS:
        spec = cfg.object_spec
        print(
            f"warning: preset '{cfg.object_name}' is approximated as a {spec.shape} "
            "with adjusted friction; its real geometry is not modeled",
            file=sys.stderr,
        )


def _run_dir(cfg: RunConfig, default_id: str) -> str:
    run_dir = os.path.join(cfg.output_dir, cfg.run_id or default_id)
    os.makedirs(run_dir, exist_ok=True)
    return run_dir


def cmd_trial(cfg: RunConfig) -> int:
    if not isinstance(cfg.experiment, TrialExperiment):
        raise ConfigError("the trial command needs experiment.kind: trial")
    exp = cfg.experiment
    _warn_approximate_object(cfg)
    trial = TrialConfig(
        controller=cfg.controller,
        object_spec=cfg.object_spec,
        start_xy=exp.start_xy,
        target_xy=exp.target_xy,
        runtime_s=exp.runtime_s,
        seed=exp.seed,
        success_dwell=exp.success_dwell,
    )
    record = run_trial(trial, cfg.geometry, cfg.fabric)
    run_dir = _run_dir(cfg, "trial")
    write_record(record, os.path.join(run_dir, "0.csv"))
    write_record(record, os.path.join(run_dir, "0.json"), config_echo=config_echo(cfg))
    phase = "theta_zx,theta_zy\n" + "".join(
        f"{s.theta_zx!r},{s.theta_zy!r}\n" for s in record.samples
    )
    atomic_write_text(os.path.join(run_dir, "0_phase.csv"), phase)
    print(
        f"outcome={record.outcome} final_error={record.final_error:.6f} "
        f"samples={len(record.samples)}"
    )
    return OUTCOME_EXIT[record.outcome]


def _grid_settings(cfg: RunConfig) -> GridExperiment:
    if not isinstance(cfg.experiment, GridExperiment):
        raise ConfigError("this command needs experiment.kind: grid")
    return cfg.experiment


def cmd_heatmap(cfg: RunConfig, jobs: int) -> int:
    exp = _grid_settings(cfg)
    _warn_approximate_object(cfg)
    grid = run_grid(
        exp.grid,
        cfg.controller,
        cfg.object_spec,
        cfg.geometry,
        cfg.fabric,
        runtime_s=exp.runtime_s,
        success_dwell=exp.success_dwell,
        jobs=jobs,
    )
    run_dir = _run_dir(cfg, "heatmap")
    write_grid_outputs(grid, run_dir, "heatmap", config_echo(cfg))
    print(f"aggregate={grid.aggregate:.4f}")
    return EXIT_SUCCESS


def cmd_compare(cfg: RunConfig, jobs: int) -> int:
    exp = _grid_settings(cfg)
    _warn_approximate_object(cfg)
    if cfg.controllers:
        pair = cfg.controllers
    else:
        base = cfg.controller
        shared = dict(
            alpha=base.alpha,
            control_frequency=base.control_frequency,
            tolerance_eps=base.tolerance_eps,
            rng_seed=base.rng_seed,
        )
        pair = {MANHATTAN: manhattan_config(**shared), EUCLIDEAN: euclidean_config(**shared)}
    grids = {}
    for name in (MANHATTAN, EUCLIDEAN):
        grids[name] = run_grid(
            exp.grid,
            pair[name],
            cfg.object_spec,
            cfg.geometry,
            cfg.fabric,
            runtime_s=exp.runtime_s,
            success_dwell=exp.success_dwell,
            jobs=jobs,
        )
    run_dir = _run_dir(cfg, "compare")
    echo = config_echo(cfg)
    write_grid_outputs(grids[MANHATTAN], run_dir, MANHATTAN, echo)
    write_grid_outputs(grids[EUCLIDEAN], run_dir, EUCLIDEAN, echo)
    diff = diff_grids(grids[MANHATTAN], grids[EUCLIDEAN])
    diff_csv = rates_csv(SuccessGrid(spec=exp.grid, rates=diff.rates))
    atomic_write_text(os.path.join(run_dir, "diff_rates.csv"), diff_csv)
    summary = improvement_summary(grids[MANHATTAN].aggregate, grids[EUCLIDEAN].aggregate)
    summary["config"] = echo
    atomic_write_text(
        os.path.join(run_dir, "summary.json"), json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )
    print(
        f"manhattan={grids[MANHATTAN].aggregate:.4f} "
        f"euclidean={grids[EUCLIDEAN].aggregate:.4f} "
        f"diff={diff.aggregate_diff:.4f}"
    )
    return EXIT_SUCCESS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tiltbench",
        description="Closed-loop tilt control workbench for a soft-fabric surface",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("trial", "run one closed-loop trial and write its record"),
        ("heatmap", "run a success-rate grid for one controller"),
        ("compare", "run manhattan and euclidean grids with shared seeds"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", default=None, help="override output_dir")
        p.add_argument("--seed", type=int, default=None, help="override the experiment seed")
        p.add_argument("--jobs", type=int, default=None, help="worker processes (grid runs)")
        p.add_argument(
            "--set",
            dest="sets",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="dotted-path config override, repeatable",
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config, args.sets, args.seed, args.out)
        jobs = args.jobs if args.jobs else (os.cpu_count() or 1)
        if args.command == "trial":
            return cmd_trial(cfg)
        if args.command == "heatmap":
            return cmd_heatmap(cfg, jobs)
        return cmd_compare(cfg, jobs)
    except (ConfigError, ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
