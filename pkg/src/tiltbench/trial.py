"""One closed-loop episode: controller at 10 Hz over the 1 kHz plant.

A trial observes, runs one controller step, applies the command, advances
the plant one control period, and repeats until a stop condition fires:

* success -- the error is inside the tolerance at the very first sample
  (the loop-entry condition), or stays inside it for ``success_dwell``
  consecutive samples once the object is moving (a moving object can coast
  through the tolerance ball, so a single sample is not enough);
* timeout -- the runtime elapses (the final sample still counts as success
  if it lands inside the tolerance);
* fell_off -- the observed position leaves the workspace rectangle;
* toppled -- the simulation diverges or the object height leaves its sanity
  band (the simplified plant has no orientation for non-spheres, so toppling
  is detected as state anomaly rather than attitude).

Every control period appends one sample (time, position, raw tilt command,
actuator commands, error) to the record, which serializes to CSV and JSON.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

from .controller import ControllerConfig, controller_init, controller_step
from .geometry import ModuleGeometry
from .plant import (
    ConfigurationError,
    FabricConfig,
    ObjectSpec,
    Plant,
    SimulationDivergedError,
)

SUCCESS = "success"
TIMEOUT = "timeout"
FELL_OFF = "fell_off"
TOPPLED = "toppled"
OUTCOMES = (SUCCESS, TIMEOUT, FELL_OFF, TOPPLED)

CSV_HEADER = "t,x,y,theta_zx,theta_zy,a0,a1,a2,a3,err"


@dataclass(frozen=True)
class TrialConfig:
    controller: ControllerConfig
    object_spec: ObjectSpec
    start_xy: tuple[float, float]
    target_xy: tuple[float, float]
    runtime_s: float = 10.0
    seed: int = 0
    success_dwell: int = 3

    def __post_init__(self) -> None:
        if self.runtime_s <= 0:
            raise ConfigurationError("runtime_s must be positive")
        if self.success_dwell < 1:
            raise ConfigurationError("success_dwell must be >= 1")


@dataclass(frozen=True)
class Sample:
    """One control-period snapshot of the loop."""

    t: float
    x: float
    y: float
    theta_zx: float
    theta_zy: float
    a: tuple[float, float, float, float]
    err: float


@dataclass
class TrialRecord:
    outcome: str
    samples: list[Sample]
    final_error: float


def _check_inside(name: str, xy: tuple[float, float], geo: ModuleGeometry) -> None:
    if abs(xy[0]) > geo.width_m / 2 or abs(xy[1]) > geo.depth_m / 2:
        raise ConfigurationError(f"{name} position {xy} outside the workspace")


def run_trial(
    config: TrialConfig, geo: ModuleGeometry, fabric_config: FabricConfig
) -> TrialRecord:
    """Run one episode to completion and record every control period."""
    _check_inside("start", config.start_xy, geo)
    _check_inside("target", config.target_xy, geo)
    ctrl = config.controller
    period = 1.0 / ctrl.control_frequency
    ratio = period / fabric_config.physics_dt
    steps_per_period = int(round(ratio))
    if abs(ratio - steps_per_period) > 1e-9 or steps_per_period < 1:
        raise ConfigurationError(
            f"control period {period} must be an integer multiple of "
            f"physics_dt {fabric_config.physics_dt}"
        )

    err = math.hypot(
        config.target_xy[0] - config.start_xy[0], config.target_xy[1] - config.start_xy[1]
    )
    plant = Plant(fabric_config, geo, config.object_spec)
    try:
        fabric, obj = plant.init(config.start_xy)
    except SimulationDivergedError:
        # the plant blew up during settling: classify, don't crash the batch
        return TrialRecord(outcome=TOPPLED, samples=[], final_error=err)
    state = controller_init(ctrl, seed=config.seed)
    latency = fabric_config.sensor_latency_samples

    n_samples = int(math.floor(config.runtime_s * ctrl.control_frequency)) + 1
    half_w, half_d = geo.width_m / 2, geo.depth_m / 2
    z_lo, z_hi = 0.0, 3.0 * geo.z0

    samples: list[Sample] = []
    raw_obs: list[tuple[float, float]] = []
    dwell = 0
    outcome = TIMEOUT

    for k in range(n_samples):
        raw_obs.append(plant.observe(obj))
        p = raw_obs[max(0, k - latency)]
        err = math.hypot(config.target_xy[0] - p[0], config.target_xy[1] - p[1])
        command, tilt, state = controller_step(state, ctrl, geo, p, config.target_xy)
        samples.append(
            Sample(
                t=k * period,
                x=p[0],
                y=p[1],
                theta_zx=tilt.theta_zx,
                theta_zy=tilt.theta_zy,
                a=command.a,
                err=err,
            )
        )

        if abs(p[0]) > half_w or abs(p[1]) > half_d:
            outcome = FELL_OFF
            break
        dwell = dwell + 1 if err <= ctrl.tolerance_eps else 0
        if k == 0 and dwell:
            # loop-entry condition: already at the target, nothing to do
            outcome = SUCCESS
            break
        if dwell >= config.success_dwell:
            outcome = SUCCESS
            break
        if k == n_samples - 1:
            outcome = SUCCESS if err <= ctrl.tolerance_eps else TIMEOUT
            break

        fabric = plant.apply_actuators(fabric, command)
        try:
            fabric, obj = plant.step(fabric, obj, steps_per_period)
        except SimulationDivergedError:
            outcome = TOPPLED
            break
        if not (z_lo <= obj.position[2] <= z_hi):
            outcome = TOPPLED
            break

    return TrialRecord(outcome=outcome, samples=samples, final_error=err)


# ----------------------------------------------------------------------
# serialization

def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file + rename so readers never see partial output."""
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc


def _samples_csv(samples: list[Sample]) -> str:
    lines = [CSV_HEADER]
    for s in samples:
        fields = [s.t, s.x, s.y, s.theta_zx, s.theta_zy, *s.a, s.err]
        lines.append(",".join(repr(v) for v in fields))
    return "\n".join(lines) + "\n"


def write_record(record: TrialRecord, path: str, config_echo: dict | None = None) -> None:
    """Serialize to ``path``: .csv for the sample table, .json for the lot.

    Floats are written with ``repr`` so both formats round-trip exactly.
    ``config_echo`` embeds the resolved run configuration in the JSON form.
    """
    if path.endswith(".csv"):
        atomic_write_text(path, _samples_csv(record.samples))
    elif path.endswith(".json"):
        doc = {
            "outcome": record.outcome,
            "final_error": record.final_error,
            "samples": [
                {
                    "t": s.t,
                    "x": s.x,
                    "y": s.y,
                    "theta_zx": s.theta_zx,
                    "theta_zy": s.theta_zy,
                    "a": list(s.a),
                    "err": s.err,
                }
                for s in record.samples
            ],
        }
        if config_echo is not None:
            doc["config"] = config_echo
        atomic_write_text(path, json.dumps(doc, indent=2) + "\n")
    else:
        raise ValueError(f"unsupported record format: {path}")


def read_samples_csv(path: str) -> list[Sample]:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header in {path}: {header!r}")
        out = []
        for line in fh:
            v = [float(tok) for tok in line.strip().split(",")]
            out.append(Sample(v[0], v[1], v[2], v[3], v[4], tuple(v[5:9]), v[9]))
    return out


def read_record_json(path: str) -> TrialRecord:
    with open(path) as fh:
        doc = json.load(fh)
    samples = [
        Sample(d["t"], d["x"], d["y"], d["theta_zx"], d["theta_zy"], tuple(d["a"]), d["err"])
        for d in doc["samples"]
    ]
    return TrialRecord(outcome=doc["outcome"], samples=samples, final_error=doc["final_error"])
