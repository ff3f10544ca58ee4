"""The two closed-loop tilt policies.

* Manhattan: two independent PIDs, one per axis, on the error components
  ``(ex, ey)``. Axis decoupling lets the surface form L-shaped motions and
  saturate both axes at once.
* Euclidean: a single PID on the radial error ``d = |(ex, ey)|`` producing
  one tilt angle, applied along the error direction. Because ``d >= 0``, a
  P-only euclidean controller never emits a negative tilt; overshoot is
  corrected only by the direction flip of ``(ex/d, ey/d)``.

Step functions are value-in/value-out: they take a :class:`ControllerState`
and return a new one, so trials can run concurrently, be replayed from a
seed, or be forked mid-flight. The emitted :class:`TiltCommand` is the raw,
unclamped controller output (useful for phase plots); clamping to the
physical tilt range happens inside the geometric transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    ActuatorCommand,
    DEG26,
    ModuleGeometry,
    SurfaceNormal,
    TiltCommand,
    ZERO_DISTANCE_EPS,
    actuator_commands,
    euclidean_normal,
    manhattan_normal,
)
from .pid import PidGains, PidState, pid_step

MANHATTAN = "manhattan"
EUCLIDEAN = "euclidean"
VARIANTS = (MANHATTAN, EUCLIDEAN)

# Reference tunings (identical x/y gains for the manhattan policy). The
# integral contribution is capped at the physical tilt bound.
DEFAULT_MANHATTAN_GAINS = PidGains(kp=30.9, ki=26.78, kd=15.45, integral_limit=DEG26)
DEFAULT_EUCLIDEAN_GAINS = PidGains(kp=86.72, ki=27.91, kd=10.19, integral_limit=DEG26)


@dataclass(frozen=True)
class ErrorVector:
    """Planar target-minus-object error and its euclidean magnitude."""

    ex: float
    ey: float
    d: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.ex) and math.isfinite(self.ey)):
            raise ValueError("error components must be finite")
        if abs(self.d - math.hypot(self.ex, self.ey)) > 1e-12:
            raise ValueError("d must equal hypot(ex, ey)")


def compute_error(p: tuple[float, float], pd: tuple[float, float]) -> ErrorVector:
    """Error from object position ``p`` to target ``pd``: (xd - x, yd - y)."""
    ex = pd[0] - p[0]
    ey = pd[1] - p[1]
    return ErrorVector(ex, ey, math.hypot(ex, ey))


@dataclass(frozen=True)
class ControllerConfig:
    """Policy selection plus everything a closed-loop step needs.

    ``gains_x``/``gains_y`` drive the manhattan variant, ``gains_r`` the
    euclidean one; the unused slots may be None. ``alpha`` is the actuator
    noise amplitude in meters, resampled i.i.d. per actuator every control
    step. ``tolerance_eps`` is the success radius used by trial runners.
    """

    variant: str
    gains_x: PidGains | None = None
    gains_y: PidGains | None = None
    gains_r: PidGains | None = None
    alpha: float = 0.0
    control_frequency: float = 10.0
    tolerance_eps: float = 0.02
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.alpha < 0 or not math.isfinite(self.alpha):
            raise ValueError("alpha must be finite and >= 0")
        if self.control_frequency <= 0 or not math.isfinite(self.control_frequency):
            raise ValueError("control_frequency must be positive")
        if self.tolerance_eps <= 0 or not math.isfinite(self.tolerance_eps):
            raise ValueError("tolerance_eps must be positive")
        if self.variant == MANHATTAN and (self.gains_x is None or self.gains_y is None):
            raise ValueError("manhattan variant requires gains_x and gains_y")
        if self.variant == EUCLIDEAN and self.gains_r is None:
            raise ValueError("euclidean variant requires gains_r")

    @property
    def control_period(self) -> float:
        return 1.0 / self.control_frequency


def manhattan_config(
    gains: PidGains = DEFAULT_MANHATTAN_GAINS, **kwargs
) -> ControllerConfig:
    """Manhattan config with the same gains on both axes."""
    return ControllerConfig(variant=MANHATTAN, gains_x=gains, gains_y=gains, **kwargs)


def euclidean_config(
    gains: PidGains = DEFAULT_EUCLIDEAN_GAINS, **kwargs
) -> ControllerConfig:
    return ControllerConfig(variant=EUCLIDEAN, gains_r=gains, **kwargs)


@dataclass
class ControllerState:
    """Per-trial controller memory; never share one across trials.

    The RNG advances in place as steps are taken; reproducing a run means
    building a fresh state from the same seed, not reusing this object.
    """

    pid_x: PidState | None
    pid_y: PidState | None
    pid_r: PidState | None
    rng: np.random.Generator
    last_tilt: TiltCommand


def controller_init(config: ControllerConfig, seed: int | None = None) -> ControllerState:
    """Fresh state for one trial; ``seed`` overrides ``config.rng_seed``."""
    is_manhattan = config.variant == MANHATTAN
    return ControllerState(
        pid_x=PidState() if is_manhattan else None,
        pid_y=PidState() if is_manhattan else None,
        pid_r=None if is_manhattan else PidState(),
        rng=np.random.default_rng(config.rng_seed if seed is None else seed),
        last_tilt=TiltCommand(0.0, 0.0),
    )


def sample_noise(state: ControllerState, alpha: float) -> np.ndarray:
    """Four i.i.d. uniform samples in [-1, 1] scaled by ``alpha``.

    Always draws, so the RNG stream advances identically regardless of the
    amplitude; ``alpha=0`` yields exact zeros.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    return alpha * state.rng.uniform(-1.0, 1.0, 4)


def manhattan_step(
    state: ControllerState,
    config: ControllerConfig,
    geo: ModuleGeometry,
    p: tuple[float, float],
    pd: tuple[float, float],
) -> tuple[ActuatorCommand, TiltCommand, ControllerState]:
    """One manhattan control step: per-axis PIDs, then the plane transform.

    Returns the clamped actuator command, the raw (unclamped) tilt for
    logging, and the successor state.
    """
    err = compute_error(p, pd)
    dt = config.control_period
    theta_zx, pid_x = pid_step(state.pid_x, config.gains_x, err.ex, dt)
    theta_zy, pid_y = pid_step(state.pid_y, config.gains_y, err.ey, dt)
    tilt = TiltCommand(theta_zx, theta_zy)
    normal = manhattan_normal(tilt, geo.max_tilt)
    command = _transform(normal, geo, config, state)
    new_state = ControllerState(
        pid_x=pid_x, pid_y=pid_y, pid_r=None, rng=state.rng, last_tilt=tilt
    )
    return command, tilt, new_state


def euclidean_step(
    state: ControllerState,
    config: ControllerConfig,
    geo: ModuleGeometry,
    p: tuple[float, float],
    pd: tuple[float, float],
) -> tuple[ActuatorCommand, TiltCommand, ControllerState]:
    """One euclidean control step: radial PID, tilt along the error direction.

    The returned :class:`TiltCommand` is the logging equivalent
    ``theta * (ex/d, ey/d)`` (zero when the error vanishes), again unclamped.
    """
    err = compute_error(p, pd)
    dt = config.control_period
    theta, pid_r = pid_step(state.pid_r, config.gains_r, err.d, dt)
    normal = euclidean_normal(err.ex, err.ey, theta, geo.max_tilt)
    if err.d < ZERO_DISTANCE_EPS:
        tilt = TiltCommand(0.0, 0.0)
    else:
        tilt = TiltCommand(theta * err.ex / err.d, theta * err.ey / err.d)
    command = _transform(normal, geo, config, state)
    new_state = ControllerState(
        pid_x=None, pid_y=None, pid_r=pid_r, rng=state.rng, last_tilt=tilt
    )
    return command, tilt, new_state


def controller_step(
    state: ControllerState,
    config: ControllerConfig,
    geo: ModuleGeometry,
    p: tuple[float, float],
    pd: tuple[float, float],
) -> tuple[ActuatorCommand, TiltCommand, ControllerState]:
    """Dispatch on the configured variant."""
    step = manhattan_step if config.variant == MANHATTAN else euclidean_step
    return step(state, config, geo, p, pd)


def _transform(
    normal: SurfaceNormal,
    geo: ModuleGeometry,
    config: ControllerConfig,
    state: ControllerState,
) -> ActuatorCommand:
    delta = sample_noise(state, 1.0)  # unit amplitude; alpha scales below
    return actuator_commands(normal, geo, config.alpha, tuple(delta))
