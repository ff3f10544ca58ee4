"""Discrete PID with clamped-integral anti-windup, as a pure step function.

State is a value; :func:`pid_step` consumes one and returns the next, so a
controller can be replayed, forked, or fuzzed without hidden mutation.
The anti-windup scheme bounds the integral *contribution*: after every step
``|ki * integral| <= integral_limit``. The derivative acts on the error and
is zero on the first step (the previous error is seeded with the current
one).
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class PidGains:
    """Gains mapping position error (m) to a tilt angle (rad).

    ``integral_limit`` clamps the integral contribution ``ki * I`` in
    radians; a natural choice is the plant's maximum tilt, since output
    beyond it is discarded downstream anyway.
    """

    kp: float
    ki: float
    kd: float
    integral_limit: float

    def __post_init__(self) -> None:
        for name in ("kp", "ki", "kd", "integral_limit"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
        if self.kp < 0 or self.ki < 0 or self.kd < 0:
            raise ValueError("PID gains must be non-negative")
        if self.integral_limit <= 0:
            raise ValueError("integral_limit must be positive")


@dataclass(frozen=True)
class PidState:
    integral: float = 0.0
    prev_error: float = 0.0
    initialized: bool = False


def pid_step(
    state: PidState, gains: PidGains, error: float, dt: float
) -> tuple[float, PidState]:
    """Advance the controller by one sample; returns (output, next state).

    output = kp*e + ki*I' + kd*(e - e_prev)/dt, with I' the accumulated
    error-time clamped so that ki*I' stays within +-integral_limit.
    """
    if not math.isfinite(dt) or dt <= 0:
        raise ValueError(f"dt must be a positive finite time step, got {dt!r}")
    if not math.isfinite(error):
        raise ValueError(f"error must be finite, got {error!r}")

    integral = state.integral + error * dt
    if gains.ki > 0:
        bound = gains.integral_limit / gains.ki
        if integral > bound:
            integral = bound
        elif integral < -bound:
            integral = -bound

    prev = state.prev_error if state.initialized else error
    derivative = (error - prev) / dt

    output = gains.kp * error + gains.ki * integral + gains.kd * derivative
    return output, PidState(integral=integral, prev_error=error, initialized=True)


def pid_reset(state: PidState) -> PidState:
    """Fresh state: zero integral, derivative re-seeded on the next step."""
    del state
    return PidState()
