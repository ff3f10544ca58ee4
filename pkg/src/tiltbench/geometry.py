"""Tilt-angle to actuator-command transform for a four-corner tilt surface.

The surface is treated as a rigid plane through the module center
``(0, 0, z0)``. Tilt angles are measured from the Z axis toward X and Y and
become a plane normal; intersecting the plane with the vertical line at each
actuator corner yields that corner's height, and the command is the
displacement from rest. Two normal parameterizations are provided:

* :func:`manhattan_normal` -- independent per-axis tilts
  ``n = (sin(theta_zx), sin(theta_zy), cos(theta_zx))``,
* :func:`euclidean_normal` -- one tilt angle applied along the in-plane
  error direction ``(ex, ey) / d``.

Note the Manhattan form uses ``nz = cos(theta_zx)`` (not the product of both
cosines). The plane equation is homogeneous in the normal's scale, so the
plane is still well defined, but the two axes couple slightly when both
tilts are nonzero. This is intentional and covered by tests.

All functions are pure and stateless; noise samples are passed in by the
caller, never generated here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

DEG26 = math.radians(26.0)

# Below this error magnitude the euclidean normal degenerates to flat;
# position feedback is far coarser than a nanometer.
ZERO_DISTANCE_EPS = 1e-9


class DegeneratePlaneError(ValueError):
    """Raised when a plane normal has no positive Z component."""


def _require_finite(**values: float) -> None:
    for name, v in values.items():
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


def _clamp(value: float, lo: float, hi: float) -> float:
    return lo if value < lo else hi if value > hi else value


@dataclass(frozen=True)
class ModuleGeometry:
    """Static geometry of one module: frame size, rest height, travel limits.

    Corner order is fixed counter-clockwise starting at the (-x, -y) corner:

        index 0: (-width/2, -depth/2)
        index 1: (+width/2, -depth/2)
        index 2: (+width/2, +depth/2)
        index 3: (-width/2, +depth/2)

    All serialization and command vectors follow this order.
    """

    width_m: float = 0.5
    depth_m: float = 0.5
    z0: float = 1.5
    actuator_travel: float = 0.25
    max_tilt: float = DEG26

    def __post_init__(self) -> None:
        _require_finite(
            width_m=self.width_m,
            depth_m=self.depth_m,
            z0=self.z0,
            actuator_travel=self.actuator_travel,
            max_tilt=self.max_tilt,
        )
        if self.width_m <= 0 or self.depth_m <= 0:
            raise ValueError("module width and depth must be positive")
        if self.z0 <= 0:
            raise ValueError("reference height z0 must be positive")
        if self.actuator_travel <= 0:
            raise ValueError("actuator_travel must be positive")
        if not 0 < self.max_tilt < math.pi / 2:
            raise ValueError("max_tilt must lie in (0, pi/2)")
        # The tilt bound must be realizable by the actuators: a plane tilted
        # by max_tilt about the center displaces a corner by
        # (half-span * tan(max_tilt)), which may not exceed the travel.
        # 2% slack absorbs the rounding in the conventional 26 deg figure.
        half_span = min(self.width_m, self.depth_m) / 2.0
        if math.tan(self.max_tilt) > 1.02 * self.actuator_travel / half_span:
            raise ValueError(
                "max_tilt is inconsistent with actuator_travel: "
                f"tan({self.max_tilt:.4f}) > {self.actuator_travel}/{half_span}"
            )

    @property
    def actuator_xy(self) -> tuple[tuple[float, float], ...]:
        """The four corner (x, y) positions in the documented order."""
        hw, hd = self.width_m / 2.0, self.depth_m / 2.0
        return ((-hw, -hd), (hw, -hd), (hw, hd), (-hw, hd))


@dataclass(frozen=True)
class TiltCommand:
    """Raw controller output: tilt from Z toward X and toward Y, radians.

    Deliberately not clamped here -- controllers may emit large angles;
    bounding to the physical range happens inside the normal computation.
    """

    theta_zx: float
    theta_zy: float

    def __post_init__(self) -> None:
        _require_finite(theta_zx=self.theta_zx, theta_zy=self.theta_zy)


@dataclass(frozen=True)
class SurfaceNormal:
    """Plane normal components (dimensionless, not necessarily unit length)."""

    nx: float
    ny: float
    nz: float

    def __post_init__(self) -> None:
        _require_finite(nx=self.nx, ny=self.ny, nz=self.nz)


@dataclass(frozen=True)
class ActuatorCommand:
    """Four corner displacements in meters, positive = corner lowered.

    The sign convention is ``a_i = z0 - z_i``: a positive command moves the
    corner below the rest height. Entries follow the corner order of
    :class:`ModuleGeometry`.
    """

    a: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        if len(self.a) != 4:
            raise ValueError("ActuatorCommand needs exactly 4 entries")
        for i, v in enumerate(self.a):
            if not math.isfinite(v):
                raise ValueError(f"a[{i}] must be finite, got {v!r}")


def manhattan_normal(tilt: TiltCommand, max_tilt: float) -> SurfaceNormal:
    """Normal for independent per-axis tilts.

    Angles are clamped to ``[-max_tilt, +max_tilt]`` first, then

        n = (sin(theta_zx), sin(theta_zy), cos(theta_zx))

    literally, including the asymmetric ``nz = cos(theta_zx)`` (see module
    docstring). ``nz > 0`` always holds because ``max_tilt < pi/2``.
    """
    _require_finite(theta_zx=tilt.theta_zx, theta_zy=tilt.theta_zy, max_tilt=max_tilt)
    zx = _clamp(tilt.theta_zx, -max_tilt, max_tilt)
    zy = _clamp(tilt.theta_zy, -max_tilt, max_tilt)
    return SurfaceNormal(math.sin(zx), math.sin(zy), math.cos(zx))


def euclidean_normal(ex: float, ey: float, theta: float, max_tilt: float) -> SurfaceNormal:
    """Normal for a single tilt ``theta`` along the error direction.

        n = (ex/d * sin(theta), ey/d * sin(theta), cos(theta)),  d = |(ex, ey)|

    with the degenerate case ``d = 0`` (below :data:`ZERO_DISTANCE_EPS`)
    returning exactly ``(0, 0, 1)``. ``theta`` is clamped to
    ``[-max_tilt, +max_tilt]`` before evaluation; a negative ``theta`` tilts
    away from the error direction.
    """
    _require_finite(ex=ex, ey=ey, theta=theta, max_tilt=max_tilt)
    d = math.hypot(ex, ey)
    if d < ZERO_DISTANCE_EPS:
        return SurfaceNormal(0.0, 0.0, 1.0)
    th = _clamp(theta, -max_tilt, max_tilt)
    s = math.sin(th)
    return SurfaceNormal(ex / d * s, ey / d * s, math.cos(th))


def plane_height_at(normal: SurfaceNormal, z0: float, x: float, y: float) -> float:
    """Height of the plane with the given normal through ``(0, 0, z0)``.

        z = (z0 * nz - nx * x - ny * y) / nz

    evaluated in the equivalent form ``z0 - (nx*x + ny*y)/nz`` so that the
    center anchoring ``plane_height_at(n, z0, 0, 0) == z0`` holds exactly in
    floating point. The result is invariant to scaling the normal by any
    positive factor.
    """
    _require_finite(z0=z0, x=x, y=y)
    if normal.nz <= 0.0:
        raise DegeneratePlaneError(f"plane normal must have nz > 0, got nz={normal.nz!r}")
    return z0 - (normal.nx * x + normal.ny * y) / normal.nz


def actuator_commands(
    normal: SurfaceNormal,
    geo: ModuleGeometry,
    alpha: float,
    noise: tuple[float, float, float, float],
) -> ActuatorCommand:
    """Corner displacements realizing the plane, with additive noise.

        a_i = (z0 - z_i) + alpha * noise_i

    where ``z_i`` is the plane height at corner ``i`` and ``noise_i`` is a
    caller-supplied sample in ``[-1, 1]``. Noise samples are consumed in
    actuator-index order. Each command is clamped to the actuator travel
    after the noise is added, so noise can never push a command out of range.
    """
    _require_finite(alpha=alpha)
    if alpha < 0:
        raise ValueError(f"noise amplitude alpha must be >= 0, got {alpha}")
    if len(noise) != 4:
        raise ValueError("noise must contain exactly 4 samples")
    travel = geo.actuator_travel
    out = []
    for (xi, yi), delta in zip(geo.actuator_xy, noise):
        if not math.isfinite(delta) or abs(delta) > 1.0:
            raise ValueError(f"noise samples must lie in [-1, 1], got {delta!r}")
        zi = plane_height_at(normal, geo.z0, xi, yi)
        out.append(float(_clamp((geo.z0 - zi) + alpha * delta, -travel, travel)))
    return ActuatorCommand(tuple(out))
