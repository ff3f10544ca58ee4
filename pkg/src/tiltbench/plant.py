"""Simulated plant: a mass-spring fabric pinned at four driven corners.

The fabric is a rectangular node grid connected by structural, shear, and
bending springs, pre-tensioned so the sheet stays nearly flat under its own
weight when only the corners are held. Corner nodes are kinematic: their xy
coordinates never move and their height slews toward the actuator target at
a bounded rate. Everything else integrates with semi-implicit Euler at the
physics rate (1 kHz by default), far finer than the 10 Hz control rate.

A single rigid object rides on the sheet. Spheres use per-node penalty
contact against the ball surface with impulse-capped Coulomb friction, which
supplies the torque that makes them roll. Flat-bottomed objects (disk, cube,
cylinder) contact the locally interpolated surface patch: the penalty force
acts along the patch normal, so they slide downhill, and the reaction is
spread over the nodes supporting the patch.

The hot loop is a numba kernel; a vectorized numpy force assembly is kept
alongside as an independent reference for tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .geometry import ActuatorCommand, ModuleGeometry

SPHERE = "sphere"
DISK = "disk"
CUBE = "cube"
CYLINDER = "cylinder"

_KIND_NONE = -1
_KIND_SPHERE = 0
_KIND_FLAT_CIRCLE = 1
_KIND_FLAT_RECT = 2


class ConfigurationError(ValueError):
    """Invalid or unstable plant configuration, raised before any stepping."""


class SimulationDivergedError(RuntimeError):
    """Non-finite state after stepping; the trial must be abandoned."""


@dataclass(frozen=True)
class FabricConfig:
    """Fabric discretization, material, and integration parameters.

    Spring constants and the pre-tension are calibration knobs, not physical
    measurements: the defaults are chosen so the sheet sags less than 5 mm
    at rest and integration is stable. ``pretension`` is the fractional
    pre-strain (rest lengths are ``1 - pretension`` times the grid spacing).
    ``damping`` acts on the relative velocity of connected nodes, so it is
    internal and conserves momentum.

    ``physics_dt`` is the plant's step quantum (actuator slewing, command
    timing); each step is integrated as ``substeps`` equal explicit
    sub-iterations, which buys stiffness headroom without changing the
    plant-facing step rate.

    ``rolling_resistance`` is a per-contact-node drag (N s/m) opposing the
    object's translation relative to the sheet. It stands in for the energy
    a rolling object keeps losing by plowing its dimple through the fabric,
    which the springs alone do not capture; without it a ball on a tilted
    sheet accelerates like one on a rigid ramp.
    """

    grid_nx: int = 17
    grid_ny: int = 17
    width_m: float = 0.5
    depth_m: float = 0.5
    node_mass: float = 2.0e-4
    k_struct: float = 100.0
    k_shear: float = 30.0
    k_bend: float = 15.0
    damping: float = 0.02
    pretension: float = 0.35
    gravity: float = 9.81
    physics_dt: float = 1.0e-3
    substeps: int = 2
    actuator_rate_limit: float = 0.5
    contact_stiffness: float = 400.0
    contact_damping: float = 0.2
    rolling_resistance: float = 0.25
    settle_time: float = 0.5
    sensor_latency_samples: int = 0
    sensor_quantization_m: float = 0.0

    def __post_init__(self) -> None:
        if self.grid_nx < 5 or self.grid_ny < 5:
            raise ConfigurationError("fabric grid must be at least 5x5")
        if self.width_m <= 0 or self.depth_m <= 0:
            raise ConfigurationError("fabric size must be positive")
        for name in ("node_mass", "k_struct", "physics_dt"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in (
            "k_shear",
            "k_bend",
            "damping",
            "gravity",
            "actuator_rate_limit",
            "contact_stiffness",
            "contact_damping",
            "rolling_resistance",
            "settle_time",
            "sensor_quantization_m",
        ):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be non-negative")
        if not 0 <= self.pretension < 1:
            raise ConfigurationError("pretension must lie in [0, 1)")
        if self.sensor_latency_samples < 0:
            raise ConfigurationError("sensor_latency_samples must be >= 0")
        if self.substeps < 1:
            raise ConfigurationError("substeps must be >= 1")
        # explicit-integrator stability heuristic on the inner step:
        # dt < 2*sqrt(m/k) with a 0.5 safety factor
        dt_max = math.sqrt(self.node_mass / self.k_struct)
        if self.physics_dt / self.substeps >= dt_max:
            raise ConfigurationError(
                f"inner step {self.physics_dt / self.substeps} unstable for "
                f"k_struct={self.k_struct}, node_mass={self.node_mass}: "
                f"need dt/substeps < {dt_max:.2e}"
            )


@dataclass(frozen=True)
class ObjectSpec:
    """A rigid object riding on the fabric.

    ``sphere`` rolls; ``disk``, ``cube`` and ``cylinder`` are flat-bottomed
    sliders (cube uses a rectangular footprint, the others circular).
    ``height`` is the full vertical extent for flat shapes; spheres derive it
    from the radius.
    """

    shape: str
    mass: float
    radius: float | None = None
    half_extents: tuple[float, float] | None = None
    height: float | None = None
    friction_mu: float = 0.5
    label: str = ""

    def __post_init__(self) -> None:
        if self.shape not in (SPHERE, DISK, CUBE, CYLINDER):
            raise ConfigurationError(f"unknown object shape {self.shape!r}")
        if self.mass <= 0:
            raise ConfigurationError("object mass must be positive")
        if self.friction_mu < 0:
            raise ConfigurationError("friction_mu must be >= 0")
        if self.shape == CUBE:
            if self.half_extents is None or min(self.half_extents) <= 0:
                raise ConfigurationError("cube requires positive half_extents")
            if self.height is None or self.height <= 0:
                raise ConfigurationError("cube requires a positive height")
        else:
            if self.radius is None or self.radius <= 0:
                raise ConfigurationError(f"{self.shape} requires a positive radius")
            if self.shape != SPHERE and (self.height is None or self.height <= 0):
                raise ConfigurationError(f"{self.shape} requires a positive height")

    @property
    def bottom_offset(self) -> float:
        """Distance from the object center to its lowest point."""
        if self.shape == SPHERE:
            return float(self.radius)
        return float(self.height) / 2.0

    @property
    def contact_kind(self) -> int:
        if self.shape == SPHERE:
            return _KIND_SPHERE
        if self.shape == CUBE:
            return _KIND_FLAT_RECT
        return _KIND_FLAT_CIRCLE


# Catalog of the bench objects (masses in kg, dimensions in m). Apple, egg,
# and bunny have no dedicated contact geometry; they are parameter presets of
# the sphere/cube models, listed in APPROXIMATE_PRESETS so front ends warn.
OBJECT_PRESETS: dict[str, ObjectSpec] = {
    "sphere": ObjectSpec(SPHERE, mass=0.0125, radius=0.0255, friction_mu=0.5, label="sphere"),
    "cube": ObjectSpec(
        CUBE, mass=0.066, half_extents=(0.025, 0.025), height=0.05, friction_mu=0.9, label="cube"
    ),
    "disk": ObjectSpec(DISK, mass=0.0038, radius=0.02, height=0.004, friction_mu=0.3, label="disk"),
    "cylinder": ObjectSpec(
        CYLINDER, mass=0.0257, radius=0.0165, height=0.045, friction_mu=0.6, label="cylinder"
    ),
    "apple": ObjectSpec(SPHERE, mass=0.1314, radius=0.0305, friction_mu=0.7, label="apple"),
    "egg": ObjectSpec(SPHERE, mass=0.0667, radius=0.0258, friction_mu=0.7, label="egg"),
    "bunny": ObjectSpec(
        CUBE, mass=0.0503, half_extents=(0.025, 0.025), height=0.09, friction_mu=0.8, label="bunny"
    ),
}

# Presets that stand in for geometry the plant does not model faithfully.
APPROXIMATE_PRESETS = frozenset({"apple", "egg", "bunny"})


@dataclass
class FabricState:
    """Node grid state plus the four actuator target heights."""

    pos: np.ndarray  # (n_nodes, 3)
    vel: np.ndarray  # (n_nodes, 3)
    corner_targets: np.ndarray  # (4,) absolute heights

    def copy(self) -> "FabricState":
        return FabricState(self.pos.copy(), self.vel.copy(), self.corner_targets.copy())


@dataclass
class ObjectState:
    position: np.ndarray  # (3,)
    velocity: np.ndarray  # (3,)
    angular_velocity: np.ndarray  # (3,), meaningful for spheres only

    def copy(self) -> "ObjectState":
        return ObjectState(
            self.position.copy(), self.velocity.copy(), self.angular_velocity.copy()
        )


class Plant:
    """Parameter bundle and stepping engine for one fabric + object setup.

    Instances are immutable after construction and safe to reuse across
    trials; the mutable state lives in :class:`FabricState` /
    :class:`ObjectState` values passed through :meth:`step`.
    """

    def __init__(
        self,
        config: FabricConfig,
        geo: ModuleGeometry,
        object_spec: ObjectSpec | None,
    ):
        if not math.isclose(config.width_m, geo.width_m, rel_tol=1e-9) or not math.isclose(
            config.depth_m, geo.depth_m, rel_tol=1e-9
        ):
            raise ConfigurationError(
                "fabric size must match the module frame: "
                f"fabric {config.width_m}x{config.depth_m} vs "
                f"module {geo.width_m}x{geo.depth_m}"
            )
        self.config = config
        self.geo = geo
        self.object_spec = object_spec

        nx, ny = config.grid_nx, config.grid_ny
        self.nx, self.ny = nx, ny
        self.x0 = -config.width_m / 2.0
        self.y0 = -config.depth_m / 2.0
        self.hx = config.width_m / (nx - 1)
        self.hy = config.depth_m / (ny - 1)

        ids = np.arange(nx * ny, dtype=np.int64).reshape(nx, ny)
        # corner order matches ModuleGeometry.actuator_xy
        self.corner_idx = np.array(
            [ids[0, 0], ids[nx - 1, 0], ids[nx - 1, ny - 1], ids[0, ny - 1]],
            dtype=np.int64,
        )
        self.corner_xy = np.asarray(geo.actuator_xy, dtype=np.float64)
        # index arrays back the numpy reference path and energy bookkeeping;
        # the kernel walks the lattice directly from these rest lengths
        self._sa, self._sb, self._rest, self._ks = _build_springs(
            nx, ny, self.hx, self.hy, config
        )
        rs = 1.0 - config.pretension
        self._rest_x = self.hx * rs
        self._rest_y = self.hy * rs
        self._rest_d = math.hypot(self.hx, self.hy) * rs
        self._rest_bx = 2.0 * self.hx * rs
        self._rest_by = 2.0 * self.hy * rs

        if object_spec is None:
            self._kind = _KIND_NONE
            self._obj_radius = 0.0
            self._obj_half = (0.0, 0.0)
            self._obj_bottom = 0.0
            self._obj_mass = 1.0
            self._obj_inertia = 1.0
            self._obj_mu = 0.0
        else:
            self._kind = object_spec.contact_kind
            self._obj_radius = float(object_spec.radius or 0.0)
            self._obj_half = tuple(object_spec.half_extents or (0.0, 0.0))
            self._obj_bottom = object_spec.bottom_offset
            self._obj_mass = object_spec.mass
            # solid sphere; flat shapes never integrate rotation
            if object_spec.shape == SPHERE:
                self._obj_inertia = 0.4 * object_spec.mass * self._obj_radius**2
            else:
                self._obj_inertia = 1.0
            self._obj_mu = object_spec.friction_mu
        self._force_buf = np.zeros((nx * ny, 3))

    # ------------------------------------------------------------------
    # state construction

    def flat_fabric(self) -> FabricState:
        """Fabric exactly flat at the rest height with pinned corners."""
        xs = self.x0 + self.hx * np.arange(self.nx)
        ys = self.y0 + self.hy * np.arange(self.ny)
        pos = np.zeros((self.nx * self.ny, 3))
        pos[:, 0] = np.repeat(xs, self.ny)
        pos[:, 1] = np.tile(ys, self.nx)
        pos[:, 2] = self.geo.z0
        return FabricState(
            pos=pos,
            vel=np.zeros_like(pos),
            corner_targets=np.full(4, self.geo.z0),
        )

    def init(self, start_xy: tuple[float, float]) -> tuple[FabricState, ObjectState | None]:
        """Flat fabric with the object resting at ``start_xy``, then settled.

        The settle phase (``config.settle_time`` seconds, no actuation) lets
        the sheet take up its static sag and the object sink into quasi-static
        equilibrium before a trial starts.
        """
        hw, hd = self.geo.width_m / 2.0, self.geo.depth_m / 2.0
        if abs(start_xy[0]) > hw or abs(start_xy[1]) > hd:
            raise ConfigurationError(f"start position {start_xy} outside the workspace")
        fabric = self.flat_fabric()
        if self.object_spec is None:
            obj = None
        else:
            obj = ObjectState(
                position=np.array(
                    [start_xy[0], start_xy[1], self.geo.z0 + self._obj_bottom]
                ),
                velocity=np.zeros(3),
                angular_velocity=np.zeros(3),
            )
        settle_steps = int(round(self.config.settle_time / self.config.physics_dt))
        if settle_steps:
            fabric, obj = self.step(fabric, obj, settle_steps)
        return fabric, obj

    # ------------------------------------------------------------------
    # plant operations

    def apply_actuators(self, fabric: FabricState, command: ActuatorCommand) -> FabricState:
        """Set corner target heights to ``z0 - a_i`` (positive command lowers).

        The realized corner height then slews toward its target at no more
        than ``actuator_rate_limit`` per second during physics stepping.
        """
        out = fabric.copy()
        out.corner_targets = self.geo.z0 - np.asarray(command.a, dtype=np.float64)
        return out

    def step(
        self,
        fabric: FabricState,
        obj: ObjectState | None,
        n_steps: int = 1,
    ) -> tuple[FabricState, ObjectState | None]:
        """Advance ``n_steps`` physics steps of ``config.physics_dt`` each.

        Value semantics: inputs are left untouched and fresh states are
        returned. Raises :class:`SimulationDivergedError` if any state stops
        being finite.
        """
        cfg = self.config
        if (obj is None) != (self.object_spec is None):
            raise ConfigurationError("object state does not match the plant's object spec")
        fabric = fabric.copy()
        if obj is None:
            obj_p = np.zeros(3)
            obj_v = np.zeros(3)
            obj_w = np.zeros(3)
        else:
            obj = obj.copy()
            obj_p, obj_v, obj_w = obj.position, obj.velocity, obj.angular_velocity
        _run_steps(
            fabric.pos,
            fabric.vel,
            self._force_buf,
            cfg.k_struct,
            cfg.k_shear,
            cfg.k_bend,
            self._rest_x,
            self._rest_y,
            self._rest_d,
            self._rest_bx,
            self._rest_by,
            cfg.damping,
            self.corner_idx,
            self.corner_xy,
            fabric.corner_targets,
            cfg.node_mass,
            cfg.gravity,
            cfg.physics_dt / cfg.substeps,
            cfg.actuator_rate_limit,
            self._kind,
            obj_p,
            obj_v,
            obj_w,
            self._obj_mass,
            self._obj_inertia,
            self._obj_radius,
            self._obj_half[0],
            self._obj_half[1],
            self._obj_bottom,
            self._obj_mu,
            cfg.contact_stiffness,
            cfg.contact_damping,
            cfg.rolling_resistance,
            self.nx,
            self.ny,
            self.x0,
            self.y0,
            self.hx,
            self.hy,
            n_steps * cfg.substeps,
        )
        if not np.isfinite(fabric.pos).all() or not np.isfinite(fabric.vel).all():
            raise SimulationDivergedError("fabric state became non-finite")
        if obj is not None and not (
            np.isfinite(obj_p).all() and np.isfinite(obj_v).all() and np.isfinite(obj_w).all()
        ):
            raise SimulationDivergedError("object state became non-finite")
        return fabric, obj

    def observe(self, obj: ObjectState, quantization: float | None = None) -> tuple[float, float]:
        """The controller's view of the object: its xy projection.

        ``quantization`` (default from the fabric config) rounds to emulate a
        coarse camera; sensor latency is the trial runner's concern.
        """
        q = self.config.sensor_quantization_m if quantization is None else quantization
        x, y = float(obj.position[0]), float(obj.position[1])
        if q > 0:
            x = round(x / q) * q
            y = round(y / q) * q
        return x, y

    # ------------------------------------------------------------------
    # introspection helpers (tests, calibration, analysis)

    def height_at(self, fabric: FabricState, x: float, y: float) -> float:
        """Bilinear interpolation of the sheet height at a point."""
        z = fabric.pos[:, 2].reshape(self.nx, self.ny)
        u = (x - self.x0) / self.hx
        v = (y - self.y0) / self.hy
        i = min(max(int(math.floor(u)), 0), self.nx - 2)
        j = min(max(int(math.floor(v)), 0), self.ny - 2)
        fu = min(max(u - i, 0.0), 1.0)
        fv = min(max(v - j, 0.0), 1.0)
        return float(
            z[i, j] * (1 - fu) * (1 - fv)
            + z[i + 1, j] * fu * (1 - fv)
            + z[i, j + 1] * (1 - fu) * fv
            + z[i + 1, j + 1] * fu * fv
        )

    def reference_forces(
        self, fabric: FabricState, include_gravity: bool = True
    ) -> np.ndarray:
        """Vectorized numpy spring/damping force assembly.

        Independent of the numba kernel; used by tests to cross-check the
        hot path and to verify that internal forces sum to zero.
        """
        cfg = self.config
        d = fabric.pos[self._sb] - fabric.pos[self._sa]
        length = np.linalg.norm(d, axis=1)
        coef = np.where(
            length > 1e-12, self._ks * (length - self._rest) / np.maximum(length, 1e-12), 0.0
        )
        f = coef[:, None] * d + cfg.damping * (fabric.vel[self._sb] - fabric.vel[self._sa])
        forces = np.zeros_like(fabric.pos)
        np.add.at(forces, self._sa, f)
        np.subtract.at(forces, self._sb, f)
        if include_gravity:
            forces[:, 2] -= cfg.node_mass * cfg.gravity
        return forces

    def mechanical_energy(self, fabric: FabricState) -> float:
        """Kinetic + gravitational + elastic energy of the sheet (J)."""
        cfg = self.config
        ke = 0.5 * cfg.node_mass * float(np.sum(fabric.vel**2))
        pe_g = cfg.node_mass * cfg.gravity * float(np.sum(fabric.pos[:, 2]))
        d = fabric.pos[self._sb] - fabric.pos[self._sa]
        stretch = np.linalg.norm(d, axis=1) - self._rest
        pe_s = 0.5 * float(np.sum(self._ks * stretch**2))
        return ke + pe_g + pe_s


def _build_springs(nx: int, ny: int, hx: float, hy: float, cfg: FabricConfig):
    """Index arrays for the structural / shear / bend spring families."""
    ids = np.arange(nx * ny, dtype=np.int64).reshape(nx, ny)
    rs = 1.0 - cfg.pretension
    fams: list[tuple[np.ndarray, np.ndarray, float, float]] = [
        (ids[:-1, :], ids[1:, :], hx * rs, cfg.k_struct),
        (ids[:, :-1], ids[:, 1:], hy * rs, cfg.k_struct),
        (ids[:-1, :-1], ids[1:, 1:], math.hypot(hx, hy) * rs, cfg.k_shear),
        (ids[:-1, 1:], ids[1:, :-1], math.hypot(hx, hy) * rs, cfg.k_shear),
        (ids[:-2, :], ids[2:, :], 2.0 * hx * rs, cfg.k_bend),
        (ids[:, :-2], ids[:, 2:], 2.0 * hy * rs, cfg.k_bend),
    ]
    sa = np.concatenate([a.ravel() for a, _, _, _ in fams])
    sb = np.concatenate([b.ravel() for _, b, _, _ in fams])
    rest = np.concatenate([np.full(a.size, r) for a, _, r, _ in fams])
    ks = np.concatenate([np.full(a.size, k) for a, _, _, k in fams])
    return sa, sb, rest, ks


@njit(cache=True, inline="always")
def _spring_force(pos, vel, n, m, rest, k, c):
    """Force on node n from the spring and damper linking it to node m."""
    dx = pos[m, 0] - pos[n, 0]
    dy = pos[m, 1] - pos[n, 1]
    dz = pos[m, 2] - pos[n, 2]
    length = math.sqrt(dx * dx + dy * dy + dz * dz)
    if length > 1e-12:
        coef = k * (length - rest) / length
    else:
        coef = 0.0
    fx = coef * dx + c * (vel[m, 0] - vel[n, 0])
    fy = coef * dy + c * (vel[m, 1] - vel[n, 1])
    fz = coef * dz + c * (vel[m, 2] - vel[n, 2])
    return fx, fy, fz


@njit(cache=True, inline="always")
def _sphere_node_contact(
    pos, vel, force, n, obj_p, obj_v, obj_w,
    obj_radius, obj_mu, kc, cc, crr, node_mass, dt,
):
    """Penalty + friction + drag between one node and the ball.

    Adds the node-side force in place and returns the object-side force and
    torque contribution (zeros when not in contact).
    """
    ddx = pos[n, 0] - obj_p[0]
    ddy = pos[n, 1] - obj_p[1]
    ddz = pos[n, 2] - obj_p[2]
    d2 = ddx * ddx + ddy * ddy + ddz * ddz
    if d2 >= obj_radius * obj_radius or d2 < 1e-16:
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0.0
    dist = math.sqrt(d2)
    pen = obj_radius - dist
    nxd = ddx / dist
    nyd = ddy / dist
    nzd = ddz / dist
    # velocity of the object surface at the node
    cvx = obj_v[0] + obj_w[1] * ddz - obj_w[2] * ddy
    cvy = obj_v[1] + obj_w[2] * ddx - obj_w[0] * ddz
    cvz = obj_v[2] + obj_w[0] * ddy - obj_w[1] * ddx
    rvx = vel[n, 0] - cvx
    rvy = vel[n, 1] - cvy
    rvz = vel[n, 2] - cvz
    vn = rvx * nxd + rvy * nyd + rvz * nzd
    fn = kc * pen - cc * vn
    fox = 0.0
    foy = 0.0
    foz = 0.0
    tox = 0.0
    toy = 0.0
    toz = 0.0
    if fn > 0.0:
        force[n, 0] += fn * nxd
        force[n, 1] += fn * nyd
        force[n, 2] += fn * nzd
        fox -= fn * nxd
        foy -= fn * nyd
        foz -= fn * nzd
        # Coulomb friction on the slip velocity, capped by the impulse that
        # would stop the node's slip within one step (keeps it stable)
        vtx = rvx - vn * nxd
        vty = rvy - vn * nyd
        vtz = rvz - vn * nzd
        vt = math.sqrt(vtx * vtx + vty * vty + vtz * vtz)
        if vt > 1e-9:
            ft = obj_mu * fn
            ft_stop = vt * node_mass / dt
            if ft_stop < ft:
                ft = ft_stop
            fxn = -ft * vtx / vt
            fyn = -ft * vty / vt
            fzn = -ft * vtz / vt
            force[n, 0] += fxn
            force[n, 1] += fyn
            force[n, 2] += fzn
            rfx = -fxn
            rfy = -fyn
            rfz = -fzn
            fox += rfx
            foy += rfy
            foz += rfz
            tox += ddy * rfz - ddz * rfy
            toy += ddz * rfx - ddx * rfz
            toz += ddx * rfy - ddy * rfx
        # plowing drag: oppose translation relative to the sheet, applied
        # at the center (no spin-up)
        if crr > 0.0:
            dvx = obj_v[0] - vel[n, 0]
            dvy = obj_v[1] - vel[n, 1]
            dvz = obj_v[2] - vel[n, 2]
            fox -= crr * dvx
            foy -= crr * dvy
            foz -= crr * dvz
            force[n, 0] += crr * dvx
            force[n, 1] += crr * dvy
            force[n, 2] += crr * dvz
    return fox, foy, foz, tox, toy, toz


@njit(cache=True, inline="always")
def _bilinear_cell(px, py, x0, y0, hx, hy, nx, ny):
    u = (px - x0) / hx
    v = (py - y0) / hy
    i = int(math.floor(u))
    j = int(math.floor(v))
    if i < 0:
        i = 0
    elif i > nx - 2:
        i = nx - 2
    if j < 0:
        j = 0
    elif j > ny - 2:
        j = ny - 2
    fu = u - i
    fv = v - j
    if fu < 0.0:
        fu = 0.0
    elif fu > 1.0:
        fu = 1.0
    if fv < 0.0:
        fv = 0.0
    elif fv > 1.0:
        fv = 1.0
    return i, j, fu, fv


@njit(cache=True, inline="always")
def _surface_sample(pos, vel, px, py, x0, y0, hx, hy, nx, ny, out):
    """Bilinear height + velocity of the sheet at (px, py) -> out[0..3]."""
    i, j, fu, fv = _bilinear_cell(px, py, x0, y0, hx, hy, nx, ny)
    n00 = i * ny + j
    n10 = (i + 1) * ny + j
    n01 = i * ny + j + 1
    n11 = (i + 1) * ny + j + 1
    w00 = (1.0 - fu) * (1.0 - fv)
    w10 = fu * (1.0 - fv)
    w01 = (1.0 - fu) * fv
    w11 = fu * fv
    out[0] = w00 * pos[n00, 2] + w10 * pos[n10, 2] + w01 * pos[n01, 2] + w11 * pos[n11, 2]
    for c in range(3):
        out[1 + c] = (
            w00 * vel[n00, c] + w10 * vel[n10, c] + w01 * vel[n01, c] + w11 * vel[n11, c]
        )
    return n00, n10, n01, n11, w00, w10, w01, w11


@njit(cache=True)
def _run_steps(
    pos,
    vel,
    force,
    k_struct,
    k_shear,
    k_bend,
    rest_x,
    rest_y,
    rest_d,
    rest_bx,
    rest_by,
    damping,
    corner_idx,
    corner_xy,
    corner_targets,
    node_mass,
    gravity,
    dt,
    rate_limit,
    obj_kind,
    obj_p,
    obj_v,
    obj_w,
    obj_mass,
    obj_inertia,
    obj_radius,
    obj_half_x,
    obj_half_y,
    obj_bottom,
    obj_mu,
    kc,
    cc,
    crr,
    nx,
    ny,
    x0,
    y0,
    hx,
    hy,
    n_steps,
):
    """Semi-implicit Euler stepping of the whole plant, in place.

    Force assembly is node-centric and groups the two contributions of every
    +-y neighbor pair; the sphere's object-force sums pair j with ny-1-j.
    A y-mirrored state therefore produces bitwise-mirrored trajectories for
    the sheet and for sphere contact (flat-patch contact mirrors only to
    floating-point accuracy because of its interpolation cell indexing).
    """
    n_nodes = pos.shape[0]
    inv_m = 1.0 / node_mass
    corner_dh = np.zeros(4)
    corner_h = np.zeros(4)
    sample = np.zeros(4)

    for _ in range(n_steps):
        # kinematic corners: slew height toward target, pin xy
        for c in range(4):
            node = corner_idx[c]
            dh = corner_targets[c] - pos[node, 2]
            lim = rate_limit * dt
            if dh > lim:
                dh = lim
            elif dh < -lim:
                dh = -lim
            corner_dh[c] = dh
            pos[node, 0] = corner_xy[c, 0]
            pos[node, 1] = corner_xy[c, 1]
            pos[node, 2] += dh
            corner_h[c] = pos[node, 2]
            vel[node, 0] = 0.0
            vel[node, 1] = 0.0
            vel[node, 2] = dh / dt

        # gravity + springs, one node at a time
        for i in range(nx):
            for j in range(ny):
                n = i * ny + j
                fx = 0.0
                fy = 0.0
                fz = -node_mass * gravity
                # structural, x pair
                axx = axy = axz = bxx = bxy = bxz = 0.0
                if i + 1 < nx:
                    axx, axy, axz = _spring_force(pos, vel, n, n + ny, rest_x, k_struct, damping)
                if i - 1 >= 0:
                    bxx, bxy, bxz = _spring_force(pos, vel, n, n - ny, rest_x, k_struct, damping)
                fx += axx + bxx
                fy += axy + bxy
                fz += axz + bxz
                # structural, y pair
                axx = axy = axz = bxx = bxy = bxz = 0.0
                if j + 1 < ny:
                    axx, axy, axz = _spring_force(pos, vel, n, n + 1, rest_y, k_struct, damping)
                if j - 1 >= 0:
                    bxx, bxy, bxz = _spring_force(pos, vel, n, n - 1, rest_y, k_struct, damping)
                fx += axx + bxx
                fy += axy + bxy
                fz += axz + bxz
                # shear, +x diagonals
                axx = axy = axz = bxx = bxy = bxz = 0.0
                if i + 1 < nx and j + 1 < ny:
                    axx, axy, axz = _spring_force(
                        pos, vel, n, n + ny + 1, rest_d, k_shear, damping
                    )
                if i + 1 < nx and j - 1 >= 0:
                    bxx, bxy, bxz = _spring_force(
                        pos, vel, n, n + ny - 1, rest_d, k_shear, damping
                    )
                fx += axx + bxx
                fy += axy + bxy
                fz += axz + bxz
                # shear, -x diagonals
                axx = axy = axz = bxx = bxy = bxz = 0.0
                if i - 1 >= 0 and j - 1 >= 0:
                    axx, axy, axz = _spring_force(
                        pos, vel, n, n - ny - 1, rest_d, k_shear, damping
                    )
                if i - 1 >= 0 and j + 1 < ny:
                    bxx, bxy, bxz = _spring_force(
                        pos, vel, n, n - ny + 1, rest_d, k_shear, damping
                    )
                fx += axx + bxx
                fy += axy + bxy
                fz += axz + bxz
                # bending, x pair
                axx = axy = axz = bxx = bxy = bxz = 0.0
                if i + 2 < nx:
                    axx, axy, axz = _spring_force(
                        pos, vel, n, n + 2 * ny, rest_bx, k_bend, damping
                    )
                if i - 2 >= 0:
                    bxx, bxy, bxz = _spring_force(
                        pos, vel, n, n - 2 * ny, rest_bx, k_bend, damping
                    )
                fx += axx + bxx
                fy += axy + bxy
                fz += axz + bxz
                # bending, y pair
                axx = axy = axz = bxx = bxy = bxz = 0.0
                if j + 2 < ny:
                    axx, axy, axz = _spring_force(pos, vel, n, n + 2, rest_by, k_bend, damping)
                if j - 2 >= 0:
                    bxx, bxy, bxz = _spring_force(pos, vel, n, n - 2, rest_by, k_bend, damping)
                fx += axx + bxx
                fy += axy + bxy
                fz += axz + bxz
                force[n, 0] = fx
                force[n, 1] = fy
                force[n, 2] = fz

        # object contact
        fox = 0.0
        foy = 0.0
        foz = 0.0
        tox = 0.0
        toy = 0.0
        toz = 0.0
        if obj_kind == 0:
            # object-side sums accumulate in mirror-symmetric j pairs
            half = (ny + 1) // 2
            for i in range(nx):
                for jj in range(half):
                    j2 = ny - 1 - jj
                    c0, c1, c2, c3, c4, c5 = _sphere_node_contact(
                        pos, vel, force, i * ny + jj, obj_p, obj_v, obj_w,
                        obj_radius, obj_mu, kc, cc, crr, node_mass, dt,
                    )
                    if j2 > jj:
                        d0, d1, d2, d3, d4, d5 = _sphere_node_contact(
                            pos, vel, force, i * ny + j2, obj_p, obj_v, obj_w,
                            obj_radius, obj_mu, kc, cc, crr, node_mass, dt,
                        )
                    else:
                        d0 = d1 = d2 = d3 = d4 = d5 = 0.0
                    fox += c0 + d0
                    foy += c1 + d1
                    foz += c2 + d2
                    tox += c3 + d3
                    toy += c4 + d4
                    toz += c5 + d5
        elif obj_kind >= 1:
            # flat bottom: contact against the interpolated surface patch
            if obj_kind == 1:
                span = obj_radius
            else:
                span = obj_half_x if obj_half_x < obj_half_y else obj_half_y
            s_off = 0.7 * span
            n00, n10, n01, n11, w00, w10, w01, w11 = _surface_sample(
                pos, vel, obj_p[0], obj_p[1], x0, y0, hx, hy, nx, ny, sample
            )
            zc = sample[0]
            svx = sample[1]
            svy = sample[2]
            svz = sample[3]
            _surface_sample(pos, vel, obj_p[0] + s_off, obj_p[1], x0, y0, hx, hy, nx, ny, sample)
            zxp = sample[0]
            _surface_sample(pos, vel, obj_p[0] - s_off, obj_p[1], x0, y0, hx, hy, nx, ny, sample)
            zxm = sample[0]
            _surface_sample(pos, vel, obj_p[0], obj_p[1] + s_off, x0, y0, hx, hy, nx, ny, sample)
            zyp = sample[0]
            _surface_sample(pos, vel, obj_p[0], obj_p[1] - s_off, x0, y0, hx, hy, nx, ny, sample)
            zym = sample[0]
            pen = zc - (obj_p[2] - obj_bottom)
            if pen > 0.0:
                gx = (zxp - zxm) / (2.0 * s_off)
                gy = (zyp - zym) / (2.0 * s_off)
                inv_len = 1.0 / math.sqrt(gx * gx + gy * gy + 1.0)
                nxd = -gx * inv_len
                nyd = -gy * inv_len
                nzd = inv_len
                rvx = obj_v[0] - svx
                rvy = obj_v[1] - svy
                rvz = obj_v[2] - svz
                vn = rvx * nxd + rvy * nyd + rvz * nzd
                fn = kc * pen - cc * vn
                if fn > 0.0:
                    fox += fn * nxd
                    foy += fn * nyd
                    foz += fn * nzd
                    vtx = rvx - vn * nxd
                    vty = rvy - vn * nyd
                    vtz = rvz - vn * nzd
                    vt = math.sqrt(vtx * vtx + vty * vty + vtz * vtz)
                    if vt > 1e-9:
                        ft = obj_mu * fn
                        ft_stop = vt * obj_mass / dt
                        if ft_stop < ft:
                            ft = ft_stop
                        fox -= ft * vtx / vt
                        foy -= ft * vty / vt
                        foz -= ft * vtz / vt
                    # reaction spread over the supporting patch nodes
                    force[n00, 0] -= w00 * fox
                    force[n00, 1] -= w00 * foy
                    force[n00, 2] -= w00 * foz
                    force[n10, 0] -= w10 * fox
                    force[n10, 1] -= w10 * foy
                    force[n10, 2] -= w10 * foz
                    force[n01, 0] -= w01 * fox
                    force[n01, 1] -= w01 * foy
                    force[n01, 2] -= w01 * foz
                    force[n11, 0] -= w11 * fox
                    force[n11, 1] -= w11 * foy
                    force[n11, 2] -= w11 * foz

        # integrate nodes (semi-implicit Euler)
        for n in range(n_nodes):
            vel[n, 0] += force[n, 0] * inv_m * dt
            vel[n, 1] += force[n, 1] * inv_m * dt
            vel[n, 2] += force[n, 2] * inv_m * dt
            pos[n, 0] += vel[n, 0] * dt
            pos[n, 1] += vel[n, 1] * dt
            pos[n, 2] += vel[n, 2] * dt

        # restore the kinematic corners
        for c in range(4):
            node = corner_idx[c]
            pos[node, 0] = corner_xy[c, 0]
            pos[node, 1] = corner_xy[c, 1]
            pos[node, 2] = corner_h[c]
            vel[node, 0] = 0.0
            vel[node, 1] = 0.0
            vel[node, 2] = corner_dh[c] / dt

        # integrate the object
        if obj_kind >= 0:
            obj_v[0] += fox / obj_mass * dt
            obj_v[1] += foy / obj_mass * dt
            obj_v[2] += (foz / obj_mass - gravity) * dt
            obj_p[0] += obj_v[0] * dt
            obj_p[1] += obj_v[1] * dt
            obj_p[2] += obj_v[2] * dt
            if obj_kind == 0:
                obj_w[0] += tox / obj_inertia * dt
                obj_w[1] += toy / obj_inertia * dt
                obj_w[2] += toz / obj_inertia * dt
