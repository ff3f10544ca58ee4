"""Grid evaluation: per-cell success rates over the workspace.

The workspace is divided into a regular grid of target cells. Each cell gets
``trials_per_cell`` trials with the target drawn uniformly inside the cell
and the start drawn uniformly over the whole sheet. Every trial's seed is
derived from ``(master_seed, cell_i, cell_j, trial_k)``, so results are
independent of evaluation order and of how many worker processes run them:
a rerun, or the same run with a different ``jobs`` value, produces the same
grid bit for bit.

Cell (i, j) covers ``[-w/2 + i*w/cx, -w/2 + (i+1)*w/cx)`` in x and the
matching band in y, with the last cell closed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from multiprocessing import Pool

import numpy as np

from .controller import ControllerConfig
from .geometry import ModuleGeometry
from .plant import ConfigurationError, FabricConfig, ObjectSpec, Plant
from .trial import SUCCESS, TrialConfig, atomic_write_text, run_trial

REGION_SUCCESS = "success"
REGION_UNCERTAIN = "uncertain"
REGION_FAILURE = "failure"


@dataclass(frozen=True)
class GridSpec:
    cells_x: int = 20
    cells_y: int = 20
    trials_per_cell: int = 10
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.cells_x < 1 or self.cells_y < 1:
            raise ValueError("grid must have at least one cell per axis")
        if self.trials_per_cell < 1:
            raise ValueError("trials_per_cell must be >= 1")


@dataclass
class SuccessGrid:
    """Per-cell success fractions, indexed ``rates[i, j]`` (x cell, y cell)."""

    spec: GridSpec
    rates: np.ndarray

    @property
    def aggregate(self) -> float:
        """Sum of the per-cell rates; at most the number of cells."""
        return float(self.rates.sum())


@dataclass
class GridDiff:
    rates: np.ndarray
    aggregate_diff: float


def cell_bounds(
    grid: GridSpec, geo: ModuleGeometry, i: int, j: int
) -> tuple[float, float, float, float]:
    """(x_lo, x_hi, y_lo, y_hi) of target cell (i, j)."""
    w, d = geo.width_m, geo.depth_m
    x_lo = -w / 2 + i * w / grid.cells_x
    y_lo = -d / 2 + j * d / grid.cells_y
    return x_lo, x_lo + w / grid.cells_x, y_lo, y_lo + d / grid.cells_y


def _trial_streams(grid: GridSpec, i: int, j: int, k: int) -> tuple[np.random.Generator, int]:
    """Placement RNG and trial seed for one (cell, trial) pair."""
    ss = np.random.SeedSequence((grid.master_seed, i, j, k))
    place_seed, trial_seed = (int(s) for s in ss.generate_state(2, np.uint64))
    return np.random.default_rng(place_seed), trial_seed


def _run_cell(args) -> tuple[int, int, float]:
    (grid, i, j, controller, object_spec, geo, fabric, runtime_s, dwell, start_xy) = args
    x_lo, x_hi, y_lo, y_hi = cell_bounds(grid, geo, i, j)
    wins = 0
    for k in range(grid.trials_per_cell):
        rng, trial_seed = _trial_streams(grid, i, j, k)
        target = (float(rng.uniform(x_lo, x_hi)), float(rng.uniform(y_lo, y_hi)))
        if start_xy is None:
            start = (
                float(rng.uniform(-geo.width_m / 2, geo.width_m / 2)),
                float(rng.uniform(-geo.depth_m / 2, geo.depth_m / 2)),
            )
        else:
            start = start_xy
        cfg = TrialConfig(
            controller=controller,
            object_spec=object_spec,
            start_xy=start,
            target_xy=target,
            runtime_s=runtime_s,
            seed=trial_seed,
            success_dwell=dwell,
        )
        record = run_trial(cfg, geo, fabric)
        wins += record.outcome == SUCCESS
    return i, j, wins / grid.trials_per_cell


def run_grid(
    grid: GridSpec,
    controller: ControllerConfig,
    object_spec: ObjectSpec,
    geo: ModuleGeometry,
    fabric: FabricConfig,
    runtime_s: float = 10.0,
    success_dwell: int = 3,
    jobs: int = 1,
    start_xy: tuple[float, float] | None = None,
) -> SuccessGrid:
    """Evaluate every cell; ``jobs`` > 1 distributes cells over processes.

    ``start_xy`` fixes the object start (centered-start experiments);
    the default draws it uniformly over the workspace per trial.
    Configuration problems abort here, before any trial launches.
    """
    Plant(fabric, geo, object_spec)  # validates fabric/geometry/object
    period = 1.0 / controller.control_frequency
    if abs(period / fabric.physics_dt - round(period / fabric.physics_dt)) > 1e-9:
        raise ConfigurationError(
            f"control period {period} must be an integer multiple of "
            f"physics_dt {fabric.physics_dt}"
        )
    tasks = [
        (grid, i, j, controller, object_spec, geo, fabric, runtime_s, success_dwell, start_xy)
        for i in range(grid.cells_x)
        for j in range(grid.cells_y)
    ]
    rates = np.zeros((grid.cells_x, grid.cells_y))
    if jobs > 1:
        with Pool(processes=jobs) as pool:
            results = pool.map(_run_cell, tasks)
    else:
        results = [_run_cell(t) for t in tasks]
    for i, j, rate in results:
        rates[i, j] = rate
    return SuccessGrid(spec=grid, rates=rates)


def classify_regions(grid: SuccessGrid, hi: float = 0.9, lo: float = 0.1) -> np.ndarray:
    """Label each cell success / uncertain / failure by rate thresholds."""
    if not 0 <= lo < hi <= 1:
        raise ValueError(f"thresholds must satisfy 0 <= lo < hi <= 1, got lo={lo}, hi={hi}")
    regions = np.full(grid.rates.shape, REGION_UNCERTAIN, dtype=object)
    regions[grid.rates >= hi] = REGION_SUCCESS
    regions[grid.rates <= lo] = REGION_FAILURE
    return regions


def diff_grids(a: SuccessGrid, b: SuccessGrid) -> GridDiff:
    """Per-cell and aggregate rate difference ``a - b``; grids must match."""
    if a.spec != b.spec and a.rates.shape != b.rates.shape:
        raise ValueError("grids have different specs")
    if a.rates.shape != b.rates.shape:
        raise ValueError("grids have different shapes")
    d = a.rates - b.rates
    return GridDiff(rates=d, aggregate_diff=a.aggregate - b.aggregate)


def improvement_summary(manhattan_aggregate: float, euclidean_aggregate: float) -> dict:
    """Aggregate difference with both normalizations, explicitly labeled.

    The fraction-of-a-policy figure depends on the chosen baseline, so both
    are reported rather than picking one.
    """
    diff = manhattan_aggregate - euclidean_aggregate
    return {
        "manhattan_aggregate": manhattan_aggregate,
        "euclidean_aggregate": euclidean_aggregate,
        "difference": diff,
        "difference_over_manhattan": diff / manhattan_aggregate if manhattan_aggregate else 0.0,
        "difference_over_euclidean": diff / euclidean_aggregate if euclidean_aggregate else 0.0,
    }


# ----------------------------------------------------------------------
# emission: CSV matrix, JSON document, PGM image

def rates_csv(grid: SuccessGrid) -> str:
    """CSV matrix of rates; row 0 is the +y edge, columns run -x to +x."""
    cx, cy = grid.rates.shape
    lines = []
    for j in range(cy - 1, -1, -1):
        lines.append(",".join(repr(float(grid.rates[i, j])) for i in range(cx)))
    return "\n".join(lines) + "\n"


def grid_json(grid: SuccessGrid, config_echo: dict, hi: float = 0.9, lo: float = 0.1) -> str:
    regions = classify_regions(grid, hi, lo)
    doc = {
        "cells_x": grid.spec.cells_x,
        "cells_y": grid.spec.cells_y,
        "trials_per_cell": grid.spec.trials_per_cell,
        "master_seed": grid.spec.master_seed,
        "rates": [[float(v) for v in row] for row in grid.rates],
        "regions": [[str(v) for v in row] for row in regions],
        "aggregate": grid.aggregate,
        "region_thresholds": {"hi": hi, "lo": lo},
        "config": config_echo,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def rates_pgm(grid: SuccessGrid) -> str:
    """8-bit grayscale PGM (P2): value = rate*255, row 0 at the +y edge."""
    cx, cy = grid.rates.shape
    lines = ["P2", f"{cx} {cy}", "255"]
    for j in range(cy - 1, -1, -1):
        lines.append(" ".join(str(int(round(float(grid.rates[i, j]) * 255))) for i in range(cx)))
    return "\n".join(lines) + "\n"


def write_grid_outputs(
    grid: SuccessGrid,
    out_dir: str,
    stem: str,
    config_echo: dict,
    hi: float = 0.9,
    lo: float = 0.1,
) -> None:
    atomic_write_text(f"{out_dir}/{stem}_rates.csv", rates_csv(grid))
    atomic_write_text(f"{out_dir}/{stem}.json", grid_json(grid, config_echo, hi, lo))
    atomic_write_text(f"{out_dir}/{stem}.pgm", rates_pgm(grid))
