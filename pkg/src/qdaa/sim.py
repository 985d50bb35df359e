"""Trajectory simulation inside a rectangle and region sampling.

Integration is fixed-step RK4.  Once a step leaves the rectangle the
crossing time is bisected until the bracket moves the state by at most
``crossing_tol`` (measured as a fraction of the rectangle's side on every
axis); the exit point is then interpolated onto the crossed facet.
Backward runs integrate ``-f``, which traces solutions in reversed time.
"""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .geometry import EPS_GEOM, EntrySet, Facet, Tile, box, facet_box, free_axes, rect_box, tile_box
from .model import MultiAffineField, Partition

FORWARD, BACKWARD = "forward", "backward"
# horizons of at least this many steps use a field evaluator compiled for the model
SPECIALISE_STEPS = 20000


class IntegrationError(RuntimeError):
    """The state became non-finite; ``last_state`` is the last finite point."""

    def __init__(self, message, last_state=None, context=None):
        self.last_state = None if last_state is None else np.asarray(last_state)
        self.context = context
        super().__init__(message)


@dataclass(frozen=True)
class SimParams:
    dt: float = 0.01
    t_max: float = 50.0
    crossing_tol: float = 1e-9
    M: int = 100

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_max >= self.dt:
            raise ValueError("t_max must be at least dt")
        if not self.crossing_tol > 0:
            raise ValueError("crossing_tol must be positive")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError("M must be a positive integer")


@dataclass(frozen=True)
class ExitEvent:
    """Outcome of one trajectory: an exit through ``facet`` at ``point``, or staying inside."""

    exited: bool
    point: np.ndarray
    time: float
    axis: int = -1
    side: int = -1

    @property
    def stays_inside(self) -> bool:
        return not self.exited

    def facet(self, rect) -> Facet | None:
        return Facet(tuple(rect), self.axis, self.side) if self.exited else None


@dataclass
class BatchResult:
    exited: np.ndarray   # bool (m,)
    points: np.ndarray   # (m, n) exit points, or final states for stayers
    axis: np.ndarray     # (m,) crossed axis or -1
    side: np.ndarray     # (m,) LOWER/UPPER or -1
    time: np.ndarray     # (m,)

    def __len__(self):
        return len(self.exited)

    def event(self, k: int) -> ExitEvent:
        return ExitEvent(bool(self.exited[k]), self.points[k].copy(), float(self.time[k]),
                         int(self.axis[k]), int(self.side[k]))


def _field_kernel(field: MultiAffineField, steps: float):
    """Field evaluator for a run of about ``steps`` RK4 steps per trajectory.

    Long horizons get a straight-line evaluator compiled for the field's
    term structure; short ones keep the generic one and skip that compile.
    """
    if steps < SPECIALISE_STEPS:
        return _kernels.field_generic
    coef, comp, vidx, vcnt = field.arrays
    return _kernels.specialised_field(field.dimension, coef, comp, vidx, vcnt)


def integrate_batch(field: MultiAffineField, x0, lo, hi, params: SimParams,
                    direction: str = FORWARD) -> BatchResult:
    """Integrate many starting points inside the box ``[lo, hi]`` until exit or ``t_max``."""
    x0 = np.ascontiguousarray(np.atleast_2d(np.asarray(x0, dtype=float)))
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if x0.shape[1] != field.dimension:
        raise ValueError(f"points must have dimension {field.dimension}")
    tol = EPS_GEOM * (hi - lo)
    if np.any(x0 < lo - tol) or np.any(x0 > hi + tol):
        raise ValueError("starting points must lie in the rectangle")
    x0 = np.clip(x0, lo, hi)
    sign = 1.0 if direction == FORWARD else -1.0
    if direction not in (FORWARD, BACKWARD):
        raise ValueError(f"direction must be {FORWARD!r} or {BACKWARD!r}")
    m, n = x0.shape
    status = np.zeros(m, dtype=np.int64)
    xout = np.zeros((m, n))
    axis = np.full(m, -1, dtype=np.int64)
    side = np.full(m, -1, dtype=np.int64)
    tout = np.zeros(m)
    coef, comp, vidx, vcnt = field.arrays
    fn = _field_kernel(field, params.t_max / params.dt)
    _kernels.integrate_batch(fn, x0, lo, hi, coef, comp, vidx, vcnt, sign, float(params.dt), float(params.t_max),
                             float(params.crossing_tol), status, xout, axis, side, tout)
    bad = np.flatnonzero(status == _kernels.BLOWUP)
    if len(bad):
        k = int(bad[0])
        raise IntegrationError(
            f"non-finite state after t={tout[k]:.6g} starting from {x0[k].tolist()} ({direction})",
            last_state=xout[k],
        )
    return BatchResult(status == _kernels.EXITED, xout, axis, side, tout)


def integrate_until_exit(field: MultiAffineField, x0, rect_bounds, params: SimParams,
                         direction: str = FORWARD) -> ExitEvent:
    """Single-trajectory form of :func:`integrate_batch`; ``rect_bounds`` is ``(lo, hi)``."""
    lo, hi = rect_bounds
    return integrate_batch(field, np.asarray(x0, dtype=float)[None, :], lo, hi, params, direction).event(0)


def simulate(field: MultiAffineField, x0, dt: float, t_max: float, direction: str = FORWARD) -> np.ndarray:
    """Unbounded RK4 trajectory, rows ``(t, x_1, ..., x_n)``."""
    n_steps = int(np.ceil(t_max / dt - 1e-9))
    sign = 1.0 if direction == FORWARD else -1.0
    coef, comp, vidx, vcnt = field.arrays
    xs = _kernels.trajectory(_field_kernel(field, n_steps), np.asarray(x0, dtype=float), coef, comp, vidx, vcnt, sign, float(dt), n_steps)
    t = np.arange(n_steps + 1) * dt
    return np.column_stack([t, xs])


def write_trajectory_csv(path, field: MultiAffineField, starts, params: SimParams, species: Sequence[str] | None = None,
                         direction: str = FORWARD) -> None:
    """Dump RK4 trajectories as CSV rows ``(trajectory, t, x_1, ..., x_n)``."""
    names = list(species) if species else [f"x{i + 1}" for i in range(field.dimension)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["trajectory", "t", *names])
        for k, x0 in enumerate(np.atleast_2d(starts)):
            for row in simulate(field, x0, params.dt, params.t_max, direction):
                w.writerow([k, *(repr(float(v)) for v in row)])


# ---------------------------------------------------------------------------
# seeds and sampling

def derive_seed(master: int, *parts) -> int:
    """64-bit child seed from the master seed and a tuple of hashable parts.

    Built from ``repr`` of plain ints/strings/tuples, so it is independent of
    the interpreter's hash randomisation and of scheduling order.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(repr((int(master), parts)).encode())
    return int.from_bytes(h.digest(), "little")


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _uniform_in_box(lo, hi, m, rng):
    return lo + rng.random((m, len(lo))) * (hi - lo)


def sample_points(partition: Partition, region, M: int, seed, kappa: int | None = None,
                  rect=None, inert=()) -> np.ndarray:
    """``M`` uniform points in a rectangle, facet, tile or entry set.

    For an entry set ``rect`` is the owning rectangle and ``kappa`` the tile
    resolution; each point picks one of the set tiles with equal probability
    and is then uniform inside it.
    """
    rng = _as_rng(seed)
    if isinstance(region, EntrySet):
        if region.kind == "empty":
            raise ValueError("cannot sample an empty entry set")
        if region.kind == "whole":
            if rect is None:
                raise ValueError("sampling a whole entry set needs its rectangle")
            return sample_points(partition, tuple(rect), M, rng)
        if kappa is None:
            raise ValueError("sampling tiles needs kappa")
        return _sample_tiles(partition, region.facet, region.tile_indices, kappa, M, rng, inert)
    if isinstance(region, Tile):
        if kappa is None:
            raise ValueError("sampling a tile needs kappa")
        lo, hi = tile_box(partition, region, kappa, inert)
        return _uniform_in_box(lo, hi, M, rng)
    lo, hi = box(partition, region)
    return _uniform_in_box(lo, hi, M, rng)


def _sample_tiles(partition, facet: Facet, indices, kappa, M, rng, inert=()):
    lo, hi = facet_box(partition, facet)
    axes = free_axes(facet, inert)
    idx = np.asarray(indices, dtype=np.int64)
    pick = idx[rng.integers(0, len(idx), size=M)]
    u = rng.random((M, len(lo)))
    pts = lo + u * (hi - lo)
    if axes:
        coords = np.array(np.unravel_index(pick, (kappa,) * len(axes))).T
        ax = np.asarray(axes)
        width = (hi[ax] - lo[ax]) / kappa
        pts[:, ax] = lo[ax] + (coords + u[:, ax]) * width
        pts[:, ax] = np.minimum(pts[:, ax], hi[ax])
    return pts


def rect_bounds(partition: Partition, rect) -> tuple[np.ndarray, np.ndarray]:
    return rect_box(partition, rect)
