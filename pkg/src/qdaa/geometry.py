"""Index-based geometry over a threshold partition.

Rectangles are tuples of interval indices (``j`` on axis ``i`` means
``[T_i[j], T_i[j+1]]``); coordinates are derived from the partition on
demand so state identity never depends on floating point keys.

Tiles of a facet are numbered in C order over the facet's free axes
(all axes except the fixed one, ascending), tiles of a rectangle in C order
over all axes.  Axes listed as ``inert`` (species held constant) are not
subdivided: every tile spans their whole interval.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, NamedTuple, Union

import numpy as np
from scipy.stats import qmc

from .model import Partition

Rectangle = tuple  # tuple[int, ...]

LOWER, UPPER = 0, 1
EPS_GEOM = 1e-9


class Facet(NamedTuple):
    rectangle: Rectangle
    axis: int
    side: int  # LOWER or UPPER

    def __str__(self):
        return f"Facet{'_lo' if self.side == LOWER else '_hi'}{self.axis}{tuple(self.rectangle)}"


class Tile(NamedTuple):
    parent: Union[Facet, Rectangle]
    coords: tuple

    def index(self, kappa: int) -> int:
        return int(np.ravel_multi_index(self.coords, (kappa,) * len(self.coords))) if self.coords else 0


@dataclass(frozen=True, order=True)
class EntrySet:
    """Where trajectories entered a rectangle.

    ``kind`` is ``"empty"``, ``"whole"`` or ``"tiles"``; only the tile
    variant carries a facet and a nonzero bitset over that facet's tiles.
    ``"sink"`` and ``"lost"`` mark the two rectangle-less absorbing states.
    """

    kind: str
    facet: Facet | None = None
    tiles: int = 0

    def __post_init__(self):
        if self.kind in ("empty", "whole", "sink", "lost"):
            if self.facet is not None or self.tiles:
                raise ValueError(f"{self.kind} entry set carries no facet")
        elif self.kind == "tiles":
            if self.facet is None:
                raise ValueError("tile entry set needs a facet")
            if self.tiles <= 0:
                raise ValueError("tile entry set needs at least one tile; use EMPTY")
        else:
            raise ValueError(f"unknown entry set kind {self.kind!r}")

    @classmethod
    def on_facet(cls, facet: Facet, tiles: int) -> "EntrySet":
        return cls("tiles", Facet(tuple(facet.rectangle), facet.axis, facet.side), int(tiles))

    @property
    def tile_indices(self) -> list[int]:
        return bits_to_indices(self.tiles)

    def sort_key(self):
        order = {"whole": 0, "tiles": 1, "empty": 2, "sink": 3, "lost": 4}[self.kind]
        if self.facet is None:
            return (order, -1, -1, 0)
        return (order, self.facet.axis, self.facet.side, self.tiles)


EMPTY = EntrySet("empty")
WHOLE = EntrySet("whole")


def bits_to_indices(bits: int) -> list[int]:
    out = []
    k = 0
    while bits:
        low = bits & -bits
        k = low.bit_length() - 1
        out.append(k)
        bits ^= low
    return out


def indices_to_bits(indices) -> int:
    bits = 0
    for k in indices:
        bits |= 1 << int(k)
    return bits


def rectangles(partition: Partition):
    """All rectangles of the partition in lexicographic order."""
    return itertools.product(*(range(m) for m in partition.shape))


def n_rectangles(partition: Partition) -> int:
    return int(np.prod(partition.shape))


def rect_box(partition: Partition, rect: Rectangle) -> tuple[np.ndarray, np.ndarray]:
    ths = partition.thresholds
    lo = np.array([ths[i][j] for i, j in enumerate(rect)])
    hi = np.array([ths[i][j + 1] for i, j in enumerate(rect)])
    return lo, hi


def facets(rect: Rectangle) -> list[Facet]:
    """The 2n facets, ordered by axis then lower before upper."""
    rect = tuple(rect)
    return [Facet(rect, i, s) for i in range(len(rect)) for s in (LOWER, UPPER)]


def facet_box(partition: Partition, facet: Facet) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = rect_box(partition, facet.rectangle)
    c = lo[facet.axis] if facet.side == LOWER else hi[facet.axis]
    lo[facet.axis] = hi[facet.axis] = c
    return lo, hi


def box(partition: Partition, region) -> tuple[np.ndarray, np.ndarray]:
    """Coordinate bounds of a rectangle, facet or tile."""
    if isinstance(region, Tile):
        raise TypeError("use tile_box(partition, tile, kappa) for tiles")
    if isinstance(region, Facet):
        return facet_box(partition, region)
    return rect_box(partition, region)


def neighbour_through(partition: Partition, facet: Facet) -> Rectangle | None:
    """Rectangle across ``facet``, or ``None`` on the analysed domain's boundary."""
    rect = list(facet.rectangle)
    j = rect[facet.axis] + (1 if facet.side == UPPER else -1)
    if j < 0 or j >= partition.shape[facet.axis]:
        return None
    rect[facet.axis] = j
    return tuple(rect)


def opposite(partition: Partition, facet: Facet) -> Facet | None:
    """The same geometric facet seen from the neighbouring rectangle."""
    nb = neighbour_through(partition, facet)
    if nb is None:
        return None
    return Facet(nb, facet.axis, 1 - facet.side)


def free_axes(region, inert=()) -> list[int]:
    """Axes along which ``region`` is subdivided into tiles."""
    if isinstance(region, Facet):
        return [i for i in range(len(region.rectangle)) if i != region.axis and i not in inert]
    return [i for i in range(len(region)) if i not in inert]


def n_tiles(region, kappa: int, inert=()) -> int:
    return kappa ** len(free_axes(region, inert))


def tiles(region, kappa: int, inert=()) -> list[Tile]:
    """kappa^(n-1) tiles of a facet or kappa^n tiles of a rectangle, in index order."""
    if kappa < 1:
        raise ValueError("kappa must be at least 1")
    m = len(free_axes(region, inert))
    return [Tile(region, c) for c in itertools.product(range(kappa), repeat=m)]


def tile_box(partition: Partition, tile: Tile, kappa: int, inert=()) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = box(partition, tile.parent)
    width = (hi - lo) / kappa
    tlo, thi = lo.copy(), hi.copy()
    for c, ax in zip(tile.coords, free_axes(tile.parent, inert)):
        tlo[ax] = lo[ax] + c * width[ax]
        thi[ax] = lo[ax] + (c + 1) * width[ax] if c + 1 < kappa else hi[ax]
    return tlo, thi


def tile_center(partition: Partition, tile: Tile, kappa: int, inert=()) -> np.ndarray:
    lo, hi = tile_box(partition, tile, kappa, inert)
    return (lo + hi) / 2


def tile_coords(lo: np.ndarray, hi: np.ndarray, axes: list[int], kappa: int, points: np.ndarray) -> np.ndarray:
    """Grid coordinates of points inside the box ``[lo, hi]`` along ``axes``.

    Points on an interior grid line go to the higher-index cell.
    """
    pts = np.atleast_2d(points)
    if not axes:
        return np.zeros((len(pts), 0), dtype=np.int64)
    ax = np.asarray(axes)
    span = hi[ax] - lo[ax]
    rel = (pts[:, ax] - lo[ax]) * kappa / span
    return np.clip(np.floor(rel), 0, kappa - 1).astype(np.int64)


def tile_containing(partition: Partition, region, kappa: int, point, inert=()) -> Tile:
    """Tile of ``region`` containing ``point`` (half-open, ties to the higher index)."""
    lo, hi = box(partition, region)
    p = np.asarray(point, dtype=float)
    rlo, rhi = rect_box(partition, _rect_of(region))
    tol = EPS_GEOM * (rhi - rlo)
    if np.any(p < lo - tol) or np.any(p > hi + tol):
        raise ValueError(f"point {p.tolist()} lies outside {region}")
    axes = free_axes(region, inert)
    coords = tile_coords(lo, hi, axes, kappa, p)[0]
    return Tile(region, tuple(int(c) for c in coords))


def _rect_of(region):
    return region.rectangle if isinstance(region, Facet) else region


def facet_tile_indices(partition: Partition, facet: Facet, kappa: int, points: np.ndarray,
                       inert=()) -> np.ndarray:
    """Linear tile indices on ``facet`` of many points (no range checks)."""
    lo, hi = facet_box(partition, facet)
    axes = free_axes(facet, inert)
    coords = tile_coords(lo, hi, axes, kappa, points)
    if not axes:
        return np.zeros(len(coords), dtype=np.int64)
    return np.ravel_multi_index(coords.T, (kappa,) * len(axes))


def volume(lo: np.ndarray, hi: np.ndarray) -> float:
    """Volume over the non-degenerate axes."""
    span = hi - lo
    return float(np.prod(span[span > 0]))


def grid_measure(oracle: Callable[[np.ndarray], np.ndarray], lo, hi, kappa: int, mc_samples: int = 256) -> float:
    """Rectangular kappa-grid measure of ``X = {x : oracle(x)}`` inside the box ``[lo, hi]``.

    Sums the volumes of tiles whose fill fraction is at least one half.
    Fill fractions are estimated on a fixed scrambled Halton point set, the
    same in every tile.  Degenerate axes (``lo == hi``) are not tiled, so a
    facet box gives the (n-1)-dimensional measure.  ``oracle`` maps an
    ``(m, n)`` array of points to ``m`` booleans.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if mc_samples < 1:
        raise ValueError("mc_samples must be at least 1")
    axes = [i for i in range(len(lo)) if hi[i] > lo[i]]
    d = len(axes)
    if d == 0:
        return 0.0
    u = qmc.Halton(d, scramble=True, seed=0).random(mc_samples)
    width = (hi[axes] - lo[axes]) / kappa
    tile_vol = float(np.prod(width))
    total = 0.0
    # one batch of tiles at a time keeps memory bounded for large kappa
    grid = np.array(list(itertools.product(range(kappa), repeat=d)), dtype=float)
    batch = max(1, 2_000_000 // mc_samples)
    for start in range(0, len(grid), batch):
        g = grid[start:start + batch]
        pts = np.empty((len(g), mc_samples, len(lo)))
        pts[:] = lo
        pts[:, :, axes] = lo[axes] + (g[:, None, :] + u[None, :, :]) * width
        inside = np.asarray(oracle(pts.reshape(-1, len(lo))), dtype=bool).reshape(len(g), mc_samples)
        total += tile_vol * int(np.count_nonzero(inside.mean(axis=1) >= 0.5))
    return total
