"""Input checks shared by the estimators and the command line."""
from __future__ import annotations

import numbers

import numpy as np

from .model import BiochemicalSystem, ModelError, check_multi_affine, field_terms
from .sim import SimParams


def check_system(system) -> BiochemicalSystem:
    """Return ``system`` if it is a usable biochemical system, raise otherwise."""
    if not isinstance(system, BiochemicalSystem):
        raise TypeError(f"expected a BiochemicalSystem, got {type(system).__name__}")
    bad = check_multi_affine([[(c, v) for c, v in comp] for comp in field_terms(system.field)])
    if bad:
        i, k, j = bad[0]
        raise ModelError(f"component {i} term {k} repeats variable {j}")
    return system


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_kappa(kappa) -> int:
    return check_positive_int(kappa, "kappa")


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, numbers.Integral) or seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    return int(seed)


def check_points(X, dimension: int) -> np.ndarray:
    """2-D float array of finite points with ``dimension`` columns."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != dimension:
        raise ValueError(f"expected points of shape (m, {dimension}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("points must be finite")
    return X


def sim_params(system: BiochemicalSystem, samples: int, dt=None, t_max=None, crossing_tol=None) -> SimParams:
    """Simulation settings: explicit values first, then the model's own, then scale-aware defaults."""
    base = dict(system.sim_defaults)
    if "dt" not in base or "t_max" not in base:
        auto = default_timing(system)
        base.setdefault("dt", auto["dt"])
        base.setdefault("t_max", auto["t_max"])
    if dt is not None:
        base["dt"] = float(dt)
    if t_max is not None:
        base["t_max"] = float(t_max)
    if crossing_tol is not None:
        base["crossing_tol"] = float(crossing_tol)
    return SimParams(M=check_positive_int(samples, "samples"), **base)


def default_timing(system: BiochemicalSystem) -> dict:
    """Step and horizon scaled to the smallest rectangle and the fastest field at rectangle centres.

    dt is the smallest value of ``side / (50 * max(1, |f|))`` over all
    rectangles; t_max is a hundred times the median side-to-speed ratio, so
    one setting serves the whole partition.
    """
    from .geometry import rectangles, rect_box
    from .model import eval_field

    lo_all, hi_all, centres = [], [], []
    for r in rectangles(system.partition):
        lo, hi = rect_box(system.partition, r)
        lo_all.append(lo)
        hi_all.append(hi)
        centres.append(0.5 * (lo + hi))
    sides = np.array(hi_all) - np.array(lo_all)
    speed = np.max(np.abs(eval_field(system.field, np.array(centres))), axis=1)
    side = np.min(sides, axis=1)
    dt = float(np.min(side / (50.0 * np.maximum(1.0, speed))))
    ratio = side / np.maximum(speed, 1e-300)
    moving = speed > 0
    t_max = float(100.0 * np.median(ratio[moving])) if moving.any() else float("nan")
    if not np.isfinite(t_max):
        t_max = 100.0 * float(np.max(side))
    return {"dt": dt, "t_max": max(t_max, dt)}
