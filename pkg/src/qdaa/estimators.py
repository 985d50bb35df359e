"""Estimator-style wrappers around the reachability analyses.

``fit`` takes a :class:`~qdaa.model.BiochemicalSystem` (or a bundled model
name, or a model file path) and stores the results in trailing-underscore
attributes.  ``predict`` answers point queries against the fitted
reachable set.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .bundled import resolve_model
from .geometry import rect_box
from .rats import build_rats
from .reach import analyse, rectangle_set_bounds
from .validation import check_kappa, check_points, check_positive_int, check_seed, check_system, sim_params


def _as_system(system):
    if isinstance(system, str):
        system = resolve_model(system)
    return check_system(system)


def _locate(system, X) -> list[tuple | None]:
    """Rectangle index of every point, or None outside the partition."""
    out = []
    for x in X:
        idx = []
        for i, t in enumerate(system.partition.thresholds):
            t = np.asarray(t)
            if x[i] < t[0] or x[i] > t[-1]:
                idx = None
                break
            idx.append(int(min(np.searchsorted(t, x[i], side="right") - 1, len(t) - 2)))
        out.append(None if idx is None else tuple(idx))
    return out


class QDAAReachability(BaseEstimator):
    """Reachable rectangles of a biochemical system via its quantitative automaton.

    Parameters
    ----------
    kappa : int
        Tile resolution per facet axis.
    n_samples : int
        Trajectories per successor computation (and per backward check).
    backward : bool
        Confirm each candidate entry tile by backward simulation.
    dt, t_max, crossing_tol : float or None
        Integration settings; ``None`` falls back to the model file, then to
        scale-aware defaults.
    random_state : int
        Master seed.
    n_jobs : int
        Worker threads for frontier expansion; results do not depend on it.
    heatmap_limit : int
        Largest automaton solved exactly for the heatmap.
    max_states : int or None
        Abort once more states are visited.
    """

    def __init__(self, kappa=8, n_samples=100, backward=True, dt=None, t_max=None, crossing_tol=None,
                 random_state=0, n_jobs=1, heatmap_limit=20000, max_states=None):
        self.kappa = kappa
        self.n_samples = n_samples
        self.backward = backward
        self.dt = dt
        self.t_max = t_max
        self.crossing_tol = crossing_tol
        self.random_state = random_state
        self.n_jobs = n_jobs
        self.heatmap_limit = heatmap_limit
        self.max_states = max_states

    def fit(self, system, y=None):
        system = _as_system(system)
        kappa = check_kappa(self.kappa)
        params = sim_params(system, self.n_samples, self.dt, self.t_max, self.crossing_tol)
        report = analyse(system, kappa, params, bool(self.backward), check_seed(self.random_state),
                         check_positive_int(self.n_jobs, "n_jobs"), self.max_states, self.heatmap_limit)
        self.system_ = system
        self.params_ = params
        self.report_ = report
        self.automaton_ = report.automaton
        self.states_ = report.states
        self.rectangles_ = report.rectangles
        self.bounds_ = np.array(report.bounds, dtype=float)
        self.rho_ = report.rho
        self.heatmap_ = report.heatmap
        self.sink_mass_ = report.sink_mass
        self.lost_mass_ = report.lost_mass
        self.n_features_in_ = system.dimension
        return self

    def predict(self, X) -> np.ndarray:
        """Whether each point lies in a reachable rectangle."""
        check_is_fitted(self, "rectangles_")
        X = check_points(X, self.n_features_in_)
        reach = set(self.rectangles_)
        return np.array([r in reach for r in _locate(self.system_, X)], dtype=bool)

    def predict_proba(self, X) -> np.ndarray:
        """First-passage probability of the rectangle holding each point (0 outside)."""
        check_is_fitted(self, "heatmap_")
        X = check_points(X, self.n_features_in_)
        return np.array([self.heatmap_.get(r, 0.0) if r is not None else 0.0
                         for r in _locate(self.system_, X)])

    def rectangle_boxes(self) -> np.ndarray:
        """Array of shape (k, 2, n) with the lower and upper corner of every reachable rectangle."""
        check_is_fitted(self, "rectangles_")
        return np.array([np.stack(rect_box(self.system_.partition, r)) for r in self.rectangles_])


class RectangularAbstraction(BaseEstimator):
    """Reachable rectangles of the classical vertex-sign rectangular abstraction."""

    def __init__(self, eps=1e-12):
        self.eps = eps

    def fit(self, system, y=None):
        system = _as_system(system)
        if not self.eps >= 0:
            raise ValueError("eps must be non-negative")
        self.system_ = system
        self.graph_ = build_rats(system, eps=self.eps)
        self.rectangles_ = list(self.graph_.rectangles)
        self.bounds_ = np.array(rectangle_set_bounds(system, self.rectangles_), dtype=float)
        self.n_features_in_ = system.dimension
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "rectangles_")
        X = check_points(X, self.n_features_in_)
        reach = set(self.rectangles_)
        return np.array([r in reach for r in _locate(self.system_, X)], dtype=bool)
