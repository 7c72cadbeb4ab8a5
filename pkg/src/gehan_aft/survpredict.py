"""Survival curves from a trained AFT predictor.

Under ``log T = g(x) + eps`` the residual ``z(t) - g(x)`` (with ``z`` the
standardized log-time) is distributed as the standardized error, so with
``H0`` the Nelson-Aalen cumulative hazard of training residuals,

    S(t | x) = exp(-H0(z(t) - g(x))).

This is the integrated form of the time-scale hazard
``h(t | x) = h0(t exp(-g)) exp(-g)``, written on the residual scale.
"""

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import StandardizationParams
from .nonparam import StepFunction, nelson_aalen


def predict_scores(model, dataset):
    """Eval-mode predictions ``g(x)`` (standardized log-time units)."""
    was_training = model.training
    model.eval()
    try:
        return model.forward(dataset.x_num, dataset.x_cat)
    finally:
        model.training = was_training


def residuals(model, dataset):
    if not dataset.is_standardized:
        raise ValueError("dataset must be standardized")
    return dataset.target - predict_scores(model, dataset)


def _check_compatible(model, dataset):
    if model.schema.fingerprint() != dataset.schema.fingerprint():
        raise ValueError("dataset schema does not match the model's training schema")
    std = getattr(model, "standardization", None)
    if std is not None and dataset.params is not None:
        if std.to_dict() != dataset.params.to_dict():
            raise ValueError("dataset standardization does not match the model's")


@dataclass(frozen=True)
class BaselineHazard:
    """Cumulative hazard of the standardized residual, plus its scaling."""

    cumhaz: StepFunction
    params: StandardizationParams

    def to_dict(self):
        return {"cumhaz": self.cumhaz.to_dict(), "standardization": self.params.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(StepFunction.from_dict(d["cumhaz"]),
                   StandardizationParams.from_dict(d["standardization"]))


def fit_baseline(model, train):
    """Nelson-Aalen fit on training residuals ``z_i - g(x_i)``."""
    _check_compatible(model, train)
    e = residuals(model, train)
    return BaselineHazard(nelson_aalen(e, train.event), train.params)


def default_time_grid(times, n_intervals=100):
    times = np.asarray(times, dtype=np.float64)
    return np.linspace(times.min(), times.max(), n_intervals + 1)


@dataclass(frozen=True)
class SurvivalCurveSet:
    """Survival probabilities for each instance (rows) on a shared time grid."""

    time_grid: np.ndarray
    survival: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.time_grid, dtype=np.float64).ravel()
        surv = np.ascontiguousarray(self.survival, dtype=np.float64)
        if surv.ndim != 2 or surv.shape[1] != grid.size:
            raise ValueError("survival must be (instances, grid points)")
        if grid.size > 1 and not np.all(np.diff(grid) > 0):
            raise ValueError("time grid must be strictly increasing")
        object.__setattr__(self, "time_grid", grid)
        object.__setattr__(self, "survival", surv)

    def __len__(self):
        return self.survival.shape[0]

    def column_index(self, t):
        """Grid column holding S(t): largest grid point <= t, else the first."""
        idx = np.searchsorted(self.time_grid, np.asarray(t, dtype=np.float64), side="right") - 1
        return np.maximum(idx, 0)

    def at(self, t):
        """Survival of every instance at each time in ``t``: shape (N, len(t))."""
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        return self.survival[:, self.column_index(t)]

    @classmethod
    def constant(cls, n, time_grid, value=0.5):
        grid = np.asarray(time_grid, dtype=np.float64)
        return cls(grid, np.full((n, grid.size), float(value)))

    def to_csv(self, path):
        """First row is the grid, then one row per instance."""
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([repr(float(t)) for t in self.time_grid])
            for row in self.survival:
                w.writerow([repr(float(s)) for s in row])

    @classmethod
    def from_csv(cls, path):
        with Path(path).open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
        if not rows:
            raise ValueError(f"{path} is empty")
        grid = np.array([float(c) for c in rows[0]])
        surv = np.array([[float(c) for c in r] for r in rows[1:]]).reshape(-1, grid.size)
        return cls(grid, surv)

    def to_json(self, path):
        payload = {"time_grid": self.time_grid.tolist(), "survival": self.survival.tolist()}
        Path(path).write_text(json.dumps(payload) + "\n")


def survival_from_scores(scores, baseline, time_grid):
    """``S(t | x) = exp(-H0(z(t) - g(x)))`` for precomputed scores ``g``."""
    grid = np.asarray(time_grid, dtype=np.float64).ravel()
    if np.any(grid <= 0):
        raise ValueError("time grid must be positive")
    z = baseline.params.standardize_time(grid)
    g = np.asarray(scores, dtype=np.float64).ravel()
    cumhaz = baseline.cumhaz(z[None, :] - g[:, None])
    return SurvivalCurveSet(grid, np.exp(-np.atleast_2d(cumhaz)))


def predict_survival(model, baseline, instances, time_grid=None):
    """Survival curves for the rows of ``instances`` (standardized features).

    ``time_grid`` defaults to 101 evenly spaced points spanning the
    instances' observed times.
    """
    _check_compatible(model, instances)
    if time_grid is None:
        time_grid = default_time_grid(instances.time)
    return survival_from_scores(predict_scores(model, instances), baseline, time_grid)
