"""Kaplan-Meier and Nelson-Aalen estimators as right-continuous step functions."""

import csv
from pathlib import Path

import numpy as np


class StepFunction:
    """Right-continuous piecewise-constant function.

    ``f(t) = values[k]`` for the largest ``k`` with ``knots[k] <= t``, and
    ``left_value`` below the first knot. Beyond the last knot the last value
    is held.
    """

    def __init__(self, knots, values, left_value=0.0):
        knots = np.array(knots, dtype=np.float64).ravel()
        values = np.array(values, dtype=np.float64).ravel()
        if knots.shape != values.shape:
            raise ValueError("knots and values differ in length")
        if knots.size > 1 and not np.all(np.diff(knots) > 0):
            raise ValueError("knots must be strictly increasing")
        knots.setflags(write=False)
        values.setflags(write=False)
        self.knots = knots
        self.values = values
        self.left_value = float(left_value)

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.knots, t, side="right") - 1
        table = np.concatenate([[self.left_value], self.values])
        out = table[idx + 1]
        return float(out) if out.ndim == 0 else out

    def __len__(self):
        return self.knots.size

    def __repr__(self):
        return f"StepFunction(n_knots={self.knots.size}, left_value={self.left_value})"

    def __eq__(self, other):
        if not isinstance(other, StepFunction):
            return NotImplemented
        return (
            self.left_value == other.left_value
            and np.array_equal(self.knots, other.knots)
            and np.array_equal(self.values, other.values)
        )

    def to_dict(self):
        return {
            "knots": [float(v) for v in self.knots],
            "values": [float(v) for v in self.values],
            "left_value": self.left_value,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["knots"], d["values"], d["left_value"])

    def to_csv(self, path):
        """Two-column ``knot,value`` table."""
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["knot", "value"])
            for k, v in zip(self.knots, self.values):
                w.writerow([repr(float(k)), repr(float(v))])


def _event_table(values, events):
    v = np.asarray(values, dtype=np.float64).ravel()
    d = np.asarray(events, dtype=bool).ravel()
    if v.shape != d.shape:
        raise ValueError("values and events differ in length")
    if v.size == 0:
        raise ValueError("empty input")
    if not np.all(np.isfinite(v)):
        raise ValueError("values must be finite")
    uniq, deaths = np.unique(v[d], return_counts=True)
    at_risk = v.size - np.searchsorted(np.sort(v), uniq, side="left")
    return uniq, deaths.astype(np.float64), at_risk.astype(np.float64)


def kaplan_meier(times, events):
    """Product-limit estimate of ``S(t) = P(T > t)``.

    At-risk counts include everyone with time at or after the event time.
    """
    t = np.asarray(times, dtype=np.float64)
    if t.size and np.any(t <= 0):
        raise ValueError("times must be positive")
    knots, d, n = _event_table(t, events)
    return StepFunction(knots, np.cumprod(1.0 - d / n), left_value=1.0)


def censoring_km(times, events):
    """Kaplan-Meier estimate of the censoring survival ``G(t) = P(C > t)``."""
    return kaplan_meier(times, ~np.asarray(events, dtype=bool))


def nelson_aalen(values, events):
    """Nelson-Aalen cumulative hazard ``H(t) = sum_{t_k <= t} d_k / n_k``.

    ``values`` may be any reals (e.g. residuals); ties among event values
    form one jump, and ``n_k`` counts values ``>= t_k``.
    """
    knots, d, n = _event_table(values, events)
    return StepFunction(knots, np.cumsum(d / n), left_value=0.0)
