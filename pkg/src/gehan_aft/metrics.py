"""Concordance, IPCW Brier score and integrated Brier score.

The Brier functions take the censoring survival ``censoring_G`` explicitly.
Fit on the evaluated split itself (``censoring_km(times, events)``), the
inverse-probability weights of tie-free data sum to exactly one at every
time, so constant 0.5 curves score 0.25; a ``censoring_G`` fit elsewhere
only approximates this and degrades past the support of its data.
"""

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels

G_CLIP = 1e-4


def _arrays(times, events):
    t = np.ascontiguousarray(times, dtype=np.float64).ravel()
    d = np.ascontiguousarray(events, dtype=bool).ravel()
    if t.shape != d.shape:
        raise ValueError("times and events differ in length")
    return t, d


def concordance_counts(times, events, scores):
    """``(concordant, tied, comparable)`` pair counts for Harrell's C.

    A pair (i, j) is comparable when ``t_i < t_j`` and i had the event;
    it is concordant when ``score_i < score_j`` (higher score = longer
    predicted survival).
    """
    t, d = _arrays(times, events)
    s = np.ascontiguousarray(scores, dtype=np.float64).ravel()
    if s.shape != t.shape:
        raise ValueError("scores and times differ in length")
    return kernels.concordance_counts(t, d.view(np.uint8), s)


def concordance_index(times, events, scores):
    """Harrell's concordance index; tied scores earn half credit."""
    conc, tied, comp = concordance_counts(times, events, scores)
    if comp == 0:
        raise ValueError("no comparable pairs")
    return (conc + 0.5 * tied) / comp


def concordance_td(times, events, curves):
    """Time-dependent concordance: pair (i, j) is concordant when S(t_i|x_i) < S(t_i|x_j)."""
    t, d = _arrays(times, events)
    if len(curves) != t.size:
        raise ValueError("one survival curve per instance expected")
    col = curves.column_index(t).astype(np.int64)
    conc, tied, comp = kernels.concordance_td_counts(t, d.view(np.uint8), curves.survival, col)
    if comp == 0:
        raise ValueError("no comparable pairs")
    return (conc + 0.5 * tied) / comp


def _inverse(g, used, clip):
    """``1 / G`` with G floored at ``clip``; also counts floored entries in use."""
    g = np.asarray(g, dtype=np.float64)
    if clip is None:
        if np.any(used & (g <= 0)):
            raise ZeroDivisionError("censoring survival is zero where a weight is needed")
        with np.errstate(divide="ignore"):
            return np.where(used, 1.0 / np.where(g > 0, g, 1.0), 0.0), 0
    return 1.0 / np.maximum(g, clip), int(np.count_nonzero(used & (g < clip)))


def brier_curve(grid, times, events, curves, censoring_G, clip=G_CLIP):
    """IPCW Brier score at each grid time.

    Returns ``(scores, n_clipped)``: ``n_clipped`` counts weights in use whose
    censoring survival fell below ``clip`` and was raised to it.
    """
    t, d = _arrays(times, events)
    grid = np.atleast_1d(np.asarray(grid, dtype=np.float64))
    if len(curves) != t.size:
        raise ValueError("one survival curve per instance expected")
    surv = curves.at(grid)
    past = (t[:, None] <= grid[None, :]) & d[:, None]
    future = t[:, None] > grid[None, :]
    w_obs, c1 = _inverse(censoring_G(t), past.any(axis=1), clip)
    w_grid, c2 = _inverse(censoring_G(grid), future.any(axis=0), clip)
    term1 = np.where(past, surv ** 2 * w_obs[:, None], 0.0)
    term2 = np.where(future, (1.0 - surv) ** 2 * w_grid[None, :], 0.0)
    return (term1 + term2).mean(axis=0), c1 + c2


def brier_score(t, times, events, curves, censoring_G, clip=G_CLIP):
    """IPCW Brier score at a single time ``t``."""
    scores, _ = brier_curve([t], times, events, curves, censoring_G, clip)
    return float(scores[0])


def ibs_grid(times, n_intervals=100):
    t = np.asarray(times, dtype=np.float64)
    lo, hi = float(t.min()), float(t.max())
    if not hi > lo:
        raise ValueError("degenerate time grid: minimum equals maximum")
    return np.linspace(lo, hi, n_intervals + 1)


def integrate_brier(grid, scores):
    """Trapezoidal mean of a Brier curve over its grid span."""
    grid = np.asarray(grid, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    area = np.sum(0.5 * (scores[1:] + scores[:-1]) * np.diff(grid))
    return float(area / (grid[-1] - grid[0]))


def integrated_brier_score(times, events, curves, censoring_G, n_intervals=100, clip=G_CLIP):
    """IBS over ``[min t, max t]`` of the evaluation split in ``n_intervals`` steps."""
    grid = ibs_grid(times, n_intervals)
    scores, _ = brier_curve(grid, times, events, curves, censoring_G, clip)
    return integrate_brier(grid, scores)


@dataclass
class MetricReport:
    c_index: float
    c_td: float
    ibs: float
    n_comparable: int
    n_clipped: int
    bs_grid: list = field(default_factory=list)
    bs_values: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def bs_curve_to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", "brier_score"])
            for t, b in zip(self.bs_grid, self.bs_values):
                w.writerow([repr(float(t)), repr(float(b))])


def evaluate(times, events, scores, curves, censoring_G, td_curves=None, n_intervals=100,
             clip=G_CLIP):
    """Full metric report for one evaluation split.

    ``curves`` are used for the Brier scores; ``td_curves`` (defaulting to
    ``curves``) for the time-dependent concordance, ideally on a grid that
    contains every observed time.
    """
    conc, tied, comp = concordance_counts(times, events, scores)
    if comp == 0:
        raise ValueError("no comparable pairs")
    c_td = concordance_td(times, events, td_curves if td_curves is not None else curves)
    grid = ibs_grid(times, n_intervals)
    bs, n_clipped = brier_curve(grid, times, events, curves, censoring_G, clip)
    return MetricReport(
        c_index=(conc + 0.5 * tied) / comp,
        c_td=c_td,
        ibs=integrate_brier(grid, bs),
        n_comparable=int(comp),
        n_clipped=n_clipped,
        bs_grid=[float(v) for v in grid],
        bs_values=[float(v) for v in bs],
    )
