"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def gehan_loss_grad(e, events, order):
    n = e.shape[0]
    grad = np.zeros(n)
    if n < 2:
        return 0.0, grad
    a = e[order]
    ev = events[order].astype(bool)

    weights = np.arange(n - 1, 0, -1, dtype=np.float64)
    contrib = weights * np.diff(a)
    tail = np.cumsum(contrib[::-1])[::-1]
    loss = float(np.sum(tail[ev[:-1]]))

    first = np.searchsorted(a, e, side="left")
    last = np.searchsorted(a, e, side="right")
    ev_le = np.cumsum(ev, dtype=np.int64)[last - 1]
    ge = n - first
    d = events.astype(np.int64)
    grad = ((ev_le - d) - d * (ge - 1)) / n
    return loss / n, grad


def concordance_counts(times, events, scores):
    conc = tied = comp = 0
    for i in np.flatnonzero(events):
        later = times > times[i]
        s = scores[later]
        comp += int(later.sum())
        conc += int(np.count_nonzero(scores[i] < s))
        tied += int(np.count_nonzero(scores[i] == s))
    return conc, tied, comp


def concordance_td_counts(times, events, surv, col):
    conc = tied = comp = 0
    for i in np.flatnonzero(events):
        later = times > times[i]
        other = surv[later, col[i]]
        own = surv[i, col[i]]
        comp += int(later.sum())
        conc += int(np.count_nonzero(own < other))
        tied += int(np.count_nonzero(own == other))
    return conc, tied, comp
