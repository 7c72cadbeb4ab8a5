# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: sorted Gehan pass and pairwise concordance counts.

Every function here has a drop-in numpy twin in ``_kernels_py``; the two
must agree to rounding on any input. Loops are sequential so results are
bitwise reproducible for a fixed input.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def gehan_loss_grad(const double[::1] e, const unsigned char[::1] events,
                    const cnp.int64_t[::1] order):
    """Gehan loss and its subgradient given an ascending ``order`` of ``e``."""
    cdef Py_ssize_t n = e.shape[0]
    cdef Py_ssize_t p, q, s, t, k
    cdef double acc = 0.0, loss = 0.0, gap
    cdef cnp.int64_t ev_le, ge
    grad_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] grad = grad_arr
    if n < 2:
        return 0.0, grad_arr

    # G_p = sum_{q >= p} (a_q - a_p), accumulated from the top of the sort.
    for p in range(n - 2, -1, -1):
        gap = e[order[p + 1]] - e[order[p]]
        acc += (n - 1 - p) * gap
        if events[order[p]]:
            loss += acc

    # Tie groups [s, t) share their "at least" and "at most" counts.
    ev_le = 0
    s = 0
    while s < n:
        t = s + 1
        while t < n and e[order[t]] == e[order[s]]:
            t += 1
        for q in range(s, t):
            ev_le += events[order[q]]
        ge = n - s
        for q in range(s, t):
            k = order[q]
            if events[k]:
                grad[k] = <double>((ev_le - 1) - (ge - 1)) / n
            else:
                grad[k] = <double>ev_le / n
        s = t
    return loss / n, grad_arr


def concordance_counts(const double[::1] times, const unsigned char[::1] events,
                       const double[::1] scores):
    """(concordant, tied, comparable) over pairs with t_i < t_j and event i."""
    cdef Py_ssize_t n = times.shape[0]
    cdef Py_ssize_t i, j
    cdef cnp.int64_t conc = 0, tied = 0, comp = 0
    cdef double ti, si
    for i in range(n):
        if not events[i]:
            continue
        ti = times[i]
        si = scores[i]
        for j in range(n):
            if times[j] > ti:
                comp += 1
                if si < scores[j]:
                    conc += 1
                elif si == scores[j]:
                    tied += 1
    return conc, tied, comp


def concordance_td_counts(const double[::1] times, const unsigned char[::1] events,
                          const double[:, ::1] surv, const cnp.int64_t[::1] col):
    """Antolini pair counts; ``surv[j, col[i]]`` is S(t_i | x_j)."""
    cdef Py_ssize_t n = times.shape[0]
    cdef Py_ssize_t i, j, c
    cdef cnp.int64_t conc = 0, tied = 0, comp = 0
    cdef double ti, own
    for i in range(n):
        if not events[i]:
            continue
        ti = times[i]
        c = col[i]
        own = surv[i, c]
        for j in range(n):
            if times[j] > ti:
                comp += 1
                if own < surv[j, c]:
                    conc += 1
                elif own == surv[j, c]:
                    tied += 1
    return conc, tied, comp
