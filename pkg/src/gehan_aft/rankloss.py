r"""Gehan rank loss for semiparametric AFT regression.

With residuals :math:`e_i = z_i - g(x_i)` on the standardized log-time scale
and event indicators :math:`\delta_i`, the loss is

.. math::

    L(e) = \frac{1}{N} \sum_{i=1}^N \sum_{j=1}^N
           \delta_i (e_j - e_i) I\{e_j \ge e_i\},

i.e. for every observed event, the total amount by which residuals still at
risk exceed it. Its gradient with respect to a linear output layer is
Gehan's rank estimating function (:func:`gehan_estimating_function`).

The loss is convex and piecewise linear in ``e``, invariant to adding a
constant to every residual, and positively homogeneous of degree one.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels

def _check(residuals, events):
    e = np.ascontiguousarray(residuals, dtype=np.float64).ravel()
    d = np.ascontiguousarray(events, dtype=bool).ravel()
    if e.shape != d.shape:
        raise ValueError(f"residuals ({e.size}) and events ({d.size}) differ in length")
    if e.size == 0:
        raise ValueError("empty batch")
    if not np.all(np.isfinite(e)):
        raise ValueError("residuals must be finite")
    return e, d


def gehan_loss_and_gradient(residuals, events):
    """Loss and subgradient ``dL/de`` in one O(N log N) pass.

    Ties use the inclusive indicator for both loss and gradient.
    """
    e, d = _check(residuals, events)
    order = np.argsort(e, kind="mergesort").astype(np.int64)
    loss, grad = kernels.gehan_loss_grad(e, d.view(np.uint8), order)
    return float(loss), np.asarray(grad)


def gehan_loss(residuals, events):
    """Gehan loss normalized by the batch size."""
    return gehan_loss_and_gradient(residuals, events)[0]


def gehan_loss_gradient(residuals, events):
    """Subgradient of :func:`gehan_loss` with respect to the residuals.

    ``dL/de_k = (1/N) [sum_{i != k} d_i I(e_i <= e_k) - d_k #{j != k : e_j >= e_k}]``.
    Entries sum to zero.
    """
    return gehan_loss_and_gradient(residuals, events)[1]


def gehan_loss_brute(residuals, events):
    """O(N^2) reference evaluation of the double sum, one pair at a time."""
    e, d = _check(residuals, events)
    n = e.size
    total = 0.0
    for i in range(n):
        if not d[i]:
            continue
        for j in range(n):
            if e[j] >= e[i]:
                total += e[j] - e[i]
    return total / n


def gehan_gradient_brute(residuals, events):
    """O(N^2) reference subgradient, literal transcription of the formula."""
    e, d = _check(residuals, events)
    n = e.size
    grad = np.zeros(n)
    for k in range(n):
        acc = 0
        for j in range(n):
            if j == k:
                continue
            if d[j] and e[j] <= e[k]:
                acc += 1
            if d[k] and e[j] >= e[k]:
                acc -= 1
        grad[k] = acc / n
    return grad


def gehan_estimating_function(hidden, residuals, events):
    """Gehan's rank statistic ``U = (1/N) sum_ij d_i (W_i - W_j) I(e_i <= e_j)``.

    ``hidden`` is the (N, K) matrix of last-hidden-layer activations. At a
    minimizer of the loss over a linear output layer, ``U`` is close to zero.
    """
    e, d = _check(residuals, events)
    w = np.asarray(hidden, dtype=np.float64)
    if w.ndim == 1:
        w = w[:, None]
    if w.shape[0] != e.size:
        raise ValueError(f"hidden has {w.shape[0]} rows, residuals have {e.size}")
    n = e.size
    order = np.argsort(e, kind="mergesort")
    a = e[order]
    ws = w[order]
    # Suffix sums of W over j with e_j >= e_i (ties included).
    suffix = np.vstack([np.cumsum(ws[::-1], axis=0)[::-1], np.zeros((1, w.shape[1]))])
    first = np.searchsorted(a, e, side="left")
    count = (n - first)[:, None]
    terms = count * w - suffix[first]
    return terms[d].sum(axis=0) / n


@dataclass
class LinearGehanResult:
    """Outcome of :func:`fit_linear_gehan`."""

    coef: np.ndarray
    coef_original: np.ndarray
    loss: float
    n_iter: int
    converged: bool


def fit_linear_gehan(dataset, max_iters=5000, tolerance=1e-5, step0=0.25, patience=20):
    """Minimize the Gehan loss over ``g(x) = beta . x`` by subgradient descent.

    Steps are normalized subgradient moves whose length halves whenever the
    best loss has not improved for ``patience`` iterations. The best iterate
    is returned. Converged means the step length fell below ``tolerance``
    before ``max_iters``; otherwise a warning is issued.

    Parameters
    ----------
    dataset : SurvivalDataset
        Standardized, numeric features only.

    Returns
    -------
    LinearGehanResult
        ``coef`` in standardized units; ``coef_original`` rescaled to
        log-time per original feature unit.
    """
    if not dataset.is_standardized:
        raise ValueError("fit_linear_gehan needs a standardized dataset")
    if dataset.x_cat.shape[1]:
        raise ValueError("linear Gehan baseline takes numeric features only")
    x = dataset.x_num
    if x.shape[1] == 0:
        raise ValueError("no numeric features")
    z = dataset.target
    d = dataset.event

    beta = np.zeros(x.shape[1])
    best_beta = beta.copy()
    best_loss = np.inf
    step = step0
    stall = 0
    converged = False
    n_iter = 0
    while n_iter < max_iters:
        loss, g_e = gehan_loss_and_gradient(z - x @ beta, d)
        n_iter += 1
        if loss < best_loss:
            best_loss, best_beta = loss, beta.copy()
            stall = 0
        else:
            stall += 1
            if stall >= patience:
                step *= 0.5
                stall = 0
                beta = best_beta.copy()
                if step < tolerance:
                    converged = True
                    break
                continue
        g_beta = -(x.T @ g_e)
        norm = np.linalg.norm(g_beta)
        if norm == 0.0:
            converged = True
            break
        beta = beta - step * g_beta / norm
    if not converged:
        warnings.warn(
            f"fit_linear_gehan stopped after {max_iters} iterations without reaching "
            f"step tolerance {tolerance}; returning best iterate",
            RuntimeWarning,
            stacklevel=2,
        )
    params = dataset.params
    coef_original = best_beta * params.sigma / params.feature_stds
    return LinearGehanResult(best_beta, coef_original, float(best_loss), n_iter, converged)
