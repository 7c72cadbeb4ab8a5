"""Runtime self-checks behind ``gehan-aft selfcheck``.

Each check returns ``(passed, detail)``.
"""

import numpy as np

from . import kernels, rankloss
from .dataset import FeatureSchema, NUMERIC, CATEGORICAL
from .network import NetworkConfig, NetworkModel
from .nonparam import kaplan_meier, nelson_aalen


def central_difference(f, x, h=1e-5):
    """Central finite-difference gradient of scalar ``f`` at array ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + h
        fp = f()
        x[i] = orig - h
        fm = f()
        x[i] = orig
        grad[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0), floor)
    return float(np.max(np.abs(a - b), initial=0.0) / scale)


def _flatten(grads, keys):
    return np.concatenate([grads[k].ravel() for k in keys])


def network_gradient_error(seed=0, num_layers=2, nodes=8, n=16, use_batch_norm=True, h=1e-5):
    """Relative error of backprop vs central differences over all parameters.

    The error is ``max |analytic - numeric|`` divided by the largest gradient
    magnitude in the whole parameter set; per-tensor scaling is meaningless
    for dense biases feeding batch-norm, whose exact gradient is zero. The
    scalar loss is a random linear functional of the predictions, on a mixed
    numeric/categorical schema with dropout disabled.
    """
    rng = np.random.default_rng(seed)
    schema = FeatureSchema(("a", "b", "c", "k"), (NUMERIC, NUMERIC, NUMERIC, CATEGORICAL),
                           (("p", "q", "r", "s"),))
    cfg = NetworkConfig(num_layers=num_layers, nodes_per_layer=nodes, dropout_rate=0.0,
                        use_batch_norm=use_batch_norm, seed=seed)
    model = NetworkModel(cfg, schema).train()
    x_num = rng.standard_normal((n, 3))
    x_cat = rng.integers(0, 4, size=(n, 1))
    weights = rng.standard_normal(n)

    def loss():
        return float(weights @ model.forward(x_num, x_cat))

    loss()
    analytic = model.backward(weights)
    numeric = {name: central_difference(loss, p, h) for name, p in model.params.items()}
    return relative_error(_flatten(analytic, model.params), _flatten(numeric, model.params))


def check_gradients():
    err = network_gradient_error()
    e = np.random.default_rng(3).standard_normal(50)
    d = np.random.default_rng(4).random(50) < 0.7
    g = rankloss.gehan_loss_gradient(e, d)
    x = e.copy()
    fd = central_difference(lambda: rankloss.gehan_loss(x, d), x)
    loss_err = relative_error(g, fd)
    ok = err < 1e-5 and loss_err < 1e-6
    return ok, f"network rel err {err:.2e}, loss rel err {loss_err:.2e}"


def check_loss_oracle(n_batches=200, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_batches):
        n = int(rng.integers(1, 101))
        e = rng.standard_normal(n)
        if n > 2:
            e[rng.integers(0, n, size=n // 3)] = e[0]
        d = rng.random(n) < 0.6
        for impl in kernels.available_backends().values():
            order = np.argsort(e, kind="mergesort").astype(np.int64)
            fast, _ = impl.gehan_loss_grad(e, d.view(np.uint8), order)
            worst = max(worst, abs(fast - rankloss.gehan_loss_brute(e, d)))
    return worst < 1e-12, f"max |fast - brute| = {worst:.2e}"


def check_golden_values():
    km = kaplan_meier([1, 2, 3, 4], [1, 0, 1, 1])
    na = nelson_aalen([1, 2, 3, 4], [1, 0, 1, 1])
    got = [km(1), km(2), km(3), km(4), na(1), na(3), na(4)]
    want = [0.75, 0.75, 0.375, 0.0, 0.25, 0.75, 1.75]
    return got == want, f"got {got}"


def check_translation_invariance(n_batches=100, seed=1):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_batches):
        n = int(rng.integers(2, 101))
        e = rng.standard_normal(n)
        d = rng.random(n) < 0.6
        base = rankloss.gehan_loss(e, d)
        for c in (-10.0, 0.37, 5.0):
            loss, grad = rankloss.gehan_loss_and_gradient(e + c, d)
            worst = max(worst, abs(loss - base), abs(grad.sum()))
    return worst < 1e-12, f"max deviation {worst:.2e}"


CHECKS = {
    "gradients": check_gradients,
    "loss-oracle": check_loss_oracle,
    "km-na-golden": check_golden_values,
    "translation-invariance": check_translation_invariance,
}


def run_all(echo=print):
    ok = True
    for name, fn in CHECKS.items():
        passed, detail = fn()
        echo(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
        ok &= passed
    return ok
