"""Backend selection for the hot loops.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``GEHAN_AFT_PURE`` is set to a non-empty value other
than ``0``, the numpy implementations are used. ``BACKEND`` names the choice.
"""

import os

from . import _kernels_py

_force_pure = os.environ.get("GEHAN_AFT_PURE", "") not in ("", "0")

try:
    if _force_pure:
        raise ImportError("pure backend requested")
    from . import _kernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _kernels_py
    BACKEND = "numpy"

gehan_loss_grad = _impl.gehan_loss_grad
concordance_counts = _impl.concordance_counts
concordance_td_counts = _impl.concordance_td_counts


def available_backends():
    """Map backend name to module for every backend importable here."""
    out = {"numpy": _kernels_py}
    try:
        from . import _kernels

        out["cython"] = _kernels
    except ImportError:
        pass
    return out
