import numpy as np
import pytest

from gehan_aft import kernels
from gehan_aft.dataset import apply_standardization, fit_standardization, simulate_aft

BACKENDS = kernels.available_backends()


@pytest.fixture(params=sorted(BACKENDS))
def backend(request, monkeypatch):
    """Route the kernel entry points through one backend for the test."""
    mod = BACKENDS[request.param]
    for name in ("gehan_loss_grad", "concordance_counts", "concordance_td_counts"):
        monkeypatch.setattr(kernels, name, getattr(mod, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_linear():
    """Standardized linear-AFT sample with 30% censoring."""
    raw = simulate_aft(400, [1.0, -1.0, 0.5], censor_rate=0.3, seed=3)
    return raw, apply_standardization(raw, fit_standardization(raw))


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one ``PASS``/``FAIL``/``SKIP`` line per acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(number, title, ok, detail):
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        line = f"[{status}] criterion {number}: {title} ({detail})"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
