import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qfpu.model import ChainSpec
from qfpu.pimd import SamplerConfig, run
from qfpu.thermostat import NHCParams

settings.register_profile("qfpu", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("qfpu")

FAST_NHC = NHCParams(tau_tilde=1.0, n_respa=1)


def short_config(alpha=0.0, T=1.0, P=4, n_samples=600, seed=3, **kw):
    # explicit dt, burn-in and stride skip the tuning and pilot stages
    opts = dict(dt=0.01, n_burn=3000, stride=25, nhc=FAST_NHC)
    opts.update(kw)
    return SamplerConfig(ChainSpec(8, alpha), T, P, n_samples=n_samples, seed=seed, **opts)


@pytest.fixture(scope="session")
def harmonic_samples():
    return run(short_config())


@pytest.fixture(scope="session")
def anharmonic_samples():
    return run(short_config(alpha=0.4, seed=5))


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


# acceptance bookkeeping: criterion -> list of (part, passed, detail)
ACCEPTANCE: dict = {}


@pytest.fixture
def record():
    def rec(criterion: int, part: str, passed: bool, detail: str = "") -> bool:
        ACCEPTANCE.setdefault(criterion, []).append((part, bool(passed), detail))
        return bool(passed)
    return rec


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[c]
        ok = all(p for _, p, _ in parts)
        failed = [name for name, p, _ in parts if not p]
        tail = "" if ok else f" (failed: {', '.join(failed)})"
        tr.write_line(f"criterion {c}: {'PASS' if ok else 'FAIL'}{tail}")
        for name, p, detail in parts:
            tr.write_line(f"    [{'ok' if p else '--'}] {name}: {detail}")
