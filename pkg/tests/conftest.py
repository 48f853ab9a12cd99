import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def random_hermitian(rng, d, scale=1.0):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * 0.5 * (a + a.conj().T)


def random_unitary(rng, d):
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- suite-wide efficiency watch and acceptance summary ------------------------------

ETA_CEILING = 1 + 1e-6
ETA_SEEN = {"max": 0.0, "count": 0, "worst": None}
AC_LINES = {}


def _watch_eta():
    """Record the largest eta of every Trajectory built anywhere in the run.

    Patched at conftest import, before the test modules import the function.
    """
    from qsl_forge import propagate as prop

    original = prop.trajectory_from_hamiltonians

    def watched(hs, t_f=1.0, target=None):
        tr = original(hs, t_f, target)
        ETA_SEEN["count"] += 1
        top = float(np.max(tr.eta)) if tr.eta.size else 0.0
        if top > ETA_SEEN["max"]:
            ETA_SEEN["max"] = top
        return tr

    watched.__wrapped__ = original
    prop.trajectory_from_hamiltonians = watched


_watch_eta()


def record_ac(key, passed, detail):
    line = f"{key} {'PASS' if passed else 'FAIL'}  {detail}"
    AC_LINES[key] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ETA_SEEN["count"]:
        ok = ETA_SEEN["max"] <= ETA_CEILING
        AC_LINES["AC-2"] = (f"AC-2 {'PASS' if ok else 'FAIL'}  max eta {ETA_SEEN['max']:.9f} over "
                            f"{ETA_SEEN['count']} trajectories built in this run (ceiling 1 + 1e-6)")
    lines = [AC_LINES[k] for k in sorted(AC_LINES, key=lambda k: int(k.split("-")[1])) if AC_LINES[k]]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


def pytest_sessionfinish(session, exitstatus):
    if ETA_SEEN["max"] > ETA_CEILING and exitstatus == 0:
        session.exitstatus = 1
