import numpy as np
import pytest

from reference import burgers_fd_snapshots

FD_TIMES = (0.25, 0.5, 0.75, 1.0)


@pytest.fixture(scope="session")
def burgers_fd():
    """Fine finite-difference Burgers snapshots at FD_TIMES."""
    x, snaps = burgers_fd_snapshots(FD_TIMES)
    return x, dict(zip(FD_TIMES, snaps))


def fd_probes(n=20, seed=2024):
    """Seeded probe points snapped onto the finite-difference grid."""
    rng = np.random.default_rng(seed)
    ix = rng.integers(0, 4097, size=n)
    ts = rng.choice(FD_TIMES, size=n)
    return ix, ts


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one verdict line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, {})
    return lines


_ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])
