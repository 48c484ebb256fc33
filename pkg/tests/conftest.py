import math
import sys
import warnings

import numpy as np
import pytest

warnings.filterwarnings("ignore", message=".*TBB.*")

from mesokin.phase import Ensemble  # noqa: E402


def two_particle(t=0.0):
    """p1 at the origin moving up, p2 at (1, 0) at rest; unit weights."""
    ens = Ensemble.from_arrays([[0.0, 0.0], [1.0, 0.0]], [[0.0, 1.0], [0.0, 0.0]], [1.0, 1.0])
    return ens.at_time(t)


def random_ensemble(seed, N=50, n=2, scale=1.0, weights="uniform"):
    rng = np.random.default_rng(seed)
    x = scale * rng.standard_normal((N, n))
    xi = rng.standard_normal((N, n))
    if weights == "uniform":
        w = np.full(N, 1.0 / N)
    else:
        w = rng.uniform(0.1, 1.0, N)
    return Ensemble.from_arrays(x, xi, w)


@pytest.fixture
def pair_example():
    return two_particle()


def brute_pair(ens, fn):
    """Ordered-pair double loop in pure Python floats."""
    x, xi, w = ens.x, ens.xi, ens.w
    total = []
    for i in range(ens.size):
        for j in range(ens.size):
            total.append(w[i] * w[j] * fn(x[i] - x[j], xi[i] - xi[j], i == j))
    return math.fsum(total)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
