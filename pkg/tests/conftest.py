import numpy as np
import pytest

from failcast.domain import PartDataset
from failcast.mcmc import McmcConfig
from failcast.simulator import FleetConfig, simulate_fleet

# Short runs keep unit tests quick; acceptance checks use the defaults.
QUICK = McmcConfig(n_chains=2, n_iterations=1500, burn_in=750, seed=11)


@pytest.fixture(scope="session")
def quick_mcmc():
    return QUICK


@pytest.fixture(scope="session")
def fleet42():
    cfg = FleetConfig(seed=42)
    events, truth = simulate_fleet(cfg)
    return cfg, events, truth


@pytest.fixture(scope="session")
def small_fleet():
    cfg = FleetConfig(n_units=200, seed=5)
    events, truth = simulate_fleet(cfg)
    return cfg, events, truth


def make_dataset(n=40, n_prime=15, alpha=3.0, beta=60000.0, r=0.3, m=0.5, noise=500.0, seed=0):
    """Synthetic (part 1, dtc 1) dataset drawn from the network itself."""
    rng = np.random.default_rng(seed)
    f = beta * rng.weibull(alpha, n + n_prime)
    i = np.clip(f * (1 - r) + rng.normal(0, noise, f.size), 1.0, f)
    s = np.clip(i + m * (f - i) + rng.normal(0, noise, f.size), i, f)
    return PartDataset(
        part=1, dtc=1,
        failed_units=np.arange(1, n + 1), fail=f[:n], ind=i[:n], serv=s[:n],
        future_units=np.arange(n + 1, n + n_prime + 1), ind_prime=i[n:], serv_prime=s[n:],
    )


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
