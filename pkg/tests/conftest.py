import numpy as np
import pytest

from ossync import design, exocore, massim, oss, scenario

# outcome lines collected by the acceptance module, printed after the run
CRITERIA = {}


def record(number, title, passed, detail):
    CRITERIA[number] = (title, passed, detail)
    print(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {title} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        title, passed, detail = CRITERIA[number]
        terminalreporter.write_line(
            f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {title} ({detail})")


@pytest.fixture(scope="session")
def bench():
    return scenario.load_bundled()


@pytest.fixture(scope="session")
def exo(bench):
    return bench.exo


@pytest.fixture(scope="session")
def agents(bench):
    return {a.name: a for a in bench.agents}


@pytest.fixture(scope="session")
def xbar0(bench):
    return design.consensus_point(bench)


@pytest.fixture(scope="session")
def designs(bench):
    return design.design_network(bench)


@pytest.fixture(scope="session")
def net(bench, designs):
    return design.network(bench, designs)


@pytest.fixture(scope="session")
def record_(net):
    return massim.simulate(net)


def random_exosystem(rng, max_freq=3, with_zero=None):
    """Exosystem with up to ``max_freq`` distinct frequencies on a rational grid."""
    grid = [0.5, 1.0, 1.5, 2.0, 3.0]
    k = rng.integers(1, max_freq + 1)
    if with_zero is None:
        with_zero = bool(rng.integers(0, 2))
    picks = list(rng.choice(grid, size=k - 1 if with_zero else k, replace=False)) if k > int(with_zero) else []
    spec = ([(0.0, 1)] if with_zero else []) + [(float(w), 1) for w in picks]
    if not spec:
        spec = [(1.0, 1)]
    nbar = sum(1 if w == 0 else 2 for w, _ in spec)
    p = int(rng.integers(1, 3))
    return exocore.build_exosystem(spec, rng.standard_normal((p, nbar)))


def random_stable_agent(rng, p):
    n = int(rng.integers(p, p + 3))
    m = int(rng.integers(1, 3))
    A = rng.standard_normal((n, n))
    A -= (np.max(np.linalg.eigvals(A).real) + 0.5 + rng.random()) * np.eye(n)
    return oss.AgentModel(A, rng.standard_normal((n, m)), rng.standard_normal((p, n)))


def random_pd(rng, n, low=0.5):
    M = rng.standard_normal((n, n))
    return M @ M.T + low * np.eye(n)


def random_instance(rng):
    exo = random_exosystem(rng)
    agent = random_stable_agent(rng, exo.p)
    return agent, exo, random_pd(rng, exo.p), random_pd(rng, agent.m)
