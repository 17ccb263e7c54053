import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, settings, strategies as st

from conftest import random_instance
from ossync import exocore, matkit, oss
from ossync.exceptions import NoSolution


def scalar_agent():
    # x' = -x + u, y = x, tracking a constant reference
    return oss.AgentModel([[-1.0]], [[1.0]], [[1.0]]), exocore.build_exosystem([(0, 1)], [[1.0]])


@pytest.mark.parametrize("q", [0.5, 1.0, 10.0, 100.0])
def test_scalar_oss(q):
    agent, exo = scalar_agent()
    sol = oss.solve_oss(agent, exo, [[q]], [[1.0]])
    assert sol.Pi[0, 0] == pytest.approx(q / (q + 1), rel=1e-12)
    assert sol.Gamma[0, 0] == pytest.approx(q / (q + 1), rel=1e-12)


def test_zero_reference():
    agent, _ = scalar_agent()
    exo = exocore.build_exosystem([(0, 1), (1, 1)], np.zeros((1, 3)))
    sol = oss.solve_oss(agent, exo, [[3.0]], [[1.0]])
    assert np.all(sol.Pi == 0) and np.all(sol.Gamma == 0)


def test_exs_regulator_equations(exo, agents):
    for name in ("agent1", "agent3"):
        a = agents[name].model
        Pi, Gamma = oss.solve_exs(a, exo)
        assert np.allclose(Pi @ exo.A, a.A @ Pi + a.B @ Gamma, atol=1e-10)
        assert np.allclose(a.C @ Pi, exo.C, atol=1e-10)


def test_exs_fails_for_underactuated(exo, agents):
    with pytest.raises(NoSolution):
        oss.solve_exs(agents["agent5"].model, exo)


def test_oss_agrees_with_op1_benchmark(exo, agents):
    spec = agents["agent4"]
    sol = oss.solve_oss(spec.model, exo, spec.Q, spec.R)
    Pi, Gamma = oss.solve_op1(spec.model, exo, spec.Q, spec.R)
    assert np.allclose(sol.Pi, Pi, atol=1e-9)
    assert np.allclose(sol.Gamma, Gamma, atol=1e-9)
    assert oss.oss_residual(spec.model, exo, sol) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_hamiltonian_spectrum_symmetric(seed):
    agent, exo, Q, R = random_instance(np.random.default_rng(seed))
    w = np.linalg.eigvals(oss.hamiltonian(agent, Q, R))
    for lam in w:
        assert np.min(np.abs(w + lam)) <= 1e-7 * max(1.0, np.max(np.abs(w)))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 100_000))
def test_perturbation_does_not_lower_cost(seed):
    rng = np.random.default_rng(seed)
    agent, exo, Q, R = random_instance(rng)
    sol = oss.solve_oss(agent, exo, Q, R)
    x0 = rng.standard_normal(exo.n)

    def cost(Pi, Gamma):
        return oss.stationary_weight(agent, exo, Pi, Gamma, Q, R).period_cost(x0, exo.period)

    best = cost(sol.Pi, sol.Gamma)
    # feasible perturbations keep the constraint: Pi' = Pi + S(dG) with S solving S Abar = A S + B dG
    dG = 1e-2 * rng.standard_normal(sol.Gamma.shape)
    S = matkit.solve_sylvester(agent.A, exo.A, -agent.B @ dG)
    assert cost(sol.Pi + S, sol.Gamma + dG) >= best - 1e-9 * (1 + best)


def test_exs_limit_benchmark(exo, agents):
    a = agents["agent1"].model
    errs = [np.max(np.abs(a.C @ oss.solve_oss(a, exo, q * np.eye(2), np.eye(2)).Pi - exo.C))
            for q in (1, 10, 1e2, 1e3, 1e4)]
    assert all(b < a_ for a_, b in zip(errs, errs[1:]))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 100_000))
def test_period_cost_matches_quadrature(seed):
    rng = np.random.default_rng(seed)
    agent, exo, Q, R = random_instance(rng)
    sol = oss.solve_oss(agent, exo, Q, R)
    W = oss.stationary_weight(agent, exo, sol.Pi, sol.Gamma, Q, R)
    x0 = rng.standard_normal(exo.n)
    M = W.G.T @ W.G
    val, _ = scipy.integrate.quad(lambda t: (lambda x: x @ M @ x)(exocore.flow(exo, x0, t)),
                                  0, exo.period, limit=400, epsabs=0, epsrel=1e-12)
    assert W.period_cost(x0, exo.period) == pytest.approx(val, rel=1e-8)


def test_energy_scalar():
    # Gamma = 1, R = 1, constant state 1 over the default 1 s period
    exo = exocore.build_exosystem([(0, 1)], [[1.0]])
    assert oss.stationary_input_energy([[1.0]], [[1.0]], exo, [1.0]) == pytest.approx(0.5)
    assert oss.stationary_input_energy(np.zeros((1, 1)), [[1.0]], exo, [1.0]) == 0.0


def test_stabilizer_scalar():
    agent = oss.AgentModel([[0.0]], [[1.0]], [[1.0]])
    g = oss.design_stabilizer(agent)
    assert g.K.item() == pytest.approx(1.0)
    assert matkit.is_hurwitz(g.A_cl)


def test_period_average_harmonic():
    exo = exocore.build_exosystem([(1, 1)], [[1.0, 0.0]])
    M = np.array([[2.0, 0.3], [0.3, 0.0]])
    # average of Phi^T M Phi over a full turn is trace(M)/2 * I
    assert np.allclose(oss.period_average(M, exo), np.eye(2))
