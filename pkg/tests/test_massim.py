import numpy as np
import pytest

from ossync import design, exocore, massim, netgraph, oss
from ossync.exceptions import NonFiniteState, WindowOutOfRange


def single_agent(agent, exo, d, x0, xbar0, t_end=None):
    return massim.NetworkScenario(graph=netgraph.DiGraph(1), exo=exo, agents=[agent], designs=[d],
                                  x0=[x0], xbar0=[xbar0], sigma=1.0,
                                  t_end=exo.period if t_end is None else t_end)


def test_stationary_manifold(bench, designs):
    i = bench.agent_index("agent4")
    agent = bench.agents[i].model
    d = designs[i]
    xb0 = bench.exo.x_boundary
    scen = single_agent(agent, bench.exo, d, d.Pi @ xb0, xb0)
    # a single vertex has no neighbours, so the exosystem runs free
    scen.sync = netgraph.SyncGain(np.zeros((bench.exo.n, bench.exo.n)), 1.0, None)
    rec = massim.simulate(scen)
    err = max(np.max(np.abs(x - xb @ d.Pi.T)) for x, xb in zip(rec.x, rec.xbar))
    assert err <= 1e-6
    assert massim.transition_check(rec, [d])[0] <= 1e-6


def test_zero_coupling_never_synchronises(net):
    scen = massim.NetworkScenario(graph=net.graph, exo=net.exo, agents=net.agents, designs=net.designs,
                                  x0=net.x0, xbar0=net.xbar0, sigma=net.sigma, t_end=10.0,
                                  sync=netgraph.SyncGain(np.zeros((6, 6)), 1.0, None))
    rec = massim.simulate(scen, store_every=100)
    assert rec.exo_disagreement().min() > 0.1


def test_rk4_order():
    M = np.array([[0.0, 1.0], [-4.0, -0.3]])
    x0 = np.array([1.0, 0.0])
    exact = exocore.matkit.expm_flow(M, 2.0) @ x0
    errs = [np.linalg.norm(massim.rk4(lambda x: M @ x, x0, h, int(round(2.0 / h)))[-1] - exact)
            for h in (0.02, 0.01)]
    assert errs[0] / errs[1] == pytest.approx(16, rel=0.1)


def test_rk4_divergence_flagged():
    # an unstable linear loop overflows well before the horizon
    with pytest.raises(NonFiniteState), np.errstate(over="ignore", invalid="ignore"):
        massim.rk4(lambda x: 50.0 * x, np.array([1.0]), 0.1, 200, check_every=10)


def test_consensus_chain():
    g = netgraph.DiGraph(2, ((0, 1),))
    L = netgraph.laplacian(g)
    assert np.allclose(netgraph.consensus_weights(L), [1.0, 0.0])


def test_consensus_identical_starts(bench, designs):
    v = np.array([0.2, -0.4, 0.1, 0.5, 0.3, 0.0])
    scen = design.network(bench, designs)
    scen.xbar0 = [v.copy() for _ in scen.xbar0]
    assert np.allclose(massim.consensus_initial(scen), v)


def test_synchronisation_and_transition(net, record_):
    assert record_.exo_disagreement()[-1] < 1e-6
    assert np.all(massim.transition_check(record_, net.designs) <= 1e-4)
    assert all(np.all(np.isfinite(x)) for x in record_.x)
    assert np.allclose(np.diff(record_.t), record_.h)


def test_lyapunov_invariance_along_consensus(bench, designs, record_):
    d = designs[bench.agent_index("agent5")]
    v = np.einsum("ti,ij,tj->t", record_.consensus, d.P, record_.consensus)
    assert np.ptp(v) <= 1e-6


def test_bounds_exs_and_linearity(bench, designs):
    exo = bench.exo
    a1 = bench.agents[bench.agent_index("agent1")]
    rep = massim.verify_error_bounds(a1.model, designs[bench.agent_index("agent1")].Pi, exo, [1e-6, 1e-6])
    assert np.all(rep.sampled <= 1e-9) and rep.passed
    i = bench.agent_index("agent2")
    spec, d = bench.agents[i], designs[i]
    base = massim.verify_error_bounds(spec.model, d.Pi, exo, spec.eps)
    assert base.passed
    assert np.all(base.sampled <= base.exact + 1e-12)
    doubled = massim.verify_error_bounds(spec.model, 2 * d.Pi, exo, spec.eps)
    E1, E2 = spec.model.C @ d.Pi - exo.C, spec.model.C @ (2 * d.Pi) - exo.C
    assert np.allclose(doubled.exact, [exocore.support(exo, e) for e in E2])
    assert doubled.exact.max() > base.exact.max()
    assert np.allclose(base.exact, [exocore.support(exo, e) for e in E1])


def test_energy_measurement(bench, designs, record_):
    T = bench.exo.period
    for i, d in enumerate(designs):
        measured = massim.measure_energy(record_, d.Gamma, d.R, T)
        assert measured == pytest.approx(d.energy, rel=5e-3)
    assert massim.measure_energy(record_, np.zeros_like(designs[0].Gamma), designs[0].R, T) == 0.0
    with pytest.raises(WindowOutOfRange):
        massim.measure_energy(record_, designs[0].Gamma, designs[0].R, T, window=(35.0, 35.0 + T))


def test_energy_quadrature_random_gamma(bench, record_):
    rng = np.random.default_rng(5)
    G = rng.standard_normal((2, 6))
    R = np.eye(2)
    closed = oss.stationary_input_energy(G, R, bench.exo, record_.consensus[0])
    assert massim.measure_energy(record_, G, R, bench.exo.period) == pytest.approx(closed, rel=1e-4)


def test_deterministic(net):
    short = massim.NetworkScenario(graph=net.graph, exo=net.exo, agents=net.agents, designs=net.designs,
                                   x0=net.x0, xbar0=net.xbar0, sigma=net.sigma, t_end=2.0)
    a, b = massim.simulate(short), massim.simulate(short)
    assert all(np.array_equal(x, y) for x, y in zip(a.x, b.x))
