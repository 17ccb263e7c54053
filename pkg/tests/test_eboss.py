import csv

import numpy as np
import pytest

from ossync import eboss, massim, oss
from ossync.exceptions import InfeasibleInitialPoint, NoFeasibleQ


def spec_for(bench, name, eps=None):
    a = bench.agents[bench.agent_index(name)]
    return eboss.EbossSpec(a.model, bench.exo, a.R, a.eps if eps is None else eps, name=name)


@pytest.fixture(scope="module")
def spec5(bench):
    return spec_for(bench, "agent5")


@pytest.fixture(scope="module")
def spec2(bench):
    return spec_for(bench, "agent2")


def test_op2_agent2_reported_weight(spec2):
    feasible, Pi, Gamma, objective, P, X = eboss.evaluate_op2_at_q(spec2, np.diag([463.37, 426.99]))
    assert feasible
    assert objective == pytest.approx(263.59, abs=0.01)
    assert np.all(eboss.bound_certificate(spec2, Pi, P) >= -1e-9)
    assert np.all(np.diag(X) <= spec2.eps ** 2 + 1e-9)


def test_op2_huge_eps_always_feasible(bench):
    spec = spec_for(bench, "agent1", eps=[1e3, 1e3])
    for Q in (np.eye(2), np.diag([5.0, 0.2]), np.array([[2.0, 0.5], [0.5, 1.0]])):
        assert eboss.evaluate_op2_at_q(spec, Q).feasible


def test_op2_agent5_tight_eps_infeasible(spec5):
    tight = spec5.with_eps([0.1, 0.1])
    for q in (1.0, 1e2, 1e4, 1e6):
        for r in (0.1, 1.0, 10.0):
            assert not eboss.evaluate_op2_at_q(tight, q * np.diag([1.0, r])).feasible


def _point(spec, Q, alpha=0.2):
    res = eboss.evaluate_op2_at_q(spec, Q)
    assert res.feasible
    return eboss.OperatingPoint(0, Q, res.Pi, res.Gamma, res.objective, alpha, True, 1.0)


def test_op3_step_basics(spec5):
    pt = _point(spec5, np.diag([64.0, 64.0]))
    dQ, sol = eboss.op3_step(spec5, pt)
    assert sol.ok
    # dQ = 0 is feasible for the linearised problem, so its value cannot exceed the current one
    assert sol.objective <= pt.objective + 1e-6
    assert abs(dQ[0, 1]) > 1e-6
    assert np.allclose(dQ, dQ.T)
    assert np.linalg.norm(dQ, 2) < pt.alpha * np.linalg.norm(pt.Q, 2)
    tiny, _ = eboss.op3_step(spec5, pt, alpha=1e-8)
    assert np.linalg.norm(tiny, 2) <= 1e-8 * np.linalg.norm(pt.Q, 2)


def test_path_invariants(spec5, designs, bench):
    d = designs[bench.agent_index("agent5")]
    hist = d.history
    assert hist.termination is eboss.Termination.DELTA_REL
    acc = hist.accepted()
    objs = [p.objective for p in acc]
    assert all(b < a for a, b in zip(objs, objs[1:]))
    for prev, cur in zip(hist.points, hist.points[1:]):
        assert np.linalg.eigvalsh(cur.Q).min() > 1e-10
        if cur.accepted:
            assert cur.step_norm < prev.alpha * np.linalg.norm(prev.Q, 2)
            ref = oss.solve_oss(spec5.agent, spec5.exo, cur.Q, spec5.R)
            assert np.max(np.abs(ref.Pi - cur.Pi)) <= 1e-7
            assert np.max(np.abs(ref.Gamma - cur.Gamma)) <= 1e-7
            assert cur.alpha == pytest.approx(1.5 * prev.alpha)
        else:
            assert cur.alpha == pytest.approx(0.9 * prev.alpha)
            assert np.array_equal(cur.Q, prev.Q)
    assert np.all(eboss.bound_certificate(spec5, d.Pi, d.P) >= -1e-9)
    assert massim.verify_error_bounds(spec5.agent, d.Pi, spec5.exo, spec5.eps).passed


def test_path_fixed_point(spec5, designs, bench):
    d = designs[bench.agent_index("agent5")]
    res = eboss.path_following(spec5, d.Q, k_max=60)
    assert res.history.termination is eboss.Termination.DELTA_REL
    assert np.linalg.norm(res.Q - d.Q) <= 1e-2 * np.linalg.norm(d.Q)
    assert res.objective <= d.objective


def test_path_history_csv(designs, bench, tmp_path):
    d = designs[bench.agent_index("agent5")]
    path = tmp_path / "path.csv"
    d.history.to_csv(path)
    rows = list(csv.DictReader(open(path)))
    assert list(rows[0]) == ["k", "accepted", "objective", "alpha", "step_norm", "delta_rel"]
    assert len(rows) == len(d.history.points)


def test_infeasible_initial_point(spec5):
    with pytest.raises(InfeasibleInitialPoint):
        eboss.path_following(spec5, np.eye(2))


def test_find_initial_q(bench, spec5):
    # bounds only get easier as eps grows: a weight feasible for tight bounds stays feasible
    tight = spec_for(bench, "agent1", eps=[0.1, 0.1])
    Q0 = eboss.find_initial_q(tight)
    assert eboss.evaluate_op2_at_q(tight, Q0).feasible
    assert eboss.evaluate_op2_at_q(tight.with_eps([1.0, 1.0]), Q0).feasible
    loose = eboss.find_initial_q(tight.with_eps([1.0, 1.0]))
    assert np.all(np.diag(loose) <= np.diag(Q0))
    Q5 = eboss.find_initial_q(spec5)
    assert eboss.evaluate_op2_at_q(spec5, Q5).feasible
    # one more shrink of any diagonal entry loses feasibility
    for i in range(2):
        trial = np.diag(Q5).copy()
        trial[i] *= 0.8
        assert not eboss.evaluate_op2_at_q(spec5, np.diag(trial)).feasible


def test_find_initial_q_gives_up(spec5):
    with pytest.raises(NoFeasibleQ):
        eboss.find_initial_q(spec5.with_eps([0.1, 0.1]), q_cap=1e8)


def test_epsilon_search_scale_covariance(spec5):
    l = np.array([1.7, 2.4])
    beta, Q = eboss.epsilon_search(spec5, l, beta0=1.0)
    assert beta == 1.0
    assert eboss.evaluate_op2_at_q(spec5.with_eps(l), Q).feasible
    beta2, _ = eboss.epsilon_search(spec5, 2 * l, beta0=0.5)
    assert beta2 == pytest.approx(beta / 2)
