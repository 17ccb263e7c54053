import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ossync import conic
from sdp_cases import cases


def random_problem(rng, with_eq=False):
    """Feasible by construction and bounded through a ball constraint."""
    d = int(rng.integers(2, 7))
    v_star = rng.standard_normal(d)
    blocks = []
    for s in rng.integers(1, 5, size=rng.integers(1, 4)):
        F = np.array([(lambda M: M + M.T)(rng.standard_normal((s, s))) for _ in range(d)])
        P = rng.standard_normal((s, s))
        blocks.append(conic.LmiBlock(P @ P.T + 0.1 * np.eye(s) - np.tensordot(v_star, F, axes=1), F))
    ballF = np.zeros((d, d + 1, d + 1))
    for k in range(d):
        ballF[k, 0, k + 1] = ballF[k, k + 1, 0] = 1.0
    blocks.append(conic.LmiBlock(10 * np.eye(d + 1), ballF))
    E = rng.standard_normal((1, d)) if with_eq else None
    f = E @ v_star if with_eq else None
    return conic.SdpProblem(rng.standard_normal(d), blocks, E, f)


@pytest.mark.parametrize("name,problem,status,value", cases(), ids=[c[0] for c in cases()])
def test_analytic_case(name, problem, status, value):
    sol = conic.solve(problem)
    assert sol.status is status
    if status is conic.Status.OPTIMAL:
        assert sol.objective == pytest.approx(value, abs=1e-6)
        assert sol.gap <= 1e-7 * (1 + abs(sol.objective))
        assert max(conic.kkt_residuals(problem, sol)) <= 1e-7


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.booleans())
def test_kkt_and_central_path(seed, with_eq):
    problem = random_problem(np.random.default_rng(seed), with_eq)
    sol = conic.solve(problem)
    assert sol.ok
    primal, dual, comp = conic.kkt_residuals(problem, sol)
    assert primal <= 1e-7 and dual <= 1e-7 and comp <= 1e-7
    assert sol.gap <= 1e-7 * (1 + abs(sol.objective))
    mu = [h["mu"] for h in sol.history]
    assert all(b <= a for a, b in zip(mu, mu[1:]))


def test_matches_cvxpy():
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(7)
    for trial in range(8):
        problem = random_problem(rng, with_eq=bool(trial % 2))
        sol = conic.solve(problem)
        v = cp.Variable(problem.dim)
        cons = [b.F0 + sum(v[k] * b.F[k] for k in range(problem.dim)) >> 0 for b in problem.blocks]
        if problem.E is not None:
            cons.append(problem.E @ v == problem.f)
        ref = cp.Problem(cp.Minimize(problem.c @ v), cons)
        ref.solve(solver=cp.CLARABEL)
        assert sol.objective == pytest.approx(ref.value, abs=1e-6)


def test_deterministic():
    problem = random_problem(np.random.default_rng(11), True)
    a, b = conic.solve(problem), conic.solve(problem)
    assert np.array_equal(a.v, b.v) and a.objective == b.objective and a.iterations == b.iterations


def test_dump_round_trip():
    problem = random_problem(np.random.default_rng(12), True)
    text = conic.dump(problem)
    again = conic.load(text)
    assert conic.dump(again) == text
    buf = io.StringIO()
    conic.dump(problem, buf)
    assert buf.getvalue() == text
    assert np.array_equal(conic.solve(again).v, conic.solve(problem).v)


def test_margin_respected():
    # min x with x >= margin
    problem = conic.SdpProblem([1.0], [conic.LmiBlock([[0.0]], [[[1.0]]], margin=1e-3)])
    sol = conic.solve(problem)
    assert sol.objective == pytest.approx(1e-3, abs=1e-9)


def test_unbounded():
    problem = conic.SdpProblem([-1.0], [conic.LmiBlock([[0.0]], [[[1.0]]])])
    assert conic.solve(problem).status is conic.Status.UNBOUNDED


def test_feasibility_examples():
    S = np.diag([1.0, 3.0])
    ok, sol = conic.is_feasible(conic.SdpProblem([1.0], [conic.LmiBlock(-S, np.eye(2)[None])]))
    assert ok and sol.objective <= 0
    bad = conic.SdpProblem([0.0], [conic.LmiBlock([[-2.0]], [[[1.0]]]), conic.LmiBlock([[1.0]], [[[-1.0]]])])
    sol = conic.feasibility(bad)
    assert sol.status is conic.Status.INFEASIBLE
    assert sol.objective == pytest.approx(0.5, abs=1e-6)


def _trace_slack_problem(G, R):
    m, nb = G.shape
    block, cobj, total = conic.trace_slack(G, np.zeros((0, m, nb)), R)
    return conic.SdpProblem(cobj, [block]), total


@pytest.mark.parametrize("G,R,value", [(np.zeros((1, 1)), np.eye(1), 0.0),
                                       (np.array([[2.0]]), np.eye(1), 4.0)])
def test_trace_slack_examples(G, R, value):
    problem, _ = _trace_slack_problem(G, R)
    assert conic.solve(problem).objective == pytest.approx(value, abs=1e-6)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 100_000))
def test_trace_slack_random(seed):
    rng = np.random.default_rng(seed)
    m, nb = int(rng.integers(1, 4)), int(rng.integers(1, 5))
    G = rng.standard_normal((m, nb))
    M = rng.standard_normal((m, m))
    R = M @ M.T + 0.5 * np.eye(m)
    problem, total = _trace_slack_problem(G, R)
    sol = conic.solve(problem)
    assert sol.objective == pytest.approx(np.trace(G.T @ R @ G), abs=1e-6 * (1 + np.trace(G.T @ R @ G)))
    Z = conic.sym_from_vec(sol.v, nb)
    assert np.trace(Z) >= np.trace(G.T @ R @ G) - 1e-6


def test_nonsymmetric_block_rejected():
    with pytest.raises(ValueError):
        conic.LmiBlock(np.array([[0.0, 1.0], [0.0, 0.0]]), np.zeros((1, 2, 2)))
