"""Closed-loop simulation of the heterogeneous network and its checks.

Every agent runs a local copy of the exosystem driven by the diffusive
coupling ``ubar_i = -Kbar sum_j L_ij xbar_j`` and tracks it with
``u_i = -K_i (x_i - Pi_i xbar_i) + Gamma_i xbar_i``.  The whole network is
one linear time-invariant system, integrated with the classic fourth-order
Runge-Kutta scheme on a uniform grid.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate

from . import exocore, netgraph
from .exceptions import NonFiniteState, WindowOutOfRange

DEFAULT_SETTLE = 6.0


@dataclass
class NetworkScenario:
    graph: netgraph.DiGraph
    exo: exocore.Exosystem
    agents: list
    designs: list
    x0: list
    xbar0: list
    sigma: float
    Bbar: np.ndarray = None
    h: float = 1e-3
    t_end: float = 40.0
    names: list = field(default_factory=list)
    sync: netgraph.SyncGain = None

    def __post_init__(self):
        N = self.graph.n
        if not (len(self.agents) == len(self.designs) == len(self.x0) == len(self.xbar0) == N):
            raise ValueError(f"need {N} agents, designs and initial states")
        if self.Bbar is None:
            self.Bbar = np.eye(self.exo.n)
        self.x0 = [np.asarray(x, dtype=float) for x in self.x0]
        self.xbar0 = [np.asarray(x, dtype=float) for x in self.xbar0]
        if not self.names:
            self.names = [f"agent{i + 1}" for i in range(N)]

    @property
    def laplacian(self):
        return netgraph.laplacian(self.graph)

    def sync_gain(self):
        if self.sync is None:
            self.sync = netgraph.sync_gain(self.exo.A, self.Bbar, self.sigma, self.laplacian)
        return self.sync


@dataclass
class SimulationRecord:
    t: np.ndarray
    x: list
    y: list
    u: list
    xbar: list
    consensus: np.ndarray
    sync_error: list
    names: list

    @property
    def h(self):
        return float(self.t[1] - self.t[0])

    def exo_disagreement(self):
        """``max_{i,j} ||xbar_i(t) - xbar_j(t)||`` over time."""
        stack = np.stack(self.xbar)
        diff = stack[:, None] - stack[None, :]
        return np.linalg.norm(diff, axis=-1).max(axis=(0, 1))

    def to_csv(self, path, every=1):
        """One row per stored time step: t, consensus, then per agent y, u, sync error, xbar."""
        header = ["t"] + [f"xbar_{k}" for k in range(self.consensus.shape[1])]
        cols = [self.t[:, None], self.consensus]
        for name, y, u, e, xb in zip(self.names, self.y, self.u, self.sync_error, self.xbar):
            header += [f"{name}_y{j}" for j in range(y.shape[1])]
            header += [f"{name}_u{j}" for j in range(u.shape[1])]
            header += [f"{name}_e{j}" for j in range(e.shape[1])]
            header += [f"{name}_xbar{k}" for k in range(xb.shape[1])]
            cols += [y, u, e, xb]
        data = np.hstack(cols)[::every]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in data:
                w.writerow([repr(float(v)) for v in row])


def rk4(f, x0, h, steps, store_every=1, check_every=100):
    """Classic Runge-Kutta integration of ``x' = f(x)``; returns stored states."""
    x = np.asarray(x0, dtype=float).copy()
    out = [x.copy()]
    for k in range(1, steps + 1):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if k % check_every == 0 and not np.all(np.isfinite(x)):
            raise NonFiniteState(f"state diverged at step {k}")
        if k % store_every == 0:
            out.append(x.copy())
    if not np.all(np.isfinite(x)):
        raise NonFiniteState("state diverged")
    return np.array(out)


def network_matrix(scenario):
    """Closed-loop generator of the stacked state ``[x_1..x_N, xbar_1..xbar_N]``."""
    N = scenario.graph.n
    nb = scenario.exo.n
    Kbar = scenario.sync_gain().K
    L = scenario.laplacian
    sizes = [a.n for a in scenario.agents]
    nx = sum(sizes)
    M = np.zeros((nx + N * nb, nx + N * nb))
    M[nx:, nx:] = np.kron(np.eye(N), scenario.exo.A) - np.kron(L, scenario.Bbar @ Kbar)
    pos = 0
    for i, (agent, d) in enumerate(zip(scenario.agents, scenario.designs)):
        s = slice(pos, pos + agent.n)
        M[s, s] = agent.A - agent.B @ d.K
        M[s, nx + i * nb:nx + (i + 1) * nb] = agent.B @ (d.K @ d.Pi + d.Gamma)
        pos += agent.n
    return M


def consensus_weights(scenario):
    return netgraph.consensus_weights(scenario.laplacian)


def consensus_initial(scenario):
    """Predicted synchronised initial state ``sum_i w_i xbar_i(0)``."""
    w = consensus_weights(scenario)
    return np.tensordot(w, np.array(scenario.xbar0), axes=1)


def consensus_trajectory(scenario, t):
    """Synchronisation trajectory ``exp(Abar t) sum_i w_i xbar_i(0)``."""
    return exocore.flow(scenario.exo, consensus_initial(scenario), t)


def simulate(scenario, store_every=1):
    M = network_matrix(scenario)
    N = scenario.graph.n
    nb = scenario.exo.n
    z0 = np.concatenate(list(scenario.x0) + list(scenario.xbar0))
    steps = int(round(scenario.t_end / scenario.h))
    Z = rk4(lambda z: M @ z, z0, scenario.h, steps, store_every)
    t = scenario.h * store_every * np.arange(Z.shape[0])
    nx = sum(a.n for a in scenario.agents)
    consensus = consensus_trajectory(scenario, t)
    ybar = consensus @ scenario.exo.C.T
    xs, ys, us, xbars, errs = [], [], [], [], []
    pos = 0
    for i, (agent, d) in enumerate(zip(scenario.agents, scenario.designs)):
        x = Z[:, pos:pos + agent.n]
        xb = Z[:, nx + i * nb:nx + (i + 1) * nb]
        u = -(x - xb @ d.Pi.T) @ d.K.T + xb @ d.Gamma.T
        y = x @ agent.C.T
        xs.append(x)
        xbars.append(xb)
        us.append(u)
        ys.append(y)
        errs.append(y - ybar)
        pos += agent.n
    return SimulationRecord(t=t, x=xs, y=ys, u=us, xbar=xbars, consensus=consensus,
                            sync_error=errs, names=list(scenario.names))


@dataclass
class BoundReport:
    sampled: np.ndarray
    exact: np.ndarray
    eps: np.ndarray
    worst: list
    tol: float = 1e-6

    @property
    def violation(self):
        return np.maximum(self.sampled - self.eps, 0.0)

    @property
    def passed(self):
        return bool(np.all(self.sampled <= self.eps + self.tol))


def verify_error_bounds(agent, Pi, exo, eps, samples=64, n_time=2000, tol=1e-6):
    """Largest stationary output error over boundary samples and one period.

    The stationary error ``(C Pi - Cbar) xbar(t)`` is linear in the initial
    exosystem state, so its maximum over the admissible set is attained on
    the boundary.  ``exact`` is the closed-form supremum over the whole set
    (the set is invariant under the exosystem flow, so time adds nothing).
    """
    E = agent.C @ Pi - exo.C
    eps = np.asarray(eps, dtype=float)
    x0s = exocore.sample_boundary(exo, samples)
    t = np.linspace(0.0, exo.period, n_time)
    best = np.zeros(agent.p)
    worst = [None] * agent.p
    for x0 in x0s:
        traj = exocore.flow(exo, x0, t)
        err = np.abs(traj @ E.T)
        idx = err.argmax(axis=0)
        for j in range(agent.p):
            if err[idx[j], j] > best[j] or worst[j] is None:
                best[j] = err[idx[j], j]
                worst[j] = (x0.copy(), float(t[idx[j]]))
    exact = np.array([exocore.support(exo, E[j]) for j in range(agent.p)])
    return BoundReport(sampled=best, exact=exact, eps=eps, worst=worst, tol=tol)


def _window(record, window, period):
    if window is None:
        window = (DEFAULT_SETTLE, DEFAULT_SETTLE + period)
    t0, t1 = window
    h = record.h
    if t0 < record.t[0] - 1e-12 or t1 > record.t[-1] + 1e-9 * max(1.0, t1) or t1 <= t0:
        raise WindowOutOfRange(f"window {window} not inside [{record.t[0]}, {record.t[-1]}]")
    i0 = int(round((t0 - record.t[0]) / h))
    i1 = int(round((t1 - record.t[0]) / h))
    return i0, i1


def measure_energy(record, Gamma, R, period, window=None, agent=None):
    """Trapezoidal ``0.5 * int xbar^T Gamma^T R Gamma xbar dt`` over a window.

    The window defaults to one period after the 6 s transient.  The
    exosystem state is the consensus trajectory, or the simulated local copy
    of agent ``agent`` when given.  Window ends are snapped to the grid.
    """
    i0, i1 = _window(record, window, period)
    xb = record.consensus if agent is None else record.xbar[agent]
    xb = xb[i0:i1 + 1]
    Gamma = np.atleast_2d(Gamma)
    W = Gamma.T @ np.atleast_2d(R) @ Gamma
    integrand = 0.5 * np.einsum("ti,ij,tj->t", xb, W, xb)
    return float(scipy.integrate.trapezoid(integrand, record.t[i0:i1 + 1]))


def transition_check(record, designs):
    """``||x_i(t_end) - Pi_i xbar_i(t_end)||`` for every agent."""
    return np.array([float(np.linalg.norm(x[-1] - d.Pi @ xb[-1]))
                     for x, xb, d in zip(record.x, record.xbar, designs)])
