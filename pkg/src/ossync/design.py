"""Per-agent synthesis dispatch and network assembly."""

from dataclasses import dataclass

import numpy as np

from . import eboss, massim, netgraph, oss


@dataclass
class AgentDesign:
    name: str
    strategy: str
    Pi: np.ndarray
    Gamma: np.ndarray
    K: np.ndarray
    R: np.ndarray
    objective: float
    energy: float
    Q: np.ndarray = None
    Q0: np.ndarray = None
    eps: np.ndarray = None
    P: np.ndarray = None
    X: np.ndarray = None
    history: eboss.PathHistory = None

    def to_dict(self):
        out = {"name": self.name, "strategy": self.strategy, "objective": self.objective,
               "energy": self.energy}
        for key in ("Pi", "Gamma", "K", "R", "Q", "Q0", "eps", "P", "X"):
            val = getattr(self, key)
            if val is not None:
                out[key] = np.asarray(val).tolist()
        return out

    @classmethod
    def from_dict(cls, d):
        kw = dict(d)
        for key in ("Pi", "Gamma", "K", "R", "Q", "Q0", "eps", "P", "X"):
            if key in kw:
                kw[key] = np.array(kw[key], dtype=float)
        return cls(**kw)


def design_agent(spec, exo, xbar0, path_overrides=None):
    """Synthesise one agent according to its strategy tag.

    EXS solves the regulator equations, OSS the optimal stationary equation
    at the given Q, EBOSS runs :func:`eboss.find_initial_q` (unless a start
    is given) followed by :func:`eboss.path_following`.
    """
    agent = spec.model
    K = oss.design_stabilizer(agent, spec.Qx, spec.Ru).K
    extra = {}
    if spec.strategy == "EXS":
        Pi, Gamma = oss.solve_exs(agent, exo)
    elif spec.strategy == "OSS":
        sol = oss.solve_oss(agent, exo, spec.Q, spec.R)
        Pi, Gamma = sol.Pi, sol.Gamma
        extra["Q"] = spec.Q
    elif spec.strategy == "EBOSS":
        es = eboss.EbossSpec(agent, exo, spec.R, spec.eps, name=spec.name)
        Q0 = spec.Q0 if spec.Q0 is not None else eboss.find_initial_q(es)
        opts = dict(spec.path)
        opts.update(path_overrides or {})
        res = eboss.path_following(es, Q0, **opts)
        Pi, Gamma = res.Pi, res.Gamma
        extra.update(Q=res.Q, Q0=Q0, eps=spec.eps, P=res.P, X=res.X, history=res.history)
    else:
        raise ValueError(f"unknown strategy {spec.strategy!r}")
    objective = float(np.trace(Gamma.T @ spec.R @ Gamma))
    energy = oss.stationary_input_energy(Gamma, spec.R, exo, xbar0)
    return AgentDesign(name=spec.name, strategy=spec.strategy, Pi=Pi, Gamma=Gamma, K=K, R=spec.R,
                       objective=objective, energy=energy, **extra)


def consensus_point(scen):
    w = netgraph.consensus_weights(netgraph.laplacian(scen.graph))
    return np.tensordot(w, np.array(scen.initial_exostates()), axes=1)


def design_network(scen, path_overrides=None):
    xbar0 = consensus_point(scen)
    return [design_agent(a, scen.exo, xbar0, path_overrides) for a in scen.agents]


def network(scen, designs):
    return massim.NetworkScenario(graph=scen.graph, exo=scen.exo,
                                  agents=[a.model for a in scen.agents], designs=designs,
                                  x0=scen.initial_states(), xbar0=scen.initial_exostates(),
                                  sigma=scen.sigma, Bbar=scen.Bbar, h=scen.h, t_end=scen.t_end,
                                  names=[a.name for a in scen.agents])
