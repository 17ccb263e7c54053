"""Scenario files: strict JSON description of a network experiment.

Edges and agent references in the file are 1-based; everything in memory is
0-based.  Unknown keys anywhere raise :class:`ScenarioError`.
"""

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import exocore, netgraph, oss
from .exceptions import OssyncError, ScenarioError

STRATEGIES = ("EXS", "OSS", "EBOSS")

_TOP = {"name", "graph", "exosystem", "sigma", "exo_input", "agents", "simulation", "expectations"}
_GRAPH = {"N", "edges"}
_EXO = {"frequencies", "multiplicities", "output", "amplitudes"}
_AGENT = {"name", "A", "B", "C", "strategy", "Q", "R", "eps", "Q0", "path", "stabilizer", "x0"}
_PATH = {"delta_rel_min", "k_max", "gamma", "shrink", "alpha_max", "alpha0", "second_order"}
_STAB = {"Qx", "Ru"}
_SIM = {"h", "t_end", "t_settle", "xbar0", "exo_offsets"}
_EXPECT = {"energies", "energy_rel_tol", "ordering"}


@dataclass
class AgentSpec:
    name: str
    model: oss.AgentModel
    strategy: str
    R: np.ndarray
    Q: np.ndarray = None
    eps: np.ndarray = None
    Q0: np.ndarray = None
    path: dict = field(default_factory=dict)
    Qx: np.ndarray = None
    Ru: np.ndarray = None
    x0: np.ndarray = None


@dataclass
class Scenario:
    name: str
    graph: netgraph.DiGraph
    exo: exocore.Exosystem
    sigma: float
    Bbar: np.ndarray
    agents: list
    xbar0: np.ndarray
    exo_offsets: list
    h: float = 1e-3
    t_end: float = 40.0
    t_settle: float = 6.0
    expectations: dict = field(default_factory=dict)

    def agent_index(self, name):
        for i, a in enumerate(self.agents):
            if a.name == name:
                return i
        raise KeyError(name)

    def initial_exostates(self):
        return [self.xbar0 + d for d in self.exo_offsets]

    def initial_states(self):
        return [np.zeros(a.model.n) if a.x0 is None else a.x0 for a in self.agents]


def _keys(obj, allowed, where, required=()):
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where}: expected an object")
    extra = set(obj) - set(allowed)
    if extra:
        raise ScenarioError(f"{where}: unknown key(s) {sorted(extra)}")
    missing = [k for k in required if k not in obj]
    if missing:
        raise ScenarioError(f"{where}: missing key(s) {missing}")


def _matrix(val, where, rows=None, cols=None):
    if not isinstance(val, list) or not val or not all(isinstance(r, list) for r in val):
        raise ScenarioError(f"{where}: expected a non-empty list of rows")
    width = {len(r) for r in val}
    if len(width) != 1 or 0 in width:
        raise ScenarioError(f"{where}: rows have different lengths")
    try:
        M = np.array(val, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: non-numeric entry") from exc
    if not np.all(np.isfinite(M)):
        raise ScenarioError(f"{where}: non-finite entry")
    if rows is not None and M.shape[0] != rows:
        raise ScenarioError(f"{where}: expected {rows} rows, got {M.shape[0]}")
    if cols is not None and M.shape[1] != cols:
        raise ScenarioError(f"{where}: expected {cols} columns, got {M.shape[1]}")
    return M


def _vector(val, where, size=None):
    if not isinstance(val, list) or not all(isinstance(x, (int, float)) for x in val):
        raise ScenarioError(f"{where}: expected a list of numbers")
    v = np.array(val, dtype=float)
    if size is not None and v.size != size:
        raise ScenarioError(f"{where}: expected {size} entries, got {v.size}")
    return v


def _number(val, where, positive=True):
    if not isinstance(val, (int, float)) or isinstance(val, bool):
        raise ScenarioError(f"{where}: expected a number")
    if positive and not val > 0:
        raise ScenarioError(f"{where}: must be positive")
    return float(val)


def _square(val, where, n):
    M = _matrix(val, where, n, n)
    if np.max(np.abs(M - M.T)) > 1e-12 * max(1.0, np.max(np.abs(M))):
        raise ScenarioError(f"{where}: must be symmetric")
    if np.linalg.eigvalsh(M).min() <= 0:
        raise ScenarioError(f"{where}: must be positive definite")
    return M


def _agent(obj, idx, p, nbar):
    where = f"agents[{idx}]"
    _keys(obj, _AGENT, where, ("A", "B", "C", "strategy"))
    A = _matrix(obj["A"], f"{where}.A")
    n = A.shape[0]
    if A.shape[1] != n:
        raise ScenarioError(f"{where}.A: must be square")
    B = _matrix(obj["B"], f"{where}.B", rows=n)
    C = _matrix(obj["C"], f"{where}.C", rows=p, cols=n)
    m = B.shape[1]
    strategy = obj["strategy"]
    if strategy not in STRATEGIES:
        raise ScenarioError(f"{where}.strategy: must be one of {STRATEGIES}")
    name = obj.get("name", f"agent{idx + 1}")
    if not isinstance(name, str) or not name:
        raise ScenarioError(f"{where}.name: expected a string")
    spec = AgentSpec(name=name, model=oss.AgentModel(A, B, C), strategy=strategy,
                     R=_square(obj["R"], f"{where}.R", m) if "R" in obj else np.eye(m))
    if strategy == "OSS":
        if "Q" not in obj:
            raise ScenarioError(f"{where}: OSS needs Q")
        spec.Q = _square(obj["Q"], f"{where}.Q", p)
    elif "Q" in obj:
        raise ScenarioError(f"{where}: Q is only used by OSS agents")
    if strategy == "EBOSS":
        if "eps" not in obj:
            raise ScenarioError(f"{where}: EBOSS needs eps")
        spec.eps = _vector(obj["eps"], f"{where}.eps", p)
        if np.any(spec.eps <= 0):
            raise ScenarioError(f"{where}.eps: must be positive")
        if "Q0" in obj:
            spec.Q0 = _square(obj["Q0"], f"{where}.Q0", p)
        if "path" in obj:
            _keys(obj["path"], _PATH, f"{where}.path")
            spec.path = dict(obj["path"])
    else:
        for k in ("eps", "Q0", "path"):
            if k in obj:
                raise ScenarioError(f"{where}: {k} is only used by EBOSS agents")
    if "stabilizer" in obj:
        _keys(obj["stabilizer"], _STAB, f"{where}.stabilizer")
        st = obj["stabilizer"]
        if "Qx" in st:
            spec.Qx = _square(st["Qx"], f"{where}.stabilizer.Qx", n)
        if "Ru" in st:
            spec.Ru = _square(st["Ru"], f"{where}.stabilizer.Ru", m)
    if "x0" in obj:
        spec.x0 = _vector(obj["x0"], f"{where}.x0", n)
    return spec


def parse(doc):
    """Build a :class:`Scenario` from a decoded JSON document."""
    _keys(doc, _TOP, "scenario", ("graph", "exosystem", "sigma", "agents"))
    g = doc["graph"]
    _keys(g, _GRAPH, "graph", ("N", "edges"))
    N = g["N"]
    if not isinstance(N, int) or N < 1:
        raise ScenarioError("graph.N: expected a positive integer")
    edges = g["edges"]
    if not isinstance(edges, list) or not all(isinstance(e, list) and len(e) == 2 for e in edges):
        raise ScenarioError("graph.edges: expected a list of [from, to] pairs")
    try:
        graph = netgraph.DiGraph(N, tuple((int(i) - 1, int(j) - 1) for i, j in edges))
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"graph.edges: {exc}") from exc

    e = doc["exosystem"]
    _keys(e, _EXO, "exosystem", ("frequencies", "multiplicities", "output"))
    freqs = _vector(e["frequencies"], "exosystem.frequencies")
    mult = e["multiplicities"]
    if not isinstance(mult, list) or len(mult) != freqs.size or not all(isinstance(x, int) for x in mult):
        raise ScenarioError("exosystem.multiplicities: one integer per frequency")
    raw = _matrix(e["output"], "exosystem.output")
    amps = _vector(e["amplitudes"], "exosystem.amplitudes") if "amplitudes" in e else None
    try:
        exo = exocore.build_exosystem(list(zip(freqs, mult)), raw, amps)
    except (OssyncError, ValueError) as exc:
        raise ScenarioError(f"exosystem: {exc}") from exc
    nbar, p = exo.n, exo.p

    sigma = _number(doc["sigma"], "sigma")
    Bbar = _matrix(doc["exo_input"], "exo_input", rows=nbar) if "exo_input" in doc else np.eye(nbar)

    agents = doc["agents"]
    if not isinstance(agents, list) or not agents:
        raise ScenarioError("agents: expected a non-empty list")
    if len(agents) != N:
        raise ScenarioError(f"agents: graph has {N} vertices but {len(agents)} agents are listed")
    specs = [_agent(a, i, p, nbar) for i, a in enumerate(agents)]
    if len({s.name for s in specs}) != len(specs):
        raise ScenarioError("agents: names must be unique")

    sim = doc.get("simulation", {})
    _keys(sim, _SIM, "simulation")
    xbar0 = _vector(sim["xbar0"], "simulation.xbar0", nbar) if "xbar0" in sim else exo.x_boundary.copy()
    if "exo_offsets" in sim:
        offs = _matrix(sim["exo_offsets"], "simulation.exo_offsets", N, nbar)
        if np.max(np.abs(offs.sum(axis=0))) > 1e-12:
            raise ScenarioError("simulation.exo_offsets: offsets must sum to zero")
        offsets = list(offs)
    else:
        offsets = [np.zeros(nbar) for _ in range(N)]
    scen = Scenario(name=doc.get("name", "scenario"), graph=graph, exo=exo, sigma=sigma, Bbar=Bbar,
                    agents=specs, xbar0=xbar0, exo_offsets=offsets,
                    h=_number(sim.get("h", 1e-3), "simulation.h"),
                    t_end=_number(sim.get("t_end", 40.0), "simulation.t_end"),
                    t_settle=_number(sim.get("t_settle", 6.0), "simulation.t_settle", positive=False))
    if "expectations" in doc:
        ex = doc["expectations"]
        _keys(ex, _EXPECT, "expectations")
        names = {s.name for s in specs}
        for k in ex.get("energies", {}):
            if k not in names:
                raise ScenarioError(f"expectations.energies: unknown agent {k!r}")
        for k in ex.get("ordering", []):
            if k not in names:
                raise ScenarioError(f"expectations.ordering: unknown agent {k!r}")
        scen.expectations = ex
    return scen


def load(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})") from exc
    return parse(doc)


def bundled_path(name="five_agent_ring.json"):
    return str(resources.files("ossync") / "data" / name)


def load_bundled(name="five_agent_ring.json"):
    return load(bundled_path(name))
