"""Error-bounded optimal stationary synchronization.

For a fixed tracking weight Q the optimal stationary pair follows from
:func:`ossync.oss.solve_oss`; what remains is an SDP feasibility problem in
an ellipsoid matrix P and a slack X certifying ``|e_j^T (C Pi - Cbar) xbar(t)|
<= eps_j`` for every admissible exosystem state.  Searching over Q makes the
problem bilinear; :func:`path_following` walks Q along a sequence of
trust-region-limited linearised steps, each certified by the exact fixed-Q
problem before acceptance.
"""

import csv
import enum
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import conic, exocore, oss
from .exceptions import InfeasibleInitialPoint, NoFeasibleQ, StalledStep

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    margin: float = conic.STRICT_MARGIN
    tol: float = 1e-9
    max_iter: int = 200


@dataclass(frozen=True)
class EbossSpec:
    agent: oss.AgentModel
    exo: exocore.Exosystem
    R: np.ndarray
    eps: np.ndarray
    options: SolverOptions = SolverOptions()
    name: str = ""

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        eps = np.asarray(self.eps, dtype=float).ravel()
        if eps.size != self.agent.p:
            raise ValueError(f"need {self.agent.p} error bounds, got {eps.size}")
        if np.any(eps <= 0):
            raise ValueError("error bounds must be positive")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "eps", eps)

    def with_eps(self, eps):
        return replace(self, eps=np.asarray(eps, dtype=float))


@dataclass
class Op2Result:
    feasible: bool
    Pi: np.ndarray
    Gamma: np.ndarray
    objective: float
    P: np.ndarray
    X: np.ndarray
    slack: float = np.nan

    def __iter__(self):
        return iter((self.feasible, self.Pi, self.Gamma, self.objective, self.P, self.X))


class Termination(str, enum.Enum):
    DELTA_REL = "DeltaRelBelowThreshold"
    MAX_ITER = "MaxIterations"


@dataclass
class OperatingPoint:
    k: int
    Q: np.ndarray
    Pi: np.ndarray
    Gamma: np.ndarray
    objective: float
    alpha: float
    accepted: bool
    delta_rel: float
    step_norm: float = 0.0


@dataclass
class PathHistory:
    points: list = field(default_factory=list)
    termination: Termination = None

    def accepted(self):
        return [pt for pt in self.points if pt.accepted]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "accepted", "objective", "alpha", "step_norm", "delta_rel"])
            for pt in self.points:
                w.writerow([pt.k, int(pt.accepted), repr(pt.objective), repr(pt.alpha),
                            repr(pt.step_norm), repr(pt.delta_rel)])


@dataclass
class PathResult:
    Q: np.ndarray
    Pi: np.ndarray
    Gamma: np.ndarray
    objective: float
    P: np.ndarray
    X: np.ndarray
    history: PathHistory


# --------------------------------------------------------------------------
# SDP assembly


class _Layout:
    """Variable vector ``[dq | P coefficients | X entries | Z entries]``."""

    def __init__(self, spec, nq, with_z):
        p, nb = spec.agent.p, spec.exo.n
        self.p, self.nb = p, nb
        self.P_basis = exocore.ellipsoid_basis(spec.exo)
        self.X_basis = conic.sym_basis(p)
        self.q = slice(0, nq)
        self.P = slice(nq, nq + len(self.P_basis))
        self.X = slice(self.P.stop, self.P.stop + len(self.X_basis))
        self.lead = self.X.stop
        self.nz = nb * (nb + 1) // 2 if with_z else 0
        self.total = self.lead + self.nz

    def zeros(self, size):
        return np.zeros((self.total, size, size))

    def P_of(self, v):
        return np.tensordot(v[self.P], np.array(self.P_basis), axes=1)

    def X_of(self, v):
        return conic.sym_from_vec(v[self.X], self.p)


def _bound_blocks(spec, lay, E0, Ek):
    """LMI blocks for the ellipsoid, slack and coupling constraints.

    The stationary error map is ``E0 + sum_k v_k Ek[k]`` over the leading
    ``dq`` variables (``Ek`` may be empty).
    """
    p, nb = lay.p, lay.nb
    delta = spec.options.margin
    nP = len(lay.P_basis)
    blocks = []

    # P > 0 on its structured basis: every coefficient positive
    F = lay.zeros(nP)
    for i, k in enumerate(range(lay.P.start, lay.P.stop)):
        F[k, i, i] = 1.0
    blocks.append(conic.LmiBlock(np.zeros((nP, nP)), F, delta, "P > 0"))

    # xB^T P xB <= 1
    F = lay.zeros(1)
    xb = spec.exo.x_boundary
    for Pk, k in zip(lay.P_basis, range(lay.P.start, lay.P.stop)):
        F[k, 0, 0] = -xb @ Pk @ xb
    blocks.append(conic.LmiBlock([[1.0]], F, 0.0, "boundary"))

    # X > 0
    F = lay.zeros(p)
    F[lay.X] = lay.X_basis
    blocks.append(conic.LmiBlock(np.zeros((p, p)), F, delta, "X > 0"))

    # diag(X)_j <= eps_j^2
    F = lay.zeros(p)
    for j in range(p):
        F[lay.X, j, j] = -lay.X_basis[:, j, j]
    blocks.append(conic.LmiBlock(np.diag(spec.eps ** 2), F, 0.0, "error bounds"))

    # [[P, E^T], [E, X]] > 0
    s = nb + p
    F0 = np.zeros((s, s))
    F0[nb:, :nb] = E0
    F0[:nb, nb:] = E0.T
    F = lay.zeros(s)
    for k, Ekk in zip(range(lay.q.start, lay.q.stop), Ek):
        F[k, nb:, :nb] = Ekk
        F[k, :nb, nb:] = Ekk.T
    F[lay.P, :nb, :nb] = np.array(lay.P_basis)
    F[lay.X, nb:, nb:] = lay.X_basis
    blocks.append(conic.LmiBlock(F0, F, delta, "coupling"))
    return blocks


def op2_problem(spec, Pi):
    """Fixed-Q feasibility SDP in (P, X) for the stationary map ``Pi``."""
    lay = _Layout(spec, 0, with_z=False)
    E = spec.agent.C @ Pi - spec.exo.C
    blocks = _bound_blocks(spec, lay, E, [])
    return conic.SdpProblem(np.zeros(lay.total), blocks), lay


def evaluate_op2_at_q(spec, Q):
    """Solve the fixed-Q problem.

    Returns an :class:`Op2Result` (unpacks as ``feasible, Pi, Gamma,
    objective, P, X``).  P and X are None when infeasible.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    sol = oss.solve_oss(spec.agent, spec.exo, Q, spec.R)
    objective = float(np.trace(sol.Gamma.T @ spec.R @ sol.Gamma))
    problem, lay = op2_problem(spec, sol.Pi)
    ph1 = conic.feasibility(problem, tol=spec.options.tol, max_iter=spec.options.max_iter)
    # feasible means a verified point, whatever accuracy phase I reached
    feasible = conic.certifies(problem, ph1.v)
    P = X = None
    if feasible:
        P, X = lay.P_of(ph1.v), lay.X_of(ph1.v)
    return Op2Result(feasible, sol.Pi, sol.Gamma, objective, P, X, ph1.objective)


def _sylvester_sensitivities(spec, Q, Pi_prev):
    """Affine map dq -> (Pi, Gamma) of the linearised Hamiltonian equation."""
    agent, exo, R = spec.agent, spec.exo, spec.R
    n = agent.n
    base = oss.solve_oss(agent, exo, Q, R)
    E_prev = agent.C @ Pi_prev - exo.C
    Pis, Gams = [], []
    for D in conic.sym_basis(agent.p):
        rhs = np.vstack([np.zeros((n, exo.n)), -agent.C.T @ D @ E_prev])
        Xk = oss.matkit.solve_sylvester(base.Theta, exo.A, -rhs, check=False)
        Pis.append(Xk[:n])
        Gams.append(-np.linalg.solve(R, agent.B.T @ Xk[n:]))
    return base, np.array(Pis), np.array(Gams)


def op3_step(spec, point, alpha=None, offset=None, _sens=None):
    """Trust-region limited step ``dQ`` of the linearised problem.

    ``offset`` is added to the linearised error map in the coupling LMI (the
    second-order correction of :func:`path_following`).  Returns
    ``(dQ, solution)`` with ``dQ`` None when the SDP is not solved.
    """
    agent, exo = spec.agent, spec.exo
    Q = point.Q
    alpha = point.alpha if alpha is None else alpha
    base, dPi, dGam = _sens if _sens is not None else _sylvester_sensitivities(spec, Q, point.Pi)
    p = agent.p
    nq = p * (p + 1) // 2
    lay = _Layout(spec, nq, with_z=True)
    delta = spec.options.margin

    E0 = agent.C @ base.Pi - exo.C
    if offset is not None:
        E0 = E0 + offset
    Ek = np.einsum("ij,kjl->kil", agent.C, dPi)
    blocks = _bound_blocks(spec, lay, E0, Ek)

    gF = np.zeros((lay.lead, agent.m, exo.n))
    gF[lay.q] = dGam
    tblock, cobj, total = conic.trace_slack(base.Gamma, gF, spec.R, offset=lay.lead)
    assert total == lay.total
    blocks.append(tblock)

    Dq = conic.sym_basis(p)
    F0 = np.kron(np.eye(2), alpha * Q)
    F = lay.zeros(2 * p)
    F[lay.q, :p, p:] = Dq
    F[lay.q, p:, :p] = Dq
    blocks.append(conic.LmiBlock(F0, F, delta, "trust region"))

    F = lay.zeros(p)
    F[lay.q] = Dq
    blocks.append(conic.LmiBlock(Q, F, delta, "Q + dQ > 0"))

    problem = conic.SdpProblem(cobj, blocks)
    try:
        sol = conic.solve(problem, tol=spec.options.tol, max_iter=spec.options.max_iter)
    except conic.NumericalBreakdown:
        return None, None
    if not sol.ok:
        return None, sol
    return conic.sym_from_vec(sol.v[lay.q], p), sol


def linearised_error(spec, point, dQ, _sens):
    base, dPi, _ = _sens
    dq = np.array([dQ[i, j] for i, j in conic.sym_index(spec.agent.p)])
    return spec.agent.C @ (base.Pi + np.tensordot(dq, dPi, axes=1)) - spec.exo.C


def path_following(spec, Q0, delta_rel_min=1e-7, k_max=300, gamma=1.5, shrink=0.9,
                   alpha_max=np.inf, alpha0=0.2, second_order=True):
    """Path-following over Q from a feasible starting weight.

    Every iteration solves the linearised trust-region problem, re-solves the
    exact fixed-Q problem at the candidate and accepts only feasible
    candidates with a strictly smaller ``trace(Gamma^T R Gamma)``.  The trust
    region grows by ``gamma`` (capped at ``alpha_max``) after acceptance and
    shrinks by ``shrink`` otherwise.

    With ``second_order`` the step is recomputed once with the coupling LMI
    evaluated at the exact error map of the first candidate instead of its
    first-order prediction; the linearisation error of the first step then
    no longer makes nearly every candidate infeasible.

    Raises
    ------
    InfeasibleInitialPoint
        When Q0 does not admit a certificate.
    """
    Q = np.atleast_2d(np.asarray(Q0, dtype=float))
    start = evaluate_op2_at_q(spec, Q)
    if not start.feasible:
        raise InfeasibleInitialPoint("initial weight does not satisfy the error bounds")
    current = OperatingPoint(0, Q, start.Pi, start.Gamma, start.objective, alpha0, True,
                             delta_rel_min)
    P, X = start.P, start.X
    history = PathHistory([current])
    k = 1
    failures = 0
    while k <= k_max and current.delta_rel >= delta_rel_min:
        alpha = current.alpha
        sens = _sylvester_sensitivities(spec, current.Q, current.Pi)
        dQ, _ = op3_step(spec, current, alpha, _sens=sens)
        if dQ is not None and second_order:
            exact = oss.solve_oss(spec.agent, spec.exo, current.Q + dQ, spec.R)
            D = (spec.agent.C @ exact.Pi - spec.exo.C) - linearised_error(spec, current, dQ, sens)
            dQ2, _ = op3_step(spec, current, alpha, offset=D, _sens=sens)
            if dQ2 is not None:
                dQ = dQ2
        accepted = False
        step_norm = 0.0
        if dQ is None:
            failures += 1
            if alpha < 1e-10:
                raise StalledStep(f"linearised problem unsolvable at k={k} with alpha={alpha:.3g}")
        else:
            failures = 0
            step_norm = float(np.linalg.norm(dQ, 2))
            cand = evaluate_op2_at_q(spec, current.Q + dQ)
            if cand.feasible:
                d_rel = 1.0 - cand.objective / current.objective
                accepted = d_rel > 0
        if accepted:
            current = OperatingPoint(k, current.Q + dQ, cand.Pi, cand.Gamma, cand.objective,
                                     min(gamma * alpha, alpha_max), True, d_rel, step_norm)
            P, X = cand.P, cand.X
        else:
            current = replace(current, k=k, alpha=shrink * alpha, accepted=False,
                              step_norm=step_norm)
        history.points.append(current)
        log.info("path %3d %s objective %.8g alpha %.3g |dQ| %.3g drel %.3g", k,
                 "acc" if accepted else "rej", current.objective, current.alpha, step_norm,
                 current.delta_rel)
        k += 1
    history.termination = (Termination.DELTA_REL if current.delta_rel < delta_rel_min
                           else Termination.MAX_ITER)
    return PathResult(current.Q, current.Pi, current.Gamma, current.objective, P, X, history)


def find_initial_q(spec, shrink=0.8, q_cap=1e12):
    """Diagonal starting weight.

    ``q I`` with q doubling from 1 until the fixed-Q problem is feasible,
    then one coordinate pass shrinking each diagonal entry by ``shrink``
    while feasibility persists.
    """
    p = spec.agent.p
    q = 1.0
    while not evaluate_op2_at_q(spec, q * np.eye(p)).feasible:
        q *= 2
        if q > q_cap:
            raise NoFeasibleQ(f"no feasible q I with q <= {q_cap:g}")
    d = np.full(p, q)
    for i in range(p):
        while True:
            trial = d.copy()
            trial[i] *= shrink
            if not evaluate_op2_at_q(spec, np.diag(trial)).feasible:
                break
            d = trial
    return np.diag(d)


def epsilon_search(spec, direction, beta0=1.0, factor=0.9, max_steps=200):
    """Lower ``beta`` geometrically while ``eps = direction * beta`` stays feasible.

    Returns ``(beta, Q0)`` for the last feasible beta, with Q0 from
    :func:`find_initial_q`.  The initial beta is returned unchanged when the
    first reduction already fails.
    """
    direction = np.asarray(direction, dtype=float)
    beta = beta0
    Q = find_initial_q(spec.with_eps(direction * beta))
    for _ in range(max_steps):
        trial = beta * factor
        try:
            Qt = find_initial_q(spec.with_eps(direction * trial))
        except NoFeasibleQ:
            break
        beta, Q = trial, Qt
    return beta, Q


def bound_certificate(spec, Pi, P):
    """Smallest eigenvalue of ``[[P, E^T e_j], [e_j^T E, eps_j^2]]`` for every output j."""
    E = spec.agent.C @ Pi - spec.exo.C
    out = []
    for j in range(spec.agent.p):
        col = E[j][:, None]
        M = np.block([[P, col], [col.T, np.array([[spec.eps[j] ** 2]])]])
        out.append(float(np.linalg.eigvalsh(M).min()))
    return np.array(out)
