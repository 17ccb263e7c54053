"""Per-agent synthesis: regulator equations, optimal stationary pairs, stabilizers.

An agent tracks its exosystem through ``u = -K (x - Pi xbar) + Gamma xbar``.
``solve_exs`` returns a pair with zero stationary error when one exists;
``solve_oss`` returns the unique pair that is optimal for the stationary
quadratic tracking cost with weights (Q, R).
"""

from dataclasses import dataclass

import numpy as np

from . import matkit
from .exceptions import (DimensionMismatch, ImaginaryAxisHamiltonian, NoSolution,
                         SingularKkt)

EXS_RESIDUAL_TOL = 1e-7


@dataclass(frozen=True)
class AgentModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        B = np.asarray(self.B, dtype=float).reshape(n, -1)
        C = np.asarray(self.C, dtype=float).reshape(-1, n)
        if A.shape != (n, n):
            raise DimensionMismatch("A must be square")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]


def _check_dims(agent, exo):
    if agent.p != exo.p:
        raise DimensionMismatch(f"agent has {agent.p} outputs, exosystem {exo.p}")


def _vec(M):
    return np.asarray(M).reshape(-1, order="F")


def _unvec(v, shape):
    return np.asarray(v).reshape(shape, order="F")


def regulator_operator(agent, exo):
    """Matrix mapping ``[vec Pi; vec Gamma]`` to ``vec(Pi Abar - A Pi - B Gamma)``."""
    n, m, nb = agent.n, agent.m, exo.n
    return np.hstack([np.kron(exo.A.T, np.eye(n)) - np.kron(np.eye(nb), agent.A),
                      -np.kron(np.eye(nb), agent.B)])


def solve_exs(agent, exo, tol=EXS_RESIDUAL_TOL):
    """Solve the regulator equations ``Pi Abar = A Pi + B Gamma``, ``C Pi = Cbar``.

    Both equations are stacked into one linear system in ``vec(Pi)`` and
    ``vec(Gamma)`` and solved in the least-squares sense (minimum norm when
    the solution is not unique).

    Raises
    ------
    NoSolution
        When the least-squares residual exceeds ``tol * max(1, ||Cbar||)``.
    """
    _check_dims(agent, exo)
    n, m, nb = agent.n, agent.m, exo.n
    top = regulator_operator(agent, exo)
    bottom = np.hstack([np.kron(np.eye(nb), agent.C), np.zeros((agent.p * nb, m * nb))])
    M = np.vstack([top, bottom])
    rhs = np.concatenate([np.zeros(n * nb), _vec(exo.C)])
    z = np.linalg.lstsq(M, rhs, rcond=None)[0]
    residual = float(np.linalg.norm(M @ z - rhs))
    if residual > tol * max(1.0, np.linalg.norm(exo.C)):
        raise NoSolution(residual)
    return _unvec(z[:n * nb], (n, nb)), _unvec(z[n * nb:], (m, nb))


@dataclass(frozen=True)
class OssSolution:
    Pi: np.ndarray
    Gamma: np.ndarray
    Pi_lambda: np.ndarray
    Theta: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def error_map(self, agent, exo):
        """Stationary output error ``C Pi - Cbar``."""
        return agent.C @ self.Pi - exo.C


def hamiltonian(agent, Q, R):
    A, B, C = agent.A, agent.B, agent.C
    return np.block([[A, -B @ np.linalg.solve(R, B.T)],
                     [-C.T @ Q @ C, -A.T]])


def solve_oss(agent, exo, Q, R, Theta=None):
    """Optimal stationary pair from the Hamiltonian Sylvester equation.

    Solves ``[Pi; Pi_l] Abar = Theta [Pi; Pi_l] + [0; C^T Q Cbar]`` and sets
    ``Gamma = -R^{-1} B^T Pi_l``.  ``Theta`` can be passed in when it is
    already available.
    """
    _check_dims(agent, exo)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = agent.n
    if Theta is None:
        Theta = hamiltonian(agent, Q, R)
        w = np.linalg.eigvals(Theta)
        if np.min(np.abs(w.real)) <= 1e-9 * max(1.0, np.max(np.abs(w))):
            raise ImaginaryAxisHamiltonian(
                "Hamiltonian has eigenvalues on the imaginary axis; "
                "(A, B, C) is not stabilizable and detectable")
    rhs = np.vstack([np.zeros((n, exo.n)), agent.C.T @ Q @ exo.C])
    X = matkit.solve_sylvester(Theta, exo.A, -rhs)
    Pi, Pi_l = X[:n], X[n:]
    Gamma = -np.linalg.solve(R, agent.B.T @ Pi_l)
    return OssSolution(Pi=Pi, Gamma=Gamma, Pi_lambda=Pi_l, Theta=Theta, Q=Q, R=R)


def oss_residual(agent, exo, sol):
    """Max-abs residual of the Hamiltonian Sylvester equation."""
    X = np.vstack([sol.Pi, sol.Pi_lambda])
    rhs = np.vstack([np.zeros((agent.n, exo.n)), agent.C.T @ sol.Q @ exo.C])
    return float(np.max(np.abs(X @ exo.A - sol.Theta @ X - rhs)))


def period_average(M, exo):
    """Average of ``Phi(t)^T M Phi(t)`` over one period, ``Phi`` the exosystem flow.

    Off-diagonal frequency blocks average out; a harmonic block keeps
    ``(M_j + E_j^T M_j E_j) / 2`` with ``E_j = kron(I, [[0, 1], [-1, 0]])``.
    """
    M = np.asarray(M, dtype=float)
    out = np.zeros_like(M)
    for b in exo.blocks:
        s = b.slice
        Mj = M[s, s]
        if b.omega == 0:
            out[s, s] = Mj
        else:
            E = np.kron(np.eye(b.size // 2), np.array([[0.0, 1.0], [-1.0, 0.0]]))
            out[s, s] = 0.5 * (Mj + E.T @ Mj @ E)
    return out


@dataclass(frozen=True)
class StationaryWeight:
    G: np.ndarray
    gram: np.ndarray
    rotations: tuple

    def period_cost(self, x0, period):
        x0 = np.asarray(x0, dtype=float)
        return float(period * x0 @ self.gram @ x0)


def stationary_weight(agent, exo, Pi, Gamma, Q, R):
    """Cost square root ``G`` and its period-averaged Gram matrix.

    ``G`` stacks ``Q^{1/2} (C Pi - Cbar)`` over ``R^{1/2} Gamma`` so that the
    stationary running cost is ``xbar^T G^T G xbar``.
    """
    Q = matkit.check_pd(Q, "Q")
    R = matkit.check_pd(R, "R")
    G = np.vstack([matkit.sqrtm_psd(Q) @ (agent.C @ Pi - exo.C),
                   matkit.sqrtm_psd(R) @ np.atleast_2d(Gamma)])
    rotations = tuple(np.kron(np.eye(b.size // 2), np.array([[0.0, 1.0], [-1.0, 0.0]]))
                      for b in exo.blocks if b.omega != 0)
    gram = period_average(G.T @ G, exo)
    return StationaryWeight(G=G, gram=0.5 * (gram + gram.T), rotations=rotations)


def solve_op1(agent, exo, Q, R):
    """Minimise ``trace((C Pi - Cbar)^T Q (C Pi - Cbar) + Gamma^T R Gamma)``
    subject to ``Pi Abar = A Pi + B Gamma`` via the KKT system of the
    equality-constrained quadratic program.
    """
    _check_dims(agent, exo)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n, m, nb = agent.n, agent.m, exo.n
    C = agent.C
    H = np.zeros((n * nb + m * nb,) * 2)
    H[:n * nb, :n * nb] = np.kron(np.eye(nb), C.T @ Q @ C)
    H[n * nb:, n * nb:] = np.kron(np.eye(nb), R)
    g = np.concatenate([_vec(C.T @ Q @ exo.C), np.zeros(m * nb)])
    M = regulator_operator(agent, exo)
    k = M.shape[0]
    kkt = np.block([[H, M.T], [M, np.zeros((k, k))]])
    rhs = np.concatenate([g, np.zeros(k)])
    try:
        z = matkit.lu_solve(kkt, rhs)
    except Exception as exc:
        raise SingularKkt("KKT matrix is singular") from exc
    return _unvec(z[:n * nb], (n, nb)), _unvec(z[n * nb:n * nb + m * nb], (m, nb))


def stationary_input_energy(Gamma, R, exo, x0):
    """``0.5 * int_0^T xbar^T Gamma^T R Gamma xbar dt`` in closed form."""
    Gamma = np.atleast_2d(Gamma)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    M = period_average(0.5 * Gamma.T @ R @ Gamma, exo)
    x0 = np.asarray(x0, dtype=float)
    return float(exo.period * x0 @ M @ x0)


@dataclass(frozen=True)
class StabilizerGain:
    K: np.ndarray
    A_cl: np.ndarray


def design_stabilizer(agent, Qx=None, Ru=None):
    """LQR gain ``K = Ru^{-1} B^T P`` (identity weights by default)."""
    Qx = np.eye(agent.n) if Qx is None else np.atleast_2d(np.asarray(Qx, dtype=float))
    Ru = np.eye(agent.m) if Ru is None else np.atleast_2d(np.asarray(Ru, dtype=float))
    P = matkit.solve_care(agent.A, agent.B, Qx, Ru)
    K = np.linalg.solve(Ru, agent.B.T @ P)
    return StabilizerGain(K=K, A_cl=agent.A - agent.B @ K)
