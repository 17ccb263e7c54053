"""Communication graphs, Laplacians and the exosystem synchronization gain."""

import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import matkit
from .exceptions import InconsistentCheck, NoSpanningTree, SigmaTooLarge

ZERO_EIG_TOL = 1e-8


@dataclass(frozen=True)
class DiGraph:
    """Directed graph on vertices ``0 .. n-1``.

    An edge ``(i, j)`` means that vertex ``j`` receives information from ``i``.
    """
    n: int
    edges: tuple = ()

    def __post_init__(self):
        edges = tuple((int(i), int(j)) for i, j in self.edges)
        for i, j in edges:
            if i == j:
                raise ValueError(f"self-loop at vertex {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge {(i, j)} out of range for {self.n} vertices")
        object.__setattr__(self, "edges", tuple(sorted(set(edges))))

    @classmethod
    def ring(cls, n):
        """Directed cycle 0 -> 1 -> ... -> n-1 -> 0."""
        return cls(n, tuple((i, (i + 1) % n) for i in range(n)))

    def adjacency(self):
        """Integer matrix with ``a[i, j] = 1`` iff ``(i, j)`` is an edge."""
        a = np.zeros((self.n, self.n), dtype=int)
        for i, j in self.edges:
            a[i, j] = 1
        return a

    def relabel(self, perm):
        perm = list(perm)
        return DiGraph(self.n, tuple((perm[i], perm[j]) for i, j in self.edges))


def laplacian(g):
    """In-degree Laplacian: ``l_ii = sum_k a_ki`` and ``l_ij = -a_ji``."""
    a = g.adjacency()
    L = np.diag(a.sum(axis=0)) - a.T
    return L.astype(float)


def _reachable(g, root):
    out = [[] for _ in range(g.n)]
    for i, j in g.edges:
        out[i].append(j)
    seen = {root}
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for w in out[v]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return seen


def _zero_multiplicity(L):
    lam = np.linalg.eigvals(L)
    return int(np.sum(np.abs(lam) <= ZERO_EIG_TOL))


def has_spanning_tree(g):
    """True iff some vertex reaches every other one.

    The breadth-first answer is cross-checked against the multiplicity of the
    zero eigenvalue of the Laplacian; a disagreement emits
    :class:`InconsistentCheck` as a warning and the graph search wins.
    """
    if g.n == 0:
        return False
    by_search = any(len(_reachable(g, r)) == g.n for r in range(g.n))
    by_spectrum = _zero_multiplicity(laplacian(g)) == 1
    if by_search != by_spectrum:
        warnings.warn(InconsistentCheck(
            f"graph search says {by_search}, Laplacian spectrum says {by_spectrum}"))
    return by_search


def sigma_bound(L):
    """``min_{i>=2} Re lambda_i(L)``, the admissible range for sigma."""
    L = np.asarray(L, dtype=float)
    lam = np.linalg.eigvals(L)
    order = np.argsort(np.abs(lam))
    if L.shape[0] < 2:
        raise NoSpanningTree("need at least two vertices")
    rest = lam[order[1:]]
    if abs(lam[order[0]]) > ZERO_EIG_TOL or np.min(np.abs(rest)) <= ZERO_EIG_TOL:
        raise NoSpanningTree("zero is not a simple Laplacian eigenvalue")
    bound = float(np.min(rest.real))
    if bound <= 0:
        raise NoSpanningTree("Laplacian has eigenvalues with nonpositive real part")
    return bound


def consensus_weights(L):
    """Nonnegative left null vector ``w`` of L normalised to ``sum(w) = 1``."""
    L = np.asarray(L, dtype=float)
    _, s, vt = np.linalg.svd(L.T)
    if L.shape[0] > 1 and s[-2] <= ZERO_EIG_TOL:
        raise NoSpanningTree("left null space is not one-dimensional")
    w = vt[-1]
    w = w / w.sum()
    w[np.abs(w) < 1e-14] = 0.0
    if np.any(w < -1e-12):
        raise NoSpanningTree("left null vector is not sign-definite")
    return np.clip(w, 0.0, None)


@dataclass(frozen=True)
class SyncGain:
    K: np.ndarray
    sigma: float
    P: np.ndarray


def sync_gain(Abar, Bbar, sigma=None, L=None):
    """Riccati-based synchronization gain ``K = B^T P / sigma``.

    P solves ``A^T P + P A - P B B^T P + I = 0``.  When the Laplacian ``L``
    is given, sigma is checked against :func:`sigma_bound` (and defaults to
    95% of it), and every ``Abar - lambda_i(L) Bbar K`` with ``i >= 2`` is
    verified to be Hurwitz.
    """
    Abar = np.atleast_2d(np.asarray(Abar, dtype=float))
    nbar = Abar.shape[0]
    Bbar = np.asarray(Bbar, dtype=float).reshape(nbar, -1)
    bound = sigma_bound(L) if L is not None else None
    if sigma is None:
        if bound is None:
            raise ValueError("sigma or the Laplacian must be given")
        sigma = 0.95 * bound
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if bound is not None and sigma > bound * (1 + 1e-12):
        raise SigmaTooLarge(f"sigma={sigma} exceeds bound {bound:.6g}")

    P = matkit.solve_care(Abar, Bbar, np.eye(nbar), np.eye(Bbar.shape[1]))
    K = Bbar.T @ P / sigma
    if L is not None:
        lam = np.linalg.eigvals(np.asarray(L, dtype=float))
        for li in lam[np.argsort(np.abs(lam))[1:]]:
            if not matkit.is_hurwitz(Abar - li * Bbar @ K):
                raise SigmaTooLarge(f"Abar - {li:.4g} Bbar K is not Hurwitz")
    return SyncGain(K=K, sigma=float(sigma), P=P)
