"""Dense linear-algebra kernels and matrix-equation solvers.

Everything here works on small dense ``numpy`` arrays (a few dozen rows at
most).  The Sylvester solver uses Kronecker vectorisation with an LU
factorisation, and the Riccati solver takes the stable invariant subspace of
the Hamiltonian matrix followed by one Newton-Kleinman refinement.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import (NoStabilizingSolution, NotStabilizable, SingularMatrix,
                         SpectraOverlap)

HURWITZ_TOL = 1e-9
SPECTRA_TOL = 1e-9


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues of a square matrix together with multiplicity information.

    ``clusters`` groups numerically coincident eigenvalues as
    ``(representative, algebraic, geometric)`` triples.
    """
    values: np.ndarray
    vectors: np.ndarray = field(repr=False)
    clusters: tuple = ()

    def __len__(self):
        return len(self.values)

    @property
    def semisimple(self):
        return all(alg == geo for _, alg, geo in self.clusters)


def _cluster(values, tol):
    order = np.lexsort((values.imag, values.real))
    groups = []
    for idx in order:
        lam = values[idx]
        for g in groups:
            if abs(g[0] - lam) <= tol * max(1.0, abs(lam)):
                g[1].append(idx)
                break
        else:
            groups.append([lam, [idx]])
    return groups


def eig(M, cluster_tol=1e-7):
    """Eigen-decomposition with multiplicity bookkeeping."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("eig needs a square matrix")
    w, v = np.linalg.eig(M)
    n = M.shape[0]
    clusters = []
    for lam, members in _cluster(w, cluster_tol):
        lam = np.mean(w[members])
        sv = np.linalg.svd(M - lam * np.eye(n), compute_uv=False)
        scale = max(1.0, sv[0]) if n else 1.0
        rank = int(np.sum(sv > 1e-8 * scale))
        clusters.append((lam, len(members), n - rank))
    return Spectrum(values=w, vectors=v, clusters=tuple(clusters))


def lu_solve(M, rhs):
    """Solve ``M x = rhs`` by LU; raise :class:`SingularMatrix` when M is singular."""
    M = np.asarray(M, dtype=float)
    lu, piv = scipy.linalg.lu_factor(M, check_finite=True)
    diag = np.abs(np.diag(lu))
    if diag.size and diag.min() <= np.finfo(float).eps * max(1.0, diag.max()) * M.shape[0]:
        raise SingularMatrix("matrix is numerically singular")
    return scipy.linalg.lu_solve((lu, piv), rhs)


def _nearest_pair(a, b):
    d = np.abs(a[:, None] - b[None, :])
    i, j = np.unravel_index(np.argmin(d), d.shape)
    return (a[i], b[j]), d[i, j]


def solve_sylvester(F, G, H, check=True):
    """Solve ``F X - X G = H`` for X.

    Parameters
    ----------
    F : (k, k) array
    G : (l, l) array
    H : (k, l) array
    check : bool
        Verify that the spectra of F and G are disjoint first.

    Returns
    -------
    X : (k, l) array

    Raises
    ------
    SpectraOverlap
        If some eigenvalue of F lies within 1e-9 of an eigenvalue of G.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    k, l = F.shape[0], G.shape[0]
    if H.shape != (k, l):
        raise ValueError(f"H has shape {H.shape}, expected {(k, l)}")
    if check:
        pair, dist = _nearest_pair(np.linalg.eigvals(F), np.linalg.eigvals(G))
        if dist <= SPECTRA_TOL:
            raise SpectraOverlap(pair, dist)
    # column-major vec: vec(F X - X G) = (I kron F - G^T kron I) vec(X)
    K = np.kron(np.eye(l), F) - np.kron(G.T, np.eye(k))
    lu = scipy.linalg.lu_factor(K)
    h = H.reshape(-1, order="F")
    x = scipy.linalg.lu_solve(lu, h)
    for _ in range(2):
        r = h - K @ x
        if np.max(np.abs(r)) <= 1e-13 * (1 + np.max(np.abs(h))):
            break
        x = x + scipy.linalg.lu_solve(lu, r)
    return x.reshape((k, l), order="F")


def solve_lyapunov(A, M):
    """Solve ``A^T X + X A + M = 0`` (continuous Lyapunov form)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    X = solve_sylvester(A.T, -A, -np.asarray(M, dtype=float))
    return 0.5 * (X + X.T)


def _complex_embed(M):
    M = np.asarray(M)
    if not np.iscomplexobj(M):
        return M
    return np.block([[M.real, -M.imag], [M.imag, M.real]])


def max_real_eig(M):
    M = _complex_embed(np.atleast_2d(M))
    return float(np.max(np.linalg.eigvals(M).real))


def is_hurwitz(M, tol=HURWITZ_TOL):
    """True iff every eigenvalue of M has real part below ``-tol``.

    Complex matrices are checked through the real embedding
    ``[[Re, -Im], [Im, Re]]``, which has the same spectrum plus conjugates.
    """
    return max_real_eig(M) < -tol


def is_stabilizable(A, B, tol=1e-9):
    """PBH test on the eigenvalues with nonnegative real part."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if lam.real < -tol:
            continue
        pbh = np.hstack([A - lam * np.eye(n), B])
        # n rows, so exactly n singular values
        sv = np.linalg.svd(pbh, compute_uv=False)
        if sv[-1] <= 1e-9 * max(1.0, sv[0]):
            return False
    return True


def solve_care(A, B, Qx, Ru):
    """Stabilising solution of ``A^T P + P A - P B Ru^{-1} B^T P + Qx = 0``.

    The stable invariant subspace ``[U; V]`` of the Hamiltonian
    ``[[A, -B Ru^{-1} B^T], [-Qx, -A^T]]`` gives ``P = V U^{-1}``; one
    Newton-Kleinman step then polishes the result.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    Qx = np.atleast_2d(np.asarray(Qx, dtype=float))
    Ru = np.atleast_2d(np.asarray(Ru, dtype=float))
    if not is_stabilizable(A, B):
        raise NotStabilizable("(A, B) is not stabilizable")

    S = B @ np.linalg.solve(Ru, B.T)
    Ham = np.block([[A, -S], [-Qx, -A.T]])
    w, v = np.linalg.eig(Ham)
    scale = max(1.0, np.max(np.abs(w)))
    stable = w.real < -1e-10 * scale
    if stable.sum() != n:
        raise NoStabilizingSolution(
            f"Hamiltonian has {2 * n - 2 * stable.sum()} eigenvalues on the imaginary axis")
    U, V = v[:n, stable], v[n:, stable]
    try:
        P = np.real(np.linalg.solve(U.T, V.T).T)
    except np.linalg.LinAlgError as exc:
        raise NoStabilizingSolution("stable subspace is not a graph") from exc
    P = 0.5 * (P + P.T)

    # one Newton-Kleinman step
    K = np.linalg.solve(Ru, B.T @ P)
    Acl = A - B @ K
    if is_hurwitz(Acl):
        P = solve_lyapunov(Acl, Qx + K.T @ Ru @ K)
        Acl = A - B @ np.linalg.solve(Ru, B.T @ P)
    if not is_hurwitz(Acl):
        raise NoStabilizingSolution("closed loop is not Hurwitz")
    return P


def care_residual(A, B, Qx, Ru, P):
    A = np.atleast_2d(A)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    return A.T @ P + P @ A - P @ B @ np.linalg.solve(np.atleast_2d(Ru), B.T @ P) + Qx


def _rotation_blocks(M, tol=0.0):
    """Split M into diagonal blocks of zeros and ``w * [[0, 1], [-1, 0]]``.

    Returns a list of ``(start, size, omega)`` or None when M has a
    different structure.
    """
    n = M.shape[0]
    blocks = []
    i = 0
    while i < n:
        if i + 1 < n and M[i, i + 1] != 0.0:
            w = M[i, i + 1]
            sub = M[i:i + 2, i:i + 2]
            if abs(sub[1, 0] + w) > tol or abs(sub[0, 0]) > tol or abs(sub[1, 1]) > tol:
                return None
            blocks.append((i, 2, w))
            i += 2
        else:
            if abs(M[i, i]) > tol:
                return None
            blocks.append((i, 1, 0.0))
            i += 1
    mask = np.zeros_like(M, dtype=bool)
    for s, k, _ in blocks:
        mask[s:s + k, s:s + k] = True
    if np.any(M[~mask] != 0.0):
        return None
    return blocks


def expm_flow(M, t):
    """Matrix exponential ``exp(M t)``.

    Block-diagonal generators made of zero and rotation blocks are evaluated
    in closed form; other matrices go through scaling and squaring.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    blocks = _rotation_blocks(M)
    if blocks is None:
        return scipy.linalg.expm(M * t)
    E = np.eye(M.shape[0])
    for s, k, w in blocks:
        if k == 2:
            c, sn = np.cos(w * t), np.sin(w * t)
            E[s:s + 2, s:s + 2] = [[c, sn], [-sn, c]]
    return E


def sqrtm_psd(M, floor=0.0):
    """Symmetric square root of a symmetric positive semidefinite matrix."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    w = np.maximum(w, floor)
    return (V * np.sqrt(w)) @ V.T


def check_pd(M, name="matrix", tol=1e-10):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square")
    if np.max(np.abs(M - M.T)) > 1e-12 * max(1.0, np.max(np.abs(M))):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(M).min() <= tol:
        raise ValueError(f"{name} must be positive definite")
    return M
