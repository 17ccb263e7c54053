"""Small dense semidefinite programming.

Problems are stated in LMI form over a real vector ``v``::

    minimise    c^T v
    subject to  E v = f
                F_b(v) = F_b0 + sum_k v_k F_bk  >=  margin_b * I   for every block b

Equality constraints are removed by a nullspace parameterisation, each block
is scaled to unit max-norm and the variables are equilibrated.  The reduced
problem is the dual of a standard-form SDP and is solved with an
infeasible-start primal-dual path-following method (HKM search direction,
Mehrotra predictor-corrector).
"""

import enum
import io
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import NumericalBreakdown

STRICT_MARGIN = 1e-8
# accuracy accepted when the iteration stalls before reaching the requested tolerance
REDUCED_TOL = 1e-7

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITER = "max_iter"


@dataclass
class LmiBlock:
    """Affine symmetric matrix function ``F0 + sum_k v_k F[k]``."""
    F0: np.ndarray
    F: np.ndarray
    margin: float = 0.0
    name: str = ""

    def __post_init__(self):
        self.F0 = np.atleast_2d(np.asarray(self.F0, dtype=float))
        s = self.F0.shape[0]
        self.F = np.asarray(self.F, dtype=float).reshape(-1, s, s)
        for M in (self.F0, *self.F):
            if np.max(np.abs(M - M.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(M))):
                raise ValueError(f"block {self.name!r} has a nonsymmetric coefficient")

    @property
    def size(self):
        return self.F0.shape[0]

    def value(self, v):
        return self.F0 + np.tensordot(np.asarray(v, dtype=float), self.F, axes=1)


@dataclass
class SdpProblem:
    c: np.ndarray
    blocks: list
    E: np.ndarray = None
    f: np.ndarray = None
    names: tuple = ()

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        d = self.c.size
        for b in self.blocks:
            if b.F.shape[0] != d:
                raise ValueError(f"block {b.name!r} has {b.F.shape[0]} coefficients, expected {d}")
        if self.E is not None:
            self.E = np.asarray(self.E, dtype=float).reshape(-1, d)
            self.f = np.asarray(self.f, dtype=float).ravel()

    @property
    def dim(self):
        return self.c.size


@dataclass
class SdpSolution:
    status: Status
    v: np.ndarray
    objective: float
    gap: float
    duals: list = field(default_factory=list)
    eq_duals: np.ndarray = None
    iterations: int = 0
    history: list = field(default_factory=list, repr=False)
    primal_residual: float = np.inf
    dual_residual: float = np.inf

    @property
    def ok(self):
        return self.status is Status.OPTIMAL


def lmi_residuals(problem, v):
    """Smallest eigenvalue of ``F_b(v) - margin_b I`` for every block."""
    return [float(np.linalg.eigvalsh(b.value(v) - b.margin * np.eye(b.size)).min())
            for b in problem.blocks]


def kkt_residuals(problem, sol):
    """(primal, dual, complementarity) residuals of a solution in original units."""
    v = sol.v
    primal = max([0.0] + [-r for r in lmi_residuals(problem, v)])
    if problem.E is not None and problem.E.size:
        primal = max(primal, float(np.max(np.abs(problem.E @ v - problem.f))))
    grad = problem.c.copy()
    comp = 0.0
    for b, Z in zip(problem.blocks, sol.duals):
        grad -= np.einsum("kij,ij->k", b.F, Z)
        comp += abs(np.sum((b.value(v) - b.margin * np.eye(b.size)) * Z))
    if sol.eq_duals is not None:
        grad -= problem.E.T @ sol.eq_duals
    scale = 1.0 + np.max(np.abs(problem.c))
    return primal, float(np.max(np.abs(grad)) / scale), comp / (1.0 + abs(sol.objective))


# --------------------------------------------------------------------------
# reduction to the scaled inequality-only problem


@dataclass
class _Reduced:
    c: np.ndarray
    A: list                # per block (d, s, s): coefficients of y, with S = C - sum y_k A_k
    C: list
    v0: np.ndarray
    N: np.ndarray          # v = v0 + N (D y)
    D: np.ndarray
    obj_offset: float
    c_scale: float
    b_scale: np.ndarray
    free: np.ndarray       # variables that appear in no block


def _reduce(problem):
    d = problem.dim
    if problem.E is not None and problem.E.shape[0]:
        E, f = problem.E, problem.f
        v0, *_ = np.linalg.lstsq(E, f, rcond=None)
        if np.max(np.abs(E @ v0 - f)) > 1e-9 * (1 + np.max(np.abs(f))):
            return None
        U, s, Vt = np.linalg.svd(E)
        rank = int(np.sum(s > 1e-12 * max(1.0, s[0])))
        N = Vt[rank:].T
    else:
        v0 = np.zeros(d)
        N = np.eye(d)
    c = N.T @ problem.c
    blocks_F0, blocks_F = [], []
    for b in problem.blocks:
        blocks_F0.append(b.value(v0) - b.margin * np.eye(b.size))
        blocks_F.append(np.tensordot(N.T, b.F, axes=1))

    b_scale = np.array([max(np.max(np.abs(F0)), np.max(np.abs(F), initial=0.0), 1e-300)
                        for F0, F in zip(blocks_F0, blocks_F)])
    blocks_F0 = [F0 / s for F0, s in zip(blocks_F0, b_scale)]
    blocks_F = [F / s for F, s in zip(blocks_F, b_scale)]

    r = N.shape[1]
    colmax = np.zeros(r)
    for F in blocks_F:
        if r:
            colmax = np.maximum(colmax, np.max(np.abs(F), axis=(1, 2)))
    free = colmax == 0
    D = np.where(free, 1.0, 1.0 / np.where(free, 1.0, colmax))
    blocks_F = [F * D[:, None, None] for F in blocks_F]
    c = c * D
    c_scale = max(np.max(np.abs(c), initial=0.0), 1e-300)
    if c_scale < 1e-300 * 10:
        c_scale = 1.0
    return _Reduced(c=c / c_scale, A=[-F for F in blocks_F], C=blocks_F0, v0=v0, N=N, D=D,
                    obj_offset=float(problem.c @ v0), c_scale=c_scale, b_scale=b_scale,
                    free=free)


# --------------------------------------------------------------------------
# interior-point core


def _op_A(A, X):
    return sum(Ab.reshape(Ab.shape[0], -1) @ Xb.ravel() for Ab, Xb in zip(A, X))


def _op_At(A, y):
    return [np.tensordot(y, Ab, axes=1) for Ab in A]


def _max_step(X, dX):
    alpha = np.inf
    for Xb, dXb in zip(X, dX):
        Li = np.linalg.inv(np.linalg.cholesky(Xb))
        lam = np.linalg.eigvalsh(Li @ dXb @ Li.T).min()
        if lam < 0:
            alpha = min(alpha, -1.0 / lam)
    return alpha


def _ipm(red, tol, max_iter):
    """Returns (status, y, X, history, iterations, broke)."""
    b = -red.c
    keep = ~red.free
    nvar = b.size
    sizes = [Cb.shape[0] for Cb in red.C]
    ntot = sum(sizes)
    if np.any(red.free & (np.abs(b) > 0)):
        return Status.UNBOUNDED, np.zeros(nvar), [np.eye(s) for s in sizes], [], 0, False
    # one block-diagonal matrix: the iterates keep the structure exactly and
    # dense kernels on a single matrix beat a Python loop over small blocks
    C = [scipy.linalg.block_diag(*red.C)]
    A = [np.zeros((nvar, ntot, ntot))]
    pos = 0
    for Ab, s in zip(red.A, sizes):
        A[0][:, pos:pos + s, pos:pos + s] = Ab
        pos += s

    normA = max([np.max(np.abs(Ab), initial=0.0) for Ab in A] + [1.0])
    normC = max([np.max(np.abs(Cb)) for Cb in C] + [1.0])
    xi = max(10.0, np.sqrt(ntot), ntot * max(1.0, np.max(np.abs(b), initial=0.0)) / (1 + normA))
    eta = max(10.0, np.sqrt(ntot), normA, normC)
    X = [xi * np.eye(ntot)]
    S = [eta * np.eye(ntot)]
    y = np.zeros(nvar)
    history = []
    status = Status.MAX_ITER
    broke = False
    nb = 1 + np.linalg.norm(b)
    nc = 1 + np.sqrt(sum(np.sum(Cb ** 2) for Cb in C))
    best = (np.inf, y, X, 0)

    it = 0
    while it < max_iter:
        it += 1
        AtY = _op_At(A, y)
        rp = b - _op_A(A, X)
        Rd = [Cb - Sb - Ab for Cb, Sb, Ab in zip(C, S, AtY)]
        pobj = sum(np.sum(Cb * Xb) for Cb, Xb in zip(C, X))
        dobj = float(b @ y)
        mu = sum(np.sum(Xb * Sb) for Xb, Sb in zip(X, S)) / ntot
        rel_p = np.linalg.norm(rp) / nb
        rel_d = np.sqrt(sum(np.sum(R ** 2) for R in Rd)) / nc
        rel_gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        history.append(dict(iteration=it, primal=-dobj, dual=-pobj, mu=mu,
                            rel_p=rel_p, rel_d=rel_d, gap=rel_gap))
        log.debug("ipm %3d  pobj %+.10e  dobj %+.10e  mu %.2e  rp %.1e  rd %.1e  gap %.1e",
                  it, -dobj, -pobj, mu, rel_p, rel_d, rel_gap)
        score = max(rel_p, rel_d, rel_gap)
        if score < best[0]:
            best = (score, y, X, it)
        if score <= tol:
            status = Status.OPTIMAL
            break
        # LMI side infeasible: X approaches a ray with A(X) = 0 and <C, X> < 0
        if it > 5 and pobj < 0 and np.linalg.norm(_op_A(A, X)) <= 1e-8 * -pobj:
            status = Status.INFEASIBLE
            break
        if dobj > 1e10 and rel_d < 1e-6:
            status = Status.UNBOUNDED
            break
        # no progress for a while: keep the best iterate
        if it - best[3] >= 8:
            break

        try:
            Sinv = []
            for Sb in S:
                Li = np.linalg.inv(np.linalg.cholesky(Sb))
                Sinv.append(Li.T @ Li)
            M = np.zeros((nvar, nvar))
            for Ab, Xb, Si in zip(A, X, Sinv):
                # M_kl = trace(A_k X A_l S^-1), A_k and the product transposed flat
                T = np.matmul(np.matmul(Xb, Ab), Si)
                flat = Ab.reshape(nvar, -1)
                M += flat @ np.transpose(T, (0, 2, 1)).reshape(nvar, -1).T
            Mk = 0.5 * (M + M.T)[np.ix_(keep, keep)]
            reg = 1e-14 * max(1.0, np.max(np.abs(np.diag(Mk)), initial=1.0))
            cho = scipy.linalg.cho_factor(Mk + reg * np.eye(Mk.shape[0]))
        except (np.linalg.LinAlgError, ValueError):
            broke = True
            break

        def direction(Rc):
            rhs = rp - _op_A(A, [(Rcb - Xb @ Rdb) @ Si for Rcb, Xb, Rdb, Si in zip(Rc, X, Rd, Sinv)])
            dy = np.zeros(nvar)
            dy[keep] = scipy.linalg.cho_solve(cho, rhs[keep])
            dS = [Rdb - Ab for Rdb, Ab in zip(Rd, _op_At(A, dy))]
            dX = []
            for Rcb, Xb, dSb, Si in zip(Rc, X, dS, Sinv):
                D = (Rcb - Xb @ dSb) @ Si
                dX.append(0.5 * (D + D.T))
            return dy, dX, dS

        try:
            XS = [Xb @ Sb for Xb, Sb in zip(X, S)]
            dy, dX, dS = direction([-P for P in XS])
            ap = min(1.0, _max_step(X, dX))
            ad = min(1.0, _max_step(S, dS))
            mu_aff = sum(np.sum((Xb + ap * dXb) * (Sb + ad * dSb))
                         for Xb, dXb, Sb, dSb in zip(X, dX, S, dS)) / ntot
            sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3
            Rc = [sigma * mu * np.eye(Xb.shape[0]) - P - dXb @ dSb
                  for Xb, P, dXb, dSb in zip(X, XS, dX, dS)]
            dy, dX, dS = direction(Rc)
            ap = min(1.0, 0.98 * _max_step(X, dX))
            ad = min(1.0, 0.98 * _max_step(S, dS))
        except (np.linalg.LinAlgError, ValueError):
            broke = True
            break
        X = [Xb + ap * dXb for Xb, dXb in zip(X, dX)]
        S = [Sb + ad * dSb for Sb, dSb in zip(S, dS)]
        y = y + ad * dy
        if not all(np.all(np.isfinite(Xb)) for Xb in X) or not np.all(np.isfinite(y)):
            broke = True
            break

    if status is Status.MAX_ITER:
        score, y, X, _ = best
        if score <= REDUCED_TOL:
            status = Status.OPTIMAL
    out, pos = [], 0
    for s in sizes:
        out.append(X[0][pos:pos + s, pos:pos + s])
        pos += s
    return status, y, out, history, it, broke


def _expand(problem, red, y, X, status, history, it, tol):
    v = red.v0 + red.N @ (red.D * y)
    duals = [red.c_scale * Xb / s for Xb, s in zip(X, red.b_scale)]
    objective = float(problem.c @ v)
    eq = None
    if problem.E is not None and problem.E.shape[0]:
        g = problem.c.copy()
        for b, Z in zip(problem.blocks, duals):
            g -= np.einsum("kij,ij->k", b.F, Z)
        eq = np.linalg.lstsq(problem.E.T, g, rcond=None)[0]
    sol = SdpSolution(status=status, v=v, objective=objective, gap=np.inf, duals=duals,
                      eq_duals=eq, iterations=it, history=history)
    if history:
        last = history[-1]
        sol.gap = abs(last["dual"] - last["primal"]) * red.c_scale
        sol.primal_residual = last["rel_p"]
        sol.dual_residual = last["rel_d"]
    return sol


def solve(problem, tol=1e-9, max_iter=200):
    """Solve an :class:`SdpProblem`.

    Returns an :class:`SdpSolution` whose status is ``OPTIMAL`` when the
    relative primal, dual and gap residuals all fall below ``tol``.  When the
    interior-point iteration stalls, a phase-I problem decides between
    ``INFEASIBLE`` and ``MAX_ITER``.
    """
    red = _reduce(problem)
    if red is None:
        return SdpSolution(status=Status.INFEASIBLE, v=np.full(problem.dim, np.nan),
                           objective=np.nan, gap=np.inf)
    if red.N.shape[1] == 0:
        # the equalities pin every variable
        ok = all(np.linalg.eigvalsh(C).min() >= -tol for C in red.C)
        return SdpSolution(status=Status.OPTIMAL if ok else Status.INFEASIBLE, v=red.v0,
                           objective=float(problem.c @ red.v0) if ok else np.nan,
                           gap=0.0 if ok else np.inf,
                           duals=[np.zeros((b.size, b.size)) for b in problem.blocks],
                           eq_duals=np.linalg.lstsq(problem.E.T, problem.c, rcond=None)[0])
    status, y, X, history, it, broke = _ipm(red, tol, max_iter)
    sol = _expand(problem, red, y, X, status, history, it, tol)
    if status is Status.MAX_ITER:
        ph1 = feasibility(problem, tol=tol, max_iter=max_iter)
        if ph1.status is Status.INFEASIBLE:
            sol.status = Status.INFEASIBLE
        elif broke:
            raise NumericalBreakdown(f"interior-point iteration broke down after {it} steps")
    return sol


def feasibility(problem, tol=1e-9, max_iter=200, slack_floor=-1.0, radius=1e6):
    """Phase I: minimise s subject to ``F_b(v) + s I >= margin_b I``.

    The variable vector is kept in a ball of the given radius and s is
    bounded below by ``slack_floor`` so the auxiliary problem always has a
    bounded optimal set.  Status ``OPTIMAL`` with ``v`` attaining ``s <= 0``
    means feasible; the reported solution has ``objective = s*`` and
    ``v`` without the slack.
    """
    d = problem.dim
    blocks = []
    for b in problem.blocks:
        F = np.concatenate([b.F, np.eye(b.size)[None]], axis=0)
        blocks.append(LmiBlock(b.F0, F, b.margin, b.name))
    # s >= slack_floor
    blocks.append(LmiBlock([[-slack_floor]], np.concatenate([np.zeros((d, 1, 1)), np.ones((1, 1, 1))]),
                           name="slack floor"))
    # ||v|| <= radius
    ball0 = radius * np.eye(d + 1)
    ballF = np.zeros((d + 1, d + 1, d + 1))
    for k in range(d):
        ballF[k, 0, k + 1] = ballF[k, k + 1, 0] = 1.0
    blocks.append(LmiBlock(ball0, ballF, name="ball"))
    E = None if problem.E is None else np.hstack([problem.E, np.zeros((problem.E.shape[0], 1))])
    c = np.zeros(d + 1)
    c[-1] = 1.0
    aux = SdpProblem(c=c, blocks=blocks, E=E, f=problem.f)
    red = _reduce(aux)
    if red is None:
        return SdpSolution(status=Status.INFEASIBLE, v=np.full(d, np.nan), objective=np.inf, gap=np.inf)
    status, y, X, history, it, _ = _ipm(red, tol, max_iter)
    sol = _expand(aux, red, y, X, status, history, it, tol)
    s = sol.v[-1]
    sol.v = sol.v[:-1]
    sol.duals = sol.duals[:len(problem.blocks)]
    sol.objective = float(s)
    if status is Status.OPTIMAL and s > 0:
        sol.status = Status.INFEASIBLE
    return sol


def certifies(problem, v, eq_tol=1e-9):
    """True when ``v`` satisfies every block (margins included) and the equalities."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        return False
    if problem.E is not None and problem.E.size:
        if np.max(np.abs(problem.E @ v - problem.f)) > eq_tol * (1 + np.max(np.abs(problem.f))):
            return False
    return min(lmi_residuals(problem, v), default=0.0) >= 0


def is_feasible(problem, tol=1e-9):
    """Phase I followed by a direct check of the returned point.

    A point that verifiably satisfies the constraints settles the question
    even when the auxiliary problem was not solved to full accuracy.
    """
    sol = feasibility(problem, tol=tol)
    return certifies(problem, sol.v), sol


# --------------------------------------------------------------------------
# building blocks


def trace_slack(gamma_F0, gamma_F, R, offset=0):
    """LMI ``[[Z, Gamma^T], [Gamma, R^{-1}]] >= 0`` for ``trace(Z) >= trace(Gamma^T R Gamma)``.

    ``Gamma`` is affine in the leading variables (``gamma_F0`` is m x nbar,
    ``gamma_F`` is (d, m, nbar)); Z is appended as ``nbar (nbar + 1) / 2``
    new variables starting at ``offset`` (defaults to ``d``).  Returns the
    block, the objective vector selecting ``trace(Z)`` and the total number
    of variables.
    """
    G0 = np.atleast_2d(np.asarray(gamma_F0, dtype=float))
    m, nb = G0.shape
    GF = np.asarray(gamma_F, dtype=float).reshape(-1, m, nb)
    d = GF.shape[0] if not offset else offset
    nz = nb * (nb + 1) // 2
    total = d + nz
    size = nb + m
    F0 = np.zeros((size, size))
    F0[nb:, nb:] = np.linalg.inv(np.atleast_2d(R))
    F0[nb:, :nb] = G0
    F0[:nb, nb:] = G0.T
    F0 = 0.5 * (F0 + F0.T)
    F = np.zeros((total, size, size))
    F[:GF.shape[0], nb:, :nb] = GF
    F[:GF.shape[0], :nb, nb:] = np.transpose(GF, (0, 2, 1))
    cobj = np.zeros(total)
    for k, (i, j) in enumerate(sym_index(nb)):
        F[d + k, i, j] = F[d + k, j, i] = 1.0
        if i == j:
            cobj[d + k] = 1.0
    return LmiBlock(F0, F, 0.0, "trace slack"), cobj, total


def sym_index(n):
    """Upper-triangular index pairs used to parameterise symmetric n x n matrices."""
    return [(i, j) for i in range(n) for j in range(i, n)]


def sym_basis(n):
    out = []
    for i, j in sym_index(n):
        M = np.zeros((n, n))
        M[i, j] = M[j, i] = 1.0
        out.append(M)
    return np.array(out)


def sym_from_vec(v, n):
    M = np.zeros((n, n))
    for x, (i, j) in zip(v, sym_index(n)):
        M[i, j] = M[j, i] = x
    return M


# --------------------------------------------------------------------------
# plain-text dump


def dump(problem, fh=None):
    """Write the problem in a plain block format; returns the text when ``fh`` is None."""
    out = io.StringIO() if fh is None else fh
    d = problem.dim
    q = 0 if problem.E is None else problem.E.shape[0]
    out.write(f"variables {d}\nequalities {q}\nblocks {len(problem.blocks)}\n")
    out.write("sizes " + " ".join(str(b.size) for b in problem.blocks) + "\n")

    def row(vals):
        out.write(" ".join(repr(float(x)) for x in vals) + "\n")

    out.write("c\n")
    row(problem.c)
    if q:
        out.write("E\n")
        for r in problem.E:
            row(r)
        out.write("f\n")
        row(problem.f)
    for idx, b in enumerate(problem.blocks):
        out.write(f"block {idx} margin {b.margin!r}\n")
        for M in (b.F0, *b.F):
            row(M.ravel())
    if fh is None:
        return out.getvalue()


def load(text):
    lines = iter(text.splitlines())

    def header(key):
        k, val = next(lines).split(maxsplit=1)
        assert k == key, f"expected {key}, got {k}"
        return val

    d = int(header("variables"))
    q = int(header("equalities"))
    nb = int(header("blocks"))
    sizes = [int(s) for s in header("sizes").split()] if nb else []
    assert next(lines) == "c"
    c = np.array(next(lines).split(), dtype=float) if d else np.zeros(0)
    E = f = None
    if q:
        assert next(lines) == "E"
        E = np.array([next(lines).split() for _ in range(q)], dtype=float)
        assert next(lines) == "f"
        f = np.array(next(lines).split(), dtype=float)
    blocks = []
    for s in sizes:
        parts = next(lines).split()
        margin = float(parts[3])
        mats = [np.array(next(lines).split(), dtype=float).reshape(s, s) for _ in range(d + 1)]
        blocks.append(LmiBlock(mats[0], np.array(mats[1:]).reshape(d, s, s), margin))
    return SdpProblem(c=c, blocks=blocks, E=E, f=f)
