"""Canonical exosystems, their period, flow and invariant ellipsoids.

The generator is block diagonal: a zero block for the constant states
followed by one ``omega * kron(I, [[0, 1], [-1, 0]])`` block per distinct
nonzero frequency, frequencies ascending.  Initial states are normalised so
that the admissible set is ``|x_l| <= 1`` for every constant state and
``||x_h||_2 <= 1`` for every harmonic pair; the per-state maxima live in the
output matrix instead.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import matkit
from .exceptions import DimensionMismatch, DuplicateFrequency, IrrationalRatio

J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
DENOMINATOR_CAP = 10**6


@dataclass(frozen=True)
class FrequencyBlock:
    omega: float
    start: int
    size: int

    @property
    def slice(self):
        return slice(self.start, self.start + self.size)


@dataclass(frozen=True)
class Exosystem:
    A: np.ndarray
    C: np.ndarray
    blocks: tuple
    period: float
    x_boundary: np.ndarray
    scale: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def p(self):
        return self.C.shape[0]

    @property
    def frequencies(self):
        """Frequency multiset, one entry per eigenvalue pair or constant state."""
        out = []
        for b in self.blocks:
            out += [b.omega] * (b.size if b.omega == 0 else b.size // 2)
        return tuple(out)

    @property
    def n_constant(self):
        return sum(b.size for b in self.blocks if b.omega == 0)

    @property
    def constant_states(self):
        return list(range(self.n_constant))

    @property
    def harmonic_pairs(self):
        """Start index of every harmonic 2-state subsystem."""
        return list(range(self.n_constant, self.n, 2))


def period(frequencies):
    """Smallest T > 0 with ``T * omega / (2 pi)`` integral for every nonzero omega.

    Frequency ratios are rationalised with denominators capped at 1e6.
    An all-zero spectrum has no intrinsic period; 1 s is returned.
    """
    w = sorted({float(x) for x in frequencies if x != 0})
    if any(x < 0 for x in w):
        raise ValueError("frequencies must be nonnegative")
    if not w:
        return 1.0
    base = w[0]
    lcm = 1
    for x in w[1:]:
        ratio = x / base
        frac = Fraction(ratio).limit_denominator(DENOMINATOR_CAP)
        if abs(float(frac) - ratio) > 1e-14 * ratio:
            raise IrrationalRatio(f"{x}/{base} has no rational approximation "
                                  f"with denominator <= {DENOMINATOR_CAP}")
        lcm = lcm * frac.denominator // math.gcd(lcm, frac.denominator)
    return 2 * math.pi * lcm / base


def build_exosystem(freq_spec, raw_output, amplitudes=None):
    """Assemble the canonical exosystem.

    Parameters
    ----------
    freq_spec : sequence of (omega, multiplicity)
        Distinct nonnegative frequencies.  They are sorted ascending; the
        columns of ``raw_output`` and the ``amplitudes`` follow the order
        given here and are permuted along.
    raw_output : (p, nbar) array
        Output map in un-normalised coordinates.
    amplitudes : sequence, optional
        One positive maximum per constant state (step height) and per
        harmonic pair (amplitude).  They are folded into the output map so
        that the boundary vector becomes ``[1 .. 1, 0 1, .., 0 1]``.
    """
    spec = [(float(w), int(m)) for w, m in freq_spec]
    omegas = [w for w, _ in spec]
    if len(set(omegas)) != len(omegas):
        raise DuplicateFrequency(f"frequencies must be distinct, got {omegas}")
    if any(w < 0 for w in omegas) or any(m < 1 for _, m in spec):
        raise ValueError("frequencies must be nonnegative and multiplicities positive")

    # per-group column ranges and amplitude ranges in the caller's order
    cols, amps, pos, apos = [], [], 0, 0
    for w, m in spec:
        width = m if w == 0 else 2 * m
        cols.append(list(range(pos, pos + width)))
        amps.append(list(range(apos, apos + m)))
        pos += width
        apos += m
    nbar = pos
    raw = np.atleast_2d(np.asarray(raw_output, dtype=float))
    if raw.shape[1] != nbar:
        raise DimensionMismatch(f"output map has {raw.shape[1]} columns, exosystem order is {nbar}")
    if amplitudes is None:
        amplitudes = np.ones(apos)
    amplitudes = np.asarray(amplitudes, dtype=float).ravel()
    if amplitudes.size != apos:
        raise DimensionMismatch(f"expected {apos} amplitudes, got {amplitudes.size}")
    if np.any(amplitudes <= 0):
        raise ValueError("amplitudes must be positive")

    order = np.argsort(omegas, kind="stable")
    perm_cols = [c for k in order for c in cols[k]]
    perm_amps = [a for k in order for a in amps[k]]
    raw = raw[:, perm_cols]
    amplitudes = amplitudes[perm_amps]

    A = np.zeros((nbar, nbar))
    blocks, scale, start, ai = [], [], 0, 0
    for k in order:
        w, m = spec[k]
        if w == 0:
            size = m
            scale += list(amplitudes[ai:ai + m])
        else:
            size = 2 * m
            A[start:start + size, start:start + size] = w * np.kron(np.eye(m), J2)
            scale += [a for a in amplitudes[ai:ai + m] for _ in (0, 1)]
        blocks.append(FrequencyBlock(w, start, size))
        start += size
        ai += m
    scale = np.asarray(scale)

    xb = np.zeros(nbar)
    for b in blocks:
        if b.omega == 0:
            xb[b.slice] = 1.0
        else:
            xb[b.start + 1:b.start + b.size:2] = 1.0

    return Exosystem(A=A, C=raw * scale, blocks=tuple(blocks),
                     period=period(omegas), x_boundary=xb, scale=scale)


def check_assumptions(exo, tol=1e-12):
    """Imaginary-axis, semisimple spectrum and rational frequency ratios."""
    spec = matkit.eig(exo.A)
    if np.max(np.abs(spec.values.real), initial=0.0) > tol:
        return False
    if not spec.semisimple:
        return False
    try:
        period(exo.frequencies)
    except IrrationalRatio:
        return False
    return True


def flow(exo, x0, t):
    """Exact exosystem trajectory ``exp(A t) x0``.

    ``t`` may be a scalar (returns shape ``(nbar,)``) or a 1-d array
    (returns shape ``(len(t), nbar)``).
    """
    x0 = np.asarray(x0, dtype=float)
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty((t.size, exo.n))
    for b in exo.blocks:
        if b.omega == 0:
            out[:, b.slice] = x0[b.slice]
            continue
        c = np.cos(b.omega * t)[:, None]
        s = np.sin(b.omega * t)[:, None]
        a = x0[b.start:b.start + b.size:2]
        d = x0[b.start + 1:b.start + b.size:2]
        out[:, b.start:b.start + b.size:2] = c * a + s * d
        out[:, b.start + 1:b.start + b.size:2] = -s * a + c * d
    return out[0] if scalar else out


def ellipsoid_basis(exo):
    """Basis of the block-structured P with ``P A + A^T P = 0``.

    One ``e_l e_l^T`` per constant state and one embedded ``I_2`` per
    harmonic pair: a symmetric 2x2 block commuting with J is a multiple of
    the identity.
    """
    basis = []
    for l in exo.constant_states:
        P = np.zeros((exo.n, exo.n))
        P[l, l] = 1.0
        basis.append(P)
    for h in exo.harmonic_pairs:
        P = np.zeros((exo.n, exo.n))
        P[h, h] = P[h + 1, h + 1] = 1.0
        basis.append(P)
    return basis


def ellipsoid_diagonal(exo, coeffs):
    """Diagonal of ``sum_k coeffs[k] * basis[k]`` without forming matrices."""
    coeffs = np.asarray(coeffs, dtype=float)
    m0 = exo.n_constant
    return np.concatenate([coeffs[:m0], np.repeat(coeffs[m0:], 2)])


def _radical_inverse(k, base):
    inv, f = 0.0, 1.0 / base
    while k > 0:
        k, digit = divmod(k, base)
        inv += digit * f
        f /= base
    return inv


def _primes(count):
    out, c = [], 2
    while len(out) < count:
        if all(c % p for p in out):
            out.append(c)
        c += 1
    return out


def sample_boundary(exo, count):
    """Deterministic points on the boundary of the normalised initial set.

    Constant states take the sign ``+1`` or ``-1`` from a Halton radical
    inverse.  Every harmonic pair sits at ``(sin theta, cos theta)`` on a grid
    of ``M`` equally spaced phases, ``M`` the largest power of two not above
    ``count / 2``; pair ``h`` steps through the grid with the odd stride
    ``2 h + 1``, shifted once per sweep so phases do not lock to the signs.
    Sample 0 is the boundary vector itself.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    m0 = exo.n_constant
    pairs = exo.harmonic_pairs
    bases = _primes(m0)
    levels = 1 << max(0, int(math.floor(math.log2(max(count / 2, 1)))))
    out = np.zeros((count, exo.n))
    for k in range(count):
        for l in range(m0):
            out[k, l] = 1.0 if _radical_inverse(k, bases[l]) < 0.5 else -1.0
        for h, start in enumerate(pairs):
            idx = (k * (2 * h + 1) + k // levels) % levels
            theta = 2 * np.pi * idx / levels
            out[k, start] = np.sin(theta)
            out[k, start + 1] = np.cos(theta)
    return out


def support(exo, c):
    """``max c^T x`` over the normalised initial set (exact)."""
    c = np.asarray(c, dtype=float)
    m0 = exo.n_constant
    pairs = c[m0:].reshape(-1, 2)
    return float(np.abs(c[:m0]).sum() + np.linalg.norm(pairs, axis=1).sum())


def contains(exo, x, tol=1e-12):
    x = np.asarray(x, dtype=float)
    m0 = exo.n_constant
    if np.any(np.abs(x[:m0]) > 1 + tol):
        return False
    return bool(np.all(np.linalg.norm(x[m0:].reshape(-1, 2), axis=1) <= 1 + tol))
