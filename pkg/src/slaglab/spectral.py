"""Dense symmetric eigen-machinery with multiplicity bookkeeping.

Everything downstream (phase operators, rotations, eigenvalue fields) consumes
ordered spectra of small symmetric matrices.  The solver here is a cyclic
Jacobi iteration: deterministic, dimension-agnostic, and accurate to a fixed
multiple of machine precision, which keeps the repeated-eigenvalue bookkeeping
reproducible across platforms.

The one-sided derivative of an ordered eigenvalue follows the block rule: if
lambda_i(M) sits in a multiplicity block with eigenspace E, then

    d/dt lambda_i(M + t A) at t = 0+  =  (position-within-block eigenvalue of A restricted to E),

with the restricted eigenvalues sorted ascending.  Two-sided differentiability
holds exactly when the matching eigenvalue from the other end of the block
agrees, so the bottom eigenvalue of a block is differentiable only when the
restriction of A to E is a multiple of the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import JacobiConvergenceError

DEFAULT_GROUPING_TOL = 1e-9
_JACOBI_MAX_SWEEPS = 30
_JACOBI_OFFDIAG_FACTOR = 1e-13


@dataclass(frozen=True)
class SymMatrix:
    """A real symmetric matrix with validated, exactly symmetric storage.

    The constructor symmetrizes inputs whose asymmetry is at roundoff scale
    (relative 1e-8) and rejects anything worse, so ``entries[i, j] ==
    entries[j, i]`` holds exactly afterwards.
    """

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if a.shape[0] == 0:
            raise ValueError("empty matrix")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix entries must be finite")
        skew = np.max(np.abs(a - a.T)) if a.size else 0.0
        scale = max(1.0, float(np.max(np.abs(a))))
        if skew > 1e-8 * scale:
            raise ValueError(f"matrix is not symmetric: max asymmetry {skew:.3e}")
        sym = 0.5 * (a + a.T)
        sym.flags.writeable = False
        object.__setattr__(self, "entries", sym)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def frobenius(self) -> float:
        return float(np.linalg.norm(self.entries))


def as_sym_matrix(M) -> SymMatrix:
    """Coerce an array-like or SymMatrix to SymMatrix."""
    if isinstance(M, SymMatrix):
        return M
    return SymMatrix(np.asarray(M, dtype=float))


@dataclass(frozen=True)
class EigenBlock:
    """Inclusive index range [start, stop] of eigenvalues equal under tolerance."""

    start: int
    stop: int
    value: float

    @property
    def size(self) -> int:
        return self.stop - self.start + 1

    def __contains__(self, i: int) -> bool:
        return self.start <= i <= self.stop


@dataclass(frozen=True)
class Spectrum:
    """Ascending eigenvalues, matching orthonormal eigenvector columns, blocks."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    blocks: tuple[EigenBlock, ...]

    def __post_init__(self):
        for arr in (self.eigenvalues, self.eigenvectors):
            arr.flags.writeable = False

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def block_of(self, i: int) -> EigenBlock:
        if not 0 <= i < self.dim:
            raise IndexError(f"eigenvalue index {i} out of range for dimension {self.dim}")
        for blk in self.blocks:
            if i in blk:
                return blk
        raise AssertionError("blocks do not partition the index range")

    def reconstruct(self) -> np.ndarray:
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T


def _jacobi(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi on a working copy; returns (diagonalized a, accumulated V)."""
    n = a.shape[0]
    v = np.eye(n)
    norm = np.linalg.norm(a)
    target = _JACOBI_OFFDIAG_FACTOR * norm
    if n == 1 or norm == 0.0:
        return a, v

    def offdiag_norm() -> float:
        off = a - np.diag(np.diag(a))
        return float(np.linalg.norm(off))

    for _ in range(_JACOBI_MAX_SWEEPS):
        if offdiag_norm() <= target:
            return a, v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                # pivot too small to move the diagonal: flush it and move on
                if abs(apq) < 1e-300 or abs(diff) + 100.0 * abs(apq) == abs(diff):
                    a[p, q] = a[q, p] = 0.0
                    continue
                tau = diff / (2.0 * apq)
                t = math.copysign(1.0, tau) / (abs(tau) + math.hypot(1.0, tau))
                c = 1.0 / math.hypot(1.0, t)
                s = t * c
                app, aqq = a[p, p], a[q, q]
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = a[q, p] = 0.0
                for i in range(n):
                    if i == p or i == q:
                        continue
                    aip, aiq = a[i, p], a[i, q]
                    a[i, p] = a[p, i] = c * aip - s * aiq
                    a[i, q] = a[q, i] = s * aip + c * aiq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    final = offdiag_norm()
    if final > target:
        raise JacobiConvergenceError(_JACOBI_MAX_SWEEPS, final, target)
    return a, v


def _group_blocks(lam: np.ndarray, tol: float, scale: float) -> tuple[EigenBlock, ...]:
    thr = tol * max(1.0, scale)
    blocks = []
    start = 0
    for i in range(1, lam.shape[0]):
        if lam[i] - lam[i - 1] > thr:
            blocks.append(EigenBlock(start, i - 1, float(np.mean(lam[start:i]))))
            start = i
    blocks.append(EigenBlock(start, lam.shape[0] - 1, float(np.mean(lam[start:]))))
    return tuple(blocks)


def eig_sym(M, tol: float = DEFAULT_GROUPING_TOL) -> Spectrum:
    """Full spectrum of a symmetric matrix, ascending, with multiplicity blocks.

    ``tol`` is the relative grouping tolerance: eigenvalues whose gap is below
    ``tol * max(1, frobenius(M))`` are chained into one block.  Eigenvector
    signs are fixed by making each column's largest-magnitude component
    positive (first such component on ties).
    """
    m = as_sym_matrix(M)
    if tol <= 0:
        raise ValueError("grouping tolerance must be positive")
    work = np.array(m.entries, dtype=float)
    diag, vecs = _jacobi(work)
    lam = np.diag(diag).copy()
    order = np.argsort(lam, kind="stable")
    lam = lam[order]
    vecs = vecs[:, order]
    for j in range(vecs.shape[1]):
        k = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[k, j] < 0:
            vecs[:, j] = -vecs[:, j]
    blocks = _group_blocks(lam, tol, m.frobenius())
    return Spectrum(lam, vecs, blocks)


def sigma_k(lam, k: int) -> float:
    """Elementary symmetric polynomial sigma_k of the entries of ``lam``.

    Evaluated by the stable coefficient recurrence (each entry folded into the
    running polynomial), not by enumerating all k-subsets.
    """
    x = np.asarray(lam, dtype=float).ravel()
    n = x.shape[0]
    if not isinstance(k, (int, np.integer)):
        raise TypeError("k must be an integer")
    if k < 0 or k > n:
        raise ValueError(f"sigma_{k} undefined for {n} eigenvalues")
    if not np.all(np.isfinite(x)):
        raise ValueError("eigenvalues must be finite")
    e = np.zeros(k + 1)
    e[0] = 1.0
    for idx, val in enumerate(x):
        top = min(k, idx + 1)
        for j in range(top, 0, -1):
            e[j] += val * e[j - 1]
    return float(e[k])


def _restricted_spectrum(M, A, i: int, tol: float):
    m = as_sym_matrix(M)
    a = as_sym_matrix(A)
    if a.dim != m.dim:
        raise ValueError(f"dimension mismatch: M is {m.dim}x{m.dim}, A is {a.dim}x{a.dim}")
    spec = eig_sym(m, tol=tol)
    blk = spec.block_of(i)
    basis = spec.eigenvectors[:, blk.start : blk.stop + 1]
    restricted = basis.T @ a.entries @ basis
    nu = eig_sym(SymMatrix(0.5 * (restricted + restricted.T))).eigenvalues
    return blk, nu, a


def one_sided_eig_derivative(M, A, i: int, tol: float = DEFAULT_GROUPING_TOL) -> float:
    """Right derivative of the i-th ascending eigenvalue of M along direction A.

    ``i`` is 0-based.  With [j, k] the multiplicity block of lambda_i and E its
    eigenspace, the derivative is the (i - j)-th ascending eigenvalue of A
    restricted to E.  For a simple eigenvalue this reduces to the classical
    first-order perturbation value q_i' A q_i.
    """
    blk, nu, _ = _restricted_spectrum(M, A, i, tol)
    return float(nu[i - blk.start])


def is_direction_differentiable(M, A, i: int, tol: float = DEFAULT_GROUPING_TOL) -> bool:
    """Whether t -> lambda_i(M + t A) is two-sided differentiable at t = 0.

    True exactly when the one-sided derivatives from the right and the left
    agree, i.e. the restricted eigenvalues at mirrored in-block positions
    coincide.  Always true for simple eigenvalues; for the bottom eigenvalue
    of a block it forces the restriction of A to be scalar.
    """
    blk, nu, a = _restricted_spectrum(M, A, i, tol)
    r = i - blk.start
    mirrored = blk.size - 1 - r
    return bool(abs(nu[r] - nu[mirrored]) <= tol * max(1.0, a.frobenius()))
