"""Differential-inequality verification on Hessian fields.

Four checks, all on the linearized operator at the field itself: the
gradient identity for a simple smallest eigenvalue, the inverse-convexity
second-variation bound, the drift inequality satisfied by the smallest
eigenvalue of a solution, and its degenerate-rank extension.  Every check
reports the worst margin found, with positive meaning the inequality failed
at some site beyond the allowed slack.

Routing discipline: a site whose smallest eigenvalue sits in a cluster
(within the multiplicity tolerance) is always handled by the partial-sum
form, never the simple-eigenvalue form; the cluster sum stays smooth where
the individual branches kink.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .errors import BranchError, NotASolutionError
from .grid import GridField, gradient_stack, hessian_stack
from .operators import OperatorModel, lewy_modulus
from .spectral import DEFAULT_GROUPING_TOL, as_sym_matrix, sigma_k

__all__ = [
    "ViscosityReport",
    "check_gradient_identity",
    "check_inverse_convexity",
    "check_supersolution_lambda1",
    "check_higher_rank_inequality",
]

INEQUALITY_IDS = ("eq4.1", "eq4.2", "eq4.3", "eq4.5", "eq_final")


@dataclass(frozen=True)
class ViscosityReport:
    inequality: str
    sites_checked: int
    worst_violation: float
    drift_bound: float
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.inequality not in INEQUALITY_IDS:
            raise ValueError(f"unknown inequality id {self.inequality!r}")
        if not math.isfinite(self.worst_violation):
            raise ValueError("worst violation must be finite")


def _interior_spectra(u: GridField):
    H = hessian_stack(u)
    lam, vec = np.linalg.eigh(H)
    return H, lam, vec


def _branch_field(u: GridField, values: np.ndarray) -> GridField:
    """Wrap node values living at u's interior as their own grid field."""
    origin = np.asarray(u.origin, dtype=float) + u.spacing_vector
    return GridField(values.shape, origin, u.spacing, values.copy())


def _eigen_value_fn(op: OperatorModel):
    if op.kind == "slag_phase":
        return lambda lam: float(np.sum(np.arctan(lam)))
    if op.kind == "sigma2_positive_branch":
        m = lewy_modulus(op.n)

        def surrogate(lam):
            mu = 1.0 / (np.asarray(lam, dtype=float) + m)
            return -sigma_k(mu, op.n - 1) / sigma_k(mu, op.n - 2)

        return surrogate
    raise ValueError(f"no inverse-convexity form for operator kind {op.kind!r}")


def _eigen_derivatives(op: OperatorModel, lam: np.ndarray) -> np.ndarray:
    """First derivatives of the eigenvalue function at the spectrum lam."""
    lam = np.asarray(lam, dtype=float)
    if op.kind == "slag_phase":
        return 1.0 / (1.0 + lam * lam)
    m = lewy_modulus(op.n)
    n = op.n
    mu = 1.0 / (lam + m)
    s_nm2 = sigma_k(mu, n - 2)
    s_nm1 = sigma_k(mu, n - 1)
    out = np.empty(n)
    for i in range(n):
        rest = np.delete(mu, i)
        d_nm1 = sigma_k(rest, n - 2)
        d_nm2 = sigma_k(rest, n - 3) if n >= 3 else 0.0
        dratio = (d_nm1 * s_nm2 - s_nm1 * d_nm2) / (s_nm2 * s_nm2)
        out[i] = dratio * mu[i] * mu[i]
    return out


def _regime_shift(op: OperatorModel) -> float:
    # slag needs positive matrices; the shifted surrogate needs lam > -m
    return 0.0 if op.kind == "slag_phase" else lewy_modulus(op.n)


def check_inverse_convexity(op: OperatorModel, M, X, t: float) -> float:
    """Second directional difference of the operator against its convexity bound.

    Returns LHS - RHS with LHS = -(F(M+tX) - 2F(M) + F(M-tX))/t^2 and
    RHS = 2 sum_{i,j>1} F_ii (lam_j + shift)^{-1} Xij^2 in M's eigenbasis
    (ascending order, so index 1 is the smallest eigenvalue).  X must carry
    no weight on the first eigendirection: those are the drift terms,
    handled by the supersolution checks instead.  Nonpositive up to O(t^2)
    for every admissible input.
    """
    if not t > 0.0:
        raise ValueError("step t must be positive")
    fn = _eigen_value_fn(op)
    shift = _regime_shift(op)
    M = as_sym_matrix(M).entries
    X = as_sym_matrix(X).entries
    if M.shape[0] != op.n or X.shape != M.shape:
        raise ValueError("matrix dimensions do not match the operator")
    lam, V = np.linalg.eigh(M)
    if lam[0] + shift <= 0.0:
        raise BranchError(
            f"matrix out of the inverse-convex regime: smallest eigenvalue "
            f"{lam[0]:.6g} does not exceed {-shift:.6g}"
        )
    X_eig = V.T @ X @ V
    leak = max(np.max(np.abs(X_eig[0, :])), np.max(np.abs(X_eig[:, 0])))
    scale = np.linalg.norm(X_eig)
    if scale > 0.0 and leak > 1e-10 * scale:
        raise ValueError(
            "direction leaks onto the first eigendirection; those terms are "
            "drift, not second variation"
        )
    for side in (1.0, -1.0):
        stepped = np.linalg.eigvalsh(M + side * t * X)
        if stepped[0] + shift <= 0.0:
            raise BranchError("difference step leaves the inverse-convex regime")
    lhs = -(fn(np.linalg.eigvalsh(M + t * X)) - 2.0 * fn(lam)
            + fn(np.linalg.eigvalsh(M - t * X))) / (t * t)
    f_i = _eigen_derivatives(op, lam)
    weights = 1.0 / (lam + shift)
    sub = X_eig[1:, 1:]
    rhs = 2.0 * float(np.einsum("i,j,ij->", f_i[1:], weights[1:], sub * sub))
    return lhs - rhs


def check_gradient_identity(
    u: GridField,
    multiplicity_tol: float | None = None,
    slack_scale: float = 1.0,
) -> ViscosityReport:
    """Compare the gradient of the smallest-eigenvalue field with the gradient
    of the frozen-direction Hessian entry.

    At a site where the smallest eigenvalue is simple, freezing its unit
    eigenvector e and differentiating e'(D2u)e reproduces the eigenvalue's
    own derivative; the two central-difference gradients must agree to
    O(h^2).  Sites inside a cluster are excluded and counted in the notes.
    """
    if multiplicity_tol is None:
        multiplicity_tol = 10.0 * DEFAULT_GROUPING_TOL
    H, lam, vec = _interior_spectra(u)
    lam1 = lam[..., 0]
    h = u.spacing_vector
    n = u.n_dims
    ishape = lam1.shape
    if any(s < 3 for s in ishape):
        raise ValueError("grid too small: no site has a complete neighborhood")
    worst = 0.0
    simple = 0
    repeated = 0
    hess_scale = float(np.max(np.linalg.norm(H, axis=(-2, -1))))
    for site in np.ndindex(*(s - 2 for s in ishape)):
        idx = tuple(i + 1 for i in site)
        gap = lam[idx][1] - lam[idx][0]
        if gap <= multiplicity_tol:
            repeated += 1
            continue
        simple += 1
        e1 = vec[idx][:, 0]
        defect = 0.0
        for ax in range(n):
            up = list(idx)
            dn = list(idx)
            up[ax] += 1
            dn[ax] -= 1
            up, dn = tuple(up), tuple(dn)
            g_lam = (lam1[up] - lam1[dn]) / (2.0 * h[ax])
            g_u11 = (e1 @ H[up] @ e1 - e1 @ H[dn] @ e1) / (2.0 * h[ax])
            defect = max(defect, abs(g_lam - g_u11))
        worst = max(worst, defect)
    slack = slack_scale * float(np.max(h) ** 2) * max(1.0, hess_scale)
    return ViscosityReport(
        inequality="eq4.1",
        sites_checked=simple,
        worst_violation=worst - slack,
        drift_bound=0.0,
        notes={
            "simple_sites": simple,
            "repeated_sites": repeated,
            "raw_defect": worst,
            "slack": slack,
        },
    )


def _residuals_from_spectra(op: OperatorModel, lam: np.ndarray) -> np.ndarray:
    if op.kind == "slag_phase":
        return np.sum(np.arctan(lam), axis=-1) - op.level
    if op.kind == "sigma2_positive_branch":
        s1 = np.sum(lam, axis=-1)
        s2 = 0.5 * (s1 * s1 - np.sum(lam * lam, axis=-1))
        return s2 - op.level
    raise ValueError(f"operator kind {op.kind!r} is not a field equation")


def _linearization_batch(op: OperatorModel, H, lam, vec) -> np.ndarray:
    if op.kind == "slag_phase":
        w = 1.0 / (1.0 + lam * lam)
        return np.einsum("...ik,...k,...jk->...ij", vec, w, vec)
    s1 = np.trace(H, axis1=-2, axis2=-1)
    eye = np.eye(op.n)
    return s1[..., None, None] * eye - H


def _require_solution(op: OperatorModel, lam: np.ndarray, residual_tol: float):
    res = np.abs(_residuals_from_spectra(op, lam))
    worst = float(res.max())
    if worst > residual_tol:
        at = np.unravel_index(int(res.argmax()), res.shape)
        raise NotASolutionError(
            f"field does not solve the equation: residual {worst:.3e} at "
            f"interior node {tuple(int(i) + 1 for i in at)} exceeds "
            f"{residual_tol:.1e}",
            residual=worst,
        )
    if op.kind == "sigma2_positive_branch" and float(np.sum(lam, axis=-1).min()) <= 0.0:
        raise NotASolutionError("field leaves the positive branch: trace <= 0")


def _inner_band_mask(core_shape, full_shape, fraction: float) -> np.ndarray:
    """Sites within the central fraction of the box, in index space.

    The differential inequalities are interior statements: their constants
    depend on derivative bounds that degrade toward the corners of a box
    domain, so the checked band must stay compactly inside as h shrinks.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("interior fraction must lie in (0, 1]")
    mask = np.ones(core_shape, dtype=bool)
    for ax, (sz, full) in enumerate(zip(core_shape, full_shape)):
        idx = np.arange(sz) + 2.0
        pos = np.abs(idx - 0.5 * (full - 1)) / (0.5 * (full - 1))
        keep = pos <= fraction + 1e-12
        shape = [1] * len(core_shape)
        shape[ax] = sz
        mask &= keep.reshape(shape)
    return mask


def _routed_terms(u, op, H, lam, vec, multiplicity_tol):
    """Per-site second-order term y and gradient magnitude x of the partial
    sum of the smallest eigenvalue's cluster."""
    n = u.n_dims
    core = tuple(slice(1, -1) for _ in range(n))
    fprime = _linearization_batch(op, H, lam, vec)[core]
    y_by_s = []
    x_by_s = []
    for s in range(1, n + 1):
        partial = _branch_field(u, lam[..., :s].sum(axis=-1))
        d2 = hessian_stack(partial)
        y_by_s.append(np.einsum("...ij,...ij->...", fprime, d2))
        x_by_s.append(np.linalg.norm(gradient_stack(partial), axis=-1))
    mult = np.count_nonzero(
        lam[core] - lam[core][..., :1] <= multiplicity_tol, axis=-1
    )
    return np.choose(mult - 1, y_by_s), np.choose(mult - 1, x_by_s), mult


def check_supersolution_lambda1(
    u: GridField,
    op: OperatorModel,
    residual_tol: float = 1e-8,
    multiplicity_tol: float | None = None,
    drift_bound: float | None = None,
    grad_floor: float = 1e-3,
    interior_fraction: float = 0.5,
) -> ViscosityReport:
    """Drift inequality for the smallest eigenvalue of a solution field.

    At simple sites the margin is L_F(lam_1) - B |D lam_1|, with L_F the
    linearized operator's second-order part.  The drift coefficient B is,
    unless supplied, the supremum over simple sites of the per-site
    least-norm coefficient covering the second-order term; sites whose
    gradient falls under grad_floor (relative to the largest seen) take no
    drift credit, so a genuine interior critical point must satisfy the
    inequality outright.  Clustered sites use the cluster partial sum, which
    stays differentiable where the single branch kinks.  Sites are limited
    to the central interior_fraction of the box, the region where the
    continuous inequality's constants are uniform.  Refuses fields that do
    not solve the operator's equation: the inequality is derived by
    differentiating that equation twice.
    """
    if multiplicity_tol is None:
        multiplicity_tol = 10.0 * DEFAULT_GROUPING_TOL
    H, lam, vec = _interior_spectra(u)
    if any(s < 3 for s in lam.shape[:-1]):
        raise ValueError("grid too small: no site has a complete neighborhood")
    _require_solution(op, lam, residual_tol)
    y, x, mult = _routed_terms(u, op, H, lam, vec, multiplicity_tol)
    band = _inner_band_mask(y.shape, u.shape, interior_fraction)
    y, x, mult = y[band], x[band], mult[band]
    simple = mult == 1
    n_simple = int(np.count_nonzero(simple))
    n_repeated = int(simple.size - n_simple)

    floor = grad_floor * max(1.0, float(x.max()) if x.size else 0.0)
    covered = x > floor
    if drift_bound is None:
        fit = covered & simple
        if fit.any():
            drift_bound = float(np.max(np.maximum(y[fit], 0.0) / x[fit]))
        else:
            drift_bound = 0.0
    margins = np.where(covered, y - drift_bound * x, y)
    worst = float(margins.max())
    return ViscosityReport(
        inequality="eq4.3" if n_repeated == 0 else "eq4.5",
        sites_checked=int(simple.size),
        worst_violation=worst,
        drift_bound=drift_bound,
        notes={
            "simple_sites": n_simple,
            "repeated_sites": n_repeated,
            "interior_fraction": interior_fraction,
            "max_second_order_term": float(np.abs(y).max()),
        },
    )


def check_higher_rank_inequality(
    u: GridField,
    op: OperatorModel,
    a: int,
    residual_tol: float = 1e-8,
    multiplicity_tol: float | None = None,
    tol_rank: float = 1e-6,
    interior_fraction: float = 0.5,
) -> ViscosityReport:
    """Drift inequality for the first nonzero eigenvalue above a degenerate
    block of dimension a.

    Requires the lowest a eigenvalue branches to vanish across the field
    (within tol_rank times the Hessian scale); the next branch then obeys
    L_F(lam) <= C lam + B |D lam|, with (C, B) fitted over the central
    interior_fraction of the box by nonnegative least squares.  a = 0 is
    exactly the simple-eigenvalue check and is delegated to it.
    """
    if not 0 <= a < u.n_dims:
        raise ValueError(f"degenerate block size {a} outside 0..{u.n_dims - 1}")
    if a == 0:
        return check_supersolution_lambda1(
            u,
            op,
            residual_tol=residual_tol,
            multiplicity_tol=multiplicity_tol,
            interior_fraction=interior_fraction,
        )
    if multiplicity_tol is None:
        multiplicity_tol = 10.0 * DEFAULT_GROUPING_TOL
    H, lam, vec = _interior_spectra(u)
    if any(s < 3 for s in lam.shape[:-1]):
        raise ValueError("grid too small: no site has a complete neighborhood")
    _require_solution(op, lam, residual_tol)
    hess_scale = float(np.max(np.linalg.norm(H, axis=(-2, -1))))
    zero_spread = float(np.abs(lam[..., :a]).max())
    if zero_spread > tol_rank * max(1.0, hess_scale):
        raise ValueError(
            f"lowest {a} eigenvalue branch(es) not identically zero: "
            f"max |lambda| = {zero_spread:.3e}"
        )
    n = u.n_dims
    core = tuple(slice(1, -1) for _ in range(n))
    fprime = _linearization_batch(op, H, lam, vec)[core]

    # cluster containing branch a: indices within tolerance of lam_a
    width = np.zeros(lam[core].shape[:-1], dtype=int)
    for j in range(a, n):
        width += (lam[core][..., j] - lam[core][..., a] <= multiplicity_tol).astype(int)

    y_by_w = []
    x_by_w = []
    v_by_w = []
    for w in range(1, n - a + 1):
        group = _branch_field(u, lam[..., a : a + w].sum(axis=-1))
        d2 = hessian_stack(group)
        y_by_w.append(np.einsum("...ij,...ij->...", fprime, d2))
        x_by_w.append(np.linalg.norm(gradient_stack(group), axis=-1))
        v_by_w.append(group.as_array()[core])
    y = np.choose(width - 1, y_by_w)
    x = np.choose(width - 1, x_by_w)
    v = np.choose(width - 1, v_by_w)
    band = _inner_band_mask(y.shape, u.shape, interior_fraction)
    y, x, v, width = y[band], x[band], v[band], width[band]

    design = np.stack([v, x], axis=1)
    target = np.maximum(y, 0.0)
    coeffs, _ = nnls(design, target)
    C, B = float(coeffs[0]), float(coeffs[1])
    margins = y - C * v - B * x
    worst = float(margins.max())
    n_simple = int(np.count_nonzero(width == 1))
    return ViscosityReport(
        inequality="eq_final",
        sites_checked=int(width.size),
        worst_violation=worst,
        drift_bound=B,
        notes={
            "simple_sites": n_simple,
            "repeated_sites": int(width.size - n_simple),
            "growth_coefficient": C,
            "degenerate_block": a,
            "interior_fraction": interior_fraction,
        },
    )
