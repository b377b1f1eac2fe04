"""Damped-Newton Dirichlet solver for the angle-sum and sigma_2 equations.

The discrete equation enforces F(D^2_h u) = level at every strictly interior
node, with D^2_h the second-order stencils from the grid module and the
boundary ring held fixed.  Newton directions come from conjugate gradients on
the symmetrized linearization (diagonally preconditioned), sharpened by a few
defect-correction passes against the unsymmetrized operator; steps are
backtracked until the interior sup-norm of the residual decreases, and for
sigma_2 until the iterate keeps a positive Laplacian (the elliptic branch).

The default initial guess blends the boundary data harmonically; for sigma_2
a quadratic lift with the trace estimated from a least-squares quadratic fit
of the boundary values is added, which keeps sigma_1 > 0 exactly and starts
the iteration at the solution itself whenever the data is quadratic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BranchError, NewtonStagnationError
from .grid import GridField, boundary_mask, hessian_stack, residual_field

__all__ = ["SolveConfig", "SolveReport", "solve_dirichlet"]


@dataclass(frozen=True)
class SolveConfig:
    max_newton_iters: int = 50
    residual_tol: float = 1e-10
    backtrack_factor: float = 0.5
    sufficient_decrease: float = 1e-4
    max_backtracks: int = 40
    linear_solver_tol: float = 1e-6

    def __post_init__(self):
        if self.max_newton_iters < 1:
            raise ValueError("need at least one Newton iteration")
        if self.max_backtracks < 1:
            raise ValueError("need at least one line search trial")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ValueError("backtracking factor must sit in (0, 1)")
        for name in ("residual_tol", "sufficient_decrease", "linear_solver_tol"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    final_residual: float
    min_ellipticity: float
    branch_flag: bool
    residual_history: tuple[float, ...] = field(default_factory=tuple)


def _interior_index_map(shape) -> tuple[np.ndarray, np.ndarray]:
    """Lattice of interior unknown ids (-1 on the boundary) and flat ids."""
    ids = -np.ones(shape, dtype=np.int64)
    core = tuple(slice(1, -1) for _ in shape)
    count = int(np.prod([s - 2 for s in shape]))
    ids[core] = np.arange(count).reshape([s - 2 for s in shape])
    return ids, count


def _operator_gradients(hessians: np.ndarray, op) -> np.ndarray:
    """dF/dM over a stack of Hessians, one symmetric matrix per node."""
    n = hessians.shape[-1]
    if op.kind == "sigma2_positive_branch":
        tr = np.trace(hessians, axis1=-2, axis2=-1)
        return tr[..., None, None] * np.eye(n) - hessians
    if op.kind == "slag_phase":
        lam, vec = np.linalg.eigh(hessians)
        return np.einsum("...ik,...k,...jk->...ij", vec, 1.0 / (1.0 + lam * lam), vec)
    raise ValueError(f"no field linearization for operator kind {op.kind!r}")


def _assemble_jacobian(grads: np.ndarray, shape, h: float) -> sp.csr_matrix:
    """Sparse d(residual)/d(interior values) from per-node operator gradients.

    Stencil weights: the diagonal second difference contributes G_ii / h^2 to
    the +-e_i neighbors and -2 sum_i G_ii / h^2 to the center; each mixed pair
    (i < j) contributes +-2 G_ij / (4 h^2) on the four cross corners.
    """
    ids, count = _interior_index_map(shape)
    n = len(shape)
    core = tuple(slice(1, -1) for _ in shape)
    rows_all = ids[core].reshape(-1)
    h2 = h * h

    rows, cols, vals = [], [], []

    def add(offset, coeff):
        shifted = ids[tuple(slice(1 + o, s - 1 + o) for o, s in zip(offset, shape))]
        shifted = shifted.reshape(-1)
        keep = shifted >= 0
        rows.append(rows_all[keep])
        cols.append(shifted[keep])
        vals.append(coeff.reshape(-1)[keep])

    center = -2.0 * np.einsum("...ii->...", grads) / h2
    add((0,) * n, center)
    for i in range(n):
        ei = [0] * n
        ei[i] = 1
        add(tuple(ei), grads[..., i, i] / h2)
        add(tuple(-o for o in ei), grads[..., i, i] / h2)
        for j in range(i):
            cross = 2.0 * grads[..., i, j] / (4.0 * h2)
            for si, sj in ((1, 1), (-1, -1)):
                off = [0] * n
                off[i] = si
                off[j] = sj
                add(tuple(off), cross)
            for si, sj in ((1, -1), (-1, 1)):
                off = [0] * n
                off[i] = si
                off[j] = sj
                add(tuple(off), -cross)

    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(count, count),
    )
    return mat.tocsr()


def _cg_spd(mat: sp.csr_matrix, rhs: np.ndarray, rtol: float) -> np.ndarray:
    diag = mat.diagonal()
    floor = 1e-300
    precond = spla.LinearOperator(
        mat.shape, matvec=lambda x: x / np.maximum(np.abs(diag), floor)
    )
    x, info = spla.cg(mat, rhs, rtol=rtol, atol=0.0, maxiter=4000, M=precond)
    if info != 0:
        raise NewtonStagnationError(
            f"inner conjugate-gradient solve did not converge (info={info})", report=None
        )
    return x


def _newton_direction(jac: sp.csr_matrix, res: np.ndarray, rtol: float) -> np.ndarray:
    """Solve jac v = -res through CG on the symmetrized operator.

    The symmetric part is definite for elliptic linearizations while the full
    stencil matrix is not symmetric (coefficients vary node to node), so CG
    runs on -(J + J')/2 and defect correction restores the missing skew part.
    """
    sym = (-0.5) * (jac + jac.T).tocsr()
    v = _cg_spd(sym, res, rtol)
    target = max(rtol, 1e-12) * np.linalg.norm(res)
    for _ in range(3):
        defect = -res - jac @ v
        if np.linalg.norm(defect) <= target:
            break
        v += _cg_spd(sym, -defect, rtol)
    return v


def _poisson_blend(boundary: GridField, trace_target: float = 0.0) -> np.ndarray:
    """Lattice matching the boundary ring with constant discrete Laplacian.

    trace_target = 0 gives the harmonic blend of the boundary data; positive
    values add the unique zero-boundary bubble whose Laplacian is constant.
    """
    shape = boundary.shape
    n = boundary.n_dims
    h = boundary.spacing
    ids, count = _interior_index_map(shape)
    grads = np.broadcast_to(np.eye(n), tuple(s - 2 for s in shape) + (n, n))
    lap = _assemble_jacobian(grads, shape, h)

    lattice = np.where(boundary_mask(shape), boundary.as_array(), 0.0)
    ring = GridField(shape, boundary.origin, h, lattice.reshape(-1))
    core = tuple(slice(1, -1) for _ in shape)
    lap_ring = np.einsum("...ii->...", hessian_stack(ring))
    rhs = trace_target - lap_ring.reshape(-1)
    sol = _cg_spd((-lap).tocsr(), -rhs, rtol=1e-12)
    lattice[core] = sol.reshape([s - 2 for s in shape])
    return lattice


def _boundary_quadratic_trace(boundary: GridField) -> float:
    """Trace of the least-squares quadratic fitted to the boundary ring."""
    mask = boundary_mask(boundary.shape)
    pts = boundary.node_coords()[mask]
    vals = boundary.as_array()[mask]
    n = boundary.n_dims
    cols = [np.ones(len(pts))]
    cols += [pts[:, i] for i in range(n)]
    diag_start = len(cols)
    cols += [pts[:, i] * pts[:, i] for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            cols.append(pts[:, i] * pts[:, j])
    coeff, *_ = np.linalg.lstsq(np.stack(cols, axis=1), vals, rcond=None)
    return 2.0 * float(np.sum(coeff[diag_start : diag_start + n]))


def _default_initial(boundary: GridField, op) -> GridField:
    if op.kind == "sigma2_positive_branch":
        trace = max(_boundary_quadratic_trace(boundary), 0.5)
    else:
        trace = 0.0
    lattice = _poisson_blend(boundary, trace_target=trace)
    return boundary.replace_values(lattice.reshape(-1))


def _first_off_branch(mask: np.ndarray, field: GridField) -> str:
    node = tuple(int(i) for i in np.argwhere(mask)[0])
    return f"node {node} at x = {np.round(field.coords(node), 6).tolist()}"


def _residual_sup(field: GridField, op) -> tuple[float, np.ndarray, np.ndarray]:
    res, mask = residual_field(field, op, return_mask=True)
    return float(np.max(np.abs(res.values))), res.as_array(), mask


def solve_dirichlet(op, boundary: GridField, config: SolveConfig | None = None, initial: GridField | None = None):
    """Solve F(D^2 u) = level on the interior with the given boundary ring.

    Returns (solution field, SolveReport).  Raises BranchError when an
    iterate (or the supplied initial guess) leaves the positive branch of
    sigma_2 beyond repair, NewtonStagnationError when backtracking cannot
    find a decreasing admissible step.
    """
    config = config or SolveConfig()
    if op.kind not in ("sigma2_positive_branch", "slag_phase"):
        raise ValueError(f"no Dirichlet solver for operator kind {op.kind!r}")
    if not boundary.is_isotropic:
        raise ValueError("solver grids need a single spacing on every axis")

    if initial is None:
        current = _default_initial(boundary, op)
    else:
        if initial.shape != boundary.shape:
            raise ValueError("initial guess geometry does not match the boundary field")
        lattice = np.where(
            boundary_mask(boundary.shape), boundary.as_array(), initial.as_array()
        )
        current = boundary.replace_values(lattice.reshape(-1))

    guard_branch = op.kind == "sigma2_positive_branch"
    sup, res_arr, mask = _residual_sup(current, op)
    if guard_branch and mask.any():
        raise BranchError(
            f"initial iterate off the positive branch: {_first_off_branch(mask, current)}"
        )

    history = [sup]
    core = tuple(slice(1, -1) for _ in boundary.shape)
    iterations = 0

    while sup > config.residual_tol:
        if iterations >= config.max_newton_iters:
            raise NewtonStagnationError(
                f"no convergence in {config.max_newton_iters} Newton iterations "
                f"(residual {sup:.3e})",
                report=_make_report(current, iterations, sup, guard_branch, history),
            )
        hess = hessian_stack(current)
        grads = _operator_gradients(hess, op)
        jac = _assemble_jacobian(grads, current.shape, current.spacing)
        res_interior = res_arr[core].reshape(-1)
        direction = _newton_direction(jac, res_interior, config.linear_solver_tol)

        step = 1.0
        accepted = None
        last_mask = None
        for _ in range(config.max_backtracks):
            trial_arr = current.as_array().copy()
            trial_arr[core] += step * direction.reshape([s - 2 for s in current.shape])
            trial = current.replace_values(trial_arr.reshape(-1))
            trial_sup, trial_res, trial_mask = _residual_sup(trial, op)
            branch_ok = not (guard_branch and trial_mask.any())
            if branch_ok and trial_sup <= (1.0 - config.sufficient_decrease * step) * sup:
                accepted = (trial, trial_sup, trial_res)
                break
            last_mask = trial_mask if not branch_ok else last_mask
            step *= config.backtrack_factor
        if accepted is None:
            if last_mask is not None and last_mask.any():
                raise BranchError(
                    "line search exhausted against the branch guard: first "
                    f"violation at {_first_off_branch(last_mask, current)}"
                )
            raise NewtonStagnationError(
                f"line search found no sufficient decrease at iteration {iterations}",
                report=_make_report(current, iterations, sup, guard_branch, history),
            )
        current, sup, res_arr = accepted
        history.append(sup)
        iterations += 1

    return current, _make_report(current, iterations, sup, guard_branch, history)


def _make_report(field: GridField, iterations: int, sup: float, guard_branch: bool, history) -> SolveReport:
    hess = hessian_stack(field)
    lam = np.linalg.eigvalsh(hess)
    min_ellip = float(np.min(1.0 / (1.0 + np.max(lam * lam, axis=-1))))
    branch = True
    if guard_branch:
        branch = bool(np.all(np.trace(hess, axis1=-2, axis2=-1) > 0.0))
    return SolveReport(
        iterations=iterations,
        final_residual=sup,
        min_ellipticity=min_ellip,
        branch_flag=branch,
        residual_history=tuple(history),
    )
