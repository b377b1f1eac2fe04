"""Changes of variables for gradient graphs.

Three coordinate changes, each at two levels:

* a rigid rotation of the graph (x, Du) by an angle beta, which acts on
  Hessian eigenvalues as lam -> tan(arctan(lam) - beta) and on fields by
  resampling the rotated graph onto a fresh uniform grid;
* the convex (Legendre) conjugate, computed axis by axis with a
  slope-matched piecewise-quadratic line model so quadratic inputs
  conjugate exactly;
* the shifted conjugate of u + m|x|^2/2 that turns fields with spectrum
  bounded below by -m into uniformly convex potentials with eigenvalues
  mu_i = 1/(lam_i + m).

The eigenvalue-level maps are closed-form; the field-level maps are the
discrete counterparts and carry their own well-posedness guards (tangent
poles, injectivity of the resampling, convexity gates).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.ndimage import binary_erosion
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from .errors import (
    BranchError,
    ExpansionError,
    NewtonStagnationError,
    NonConvexFieldError,
    PoleError,
)
from .grid import GridField, gradient_stack, hessian_stack
from .operators import lewy_modulus
from .spectral import SymMatrix, as_sym_matrix

__all__ = [
    "GraphSample",
    "LewyTransformResult",
    "RotationParams",
    "distance_expansion_check",
    "eigen_rotation_map",
    "expansion_bound",
    "interior_attainment_mask",
    "legendre_lewy_transform",
    "legendre_transform",
    "mobius_hessian_map",
    "mu_from_lambda",
    "rotate_graph",
    "rotated_phase",
]

_POLE_TOL = 1e-12


@dataclass(frozen=True)
class RotationParams:
    """Angle bundle for the graph rotation x_bar = cos(beta) x + sin(beta) Du.

    beta is the rotation angle in (-pi, pi]; negative angles are allowed so
    a rotation can be undone by its mirror.  alpha = beta - pi/2 is the tilt
    of the rotated vertical, and a = tan(alpha) (undefined when sin(beta)=0)
    drives the Hessian-level fractional-linear map.  validity_margin is the
    slack angle delta entering the distance-expansion bound.
    """

    beta: float
    validity_margin: float = 0.0
    c: float = field(init=False)
    s: float = field(init=False)
    alpha: float = field(init=False)
    a: float | None = field(init=False)

    def __post_init__(self):
        beta = float(self.beta)
        if not np.isfinite(beta) or not -math.pi < beta <= math.pi:
            raise ValueError(f"rotation angle must lie in (-pi, pi], got {beta}")
        delta = float(self.validity_margin)
        if not np.isfinite(delta) or delta < 0.0:
            raise ValueError("validity margin must be a nonnegative angle")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "validity_margin", delta)
        object.__setattr__(self, "c", math.cos(beta))
        object.__setattr__(self, "s", math.sin(beta))
        object.__setattr__(self, "alpha", beta - math.pi / 2.0)
        a = None if abs(math.sin(beta)) < 1e-15 else -math.cos(beta) / math.sin(beta)
        object.__setattr__(self, "a", a)

    @property
    def shifted_beta(self) -> float:
        return self.beta + self.validity_margin

    @property
    def c_tilde(self) -> float:
        return math.cos(self.shifted_beta)

    @property
    def s_tilde(self) -> float:
        return math.sin(self.shifted_beta)


@dataclass(frozen=True)
class GraphSample:
    """One point of a gradient graph: x, y = Du(x), optionally D^2u(x)."""

    x: np.ndarray
    y: np.ndarray
    hessian: SymMatrix | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if x.size != y.size:
            raise ValueError("x and y must have equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("non-finite graph sample")
        if self.hessian is not None and self.hessian.dim != x.size:
            raise ValueError("hessian dimension does not match the sample")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class LewyTransformResult:
    """Shifted-conjugate output: potential, shift, and eigenvalue range."""

    w_field: GridField
    m: float
    mu_range: tuple[float, float]


def _principal_distance_to_pole(theta_bar):
    """Distance of theta_bar to pi/2 modulo pi (tangent pole set)."""
    shifted = np.asarray(theta_bar, dtype=float) - math.pi / 2.0
    return np.abs(shifted - math.pi * np.round(shifted / math.pi))


def eigen_rotation_map(lam: float, params: RotationParams) -> float:
    """Rotate one Hessian eigenvalue: tan(arctan(lam) - beta)."""
    theta_bar = math.atan(float(lam)) - params.beta
    if _principal_distance_to_pole(theta_bar) <= _POLE_TOL:
        raise PoleError(
            f"rotated angle {theta_bar:.9f} sits on the tangent pole",
            angle=theta_bar,
        )
    return math.tan(theta_bar)


def mobius_hessian_map(M, a: float) -> SymMatrix:
    """Fractional-linear Hessian map -aI - (1+a^2)(M - aI)^{-1}.

    Shares eigenvectors with M; its eigenvalues are the rotated eigenvalues
    of M for the angle with tan(beta) = -1/a.
    """
    sym = as_sym_matrix(M)
    a = float(a)
    lam = np.linalg.eigvalsh(sym.entries)
    gap = np.min(np.abs(lam - a))
    if gap <= 1e-12 * sym.frobenius():
        raise PoleError(
            f"shift {a} is an eigenvalue of the input (gap {gap:.3e}); "
            "the rotated Hessian has a pole",
            angle=a,
        )
    n = sym.dim
    inv = np.linalg.inv(sym.entries - a * np.eye(n))
    return SymMatrix(-a * np.eye(n) - (1.0 + a * a) * inv)


def rotated_phase(M, params: RotationParams, steps: int = 32) -> float:
    """Total phase of the rotated spectrum with continuous branch tracking.

    Walks the rotation angle from 0 to beta in `steps` increments and
    unwraps each eigenvalue's principal angle against the previous step, so
    phases that cross +-pi/2 keep their continued value instead of snapping
    back to the principal branch.  Eigenvalues are paired across steps by
    their shared eigenvectors (the rotation map preserves eigenspaces).
    """
    if steps < 1:
        raise ValueError("need at least one homotopy step")
    sym = as_sym_matrix(M)
    theta0 = np.arctan(np.linalg.eigvalsh(sym.entries))
    phases = theta0.copy()
    for k in range(1, steps + 1):
        t = params.beta * (k / steps)
        raw = theta0 - t
        principal = raw - math.pi * np.round(raw / math.pi)
        phases = principal + math.pi * np.round((phases - principal) / math.pi)
    return float(np.sum(phases))


def _lattice_interpolator(axes, values):
    return RegularGridInterpolator(
        axes, values, method="linear", bounds_error=False, fill_value=None
    )


def _invert_rotation(targets, params, seeds, grad_interp, hess_interp):
    """Batched damped Newton for x solving c*x + s*Du(x) = target."""
    c, s = params.c, params.s
    n = targets.shape[1]
    eye = np.eye(n)
    x = seeds.copy()
    scale = max(1.0, float(np.max(np.abs(targets))))
    tol = 1e-12 * scale

    def res_norms(pts, goal):
        r = c * pts + s * grad_interp(pts) - goal
        return r, np.linalg.norm(r, axis=1)

    res, norms = res_norms(x, targets)
    for _ in range(60):
        idx = np.flatnonzero(norms > tol)
        if idx.size == 0:
            break
        xa = x[idx]
        na = norms[idx]
        goal = targets[idx]
        jac = c * eye + s * hess_interp(xa)
        step = np.linalg.solve(jac, res[idx][..., None])[..., 0]
        t = np.ones(idx.size)
        trial = xa - step
        _, trial_norm = res_norms(trial, goal)
        for _ in range(25):
            bad = trial_norm > (1.0 - 1e-4 * t) * na
            if not np.any(bad):
                break
            t[bad] *= 0.5
            trial[bad] = xa[bad] - t[bad, None] * step[bad]
            _, redone = res_norms(trial[bad], goal[bad])
            trial_norm[bad] = redone
        x[idx] = trial
        res, norms = res_norms(x, targets)
    worst = float(np.max(norms))
    if worst > 1e-8 * scale:
        node = int(np.argmax(norms))
        raise NewtonStagnationError(
            f"graph resampling did not converge at target {targets[node]} "
            f"(residual {worst:.3e})"
        )
    return x


def _cumulative_trapezoid_from(arr, axis, h, start):
    """Signed cumulative trapezoid along axis, zero at index `start`."""
    a = np.moveaxis(arr, axis, 0)
    mids = 0.5 * (a[1:] + a[:-1]) * h
    zero = np.zeros((1,) + a.shape[1:])
    cum = np.concatenate([zero, np.cumsum(mids, axis=0)], axis=0)
    cum = cum - cum[start]
    return np.moveaxis(cum, 0, axis)


def _path_potential(y, spacings, center):
    """Average over axis orders of path-integrated potentials, 0 at center."""
    n = y.shape[-1]
    total = None
    orders = list(itertools.permutations(range(n)))
    for order in orders:
        phi = np.zeros(y.shape[:-1])
        for k, axis in enumerate(order):
            comp = y[..., axis]
            for later in order[k + 1 :]:
                comp = np.take(comp, [center[later]], axis=later)
            phi = phi + _cumulative_trapezoid_from(comp, axis, spacings[axis], center[axis])
        total = phi if total is None else total + phi
    return total / len(orders)


def _curl_residual(y, spacings):
    """Sup of |d_i y_j - d_j y_i| over interior nodes (gradient quality)."""
    n = y.shape[-1]
    worst = 0.0

    def central(component, axis):
        up = [slice(1, -1)] * n
        dn = [slice(1, -1)] * n
        up[axis] = slice(2, None)
        dn[axis] = slice(None, -2)
        return (component[tuple(up)] - component[tuple(dn)]) / (2.0 * spacings[axis])

    for i in range(n):
        for j in range(i):
            mismatch = central(y[..., j], i) - central(y[..., i], j)
            worst = max(worst, float(np.max(np.abs(mismatch))))
    return worst


def rotate_graph(u: GridField, params: RotationParams, details: bool = False):
    """Rotate the gradient graph of u and resample it as a potential.

    Returns (samples, u_bar): the graph samples (x, Du(x), D^2u(x)) taken at
    interior nodes, and the rotated potential on a fresh uniform grid whose
    box is the bounding box of the rotated sample points.  The potential is
    path-integrated from the rotated gradient and gauged to 0 at the grid
    center.  With details=True a third dict reports the curl residual of the
    integrated gradient and the resampling grid.
    """
    n = u.n_dims
    c, s = params.c, params.s
    grads = gradient_stack(u)
    hessians = hessian_stack(u)
    interior = tuple(slice(1, -1) for _ in u.shape)
    points = u.node_coords()[interior]

    lam = np.linalg.eigvalsh(hessians)
    pole_gap = _principal_distance_to_pole(np.arctan(lam) - params.beta)
    if np.any(pole_gap <= _POLE_TOL):
        node = np.unravel_index(int(np.argmin(pole_gap)), pole_gap.shape)
        where = points[node[:-1]]
        angle = float(np.arctan(lam[node]) - params.beta)
        raise PoleError(
            f"tangent pole at x = {np.round(where, 6).tolist()}: "
            f"rotated eigenvalue angle {angle:.9f} within {_POLE_TOL:.0e} of pi/2 mod pi",
            angle=angle,
            where=tuple(float(v) for v in where),
        )

    flat_x = points.reshape(-1, n)
    flat_g = grads.reshape(-1, n)
    flat_h = hessians.reshape(-1, n, n)
    x_bar = c * flat_x + s * flat_g

    min_spacing = float(np.min(u.spacing_vector))
    tree = cKDTree(x_bar)
    clashes = tree.query_pairs(r=min_spacing / 2.0, output_type="ndarray")
    if len(clashes):
        i, j = (int(k) for k in clashes[0])
        dist = float(np.linalg.norm(x_bar[i] - x_bar[j]))
        raise ExpansionError(
            f"rotated sample points collide: targets of x = {np.round(flat_x[i], 6).tolist()} "
            f"and x = {np.round(flat_x[j], 6).tolist()} are {dist:.3e} apart "
            f"(< spacing/2 = {min_spacing / 2.0:.3e}); the distance-expansion "
            "hypothesis fails for this field and angle"
        )

    samples = [
        GraphSample(flat_x[k], flat_g[k], SymMatrix(flat_h[k]))
        for k in range(flat_x.shape[0])
    ]

    lo = x_bar.min(axis=0)
    hi = x_bar.max(axis=0)
    if np.any(hi - lo <= 0.0):
        raise ExpansionError("rotated samples span a degenerate box")
    nodes = np.asarray(u.shape)
    spacings = (hi - lo) / (nodes - 1)
    target_axes = [lo[k] + spacings[k] * np.arange(nodes[k]) for k in range(n)]
    target_grid = np.stack(np.meshgrid(*target_axes, indexing="ij"), axis=-1)
    targets = target_grid.reshape(-1, n)

    interior_axes = tuple(u.axis_coords(k)[1:-1] for k in range(n))
    grad_interp = _lattice_interpolator(interior_axes, grads)
    hess_interp = _lattice_interpolator(interior_axes, hessians)

    _, nearest = tree.query(targets)
    seeds = flat_x[nearest]
    x_of_target = _invert_rotation(targets, params, seeds, grad_interp, hess_interp)

    du = grad_interp(x_of_target)
    y_bar = (-s * x_of_target + c * du).reshape(target_grid.shape)

    center = tuple((int(m) - 1) // 2 for m in u.shape)
    phi = _path_potential(y_bar, spacings, center)
    phi = phi - phi[center]

    spacing_out = float(spacings[0]) if np.all(spacings == spacings[0]) else tuple(
        float(h) for h in spacings
    )
    u_bar = GridField(u.shape, lo, spacing_out, phi.reshape(-1))
    if not details:
        return samples, u_bar
    info = {
        "curl_residual": _curl_residual(y_bar, spacings),
        "target_origin": [float(v) for v in lo],
        "target_spacing": [float(h) for h in spacings],
        "pole_gap": float(np.min(pole_gap)),
    }
    return samples, u_bar, info


def expansion_bound(params: RotationParams, gamma: float) -> float:
    """Closed-form floor for the rotated-distance ratio.

    Equals cos(beta + delta) * (1 - tan|gamma| / tan(|gamma| + delta)); when
    |gamma| + delta reaches pi/2 the configuration is degenerate and the
    bound is vacuous (-inf).
    """
    g = abs(float(gamma))
    delta = params.validity_margin
    if g + delta >= math.pi / 2.0:
        return -math.inf
    tg = math.tan(g)
    fraction = 0.0 if tg == 0.0 else tg / math.tan(g + delta)
    return params.c_tilde * (1.0 - fraction)


def distance_expansion_check(samples, params: RotationParams, gamma: float) -> float:
    """Minimum pairwise expansion ratio |x_bar^2 - x_bar^1| / |x^2 - x^1|.

    The caller asserts the spectral floor arctan(lambda_min) >= gamma; the
    returned minimum is then bounded below by expansion_bound(params, gamma)
    up to discretization noise.
    """
    if len(samples) < 2:
        raise ValueError("need at least two graph samples")
    x = np.array([s.x for s in samples], dtype=float)
    y = np.array([s.y for s in samples], dtype=float)
    x_bar = params.c * x + params.s * y
    base = pdist(x)
    if np.any(base == 0.0):
        raise ValueError("coincident base points in the sample set")
    return float(np.min(pdist(x_bar) / base))


def _line_conjugate(values, x, y):
    """1-D convex conjugates of stacked lines.

    values: (lines, M) convex samples over nodes x; returns (lines, K)
    conjugates at slopes y.  The line model interpolates slopes linearly
    between nodes (a C^1 piecewise-quadratic), so quadratic data conjugates
    exactly; slopes outside the sampled range saturate at the end nodes,
    which is the exact conjugate of the box-restricted function.
    """
    h = x[1] - x[0]
    f = values
    slopes = np.empty_like(f)
    slopes[:, 1:-1] = (f[:, 2:] - f[:, :-2]) / (2.0 * h)
    slopes[:, 0] = (-3.0 * f[:, 0] + 4.0 * f[:, 1] - f[:, 2]) / (2.0 * h)
    slopes[:, -1] = (3.0 * f[:, -1] - 4.0 * f[:, -2] + f[:, -3]) / (2.0 * h)
    # convex data gives nondecreasing slopes; the cummax only absorbs roundoff
    slopes = np.maximum.accumulate(slopes, axis=1)

    out = np.empty((f.shape[0], y.size))
    for row in range(f.shape[0]):
        s_row = slopes[row]
        f_row = f[row]
        idx = np.searchsorted(s_row, y)
        w = np.empty(y.size)

        low = idx == 0
        w[low] = x[0] * y[low] - f_row[0]
        high = idx == s_row.size
        w[high] = x[-1] * y[high] - f_row[-1]

        mid = ~(low | high)
        j = idx[mid] - 1
        ds = s_row[j + 1] - s_row[j]
        t = np.where(ds > 0.0, h * (y[mid] - s_row[j]) / np.where(ds > 0.0, ds, 1.0), 0.0)
        t = np.clip(t, 0.0, h)
        x_star = x[j] + t
        f_star = f_row[j] + s_row[j] * t + 0.5 * (ds / h) * t * t
        w[mid] = x_star * y[mid] - f_star
        out[row] = w
    return out


def _axis_conjugate(arr, axis, x_coords, y_coords):
    moved = np.moveaxis(arr, axis, -1)
    lines = moved.reshape(-1, moved.shape[-1])
    conj = _line_conjugate(lines, x_coords, y_coords)
    conj = conj.reshape(moved.shape[:-1] + (y_coords.size,))
    return np.moveaxis(conj, -1, axis)


def legendre_transform(u: GridField) -> GridField:
    """Discrete convex conjugate w(y) = sup_x (<x, y> - u(x)).

    The input must be convex on its grid (FD Hessians positive semidefinite
    within a 1e-9 eigenvalue slack).  The output grid spans the observed
    gradient range padded by 5% with the input's node count per axis; its
    spacing is per-axis when the ranges differ.  The conjugate is computed
    one axis at a time; partial conjugates of convex functions stay convex
    in the remaining coordinates, so each stage is again a stack of 1-D
    convex conjugates.
    """
    n = u.n_dims
    hessians = hessian_stack(u)
    lam_min = np.linalg.eigvalsh(hessians)[..., 0]
    worst_node = np.unravel_index(int(np.argmin(lam_min)), lam_min.shape)
    worst = float(lam_min[worst_node])
    if worst < -1e-9:
        where = u.coords(tuple(i + 1 for i in worst_node))
        raise NonConvexFieldError(
            f"field is not convex: Hessian eigenvalue {worst:.6e} at "
            f"x = {np.round(where, 6).tolist()}",
            worst_eigenvalue=worst,
            where=tuple(float(v) for v in where),
        )

    grads = gradient_stack(u).reshape(-1, n)
    lo = grads.min(axis=0)
    hi = grads.max(axis=0)
    span = hi - lo
    if np.any(span <= 0.0):
        flat_axis = int(np.argmin(span))
        raise ValueError(
            f"gradient range along axis {flat_axis} is degenerate; "
            "the conjugate has no full-dimensional domain"
        )
    mid = 0.5 * (lo + hi)
    half = 0.525 * span  # 1.05x padding of the observed range
    nodes = np.asarray(u.shape)
    y_axes = [np.linspace(mid[k] - half[k], mid[k] + half[k], nodes[k]) for k in range(n)]

    cur = u.as_array()
    for axis in range(n):
        cur = _axis_conjugate(cur, axis, u.axis_coords(axis), y_axes[axis])
        cur = -cur
    w = -cur

    origin = np.array([ax[0] for ax in y_axes])
    spacings = np.array([ax[1] - ax[0] for ax in y_axes])
    spacing_out = float(spacings[0]) if np.all(spacings == spacings[0]) else tuple(
        float(h) for h in spacings
    )
    return GridField(u.shape, origin, spacing_out, w.reshape(-1))


def interior_attainment_mask(w: GridField, domain: GridField) -> np.ndarray:
    """Interior nodes of w whose conjugate sup is attained inside the domain box.

    The conjugate saturates to the box-restricted sup where the matching
    point Dw(y) would leave the sampled box; the smooth inverse-Hessian
    relation only holds off that rim.  Returns a boolean array over the
    interior lattice of w marking nodes with Dw strictly inside the box.
    """
    slopes = gradient_stack(w)
    lo = domain.origin
    hi = domain.origin + (np.asarray(domain.shape) - 1) * domain.spacing_vector
    margin = 1e-6 * (hi - lo)
    inside = np.all((slopes > lo + margin) & (slopes < hi - margin), axis=-1)
    # the Hessian stencil reads every 1-neighbor, so a node is reliable only
    # when its whole neighborhood is attained: erode by one layer
    structure = np.ones((3,) * w.n_dims, dtype=bool)
    return binary_erosion(inside, structure=structure)


def mu_from_lambda(lam, m: float):
    """Componentwise map mu_i = 1/(lam_i + m); requires lam_i + m > 0."""
    arr = np.asarray(lam, dtype=float)
    shifted = arr + float(m)
    if np.any(shifted <= 0.0):
        worst = float(np.min(shifted))
        raise ValueError(
            f"shifted eigenvalue must be positive, got min(lambda + m) = {worst:.6e}"
        )
    return 1.0 / shifted


def legendre_lewy_transform(u: GridField, n: int) -> LewyTransformResult:
    """Conjugate of u + m|x|^2/2 with the dimensional shift m = sqrt(2/(n(n-1))).

    Valid while the FD spectrum of u stays strictly above -m; the output
    potential is uniformly convex with eigenvalues mu_i = 1/(lam_i + m) > 0.
    """
    if n != u.n_dims:
        raise ValueError(f"shift dimension {n} does not match the field ({u.n_dims})")
    m = lewy_modulus(n)
    hessians = hessian_stack(u)
    lam_min = np.linalg.eigvalsh(hessians)[..., 0]
    worst_node = np.unravel_index(int(np.argmin(lam_min)), lam_min.shape)
    worst = float(lam_min[worst_node])
    if worst <= -m + 1e-9:
        where = u.coords(tuple(i + 1 for i in worst_node))
        raise BranchError(
            f"spectrum touches the shift: lambda_min = {worst:.9f} <= -m + 1e-9 "
            f"(m = {m:.9f}) at x = {np.round(where, 6).tolist()}; "
            "the shifted conjugate is no longer valid",
            where=tuple(float(v) for v in where),
        )

    sq = np.sum(u.node_coords() ** 2, axis=-1).reshape(-1)
    shifted = u.replace_values(u.values + 0.5 * m * sq)
    w = legendre_transform(shifted)
    mu = np.linalg.eigvalsh(hessian_stack(w))
    attained = interior_attainment_mask(w, u)
    if np.any(attained):
        mu = mu[attained]
    return LewyTransformResult(w, m, (float(np.min(mu)), float(np.max(mu))))
