"""Closed-form reference solutions and samplers, with exact jets.

Every evaluator returns the triple (value, gradient, hessian) at a point,
computed in closed form rather than by differencing, so the finite-difference
machinery elsewhere can be tested against machine-accurate ground truth.

Named entries (see ``get_entry``):

  * ``warren``    (x1^2 + x2^2 - 1) e^{x3} + e^{-x3}/4.  Its Hessian satisfies
                  sigma_2 = 1 with positive trace everywhere, i.e. the
                  quadratic Hessian equation on the elliptic branch; in three
                  variables that pins the angle sum at pi/2.
  * ``li``        x1^2 x2 - (2/3) x2^3 - x2 x3.  Trace of the Hessian equals
                  its determinant identically, i.e. angle sum 0 in three
                  variables.
  * ``quadratic`` (1/2) x'Qx + b'x + c with constant Hessian Q.
  * ``hom2``      degree-2 homogeneous extension u = |x|^2 g(x/|x|) of sphere
                  data g, evaluated through per-vertex ambient Hessians on a
                  geodesic grid.

``sample_level_set`` draws Hessian spectra on the constraint set
{sum_i arctan(lambda_i) = theta} by fixing the first n-1 angles uniformly in
a box and solving for the last one, rejecting draws whose residual angle
falls on the tangent pole.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial import ConvexHull

from .errors import PoleError
from .operators import PhaseSpec, slag_phase
from .spectral import as_sym_matrix

__all__ = [
    "CATALOG_NAMES",
    "CatalogEntry",
    "SphereJet",
    "complete_level_set",
    "eval_li",
    "eval_quadratic",
    "eval_warren",
    "get_entry",
    "homogeneous2_extension",
    "sample_level_set",
]

_POLE_TOL = 1e-12
DEFAULT_ANGLE_MARGIN = 1e-2


def eval_warren(x):
    """Exact jet of (x1^2 + x2^2 - 1) e^{x3} + e^{-x3}/4 at a 3-vector."""
    x1, x2, x3 = np.asarray(x, dtype=float)
    ep = math.exp(x3)
    em = math.exp(-x3)
    rad = x1 * x1 + x2 * x2 - 1.0
    u = rad * ep + 0.25 * em
    du = np.array([2.0 * x1 * ep, 2.0 * x2 * ep, rad * ep - 0.25 * em])
    d2u = np.array(
        [
            [2.0 * ep, 0.0, 2.0 * x1 * ep],
            [0.0, 2.0 * ep, 2.0 * x2 * ep],
            [2.0 * x1 * ep, 2.0 * x2 * ep, rad * ep + 0.25 * em],
        ]
    )
    return u, du, d2u


def eval_li(x):
    """Exact jet of x1^2 x2 - (2/3) x2^3 - x2 x3 at a 3-vector."""
    x1, x2, x3 = np.asarray(x, dtype=float)
    u = x1 * x1 * x2 - (2.0 / 3.0) * x2 ** 3 - x2 * x3
    du = np.array([2.0 * x1 * x2, x1 * x1 - 2.0 * x2 * x2 - x3, -x2])
    d2u = np.array(
        [
            [2.0 * x2, 2.0 * x1, 0.0],
            [2.0 * x1, -4.0 * x2, -1.0],
            [0.0, -1.0, 0.0],
        ]
    )
    return u, du, d2u


def eval_quadratic(Q, b, c, x):
    """Exact jet of (1/2) x'Qx + b'x + c; the hessian is Q at every point."""
    q = as_sym_matrix(Q).entries
    x = np.asarray(x, dtype=float)
    b = np.zeros(q.shape[0]) if b is None else np.asarray(b, dtype=float)
    qx = q @ x
    u = 0.5 * float(x @ qx) + float(b @ x) + float(c)
    return u, qx + b, q.copy()


def complete_level_set(lam_free, spec: PhaseSpec) -> np.ndarray:
    """Append the unique last eigenvalue putting the angle sum at spec.theta.

    Raises PoleError when the residual angle is outside (-pi/2, pi/2), where
    no finite last eigenvalue exists.  Symmetric in the free entries, so any
    relabeling of the draw completes to the same final eigenvalue.
    """
    lam_free = np.atleast_1d(np.asarray(lam_free, dtype=float))
    if lam_free.shape != (spec.n - 1,):
        raise ValueError(f"expected {spec.n - 1} free eigenvalues, got shape {lam_free.shape}")
    residual = spec.theta - float(np.sum(np.arctan(lam_free)))
    if abs(residual) >= 0.5 * math.pi - _POLE_TOL:
        raise PoleError(
            f"residual angle {residual:.6f} hits the tangent pole", angle=residual
        )
    return np.append(lam_free, math.tan(residual))


def sample_level_set(
    spec: PhaseSpec,
    rng_seed: int,
    angle_box: tuple[float, float] | None = None,
    max_tries: int = 10_000,
) -> np.ndarray:
    """Draw one eigenvalue vector with sum_i arctan(lambda_i) = spec.theta.

    The first n-1 angles are uniform on angle_box (default: all of
    (-pi/2, pi/2) less a small pole margin); the last eigenvalue is solved
    from the residual angle, and draws whose residual leaves (-pi/2, pi/2)
    are rejected and retried up to max_tries.
    """
    if angle_box is None:
        angle_box = (
            -0.5 * math.pi + DEFAULT_ANGLE_MARGIN,
            0.5 * math.pi - DEFAULT_ANGLE_MARGIN,
        )
    lo, hi = angle_box
    if not -0.5 * math.pi < lo < hi < 0.5 * math.pi:
        raise ValueError("angle box must sit strictly inside (-pi/2, pi/2)")
    rng = np.random.default_rng(rng_seed)
    for _ in range(max_tries):
        phi = rng.uniform(lo, hi, size=spec.n - 1)
        try:
            return complete_level_set(np.tan(phi), spec)
        except PoleError:
            continue
    raise ValueError(f"no admissible draw in {max_tries} tries; widen the angle box")


def _icosphere(resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit icosahedron subdivided `resolution` times, vertices reprojected."""
    gold = 0.5 * (1.0 + math.sqrt(5.0))
    base = []
    for a in (-1.0, 1.0):
        for b in (-gold, gold):
            base += [(0.0, a, b), (a, b, 0.0), (b, 0.0, a)]
    verts = np.asarray(base) / math.sqrt(1.0 + gold * gold)
    faces = ConvexHull(verts).simplices
    for _ in range(resolution):
        verts, faces = _subdivide(verts, faces)
    return verts, np.asarray(faces, dtype=int)


def _subdivide(verts: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    verts = list(map(np.asarray, verts))
    midpoint: dict[tuple[int, int], int] = {}

    def mid(i: int, j: int) -> int:
        key = (min(i, j), max(i, j))
        if key not in midpoint:
            m = verts[i] + verts[j]
            verts.append(m / np.linalg.norm(m))
            midpoint[key] = len(verts) - 1
        return midpoint[key]

    out = []
    for i, j, k in faces:
        ij, jk, ki = mid(i, j), mid(j, k), mid(k, i)
        out += [(i, ij, ki), (j, jk, ij), (k, ki, jk), (ij, jk, ki)]
    return np.asarray(verts), np.asarray(out, dtype=int)


def _fd_hessian_of(f: Callable[[np.ndarray], float], x: np.ndarray, h: float) -> np.ndarray:
    n = x.size
    hess = np.empty((n, n))
    fx = f(x)
    steps = h * np.eye(n)
    for i in range(n):
        hess[i, i] = (f(x + steps[i]) - 2.0 * fx + f(x - steps[i])) / (h * h)
        for j in range(i):
            quad = (
                f(x + steps[i] + steps[j])
                - f(x + steps[i] - steps[j])
                - f(x - steps[i] + steps[j])
                + f(x - steps[i] - steps[j])
            )
            hess[i, j] = hess[j, i] = quad / (4.0 * h * h)
    return hess


class SphereJet:
    """Sphere data for a degree-2 homogeneous potential, as vertex Hessians.

    The matrix stored at a unit vertex v is the ambient Hessian there of
    u = |x|^2 g(x/|x|); it packages g(v) together with its first two
    tangential derivatives (for the 0-homogeneous extension G of g one has
    H = 2 G I + 2(x (DG)' + DG x') + D2G on the sphere).  Because u is
    2-homogeneous, the whole jet anywhere off the origin follows from the
    Hessian on the ray: u = x'Hx/2 and Du = Hx by the Euler identities.

    A jet built from a quadratic needs no mesh (the Hessian field is
    constant, any dimension); callable data is sampled on an icosahedral
    geodesic grid (three dimensions) and interpolated barycentrically.
    """

    def __init__(self, vertices, faces, hessians):
        hessians = np.asarray(hessians, dtype=float)
        if hessians.ndim != 3 or hessians.shape[1] != hessians.shape[2]:
            raise ValueError(f"expected stacked square matrices, got {hessians.shape}")
        if not np.all(np.isfinite(hessians)):
            raise ValueError("non-finite vertex hessian")
        self.hessians = 0.5 * (hessians + np.transpose(hessians, (0, 2, 1)))
        if vertices is None:
            if hessians.shape[0] != 1:
                raise ValueError("meshless jets must be constant (one hessian)")
            self.vertices = None
            self.faces = None
            self._basis_inv = None
        else:
            self.vertices = np.asarray(vertices, dtype=float)
            self.faces = np.asarray(faces, dtype=int)
            if self.vertices.shape[0] != hessians.shape[0]:
                raise ValueError("one hessian per vertex required")
            # columns of each basis are the face's vertices; barycentric
            # weights of a query are basis^{-1} xi, renormalized to sum 1
            bases = self.vertices[self.faces].transpose(0, 2, 1)
            self._basis_inv = np.linalg.inv(bases)

    @property
    def n(self) -> int:
        return self.hessians.shape[1]

    @property
    def constant(self) -> bool:
        return self.vertices is None

    @classmethod
    def from_quadratic(cls, Q) -> "SphereJet":
        """Exact jet of (1/2) x'Qx; constant Hessian field, any dimension."""
        q = as_sym_matrix(Q).entries
        return cls(None, None, q[None])

    @classmethod
    def from_callable(cls, g, resolution: int = 3, fd_step: float = 1e-4) -> "SphereJet":
        """Sample g: S^2 -> R on a geodesic grid of the given subdivision depth.

        Vertex Hessians come from central differences of |x|^2 g(x/|x|), so
        they carry an O(fd_step^2) truncation plus roundoff of order
        eps / fd_step^2; the default balances the two near 1e-8.
        """
        verts, faces = _icosphere(resolution)

        def extended(x: np.ndarray) -> float:
            rad2 = float(x @ x)
            return rad2 * float(g(x / math.sqrt(rad2)))

        hess = np.stack([_fd_hessian_of(extended, v, fd_step) for v in verts])
        return cls(verts, faces, hess)

    def hessian_at(self, xi) -> np.ndarray:
        """Interpolated ambient Hessian at a unit direction xi."""
        if self.constant:
            return self.hessians[0].copy()
        xi = np.asarray(xi, dtype=float)
        weights = self._basis_inv @ xi
        face = int(np.argmax(weights.min(axis=1)))
        w = weights[face]
        w = w / w.sum()
        return np.einsum("v,vij->ij", w, self.hessians[self.faces[face]])


def homogeneous2_extension(jet: SphereJet, x):
    """Jet of the 2-homogeneous potential at x != 0 from its sphere data.

    The Hessian is constant along rays, so scaling x leaves it unchanged and
    the Euler identities <x, Du> = 2u, Du = (D2u) x hold exactly by
    construction.
    """
    x = np.asarray(x, dtype=float)
    rad = float(np.linalg.norm(x))
    if rad == 0.0:
        raise ValueError("undefined at the origin: the Hessian has no limit there")
    if not np.isfinite(rad):
        raise ValueError("non-finite evaluation point")
    hess = jet.hessian_at(x / rad)
    du = hess @ x
    return 0.5 * float(x @ du), du, hess


@dataclass(frozen=True)
class CatalogEntry:
    """A named closed-form reference solution.

    theta is the angle-sum level when the entry solves the arctan-sum
    equation at a fixed phase, or the branch tag "sigma2" when its defining
    equation is sigma_2 = 1 on the positive branch.  admissible_box is the
    half-width of the centered cube on which the entry is meant to be
    sampled by default.
    """

    name: str
    n: int
    theta: float | str
    evaluator: Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray]]
    admissible_box: float


CATALOG_NAMES = ("warren", "li", "quadratic", "hom2")

_DEFAULT_QUADRATIC = np.diag([1.0, 1.0, 0.0])


def get_entry(name: str, **params) -> CatalogEntry:
    """Build a catalog entry by name: warren, li, quadratic, or hom2.

    quadratic accepts q (matrix), b (vector), c (scalar); hom2 accepts
    jet (a SphereJet) or q (quadratic sphere data).  Defaults reproduce the
    sigma_2 = 1 positive-branch quadratic diag(1, 1, 0).
    """
    if name == "warren":
        return CatalogEntry("warren", 3, "sigma2", eval_warren, 1.5)
    if name == "li":
        return CatalogEntry("li", 3, 0.0, eval_li, 1.5)
    if name == "quadratic":
        q = as_sym_matrix(params.get("q", _DEFAULT_QUADRATIC)).entries
        b = params.get("b")
        c = params.get("c", 0.0)

        def jet(x, _q=q, _b=b, _c=c):
            return eval_quadratic(_q, _b, _c, x)

        return CatalogEntry("quadratic", q.shape[0], slag_phase(q), jet, 1.5)
    if name == "hom2":
        sphere = params.get("jet")
        if sphere is None:
            sphere = SphereJet.from_quadratic(params.get("q", _DEFAULT_QUADRATIC))
        theta = params.get("theta", slag_phase(np.mean(sphere.hessians, axis=0)))

        def jet(x, _s=sphere):
            return homogeneous2_extension(_s, x)

        return CatalogEntry("hom2", sphere.n, theta, jet, 1.5)
    raise KeyError(f"unknown catalog entry {name!r}; choose from {CATALOG_NAMES}")
