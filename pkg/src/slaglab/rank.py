"""Verdict layer: eigenvalue fields of discrete Hessians, rank bookkeeping
for shifted Hessians, minimum-principle screening of the smallest eigenvalue,
and detection of a constant split direction.

Everything here consumes immutable grid fields and produces plain report
records.  The analyzers furnish numerical evidence only: they can exhibit a
counterexample (an interior strict minimum, a wandering eigendirection) but
never prove constancy.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from itertools import product

import numpy as np

from .catalog import SphereJet, homogeneous2_extension
from .grid import GridField, hessian_stack
from .operators import PhaseSpec, slag_phase

__all__ = [
    "EigenFields",
    "RankReport",
    "MinPrincipleReport",
    "SplitReport",
    "Hom2Audit",
    "eigen_fields",
    "rank_report",
    "min_principle_check",
    "splitting_detector",
    "hom2_audit",
]

DEFAULT_RANK_TOL = 1e-6


@dataclass(frozen=True)
class EigenFields:
    """Pointwise spectra of the discrete Hessian at interior nodes.

    values[idx] holds the ascending eigenvalues at that node and
    vectors[idx][:, k] the matching unit eigenvector, sign-aligned by a
    breadth-first walk from the center node so neighboring vectors never
    differ by a gratuitous flip.  Node indices address the original grid;
    the interior arrays start at full-grid index 1 on every axis.
    """

    values: np.ndarray
    vectors: np.ndarray
    origin: np.ndarray
    spacing: float | tuple[float, ...]

    def value_field(self, k: int) -> GridField:
        """The k-th eigenvalue branch as a standalone grid field."""
        vals = self.values[..., k]
        return GridField(vals.shape, self.origin, self.spacing, vals.copy())


@dataclass(frozen=True)
class RankReport:
    shift: float
    tol_rank: float
    rank: np.ndarray
    min_rank: int
    max_rank: int
    lambda_min_field: GridField
    lambda_max_field: GridField
    interior_min_sites: tuple[tuple[int, ...], ...]
    threshold_margin: float

    def __post_init__(self):
        n = self.lambda_min_field.n_dims
        if not (0 <= self.min_rank <= self.max_rank <= n):
            raise ValueError(
                f"rank bounds {self.min_rank}..{self.max_rank} outside 0..{n}"
            )


@dataclass(frozen=True)
class MinPrincipleReport:
    verdict: str
    spread: float
    min_value: float
    interior_sites: tuple[tuple[int, ...], ...]

    _VERDICTS = ("constant", "boundary_min", "interior_min", "indeterminate")

    def __post_init__(self):
        if self.verdict not in self._VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")


@dataclass(frozen=True)
class SplitReport:
    direction: np.ndarray
    eigenvalue_spread: float
    direction_spread: float
    verdict: str

    def __post_init__(self):
        norm = float(np.linalg.norm(self.direction))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"split direction norm {norm} is not 1")
        if self.verdict not in ("split", "no_split", "indeterminate"):
            raise ValueError(f"unknown verdict {self.verdict!r}")


@dataclass(frozen=True)
class Hom2Audit:
    min_phase_angle: float
    lambda_threshold: float
    margin: float
    equation_residual: float
    quadratic_deviation: float
    demands_quadratic: bool
    verdict: str


def _center_index(shape):
    return tuple((s - 1) // 2 for s in shape)


def _align_vector_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip eigenvector signs along a BFS spanning tree from the center.

    Eigensolvers fix each vector only up to sign; a coherent field needs
    neighboring nodes to agree.  Alignment is per-branch: vector k at a node
    is flipped when it opposes vector k at the tree parent.
    """
    shape = vectors.shape[:-2]
    n = vectors.shape[-1]
    out = vectors.copy()
    seen = np.zeros(shape, dtype=bool)
    root = _center_index(shape)
    seen[root] = True
    queue = deque([root])
    while queue:
        node = queue.popleft()
        for axis in range(len(shape)):
            for step in (-1, 1):
                nbr = list(node)
                nbr[axis] += step
                if not 0 <= nbr[axis] < shape[axis]:
                    continue
                nbr = tuple(nbr)
                if seen[nbr]:
                    continue
                seen[nbr] = True
                dots = np.einsum("ik,ik->k", out[node], out[nbr])
                out[nbr][:, dots < 0.0] *= -1.0
                queue.append(nbr)
    return out


def eigen_fields(u: GridField) -> EigenFields:
    """Sorted eigenvalue and sign-aligned eigenvector fields of the Hessian."""
    H = hessian_stack(u)
    values, vectors = np.linalg.eigh(H)
    vectors = _align_vector_signs(vectors)
    h = u.spacing_vector
    origin = np.asarray(u.origin, dtype=float) + h
    return EigenFields(values, vectors, origin, u.spacing)


def _strict_interior_minima(field: np.ndarray, margin: float):
    """Nodes beating every neighbor in the full box stencil by > margin.

    Only nodes with a complete neighborhood qualify; the outermost ring of
    the array has no verdict.  Returned indices address the array itself.
    """
    n = field.ndim
    if any(s < 3 for s in field.shape):
        return ()
    core = field[tuple(slice(1, -1) for _ in range(n))]
    beats_all = np.ones(core.shape, dtype=bool)
    for offset in product((-1, 0, 1), repeat=n):
        if all(o == 0 for o in offset):
            continue
        nbr = field[
            tuple(slice(1 + o, s - 1 + o) for o, s in zip(offset, field.shape))
        ]
        beats_all &= nbr - core > margin
    sites = np.argwhere(beats_all)
    return tuple(tuple(int(i) + 1 for i in row) for row in sites)


def _plateau_interior_minima(field: np.ndarray):
    """Interior nodes attaining the global minimum without strictness."""
    n = field.ndim
    if any(s < 3 for s in field.shape):
        return ()
    lowest = field.min()
    core = np.zeros(field.shape, dtype=bool)
    core[tuple(slice(1, -1) for _ in range(n))] = True
    sites = np.argwhere(core & (field <= lowest))
    return tuple(tuple(int(i) for i in row) for row in sites)


def rank_report(
    u: GridField,
    a: float,
    spec: PhaseSpec,
    tol_rank: float = DEFAULT_RANK_TOL,
) -> RankReport:
    """Count eigenvalues of D2u - aI above the noise floor at every node.

    The floor scales with the local Hessian size, max(1, ||D2u||_F), so a
    stiff field does not fake extra rank out of roundoff.  Strict interior
    minima of the smallest eigenvalue are screened against the raw tol_rank.
    Node indices in the report address u's own grid.
    """
    fields = eigen_fields(u)
    vals = fields.values
    H = hessian_stack(u)
    scale = np.maximum(1.0, np.linalg.norm(H, axis=(-2, -1)))
    rank = np.count_nonzero(vals - a > tol_rank * scale[..., None], axis=-1)
    lam_min = vals[..., 0]
    lam_max = vals[..., -1]
    sites = _strict_interior_minima(lam_min, tol_rank)
    # interior-array indices -> full-grid indices of u
    sites = tuple(tuple(i + 1 for i in s) for s in sites)
    margin = float(np.min(np.arctan(lam_min))) - (spec.theta - math.pi) / spec.n

    def as_field(arr):
        return GridField(arr.shape, fields.origin, fields.spacing, arr.copy())

    return RankReport(
        shift=float(a),
        tol_rank=float(tol_rank),
        rank=rank,
        min_rank=int(rank.min()),
        max_rank=int(rank.max()),
        lambda_min_field=as_field(lam_min),
        lambda_max_field=as_field(lam_max),
        interior_min_sites=sites,
        threshold_margin=margin,
    )


def min_principle_check(
    lambda_field: GridField,
    tol: float = 1e-8,
    margin: float | None = None,
) -> MinPrincipleReport:
    """Screen a scalar field for the strong minimum principle.

    constant: total spread below tol.  interior_min: some complete-stencil
    node beats all its neighbors by more than margin (default tol) -- the
    counterexample verdict.  boundary_min: the minimum only happens on the
    outermost ring.  indeterminate: an interior node ties the global minimum
    without strictness; a plateau is compatible with constancy, so it is not
    reported as a violation.
    """
    if margin is None:
        margin = tol
    arr = lambda_field.as_array()
    spread = float(arr.max() - arr.min())
    if spread < tol:
        return MinPrincipleReport("constant", spread, float(arr.min()), ())
    sites = _strict_interior_minima(arr, margin)
    if sites:
        return MinPrincipleReport("interior_min", spread, float(arr.min()), sites)
    plateau = _plateau_interior_minima(arr)
    if plateau:
        return MinPrincipleReport("indeterminate", spread, float(arr.min()), plateau)
    return MinPrincipleReport("boundary_min", spread, float(arr.min()), ())


def splitting_detector(
    u: GridField,
    spec: PhaseSpec,
    tol_eigen: float = 1e-8,
    tol_angle: float = 1e-3,
) -> SplitReport:
    """Look for a fixed direction along which the Hessian splits off.

    The candidate direction is the renormalized mean of the sign-aligned
    minimal eigenvectors.  A split verdict needs the smallest eigenvalue
    constant within tol_eigen, every minimal eigenvector within tol_angle of
    the candidate, and a positive phase-threshold margin; without the margin
    the constancy theorem gives no backing and the verdict degrades to
    indeterminate.  A spread beyond ten times its tolerance is a clear
    no_split; the band in between is indeterminate.
    """
    fields = eigen_fields(u)
    lam_min = fields.values[..., 0]
    vecs = fields.vectors[..., :, 0]
    mean = vecs.reshape(-1, vecs.shape[-1]).mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm < 1e-12:
        # perfectly balanced flips; fall back to the center node's vector
        mean = vecs[_center_index(lam_min.shape)]
        norm = np.linalg.norm(mean)
    e = mean / norm
    eigenvalue_spread = float(lam_min.max() - lam_min.min())
    cosines = np.clip(np.abs(vecs.reshape(-1, e.size) @ e), 0.0, 1.0)
    direction_spread = float(np.max(np.arccos(cosines)))
    margin = float(np.min(np.arctan(lam_min))) - (spec.theta - math.pi) / spec.n

    eig_ok = eigenvalue_spread < tol_eigen
    dir_ok = direction_spread < tol_angle
    if eig_ok and dir_ok:
        verdict = "split" if margin > 0.0 else "indeterminate"
    elif eigenvalue_spread > 10.0 * tol_eigen or direction_spread > 10.0 * tol_angle:
        verdict = "no_split"
    else:
        verdict = "indeterminate"
    return SplitReport(e, eigenvalue_spread, direction_spread, verdict)


def hom2_audit(
    g,
    spec: PhaseSpec,
    tol_eq: float = 1e-6,
    tol_dev: float = 1e-8,
) -> Hom2Audit:
    """Audit sphere data of a degree-2 homogeneous potential.

    Checks the eigenvalue-angle threshold that forces such a potential to be
    an honest quadratic: when the smallest Hessian angle stays above
    (theta - pi)/n everywhere on the sphere, a solution must coincide with
    its best-fit quadratic.  The audit abstains whenever the equation itself
    fails beyond tol_eq, since the threshold constrains solutions only.

    g may be a SphereJet or a callable on unit vectors (sampled at the
    default mesh resolution).
    """
    jet = g if isinstance(g, SphereJet) else SphereJet.from_callable(g)
    if jet.n != spec.n:
        raise ValueError(f"jet dimension {jet.n} does not match spec n={spec.n}")
    hessians = jet.hessians
    eigvals = np.linalg.eigvalsh(hessians)
    min_angle = float(np.min(np.arctan(eigvals[:, 0])))
    threshold = (spec.theta - math.pi) / spec.n
    margin = min_angle - threshold
    residual = float(
        max(abs(slag_phase(h) - spec.theta) for h in hessians)
    )
    mean_h = hessians.mean(axis=0)
    if jet.constant:
        deviation = 0.0
    else:
        v = jet.vertices
        u_vals = 0.5 * np.einsum("ki,kij,kj->k", v, hessians, v)
        q_vals = 0.5 * np.einsum("ki,ij,kj->k", v, mean_h, v)
        deviation = float(np.max(np.abs(u_vals - q_vals)))
    demands = margin > 0.0
    if residual > tol_eq:
        verdict = "abstained"
    elif not demands:
        verdict = "unconstrained"
    elif deviation <= tol_dev:
        verdict = "quadratic_confirmed"
    else:
        verdict = "violation"
    return Hom2Audit(
        min_phase_angle=min_angle,
        lambda_threshold=math.tan(threshold),
        margin=margin,
        equation_residual=residual,
        quadratic_deviation=deviation,
        demands_quadratic=demands,
        verdict=verdict,
    )
