"""Uniform grids, second-order finite differences, and field persistence.

A GridField is a scalar sampled on a uniform node lattice in two or three
dimensions (vector data travels as tuples of fields).  All differencing is
central and second order: the 3-point stencil on the diagonal of the Hessian
and the 4-point cross for mixed entries, so quadratics differentiate exactly
and cubics have exact Hessians.

File format (one field per file): a single JSON header line

    {"magic": "slaglab-grid", "version": 1, "n_dims": 3, "shape": [...],
     "origin": [...], "spacing": h, "count": N}

terminated by a newline, followed by count little-endian IEEE-754 float64
values in row-major order (last axis fastest).  Optional header fields get
defaults on read: origin -> zeros, version -> 1, count -> product(shape),
n_dims -> len(shape).  magic, shape, and spacing are mandatory.

Solver grids use a single spacing for every axis.  Transform outputs whose
natural node box is anisotropic (a gradient range differs per axis) may carry
a per-axis spacing list; the header stores it as a JSON list and the solver
refuses such fields.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import GridFormatError
from .spectral import SymMatrix

__all__ = [
    "GridField",
    "boundary_mask",
    "fd_gradient",
    "fd_hessian",
    "gradient_stack",
    "hessian_stack",
    "read_field",
    "residual_field",
    "write_field",
]

_MAGIC = "slaglab-grid"


@dataclass(frozen=True)
class GridField:
    """Scalar samples on a uniform lattice; values flat, row-major, read-only."""

    shape: tuple[int, ...]
    origin: np.ndarray
    spacing: float | tuple[float, ...]
    values: np.ndarray

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        object.__setattr__(self, "shape", shape)
        if len(shape) not in (2, 3):
            raise ValueError(f"fields are 2- or 3-dimensional, got {len(shape)} axes")
        if any(s < 5 for s in shape):
            raise ValueError(f"need at least 5 nodes per axis for the stencils, got {shape}")
        origin = np.asarray(self.origin, dtype=float).reshape(len(shape))
        origin.flags.writeable = False
        object.__setattr__(self, "origin", origin)
        if not np.all(np.isfinite(origin)):
            raise ValueError("non-finite origin")
        if np.ndim(self.spacing) == 0:
            spacing = float(self.spacing)
            good = spacing > 0.0 and np.isfinite(spacing)
        else:
            spacing = tuple(float(h) for h in self.spacing)
            good = len(spacing) == len(shape) and all(
                h > 0.0 and np.isfinite(h) for h in spacing
            )
        if not good:
            raise ValueError(f"spacing must be positive and finite, got {spacing}")
        object.__setattr__(self, "spacing", spacing)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if values.size != int(np.prod(shape)):
            raise ValueError(
                f"value count {values.size} does not match shape {shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite field values")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def n_dims(self) -> int:
        return len(self.shape)

    @property
    def spacing_vector(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.spacing, dtype=float), (self.n_dims,))

    @property
    def is_isotropic(self) -> bool:
        return np.ndim(self.spacing) == 0

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.shape)

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing_vector[axis] * np.arange(self.shape[axis])

    def node_coords(self) -> np.ndarray:
        """Lattice coordinates, shape (*shape, n_dims)."""
        axes = [self.axis_coords(k) for k in range(self.n_dims)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def coords(self, node) -> np.ndarray:
        return self.origin + self.spacing_vector * np.asarray(node, dtype=float)

    def replace_values(self, values) -> "GridField":
        return GridField(self.shape, self.origin, self.spacing, values)

    @classmethod
    def from_function(cls, fn: Callable, origin, spacing, shape) -> "GridField":
        field = cls(tuple(shape), origin, spacing, np.zeros(int(np.prod(shape))))
        pts = field.node_coords().reshape(-1, field.n_dims)
        vals = np.array([float(fn(p)) for p in pts])
        return field.replace_values(vals)

    @classmethod
    def centered(cls, fn: Callable, half_width: float, nodes: int, n_dims: int = 3) -> "GridField":
        """Sample fn on [-half_width, half_width]^n_dims with `nodes` per axis."""
        spacing = 2.0 * half_width / (nodes - 1)
        origin = -half_width * np.ones(n_dims)
        return cls.from_function(fn, origin, spacing, (nodes,) * n_dims)


def boundary_mask(shape) -> np.ndarray:
    """True on nodes with any index on the outer layer."""
    mask = np.zeros(tuple(shape), dtype=bool)
    for axis in range(len(shape)):
        idx = [slice(None)] * len(shape)
        idx[axis] = 0
        mask[tuple(idx)] = True
        idx[axis] = -1
        mask[tuple(idx)] = True
    return mask


def _require_interior(field: GridField, node) -> tuple[int, ...]:
    node = tuple(int(i) for i in node)
    for i, s in zip(node, field.shape):
        if not 1 <= i <= s - 2:
            raise IndexError(f"node {node} is not strictly interior to shape {field.shape}")
    return node


def fd_gradient(field: GridField, node) -> np.ndarray:
    """Central-difference gradient at one strictly interior node."""
    node = _require_interior(field, node)
    arr = field.as_array()
    h = field.spacing_vector
    grad = np.empty(field.n_dims)
    for k in range(field.n_dims):
        up = list(node)
        dn = list(node)
        up[k] += 1
        dn[k] -= 1
        grad[k] = (arr[tuple(up)] - arr[tuple(dn)]) / (2.0 * h[k])
    return grad


def fd_hessian(field: GridField, node) -> SymMatrix:
    """Second-order Hessian at one strictly interior node.

    Diagonal entries use the 3-point second difference, mixed entries the
    4-point cross, so the result is symmetric by construction.
    """
    node = _require_interior(field, node)
    arr = field.as_array()
    h = field.spacing_vector
    n = field.n_dims
    hess = np.empty((n, n))
    center = arr[node]

    def at(*offsets):
        return arr[tuple(i + o for i, o in zip(node, offsets))]

    for i in range(n):
        ei = [0] * n
        ei[i] = 1
        hess[i, i] = (at(*ei) - 2.0 * center + at(*[-o for o in ei])) / (h[i] * h[i])
        for j in range(i):
            pp = [0] * n
            pp[i] = 1
            pp[j] = 1
            pm = [0] * n
            pm[i] = 1
            pm[j] = -1
            mixed = at(*pp) - at(*pm) - at(*[-o for o in pm]) + at(*[-o for o in pp])
            hess[i, j] = hess[j, i] = mixed / (4.0 * h[i] * h[j])
    return SymMatrix(hess)


def _shifted_interior(arr: np.ndarray, offsets) -> np.ndarray:
    idx = tuple(slice(1 + o, s - 1 + o) for o, s in zip(offsets, arr.shape))
    return arr[idx]


def gradient_stack(field: GridField) -> np.ndarray:
    """Gradients at all interior nodes, shape (*interior_shape, n_dims)."""
    arr = field.as_array()
    n = field.n_dims
    h = field.spacing_vector
    zero = [0] * n
    out = np.empty(tuple(s - 2 for s in field.shape) + (n,))
    for k in range(n):
        up = list(zero)
        up[k] = 1
        dn = list(zero)
        dn[k] = -1
        out[..., k] = (_shifted_interior(arr, up) - _shifted_interior(arr, dn)) / (
            2.0 * h[k]
        )
    return out


def hessian_stack(field: GridField) -> np.ndarray:
    """Hessians at all interior nodes, shape (*interior_shape, n_dims, n_dims)."""
    arr = field.as_array()
    n = field.n_dims
    h = field.spacing_vector
    core = _shifted_interior(arr, [0] * n)
    out = np.empty(core.shape + (n, n))
    for i in range(n):
        ei = [0] * n
        ei[i] = 1
        out[..., i, i] = (
            _shifted_interior(arr, ei)
            - 2.0 * core
            + _shifted_interior(arr, [-o for o in ei])
        ) / (h[i] * h[i])
        for j in range(i):
            pp = [0] * n
            pp[i] = 1
            pp[j] = 1
            pm = [0] * n
            pm[i] = 1
            pm[j] = -1
            mixed = (
                _shifted_interior(arr, pp)
                - _shifted_interior(arr, pm)
                - _shifted_interior(arr, [-o for o in pm])
                + _shifted_interior(arr, [-o for o in pp])
            )
            out[..., i, j] = out[..., j, i] = mixed / (4.0 * h[i] * h[j])
    return out


def batch_operator_values(hessians: np.ndarray, op) -> np.ndarray:
    """Vectorized F(D^2 u) over a stack of Hessians.

    Uses the closed sigma formulas where available and LAPACK spectra for
    the angle sum; agreement with the scalar OperatorModel path is pinned by
    tests, keeping the rotation-based eigensolver as the reference route.
    """
    if op.kind == "slag_phase":
        lam = np.linalg.eigvalsh(hessians)
        return np.sum(np.arctan(lam), axis=-1)
    if op.kind == "sigma2_positive_branch":
        tr = np.trace(hessians, axis1=-2, axis2=-1)
        tr2 = np.trace(hessians @ hessians, axis1=-2, axis2=-1)
        return 0.5 * (tr * tr - tr2)
    if op.kind == "lambda_ratio":
        lam = np.linalg.eigvalsh(hessians)
        if np.any(lam <= 0.0):
            raise ValueError("ratio operator needs positive spectra")
        n = lam.shape[-1]
        elem = np.zeros(lam.shape[:-1] + (n + 1,))
        elem[..., 0] = 1.0
        for k in range(n):
            elem[..., 1 : k + 2] = elem[..., 1 : k + 2] + lam[..., k : k + 1] * elem[..., 0 : k + 1]
        return elem[..., n - 1] / elem[..., n - 2]
    raise ValueError(f"unknown operator kind {op.kind!r}")


def residual_field(field: GridField, op, return_mask: bool = False):
    """F(D^2 u) minus the operator level per interior node; boundary zeroed.

    With return_mask=True also returns a boolean array over the full lattice
    marking interior nodes off the positive branch (sigma_1 <= 0); the mask
    is all False for operators without a branch constraint.
    """
    hess = hessian_stack(field)
    interior = batch_operator_values(hess, op) - op.level
    res = np.zeros(field.shape)
    core = tuple(slice(1, -1) for _ in field.shape)
    res[core] = interior
    out = GridField(field.shape, field.origin, field.spacing, res.reshape(-1))
    if not return_mask:
        return out
    mask = np.zeros(field.shape, dtype=bool)
    if op.kind == "sigma2_positive_branch":
        mask[core] = np.trace(hess, axis1=-2, axis2=-1) <= 0.0
    return out, mask


def write_field(field: GridField, path) -> None:
    header = {
        "magic": _MAGIC,
        "version": 1,
        "n_dims": field.n_dims,
        "shape": list(field.shape),
        "origin": [float(v) for v in field.origin],
        "spacing": field.spacing if field.is_isotropic else list(field.spacing),
        "count": int(field.values.size),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(field.values.astype("<f8").tobytes())


def read_field(path) -> GridField:
    with open(path, "rb") as fh:
        raw = fh.read()
    newline = raw.find(b"\n")
    if newline < 0:
        raise GridFormatError("missing header-terminating newline", offset=len(raw))
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise GridFormatError(f"unparseable header: {exc}", offset=0) from exc
    if not isinstance(header, dict) or header.get("magic") != _MAGIC:
        raise GridFormatError(f"bad magic, expected {_MAGIC!r}", offset=0)
    if header.get("version", 1) != 1:
        raise GridFormatError(f"unsupported version {header.get('version')!r}", offset=0)
    for key in ("shape", "spacing"):
        if key not in header:
            raise GridFormatError(f"header missing mandatory field {key!r}", offset=0)
    shape = tuple(int(s) for s in header["shape"])
    n_dims = int(header.get("n_dims", len(shape)))
    if n_dims != len(shape):
        raise GridFormatError(
            f"n_dims {n_dims} inconsistent with shape {shape}", offset=0
        )
    count = int(header.get("count", int(np.prod(shape))))
    if count != int(np.prod(shape)):
        raise GridFormatError(
            f"count {count} does not match shape product {int(np.prod(shape))}", offset=0
        )
    origin = header.get("origin", [0.0] * n_dims)
    payload = raw[newline + 1 :]
    expected = 8 * count
    if len(payload) != expected:
        raise GridFormatError(
            f"payload holds {len(payload)} bytes, expected {expected}",
            offset=newline + 1 + min(len(payload), expected),
        )
    values = np.frombuffer(payload, dtype="<f8")
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise GridFormatError(
            f"non-finite value at index {bad}", offset=newline + 1 + 8 * bad
        )
    spacing = header["spacing"]
    if isinstance(spacing, list):
        spacing = tuple(float(h) for h in spacing)
    else:
        spacing = float(spacing)
    try:
        return GridField(shape, origin, spacing, values)
    except (TypeError, ValueError) as exc:
        raise GridFormatError(str(exc), offset=0) from exc
