"""Scalar operators on Hessians and their phase-structure predicates.

Three operator families share one interface here:

  * the Lagrangian phase  F(M) = sum_i arctan(lambda_i(M)),
  * sigma_2 on its positive branch (sigma_1 > 0),
  * the ratio  Lambda(mu) = sigma_{n-1}(mu) / sigma_{n-2}(mu)  on positive
    vectors, whose level 1/((n-1) m) with m = sqrt(2/(n (n-1))) is the image
    of the sigma_2 = 1 branch under the shifted-inverse eigenvalue map.

A phase value Theta is classified against the critical size (n-2) pi/2, and
the thresholds (Theta - pi)/n, (Theta + pi)/n bound arctan of the extreme
eigenvalues of any solution Hessian.  The level-set probe Monte-Carlo checks
midpoint concavity/convexity of {sum arctan lambda_i = Theta} in eigenvalue
space on the sides where that holds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import BranchError
from .spectral import as_sym_matrix, eig_sym, sigma_k, SymMatrix

SUPERCRITICAL = "supercritical"
CRITICAL = "critical"
SUBCRITICAL = "subcritical"

_RATIO_SPREAD_SWITCH = 1e8


def lewy_modulus(n: int) -> float:
    """The shift modulus m = sqrt(2 / (n (n-1))) of the shifted-inverse transform."""
    if n < 2:
        raise ValueError("dimension must be at least 2")
    return math.sqrt(2.0 / (n * (n - 1)))


@dataclass(frozen=True)
class PhaseSpec:
    """A phase value with its classification and eigenvalue-angle thresholds."""

    n: int
    theta: float
    classification: str
    lower_threshold: float
    upper_threshold: float


def classify_phase(n: int, theta: float) -> PhaseSpec:
    """Classify a phase Theta for dimension n and compute both thresholds.

    Raises for |Theta| >= n pi/2, where no Hessian can attain the phase.
    The critical comparison |Theta| = (n-2) pi/2 is exact on the stored reals.
    """
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ValueError("dimension n must be an integer >= 2")
    theta = float(theta)
    if not math.isfinite(theta) or abs(theta) >= n * math.pi / 2:
        raise ValueError(
            f"phase {theta!r} is not attainable in dimension {n}: need |theta| < n*pi/2"
        )
    crit = (n - 2) * math.pi / 2
    if abs(theta) > crit:
        cls = SUPERCRITICAL
    elif abs(theta) == crit:
        cls = CRITICAL
    else:
        cls = SUBCRITICAL
    return PhaseSpec(
        n=int(n),
        theta=theta,
        classification=cls,
        lower_threshold=(theta - math.pi) / n,
        upper_threshold=(theta + math.pi) / n,
    )


def slag_phase(M) -> float:
    """Lagrangian phase sum_i arctan(lambda_i(M)), in (-n pi/2, n pi/2)."""
    lam = eig_sym(M).eigenvalues
    return float(np.sum(np.arctan(lam)))


def slag_linearization(M) -> SymMatrix:
    """Gradient matrix of the phase operator: (I + M^2)^{-1}.

    Assembled in the eigenbasis as Q diag(1/(1+lambda_i^2)) Q', which keeps it
    exactly symmetric and positive definite; positivity is the ellipticity of
    the phase equation.
    """
    spec = eig_sym(M)
    d = 1.0 / (1.0 + spec.eigenvalues**2)
    q = spec.eigenvectors
    g = (q * d) @ q.T
    return SymMatrix(0.5 * (g + g.T))


def sigma2_positive_branch(M) -> tuple[float, bool]:
    """(sigma_2 of the spectrum, whether sigma_1 > 0 holds strictly)."""
    lam = eig_sym(M).eigenvalues
    return sigma_k(lam, 2), bool(np.sum(lam) > 0.0)


def lambda_ratio(mu) -> float:
    """Lambda(mu) = sigma_{n-1}(mu) / sigma_{n-2}(mu) on the positive orthant.

    Degree-1 homogeneous, concave, and componentwise increasing.  Wide spreads
    (max/min > 1e8) are rescaled by the largest component before forming the
    sigmas, which is the homogeneity-exact equivalent of log-space evaluation.
    """
    x = np.asarray(mu, dtype=float).ravel()
    n = x.shape[0]
    if n < 2:
        raise ValueError("lambda_ratio needs at least two components")
    if not np.all(np.isfinite(x)) or np.any(x <= 0.0):
        raise ValueError("lambda_ratio requires strictly positive, finite mu")
    hi = float(np.max(x))
    if hi / float(np.min(x)) > _RATIO_SPREAD_SWITCH:
        scaled = x / hi
        return hi * sigma_k(scaled, n - 1) / sigma_k(scaled, n - 2)
    return sigma_k(x, n - 1) / sigma_k(x, n - 2)


def _lambda_ratio_partials(mu: np.ndarray) -> np.ndarray:
    """d Lambda / d mu_i via sigma-recurrences with the i-th entry removed."""
    n = mu.shape[0]
    s_n1 = sigma_k(mu, n - 1)
    s_n2 = sigma_k(mu, n - 2)
    out = np.empty(n)
    for i in range(n):
        rest = np.delete(mu, i)
        d_n1 = sigma_k(rest, n - 2)
        d_n2 = sigma_k(rest, n - 3) if n >= 3 else 0.0
        out[i] = (d_n1 * s_n2 - s_n1 * d_n2) / (s_n2 * s_n2)
    return out


@dataclass(frozen=True)
class OperatorModel:
    """One of the scalar Hessian operators together with its target level."""

    kind: str
    n: int
    level: float

    _KINDS = ("slag_phase", "sigma2_positive_branch", "lambda_ratio")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if not math.isfinite(self.level):
            raise ValueError("operator level must be finite")

    @classmethod
    def slag(cls, n: int, theta: float) -> "OperatorModel":
        classify_phase(n, theta)
        return cls(kind="slag_phase", n=int(n), level=float(theta))

    @classmethod
    def sigma2(cls, n: int) -> "OperatorModel":
        if n < 2:
            raise ValueError("dimension must be at least 2")
        return cls(kind="sigma2_positive_branch", n=int(n), level=1.0)

    @classmethod
    def lewy_ratio(cls, n: int) -> "OperatorModel":
        m = lewy_modulus(n)
        return cls(kind="lambda_ratio", n=int(n), level=1.0 / ((n - 1) * m))

    def evaluate(self, M) -> float:
        m = as_sym_matrix(M)
        if m.dim != self.n:
            raise ValueError(f"operator is {self.n}-dimensional, matrix is {m.dim}x{m.dim}")
        if self.kind == "slag_phase":
            return slag_phase(m)
        if self.kind == "sigma2_positive_branch":
            return sigma2_positive_branch(m)[0]
        return lambda_ratio(eig_sym(m).eigenvalues)

    def residual(self, M) -> float:
        return self.evaluate(M) - self.level

    def admissible(self, M) -> bool:
        m = as_sym_matrix(M)
        if self.kind == "slag_phase":
            return True
        lam = eig_sym(m).eigenvalues
        if self.kind == "sigma2_positive_branch":
            return bool(np.sum(lam) > 0.0)
        return bool(lam[0] > 0.0)

    def gradient(self, M) -> SymMatrix:
        m = as_sym_matrix(M)
        if self.kind == "slag_phase":
            return slag_linearization(m)
        if self.kind == "sigma2_positive_branch":
            e = m.entries
            g = float(np.trace(e)) * np.eye(m.dim) - e
            return SymMatrix(g)
        spec = eig_sym(m)
        if spec.eigenvalues[0] <= 0.0:
            raise BranchError("lambda_ratio gradient needs a positive definite matrix")
        d = _lambda_ratio_partials(spec.eigenvalues)
        q = spec.eigenvectors
        g = (q * d) @ q.T
        return SymMatrix(0.5 * (g + g.T))


@dataclass(frozen=True)
class ProbeReport:
    """Monte-Carlo midpoint probe of a phase level set in eigenvalue space."""

    theta: float
    n: int
    trials: int
    violations: int
    worst_margin: float
    seed: int
    side: str

    def to_dict(self) -> dict:
        return {
            "theta": self.theta,
            "n": self.n,
            "trials": self.trials,
            "violations": self.violations,
            "worst_margin": self.worst_margin,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _sample_level_set_batch(rng, n: int, theta: float, count: int, pole_margin: float):
    """Vectors lambda with sum arctan lambda_i = theta, by rejection.

    The first n-1 angles are uniform in the open angle box; the draw is kept
    only when the residual angle theta - sum lands strictly inside
    (-pi/2, pi/2), and the last eigenvalue is its tangent.
    """
    lo, hi = -math.pi / 2 + pole_margin, math.pi / 2 - pole_margin
    out = np.empty((count, n))
    have = 0
    attempts = 0
    while have < count:
        attempts += 1
        if attempts > 20_000:
            raise ValueError(
                f"level-set sampling infeasible for theta={theta} in dimension {n}"
            )
        batch = max(4096, 2 * (count - have))
        head = rng.uniform(lo, hi, size=(batch, n - 1))
        residual = theta - head.sum(axis=1)
        ok = np.abs(residual) < math.pi / 2 - 1e-12
        took = min(int(np.count_nonzero(ok)), count - have)
        if took == 0:
            continue
        head = head[ok][:took]
        residual = residual[ok][:took]
        out[have : have + took, : n - 1] = np.tan(head)
        out[have : have + took, n - 1] = np.tan(residual)
        have += took
    return out


def level_set_concavity_probe(
    spec: PhaseSpec,
    trials: int,
    rng_seed: int,
    violation_tol: float = 1e-12,
    pole_margin: float = 1e-6,
) -> ProbeReport:
    """Midpoint test of the level set {sum arctan lambda_i = theta}.

    For theta <= (2-n) pi/2 the sublevel set is convex, so midpoints of
    level-set pairs must satisfy F(mid) <= theta; for theta >= (n-2) pi/2 the
    superlevel set is convex and F(mid) >= theta.  The open band in between
    carries no such guarantee and is refused.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    n, theta = spec.n, spec.theta
    concave_cut = (2 - n) * math.pi / 2
    convex_cut = (n - 2) * math.pi / 2
    if theta <= concave_cut:
        side = "concave"
    elif theta >= convex_cut:
        side = "convex"
    else:
        raise ValueError(
            "probe not asserted for phases in the open band "
            f"({concave_cut:.6f}, {convex_cut:.6f}); got theta={theta}"
        )
    rng = np.random.default_rng(rng_seed)
    pairs = _sample_level_set_batch(rng, n, theta, 2 * trials, pole_margin)
    mid = 0.5 * (pairs[:trials] + pairs[trials:])
    phase_mid = np.sum(np.arctan(mid), axis=1)
    margin = (phase_mid - theta) if side == "concave" else (theta - phase_mid)
    worst = float(np.max(margin))
    violations = int(np.count_nonzero(margin > violation_tol))
    return ProbeReport(
        theta=theta,
        n=n,
        trials=int(trials),
        violations=violations,
        worst_margin=worst,
        seed=int(rng_seed),
        side=side,
    )
