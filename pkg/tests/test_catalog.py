"""Catalog jets against finite-difference, minor-expansion, and angle oracles.

Independent oracles: central differences of the evaluators' own values and
gradients (jet consistency), principal 2x2 minors for sigma_2, numpy trace
and det for the balanced cubic, and direct angle arithmetic for the sampler.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slaglab.catalog import (
    CATALOG_NAMES,
    SphereJet,
    complete_level_set,
    eval_li,
    eval_quadratic,
    eval_warren,
    get_entry,
    homogeneous2_extension,
    sample_level_set,
)
from slaglab.errors import PoleError
from slaglab.operators import classify_phase, sigma2_positive_branch, slag_phase


def fd_gradient_oracle(f, x, h):
    grad = np.empty(x.size)
    for i in range(x.size):
        step = np.zeros(x.size)
        step[i] = h
        grad[i] = (f(x + step) - f(x - step)) / (2.0 * h)
    return grad


def fd_jacobian_oracle(f, x, h):
    cols = []
    for i in range(x.size):
        step = np.zeros(x.size)
        step[i] = h
        cols.append((f(x + step) - f(x - step)) / (2.0 * h))
    return np.stack(cols, axis=1)


def fd_hessian_oracle(f, x, h):
    n = x.size
    hess = np.empty((n, n))
    fx = f(x)
    steps = h * np.eye(n)
    for i in range(n):
        hess[i, i] = (f(x + steps[i]) - 2.0 * fx + f(x - steps[i])) / (h * h)
        for j in range(i):
            mixed = (
                f(x + steps[i] + steps[j])
                - f(x + steps[i] - steps[j])
                - f(x - steps[i] + steps[j])
                + f(x - steps[i] - steps[j])
            )
            hess[i, j] = hess[j, i] = mixed / (4.0 * h * h)
    return hess


def sigma2_by_minors(m):
    total = 0.0
    for i in range(m.shape[0]):
        for j in range(i):
            total += m[i, i] * m[j, j] - m[i, j] * m[j, i]
    return total


def jet_consistency_errors(evaluator, points, h):
    worst_grad = 0.0
    worst_hess = 0.0
    for x in points:
        _, du, d2u = evaluator(x)
        grad_err = np.max(
            np.abs(fd_gradient_oracle(lambda y: evaluator(y)[0], x, h) - du)
        )
        hess_err = np.max(
            np.abs(fd_jacobian_oracle(lambda y: evaluator(y)[1], x, h) - d2u)
        )
        worst_grad = max(worst_grad, grad_err)
        worst_hess = max(worst_hess, hess_err)
    return worst_grad, worst_hess


def box_lattice(half_width, nodes):
    side = np.linspace(-half_width, half_width, nodes)
    return np.stack(np.meshgrid(side, side, side, indexing="ij"), axis=-1).reshape(-1, 3)


class TestJetConsistency:
    @pytest.mark.parametrize("name", CATALOG_NAMES)
    def test_fd_order(self, name):
        entry = get_entry(name)
        rng = np.random.default_rng(11)
        points = rng.uniform(-1.0, 1.0, size=(8, 3))
        if name == "hom2":
            points = points[np.linalg.norm(points, axis=1) > 0.4]
        coarse = jet_consistency_errors(entry.evaluator, points, 1e-2)
        fine = jet_consistency_errors(entry.evaluator, points, 1e-3)
        for err_coarse, err_fine in zip(coarse, fine):
            if err_coarse < 1e-9 and err_fine < 1e-9:
                continue  # differencing is exact on these jets, only roundoff left
            assert math.log10(err_coarse / err_fine) >= 1.9

    def test_entry_metadata(self):
        warren = get_entry("warren")
        assert (warren.n, warren.theta, warren.admissible_box) == (3, "sigma2", 1.5)
        li = get_entry("li")
        assert (li.n, li.theta) == (3, 0.0)
        quad = get_entry("quadratic")
        assert quad.theta == pytest.approx(math.pi / 2, abs=1e-15)
        assert get_entry("hom2").n == 3
        with pytest.raises(KeyError):
            get_entry("nope")


class TestWarren:
    def test_origin_jet(self):
        u, du, d2u = eval_warren(np.zeros(3))
        assert u == pytest.approx(-0.75, abs=1e-15)
        np.testing.assert_allclose(du, [0.0, 0.0, -1.25], atol=1e-15)
        np.testing.assert_allclose(d2u, np.diag([2.0, 2.0, -0.75]), atol=1e-15)
        sigma2, branch = sigma2_positive_branch(d2u)
        assert sigma2 == pytest.approx(1.0, abs=1e-14)
        assert branch

    def test_axis_sweep_stays_on_level(self):
        for t in np.linspace(-1.5, 1.5, 31):
            _, _, d2u = eval_warren(np.array([0.0, 0.0, t]))
            sigma2, branch = sigma2_positive_branch(d2u)
            assert abs(sigma2 - 1.0) <= 1e-12
            assert branch

    def test_box_residual_via_minors(self):
        worst = 0.0
        for x in box_lattice(1.5, 9):
            _, _, d2u = eval_warren(x)
            worst = max(worst, abs(sigma2_by_minors(d2u) - 1.0))
            assert np.trace(d2u) > 0.0
        assert worst < 1e-11

    def test_phase_on_unit_box(self):
        for x in box_lattice(1.0, 9):
            _, _, d2u = eval_warren(x)
            assert abs(slag_phase(d2u) - math.pi / 2) <= 1e-10


class TestLi:
    def test_unit_point_jet(self):
        u, du, d2u = eval_li(np.ones(3))
        assert u == pytest.approx(-2.0 / 3.0, abs=1e-15)
        np.testing.assert_allclose(du, [2.0, -2.0, -1.0], atol=1e-15)
        expected = np.array([[2.0, 2.0, 0.0], [2.0, -4.0, -1.0], [0.0, -1.0, 0.0]])
        np.testing.assert_allclose(d2u, expected, atol=1e-15)
        assert np.trace(d2u) == pytest.approx(-2.0, abs=1e-15)
        assert np.linalg.det(d2u) == pytest.approx(-2.0, abs=1e-13)

    def test_origin_jet(self):
        u, du, d2u = eval_li(np.zeros(3))
        assert u == 0.0
        np.testing.assert_allclose(du, np.zeros(3), atol=1e-15)
        expected = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, -1.0, 0.0]])
        np.testing.assert_allclose(d2u, expected, atol=1e-15)
        assert np.trace(d2u) == 0.0
        assert np.linalg.det(d2u) == 0.0

    def test_trace_equals_det_on_box(self):
        worst = 0.0
        for x in box_lattice(1.5, 9):
            _, _, d2u = eval_li(x)
            worst = max(worst, abs(np.trace(d2u) - np.linalg.det(d2u)))
        assert worst < 1e-11

    def test_phase_on_box(self):
        for x in box_lattice(1.0, 9):
            _, _, d2u = eval_li(x)
            assert abs(slag_phase(d2u)) <= 1e-10


class TestQuadratic:
    def test_identity_jet(self):
        e1 = np.array([1.0, 0.0, 0.0])
        u, du, d2u = eval_quadratic(np.eye(3), None, 0.0, e1)
        assert u == pytest.approx(0.5, abs=1e-16)
        np.testing.assert_allclose(du, e1, atol=1e-16)
        np.testing.assert_allclose(d2u, np.eye(3), atol=1e-16)

    def test_indefinite_diagonal_has_zero_phase(self):
        q = np.diag([1.0, 0.0, -1.0])
        rng = np.random.default_rng(5)
        for x in rng.uniform(-2.0, 2.0, size=(4, 3)):
            _, _, d2u = eval_quadratic(q, None, 0.0, x)
            assert abs(slag_phase(d2u)) <= 1e-14

    def test_default_entry_on_positive_branch(self):
        _, _, d2u = get_entry("quadratic").evaluator(np.array([0.3, -0.2, 0.9]))
        sigma2, branch = sigma2_positive_branch(d2u)
        assert sigma2 == pytest.approx(1.0, abs=1e-15)
        assert branch

    def test_affine_terms(self):
        q = np.array([[2.0, 1.0], [1.0, 4.0]])
        b = np.array([-1.0, 3.0])
        x = np.array([0.7, -0.4])
        u, du, d2u = eval_quadratic(q, b, 2.5, x)
        assert u == pytest.approx(0.5 * x @ q @ x + b @ x + 2.5, rel=1e-15)
        np.testing.assert_allclose(du, q @ x + b, atol=1e-15)
        np.testing.assert_allclose(d2u, q, atol=1e-16)


class TestLevelSetSampler:
    def test_antisymmetric_completion(self):
        spec = classify_phase(3, 0.0)
        lam = complete_level_set([1.0, 0.0], spec)
        np.testing.assert_allclose(lam, [1.0, 0.0, -1.0], atol=1e-15)

    def test_critical_completion(self):
        spec = classify_phase(3, math.pi / 2)
        lam = complete_level_set([1.0, 1.0], spec)
        np.testing.assert_allclose(lam, [1.0, 1.0, 0.0], atol=1e-15)

    def test_pole_draw_rejected(self):
        spec = classify_phase(3, 0.0)
        with pytest.raises(PoleError):
            complete_level_set([1.0, 1.0], spec)

    def test_permutation_closure(self):
        spec = classify_phase(4, 0.7)
        free = np.array([1.3, -0.4, 2.2])
        base = complete_level_set(free, spec)[-1]
        for perm in ([2, 0, 1], [1, 2, 0], [2, 1, 0]):
            assert abs(complete_level_set(free[perm], spec)[-1] - base) <= 1e-12

    def test_sample_meets_constraint(self):
        spec = classify_phase(3, 1.1)
        for seed in range(6):
            lam = sample_level_set(spec, seed)
            assert abs(float(np.sum(np.arctan(lam))) - 1.1) <= 1e-12

    def test_seed_determinism(self):
        spec = classify_phase(3, -0.8)
        np.testing.assert_array_equal(
            sample_level_set(spec, 42), sample_level_set(spec, 42)
        )

    def test_angle_box_respected(self):
        spec = classify_phase(3, 0.2)
        box = (-0.3, 0.4)
        for seed in range(4):
            lam = sample_level_set(spec, seed, angle_box=box)
            angles = np.arctan(lam[:-1])
            assert np.all(angles >= box[0]) and np.all(angles <= box[1])

    def test_budget_exhaustion(self):
        spec = classify_phase(2, 0.9 * math.pi)
        with pytest.raises(ValueError, match="no admissible draw"):
            sample_level_set(spec, 0, angle_box=(-0.1, 0.1), max_tries=50)

    def test_bad_angle_box_rejected(self):
        spec = classify_phase(3, 0.0)
        with pytest.raises(ValueError, match="angle box"):
            sample_level_set(spec, 0, angle_box=(-2.0, 2.0))

    @settings(max_examples=60, deadline=None)
    @given(
        seed=st.integers(0, 2**32 - 1),
        n=st.integers(2, 5),
        frac=st.floats(-0.8, 0.8),
    )
    def test_constraint_property(self, seed, n, frac):
        theta = frac * n * math.pi / 2
        spec = classify_phase(n, theta)
        lam = sample_level_set(spec, seed)
        assert lam.shape == (n,)
        assert abs(float(np.sum(np.arctan(lam))) - theta) <= 1e-12


def sphere_cubic(xi):
    # restriction of a genuinely non-quadratic profile; u = x1^2 x2 / |x|
    return xi[0] ** 2 * xi[1]


def extended_cubic(x):
    rad = np.linalg.norm(x)
    return rad * rad * sphere_cubic(x / rad)


class TestHomogeneousExtension:
    def test_quadratic_data_is_exact(self):
        a = np.array([[1.0, 0.4, 0.0], [0.4, -0.6, 0.2], [0.0, 0.2, 2.0]])
        jet = SphereJet.from_quadratic(a)
        rng = np.random.default_rng(3)
        for x in rng.uniform(-2.0, 2.0, size=(5, 3)):
            u, du, d2u = homogeneous2_extension(jet, x)
            assert u == pytest.approx(0.5 * x @ a @ x, rel=1e-14, abs=1e-14)
            np.testing.assert_allclose(du, a @ x, atol=1e-14)
            np.testing.assert_allclose(d2u, a, atol=1e-15)

    def test_callable_quadratic_matches_constant_jet(self):
        a = np.diag([1.0, 1.0, 0.0])
        jet = SphereJet.from_callable(lambda xi: 0.5 * xi @ a @ xi, resolution=2)
        rng = np.random.default_rng(7)
        for x in rng.normal(size=(6, 3)):
            _, _, d2u = homogeneous2_extension(jet, x)
            np.testing.assert_allclose(d2u, a, atol=1e-6)

    def test_hessian_constant_along_rays(self):
        jet = SphereJet.from_callable(sphere_cubic, resolution=2)
        rng = np.random.default_rng(9)
        for x in rng.normal(size=(5, 3)):
            _, _, ref = homogeneous2_extension(jet, x)
            for t in (0.5, 2.0):
                _, _, scaled = homogeneous2_extension(jet, t * x)
                np.testing.assert_array_equal(scaled, ref)

    def test_euler_identity(self):
        jet = SphereJet.from_callable(sphere_cubic, resolution=2)
        rng = np.random.default_rng(13)
        for x in rng.normal(size=(8, 3)):
            u, du, _ = homogeneous2_extension(jet, x)
            assert float(x @ du) == pytest.approx(2.0 * u, rel=1e-12, abs=1e-12)

    def test_origin_rejected(self):
        jet = SphereJet.from_quadratic(np.eye(3))
        with pytest.raises(ValueError, match="origin"):
            homogeneous2_extension(jet, np.zeros(3))

    def test_vertex_hessians_match_direct_differences(self):
        jet = SphereJet.from_callable(sphere_cubic, resolution=2)
        for idx in (0, 17, 41):
            v = jet.vertices[idx]
            oracle = fd_hessian_oracle(extended_cubic, v, 1e-4)
            np.testing.assert_allclose(jet.hessian_at(v), oracle, atol=1e-6)

    def test_interpolation_error_shrinks_with_resolution(self):
        coarse = SphereJet.from_callable(sphere_cubic, resolution=2)
        fine = SphereJet.from_callable(sphere_cubic, resolution=4)
        rng = np.random.default_rng(21)
        points = rng.normal(size=(20, 3))
        points /= np.linalg.norm(points, axis=1, keepdims=True)

        def worst(jet):
            errs = [
                np.max(np.abs(jet.hessian_at(p) - fd_hessian_oracle(extended_cubic, p, 1e-4)))
                for p in points
            ]
            return max(errs)

        err_coarse = worst(coarse)
        err_fine = worst(fine)
        assert err_fine <= err_coarse / 2.0
        assert err_fine < 5e-3

    def test_meshless_jet_rejects_varying_data(self):
        with pytest.raises(ValueError, match="constant"):
            SphereJet(None, None, np.stack([np.eye(3), 2.0 * np.eye(3)]))
