"""Transform tests: eigenvalue-level closed forms against matrix routes,
field-level maps against exact quadratic jets, and the duality relations
between rotation, conjugation, and the shifted conjugate."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import RegularGridInterpolator

from slaglab.catalog import eval_quadratic, eval_warren
from slaglab.errors import BranchError, ExpansionError, NonConvexFieldError, PoleError
from slaglab.grid import GridField, gradient_stack, hessian_stack
from slaglab.operators import lambda_ratio, lewy_modulus, slag_phase
from slaglab.transforms import (
    GraphSample,
    RotationParams,
    distance_expansion_check,
    eigen_rotation_map,
    expansion_bound,
    interior_attainment_mask,
    legendre_lewy_transform,
    legendre_transform,
    mobius_hessian_map,
    mu_from_lambda,
    rotate_graph,
    rotated_phase,
)

SQ3 = math.sqrt(3.0)


def random_symmetric(rng, n, scale=1.0):
    m = rng.normal(size=(n, n)) * scale
    return 0.5 * (m + m.T)


def quadratic_field(Q, half_width, nodes, n_dims=3):
    return GridField.centered(
        lambda x: eval_quadratic(np.asarray(Q), None, 0.0, x)[0],
        half_width,
        nodes,
        n_dims=n_dims,
    )


class TestRotationParams:
    def test_trig_identities(self):
        p = RotationParams(math.pi / 3, validity_margin=0.1)
        assert p.c**2 + p.s**2 == pytest.approx(1.0, abs=1e-15)
        assert p.alpha == pytest.approx(math.pi / 3 - math.pi / 2)
        assert math.tan(p.beta) * p.a == pytest.approx(-1.0, abs=1e-12)
        assert p.c_tilde == pytest.approx(math.cos(math.pi / 3 + 0.1))
        assert p.s_tilde == pytest.approx(math.sin(math.pi / 3 + 0.1))

    def test_slope_undefined_at_degenerate_angles(self):
        assert RotationParams(0.0).a is None
        assert RotationParams(math.pi).a is None
        assert RotationParams(math.pi / 2).a == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("beta", [-math.pi, 4.0, -4.0, math.nan])
    def test_rejects_bad_angle(self, beta):
        with pytest.raises(ValueError):
            RotationParams(beta)

    def test_rejects_negative_margin(self):
        with pytest.raises(ValueError):
            RotationParams(1.0, validity_margin=-0.1)


class TestEigenRotationMap:
    def test_sixty_degree_turn(self):
        # tan(pi/6 - pi/3) = -tan(pi/6)
        out = eigen_rotation_map(1.0 / SQ3, RotationParams(math.pi / 3))
        assert out == pytest.approx(-1.0 / SQ3, abs=1e-12)

    def test_zero_angle_is_identity(self):
        for lam in (-3.0, -0.2, 0.0, 0.7, 40.0):
            assert eigen_rotation_map(lam, RotationParams(0.0)) == lam

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    @pytest.mark.parametrize("theta", [-0.7, 0.0, 0.9, 2.0])
    def test_uniform_spectrum_lands_on_target_phase(self, n, theta):
        beta = math.pi / 2 + (theta - math.pi) / n
        params = RotationParams(beta)
        lam = math.tan(theta / n)
        rotated = eigen_rotation_map(lam, params)
        total = n * math.atan(rotated)
        assert total == pytest.approx((2 - n) * math.pi / 2, abs=1e-12)

    def test_pole_raises(self):
        beta = 1.1
        lam = math.tan(beta - math.pi / 2)
        with pytest.raises(PoleError):
            eigen_rotation_map(lam, RotationParams(beta))

    def test_pole_tolerance_boundary(self):
        beta = 1.1
        with pytest.raises(PoleError):
            eigen_rotation_map(math.tan(beta - math.pi / 2 + 5e-13), RotationParams(beta))
        out = eigen_rotation_map(math.tan(beta - math.pi / 2 + 1e-9), RotationParams(beta))
        assert np.isfinite(out)

    @given(
        lam=st.floats(-20.0, 20.0),
        beta=st.floats(-3.0, 3.0).filter(lambda b: abs(b) > 1e-3),
    )
    @settings(max_examples=80, deadline=None)
    def test_rotation_undoes_itself(self, lam, beta):
        fwd = RotationParams(beta)
        back = RotationParams(-beta)
        try:
            once = eigen_rotation_map(lam, fwd)
            twice = eigen_rotation_map(once, back)
        except PoleError:
            return
        assert twice == pytest.approx(lam, rel=1e-8, abs=1e-8)


class TestMobiusHessianMap:
    def test_isotropic_example(self):
        M = np.diag([1.0 / SQ3] * 3)
        out = mobius_hessian_map(M, -1.0 / SQ3)
        assert np.allclose(out.entries, np.diag([-1.0 / SQ3] * 3), atol=1e-12)

    @pytest.mark.parametrize("a", [-2.0, -0.3, 0.5, 3.0])
    def test_scalar_shift_case(self, a):
        # M = aI + I maps to -aI - (1+a^2)I entrywise
        M = (a + 1.0) * np.eye(3)
        out = mobius_hessian_map(M, a)
        expected = (-a - (1.0 + a * a)) * np.eye(3)
        assert np.allclose(out.entries, expected, atol=1e-12)

    def test_matches_eigenvalue_route(self):
        # matrix-inversion route vs scalar tangent route, 200 draws
        rng = np.random.default_rng(42)
        checked = 0
        while checked < 200:
            n = int(rng.integers(2, 4))
            M = random_symmetric(rng, n, scale=2.0)
            a = float(rng.uniform(-2.5, 2.5))
            lam = np.linalg.eigvalsh(M)
            if np.min(np.abs(lam - a)) < 1e-6:
                continue
            beta = math.pi / 2 + math.atan(a)
            params = RotationParams(beta)
            try:
                expected = np.sort([eigen_rotation_map(v, params) for v in lam])
            except PoleError:
                continue
            got = np.sort(np.linalg.eigvalsh(mobius_hessian_map(M, a).entries))
            assert np.max(np.abs(got - expected)) < 1e-10
            checked += 1

    def test_preserves_eigenvectors(self):
        rng = np.random.default_rng(3)
        M = random_symmetric(rng, 3)
        out = mobius_hessian_map(M, 4.0).entries
        assert np.max(np.abs(out @ M - M @ out)) < 1e-12

    def test_singular_shift_raises(self):
        M = np.diag([1.0, 2.0, 3.0])
        with pytest.raises(PoleError):
            mobius_hessian_map(M, 2.0)


class TestRotatedPhase:
    def test_matches_phase_shift_without_crossing(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            M = random_symmetric(rng, 3, scale=0.4)
            beta = float(rng.uniform(0.05, 0.5))
            got = rotated_phase(M, RotationParams(beta))
            assert got == pytest.approx(slag_phase(M) - 3 * beta, abs=1e-12)

    def test_tracks_through_branch_crossing(self):
        M = np.diag([-2.0, 0.5, 3.0])
        params = RotationParams(1.0)
        tracked = rotated_phase(M, params)
        assert tracked == pytest.approx(slag_phase(M) - 3.0, abs=1e-12)
        naive = sum(
            math.atan(eigen_rotation_map(v, params)) for v in (-2.0, 0.5, 3.0)
        )
        assert abs(naive - tracked) == pytest.approx(math.pi, abs=1e-9)

    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_uniform_configuration_total(self, n):
        theta = 0.4
        beta = math.pi / 2 + (theta - math.pi) / n
        M = np.diag([math.tan(theta / n)] * n)
        got = rotated_phase(M, RotationParams(beta))
        assert got == pytest.approx((2 - n) * math.pi / 2, abs=1e-9)

    def test_rejects_empty_homotopy(self):
        with pytest.raises(ValueError):
            rotated_phase(np.eye(3), RotationParams(0.3), steps=0)


class TestGraphSample:
    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            GraphSample(np.zeros(3), np.zeros(2))

    def test_non_finite(self):
        with pytest.raises(ValueError):
            GraphSample(np.array([0.0, np.inf]), np.zeros(2))

    def test_hessian_dim_mismatch(self):
        from slaglab.spectral import SymMatrix

        with pytest.raises(ValueError):
            GraphSample(np.zeros(3), np.zeros(3), SymMatrix(np.eye(2)))


class TestRotateGraph:
    def test_quadratic_rotates_to_closed_form(self):
        lam = math.tan(math.pi / 3)
        u = quadratic_field(lam * np.eye(3), 1.0, 9)
        params = RotationParams(math.pi / 6)
        samples, u_bar = rotate_graph(u, params)
        expected = math.tan(math.pi / 3 - math.pi / 6)
        H = hessian_stack(u_bar)
        assert np.max(np.abs(H - expected * np.eye(3))) < 1e-10
        # samples carry the source jet
        k = len(samples) // 2
        s = samples[k]
        assert np.allclose(s.y, lam * s.x, atol=1e-12)
        assert np.allclose(s.hessian.entries, lam * np.eye(3), atol=1e-12)

    def test_potential_gauged_at_center(self):
        u = quadratic_field(np.eye(3), 1.0, 9)
        _, u_bar = rotate_graph(u, RotationParams(0.5))
        center = tuple((s - 1) // 2 for s in u_bar.shape)
        assert u_bar.as_array()[center] == pytest.approx(0.0, abs=1e-14)

    def test_curl_residual_reported(self):
        u = GridField.centered(lambda x: eval_warren(x)[0], 0.4, 9)
        _, _, info = rotate_graph(u, RotationParams(0.3), details=True)
        assert info["curl_residual"] < 0.1
        assert info["pole_gap"] > 0.1

    def test_pole_names_point_and_angle(self):
        # lambda_1 = tan(beta - pi/2) puts the rotated angle exactly on the pole
        beta = math.pi / 4
        Q = np.diag([math.tan(beta - math.pi / 2), 0.3, 0.5])
        u = quadratic_field(Q, 1.0, 9)
        with pytest.raises(PoleError) as err:
            rotate_graph(u, RotationParams(beta))
        assert err.value.where is not None
        assert "pole" in str(err.value)

    def test_collision_cites_expansion_failure(self):
        # u' = x1^3 - x1 sends x1 in {-1, 0, 1} to the same slope
        def fold(x):
            return 0.25 * x[0] ** 4 - 0.5 * x[0] ** 2 + 0.5 * (x[1] ** 2 + x[2] ** 2)

        u = GridField.centered(fold, 1.2, 9)
        with pytest.raises(ExpansionError, match="distance-expansion"):
            rotate_graph(u, RotationParams(math.pi / 2))

    def test_round_trip_restores_gradient(self):
        u = GridField.centered(lambda x: eval_warren(x)[0], 0.4, 11)
        samples, u_bar = rotate_graph(u, RotationParams(0.3))
        _, u_back = rotate_graph(u_bar, RotationParams(-0.3))
        grads = gradient_stack(u_back)
        axes = tuple(u_back.axis_coords(k)[1:-1] for k in range(3))
        interp = RegularGridInterpolator(axes, grads, bounds_error=False, fill_value=None)
        pts = u.node_coords()[tuple(slice(2, -2) for _ in u.shape)].reshape(-1, 3)
        got = interp(pts)
        exact = np.array([eval_warren(p)[1] for p in pts])
        assert np.max(np.abs(got - exact)) < 0.02

    def test_quarter_turn_matches_convex_conjugate(self):
        A = np.diag([1.0, 2.0])
        u = quadratic_field(A, 1.0, 9, n_dims=2)
        _, u_bar = rotate_graph(u, RotationParams(math.pi / 2))
        H_rot = hessian_stack(u_bar).reshape(-1, 2, 2).mean(axis=0)
        assert np.max(np.abs(H_rot + np.linalg.inv(A))) < 1e-10
        w = legendre_transform(u)
        H_leg = hessian_stack(w).reshape(-1, 2, 2).mean(axis=0)
        assert np.max(np.abs(H_rot + H_leg)) < 1e-10


class TestDistanceExpansion:
    def test_quadratic_ratio_is_linear_map_norm(self):
        lam = 1.0
        u = quadratic_field(lam * np.eye(3), 1.0, 9)
        params = RotationParams(math.pi / 4)
        samples, _ = rotate_graph(u, params)
        ratio = distance_expansion_check(samples[::29], params, math.atan(lam))
        expected = abs(params.c + params.s * lam)
        assert ratio == pytest.approx(expected, abs=1e-9)

    def test_convex_zero_angle_bound(self):
        u = quadratic_field(np.eye(3), 1.0, 9)
        params = RotationParams(math.pi / 6, validity_margin=0.1)
        samples, _ = rotate_graph(u, params)
        ratio = distance_expansion_check(samples[::17], params, 0.0)
        assert expansion_bound(params, 0.0) == pytest.approx(params.c_tilde)
        assert ratio >= expansion_bound(params, 0.0) - 1e-6

    def test_warren_sweep_beats_bound(self):
        u = GridField.centered(lambda x: eval_warren(x)[0], 0.4, 11)
        params = RotationParams(0.3, validity_margin=0.05)
        samples, _ = rotate_graph(u, params)
        lam_min = float(np.min(np.linalg.eigvalsh(hessian_stack(u))))
        gamma = math.atan(lam_min)
        assert gamma > params.alpha
        ratio = distance_expansion_check(samples[::37], params, gamma)
        assert ratio >= expansion_bound(params, gamma) - 1e-6

    def test_bound_closed_form(self):
        params = RotationParams(0.4, validity_margin=0.2)
        gamma = 0.3
        expected = math.cos(0.6) * (1.0 - math.tan(0.3) / math.tan(0.5))
        assert expansion_bound(params, gamma) == pytest.approx(expected, abs=1e-15)
        assert expansion_bound(params, 1.5) == -math.inf

    def test_needs_two_samples(self):
        s = GraphSample(np.zeros(3), np.zeros(3))
        with pytest.raises(ValueError):
            distance_expansion_check([s], RotationParams(0.3), 0.0)


class TestLegendreTransform:
    def test_isotropic_quadratic_pair(self):
        lam = 2.0
        u = quadratic_field(lam * np.eye(3), 1.0, 9)
        w = legendre_transform(u)
        y = w.node_coords()
        expected = 0.5 * np.sum(y * y, axis=-1) / lam
        assert np.max(np.abs(w.as_array() - expected)) < 1e-12

    def test_diagonal_matrix_conjugate(self):
        A = np.diag([1.0, 2.0])
        u = quadratic_field(A, 1.0, 9, n_dims=2)
        w = legendre_transform(u)
        H = hessian_stack(w)
        assert np.max(np.abs(H - np.linalg.inv(A))) < 1e-12
        y = w.node_coords()
        expected = 0.5 * np.einsum("...i,ij,...j->...", y, np.linalg.inv(A), y)
        assert np.max(np.abs(w.as_array() - expected)) < 1e-12

    def test_gradient_graph_symmetry(self):
        # (Dw(y), y) must sit on the original graph: y = A Dw(y)
        A = np.diag([1.0, 2.0])
        u = quadratic_field(A, 1.0, 9, n_dims=2)
        w = legendre_transform(u)
        slopes = gradient_stack(w)
        y = w.node_coords()[tuple(slice(1, -1) for _ in w.shape)]
        assert np.max(np.abs(np.einsum("ij,...j->...i", A, slopes) - y)) < 1e-10

    def test_involution_returns_original(self):
        def bowl(x):
            return 0.5 * np.sum(x * x) + 0.1 * np.sum(x**4)

        u = GridField.centered(bowl, 1.0, 17, n_dims=2)
        w = legendre_transform(u)
        u_back = legendre_transform(w)
        axes = tuple(u_back.axis_coords(k) for k in range(2))
        interp = RegularGridInterpolator(
            axes, u_back.as_array(), bounds_error=False, fill_value=None
        )
        pts = u.node_coords()[tuple(slice(4, -4) for _ in u.shape)].reshape(-1, 2)
        got = interp(pts)
        exact = np.array([bowl(p) for p in pts])
        assert np.max(np.abs(got - exact)) < 0.02

    def test_involution_exact_at_nodes_for_quadratic(self):
        A = np.diag([1.0, 2.0])
        u = quadratic_field(A, 1.0, 9, n_dims=2)
        u_back = legendre_transform(legendre_transform(u))
        x = u_back.node_coords()
        expected = 0.5 * np.einsum("...i,ij,...j->...", x, A, x)
        assert np.max(np.abs(u_back.as_array() - expected)) < 1e-12

    def test_nonconvex_rejected_with_witness(self):
        u = quadratic_field(-np.eye(3), 1.0, 9)
        with pytest.raises(NonConvexFieldError) as err:
            legendre_transform(u)
        assert err.value.worst_eigenvalue == pytest.approx(-1.0, abs=1e-10)
        assert err.value.where is not None

    def test_degenerate_gradient_range_rejected(self):
        u = GridField.centered(lambda x: 0.5 * x[0] ** 2, 1.0, 9)
        with pytest.raises(ValueError, match="degenerate"):
            legendre_transform(u)


class TestLegendreLewy:
    def test_zero_field_pure_shift(self):
        u = GridField.centered(lambda x: 0.0, 1.0, 9)
        result = legendre_lewy_transform(u, 3)
        m = lewy_modulus(3)
        assert result.m == pytest.approx(1.0 / SQ3)
        y = result.w_field.node_coords()
        expected = 0.5 * np.sum(y * y, axis=-1) / m
        assert np.max(np.abs(result.w_field.as_array() - expected)) < 1e-12
        assert result.mu_range[0] == pytest.approx(SQ3, abs=1e-9)
        assert result.mu_range[1] == pytest.approx(SQ3, abs=1e-9)

    def test_rank_two_diagonal_jet(self):
        m = lewy_modulus(3)
        u = quadratic_field(np.diag([1.0, 1.0, 0.0]), 1.0, 9)
        result = legendre_lewy_transform(u, 3)
        expected = np.diag([1.0 / (1.0 + m), 1.0 / (1.0 + m), 1.0 / m])
        H = hessian_stack(result.w_field)
        assert np.max(np.abs(H - expected)) < 1e-10
        mu = np.sort(np.diag(expected))
        assert lambda_ratio(mu) == pytest.approx(1.0 / (2.0 * m), abs=1e-10)

    def test_random_quadratics_invert_the_shifted_hessian(self):
        rng = np.random.default_rng(5)
        m = lewy_modulus(3)
        checked = 0
        while checked < 10:
            Q = np.diag(rng.uniform(-m + 0.1, 1.5, size=3)) + random_symmetric(
                rng, 3, scale=0.05
            )
            if np.linalg.eigvalsh(Q)[0] <= -m + 0.05:
                continue
            u = quadratic_field(Q, 1.0, 11)
            result = legendre_lewy_transform(u, 3)
            w = result.w_field
            B = Q + m * np.eye(3)
            y = w.node_coords()[tuple(slice(1, -1) for _ in w.shape)]
            x_star = np.einsum("ij,...j->...i", np.linalg.inv(B), y)
            h = u.spacing_vector
            lo = u.origin + 2 * h
            hi = u.origin + (np.asarray(u.shape) - 3) * h
            mask = np.all((x_star > lo) & (x_star < hi), axis=-1)
            assert mask.any()
            H = hessian_stack(w)[mask]
            assert np.max(np.abs(H @ B - np.eye(3))) < 1e-8
            assert result.mu_range[0] > 0.0
            checked += 1

    def test_attainment_mask_excludes_saturated_rim(self):
        rng = np.random.default_rng(7)
        m = lewy_modulus(3)
        A = random_symmetric(rng, 3)
        A = A + (max(0.0, -np.linalg.eigvalsh(A)[0]) - m + 0.3) * np.eye(3)
        u = quadratic_field(A, 1.0, 11)
        result = legendre_lewy_transform(u, 3)
        mask = interior_attainment_mask(result.w_field, u)
        assert 0.0 < mask.mean() < 1.0
        assert result.mu_range[0] > 0.0

    def test_borderline_spectrum_named(self):
        m = lewy_modulus(3)
        u = quadratic_field(-(m + 0.01) * np.eye(3), 1.0, 9)
        with pytest.raises(BranchError) as err:
            legendre_lewy_transform(u, 3)
        assert err.value.where is not None
        assert "no longer valid" in str(err.value)

    def test_exact_threshold_is_rejected(self):
        m = lewy_modulus(3)
        u = quadratic_field(-m * np.eye(3), 1.0, 9)
        with pytest.raises(BranchError):
            legendre_lewy_transform(u, 3)

    def test_dimension_mismatch(self):
        u = GridField.centered(lambda x: 0.0, 1.0, 9, n_dims=2)
        with pytest.raises(ValueError):
            legendre_lewy_transform(u, 3)


class TestMuFromLambda:
    def test_rank_two_example(self):
        mu = mu_from_lambda([1.0, 1.0, 0.0], 1.0 / SQ3)
        assert np.allclose(mu, [0.6339746, 0.6339746, 1.7320508], atol=1e-7)

    def test_zero_vector(self):
        m = lewy_modulus(4)
        assert np.allclose(mu_from_lambda(np.zeros(4), m), np.full(4, 1.0 / m))

    def test_composition_restores_input(self):
        lam = np.array([-0.3, 0.0, 2.5])
        m = 0.7
        back = 1.0 / mu_from_lambda(lam, m) - m
        assert np.allclose(back, lam, atol=1e-14)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            mu_from_lambda([-1.0, 0.0], 0.5)

    @given(
        lam=st.lists(st.floats(-0.4, 5.0), min_size=2, max_size=5),
        m=st.floats(0.5, 2.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_positivity_property(self, lam, m):
        mu = mu_from_lambda(lam, m)
        assert np.all(mu > 0.0)
        assert np.allclose(1.0 / mu - m, lam, rtol=1e-12, atol=1e-12)
