"""Surface algebra: constructors, fiber solving, slices, exact invariants.

Expected values are frozen from independent routes: closed-form factorizations
(x^5, x(x^4+t y^6), (x-iy^2)(x+iy^2)), the (p-1)(q-1)(r-1) product for
Brieskorn exponents, linear solves for weights, and finite differences for
derivatives.
"""

import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from singlab import surfaces as sf

BS0 = sf.briancon_speder(0)
BS1 = sf.briancon_speder(1)


def reference_points(rng, n, scale=1.0):
    pts = rng.normal(size=(n, 3)) + 1j * rng.normal(size=(n, 3))
    return scale * pts


class TestConstructors:
    def test_briancon_speder_t0_has_three_terms(self):
        assert len(BS0.terms) == 3
        assert BS0.weights == (3, 2, 1)
        assert BS0.quasidegree == 15

    def test_briancon_speder_t1_has_xy6_term(self):
        assert len(BS1.terms) == 4
        coeffs = dict(BS1.terms)
        assert coeffs[(1, 6, 0)] == 1.0

    def test_weighted_degree_identity(self):
        for s in (BS0, BS1, sf.brieskorn(2, 4, 5)):
            w1, w2, w3 = s.weights
            for (a, b, c), _ in s.terms:
                assert a * w1 + b * w2 + c * w3 == s.quasidegree

    @pytest.mark.parametrize(
        "pqr,weights,d",
        [((2, 4, 5), (10, 5, 4), 20), ((2, 3, 5), (15, 10, 6), 30), ((2, 2, 3), (3, 3, 2), 6)],
    )
    def test_brieskorn_weights(self, pqr, weights, d):
        s = sf.brieskorn(*pqr)
        assert s.weights == weights
        assert s.quasidegree == d
        # oracle: each axis term exponent e must satisfy e * w = d
        p, q, r = pqr
        assert p * s.weights[0] == d
        assert q * s.weights[1] == d
        assert r * s.weights[2] == d

    def test_brieskorn_rejects_bad_exponent_order(self):
        with pytest.raises(ValueError):
            sf.brieskorn(3, 2, 5)
        with pytest.raises(ValueError):
            sf.brieskorn(2, 5, 5)

    def test_surface_rejects_bad_weight_order(self):
        with pytest.raises(ValueError):
            sf.WeightedSurface((1, 2, 3), 6, (((6, 0, 0), 1.0),))

    def test_surface_rejects_weighted_degree_mismatch(self):
        with pytest.raises(ValueError):
            sf.WeightedSurface((3, 2, 1), 15, (((1, 0, 0), 1.0),))

    def test_surface_rejects_zero_coefficient(self):
        with pytest.raises(ValueError):
            sf.WeightedSurface((3, 2, 1), 15, (((5, 0, 0), 0.0),))


class TestEvaluate:
    def test_point_values(self):
        assert evaluate_scalar(BS0, (0, 0, 0)) == 0
        assert evaluate_scalar(BS0, (0, 0, 1)) == 1
        assert evaluate_scalar(BS1, (1, 1, 0)) == 2

    def test_gradient_values(self):
        g = sf.gradient(BS0, np.array([1.0, 0.0, 0.0], dtype=complex))
        assert np.allclose(g, [5.0, 0.0, 0.0])
        g = sf.gradient(BS0, np.array([0.0, 1.0, 1.0], dtype=complex))
        assert np.allclose(g, [0.0, 7.0, 16.0])

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        pts = reference_points(rng, 100, scale=0.8)
        grad = sf.gradient(BS1, pts)
        h = 1e-5
        for axis in range(3):
            shift = np.zeros(3, dtype=complex)
            shift[axis] = h
            fd = (sf.evaluate(BS1, pts + shift) - sf.evaluate(BS1, pts - shift)) / (2 * h)
            denom = np.maximum(np.abs(grad[:, axis]), 1.0)
            assert np.max(np.abs(fd - grad[:, axis]) / denom) < 1e-5


def evaluate_scalar(s, p):
    return complex(sf.evaluate(s, np.asarray(p, dtype=complex)))


def assert_same_multiset(got, want, tol=1e-8):
    remaining = list(want)
    for g in got:
        dists = [abs(g - w) for w in remaining]
        j = int(np.argmin(dists))
        assert dists[j] < tol, (g, remaining)
        remaining.pop(j)
    assert not remaining


class TestSolveFiber:
    def test_fifth_roots_of_minus_one(self):
        roots = sf.solve_fiber(BS0, 0.0, 1.0)
        expected = [cmath.exp(1j * math.pi * (2 * k + 1) / 5) for k in range(5)]
        assert len(roots) == 5
        assert_same_multiset(roots, expected)

    def test_quintuple_zero_root_is_exact(self):
        roots = sf.solve_fiber(BS0, 1.0, 0.0)
        assert roots == [0j] * 5

    def test_split_fiber_with_simple_zero(self):
        roots = sf.solve_fiber(BS1, 1.0, 0.0)
        assert sum(1 for r in roots if r == 0) == 1
        quartics = [cmath.exp(1j * math.pi * (2 * k + 1) / 4) for k in range(4)]
        assert_same_multiset([r for r in roots if r != 0], quartics)

    def test_residual_bound(self):
        rng = np.random.default_rng(11)
        scale = 1e-10 * (1.0 + BS1.coefficient_scale)
        for _ in range(25):
            y = complex(rng.normal(), rng.normal()) * 0.5
            z = complex(rng.normal(), rng.normal()) * 0.5
            for r in sf.solve_fiber(BS1, y, z):
                assert abs(evaluate_scalar(BS1, (r, y, z))) <= scale

    @settings(max_examples=60, derandomize=True, deadline=None)
    @given(
        yr=st.floats(-1, 1), yi=st.floats(-1, 1),
        zr=st.floats(-1, 1), zi=st.floats(-1, 1),
    )
    def test_vieta_sum_and_product(self, yr, yi, zr, zi):
        y, z = complex(yr, yi), complex(zr, zi)
        coeffs = sf.fiber_coefficients(BS1, y, z)
        roots = np.array(sf.solve_fiber(BS1, y, z))
        scale = 1.0 + np.abs(roots).max()
        # no x^4 term in the family, so the root sum vanishes
        assert abs(roots.sum() - (-coeffs[4] / coeffs[5])) <= 1e-8 * scale
        prod_scale = 1.0 + abs(coeffs[0])
        assert abs(roots.prod() - (-1) ** 5 * coeffs[0] / coeffs[5]) <= 1e-8 * prod_scale**2

    def test_batch_agrees_with_scalar(self):
        rng = np.random.default_rng(3)
        y = rng.normal(size=6) + 1j * rng.normal(size=6)
        z = rng.normal(size=6) + 1j * rng.normal(size=6)
        batch, ok = sf.solve_fiber_batch(BS1, y, z)
        assert ok.all()
        for row, yy, zz in zip(batch, y, z):
            expected = np.array(sf.solve_fiber(BS1, yy, zz))
            got = np.sort_complex(row)
            assert np.allclose(np.sort_complex(expected), got, atol=1e-8)


class TestScaleAction:
    def test_example_powers(self):
        out = sf.scale_action(BS0, np.array([1, 1, 1], dtype=complex), 4.0)
        assert np.allclose(out, [64.0, 16.0, 4.0])

    def test_identity_at_t_one(self):
        p = np.array([0.3 + 0.1j, -0.2j, 0.5], dtype=complex)
        assert np.allclose(sf.scale_action(BS0, p, 1.0), p)

    def test_rejects_nonpositive_t(self):
        p = np.array([1, 1, 1], dtype=complex)
        with pytest.raises(ValueError):
            sf.scale_action(BS0, p, 0.0)
        with pytest.raises(ValueError):
            sf.scale_action(BS0, p, -2.0)

    @settings(max_examples=60, derandomize=True, deadline=None)
    @given(
        xr=st.floats(-2, 2), xi=st.floats(-2, 2),
        yr=st.floats(-2, 2), yi=st.floats(-2, 2),
        zr=st.floats(-2, 2), zi=st.floats(-2, 2),
        t=st.floats(0.25, 4.0),
    )
    def test_homogeneity_identity(self, xr, xi, yr, yi, zr, zi, t):
        p = np.array([complex(xr, xi), complex(yr, yi), complex(zr, zi)])
        lhs = evaluate_scalar(BS1, sf.scale_action(BS1, p, t))
        rhs = t ** (BS1.quasidegree / BS1.weights[2]) * evaluate_scalar(BS1, p)
        assert abs(lhs - rhs) <= 1e-9 * (1.0 + abs(lhs) + abs(rhs))

    def test_surface_invariance_on_fiber_roots(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            y = complex(rng.normal(), rng.normal()) * 0.4
            z = complex(rng.normal(), rng.normal()) * 0.4
            for t in (0.5, 2.0):
                for r in sf.solve_fiber(BS0, y, z):
                    q = sf.scale_action(BS0, np.array([r, y, z]), t)
                    scale = 1.0 + float(np.abs(q).max()) ** BS0.quasidegree
                    assert abs(evaluate_scalar(BS0, q)) <= 1e-9 * scale


class TestSphereProject:
    def test_projected_points_land_on_sphere_and_surface(self):
        roots = sf.solve_fiber(BS0, 0.3 + 0.1j, 0.2)
        P = np.array([[r, 0.3 + 0.1j, 0.2] for r in roots], dtype=complex)
        proj, t = sf.sphere_project(BS0, P, 0.1)
        assert np.allclose(np.linalg.norm(proj, axis=1), 0.1, rtol=1e-12)
        assert np.max(np.abs(sf.evaluate(BS0, proj))) < 1e-12
        assert (t > 0).all()

    def test_outward_projection(self):
        roots = sf.solve_fiber(BS1, 0.02, 0.01)
        P = np.array([[r, 0.02, 0.01] for r in roots], dtype=complex)
        proj, t = sf.sphere_project(BS1, P, 0.3)
        assert np.allclose(np.linalg.norm(proj, axis=1), 0.3, rtol=1e-12)
        assert (t > 1).all()


class TestMilnorNumber:
    def test_family_is_mu_constant(self):
        for t in (0, 0.1, 1.0, -2.0, 1j):
            assert sf.milnor_number(sf.briancon_speder(t)) == 364

    def test_brieskorn_oracle(self):
        # independent oracle for x^p + y^q + z^r: (p-1)(q-1)(r-1)
        for pqr in ((2, 3, 5), (2, 2, 3), (2, 4, 5)):
            p, q, r = pqr
            assert sf.milnor_number(sf.brieskorn(*pqr)) == (p - 1) * (q - 1) * (r - 1)

    def test_rejects_degenerate_weight_data(self):
        plane = sf.WeightedSurface((2, 2, 1), 2, (((1, 0, 0), 1.0),))
        with pytest.raises(ValueError):
            sf.milnor_number(plane)


class TestSliceComponents:
    def test_dichotomy_in_t(self):
        assert sf.slice_components(BS0) == 1
        for t in (0.1, 1.0, -2.0, 1j):
            assert sf.slice_components(sf.briancon_speder(t)) == 3

    def test_brieskorn_counts_match_gcd(self):
        assert sf.slice_components(sf.brieskorn(2, 4, 5)) == math.gcd(2, 4)
        assert sf.slice_components(sf.brieskorn(2, 2, 3)) == math.gcd(2, 2)

    def test_degenerate_slice_raises(self):
        s = sf.WeightedSurface((3, 2, 1), 4, (((1, 0, 1), 1.0), ((0, 1, 2), 1.0)))
        with pytest.raises(sf.DegenerateSliceError):
            sf.slice_components(s)

    def test_structure_orbits_bs1(self):
        st_ = sf.slice_structure(BS1)
        assert st_.has_x_branch and not st_.has_y_branch
        assert st_.n_components == 3
        # the quartic x^4 = -y^6 splits into two square branches
        assert sorted(np.bincount(st_.orbit_of_trajectory - 1).tolist()) == [2, 2]


class TestImplicitDerivatives:
    def test_closed_form_value(self):
        x = -(2.0 ** (1 / 5))
        dxdy, dxdz = sf.implicit_derivatives(BS0, np.array([x, 1.0, 1.0], dtype=complex))
        want_dy = -7.0 / (5.0 * 2.0 ** (4 / 5))
        want_dz = -16.0 / (5.0 * 2.0 ** (4 / 5))
        assert abs(dxdy - want_dy) < 1e-12
        assert abs(dxdz - want_dz) < 1e-12

    def test_zero_partial_on_z0_fiber(self):
        roots = [r for r in sf.solve_fiber(BS1, 1.0, 0.0) if r != 0]
        dxdy, dxdz = sf.implicit_derivatives(BS1, np.array([roots[0], 1.0, 0.0]))
        # f_y = 6 x y^5 on the slice; dx/dy = -6y^5/(5x^3 + y^6) is nonzero,
        # while f_z = 15 z^14 + y^7 = 1 there.
        assert abs(dxdz + 1.0 / (5 * roots[0] ** 4 + 1.0)) < 1e-12
        assert dxdy != 0

    def test_branch_point_error(self):
        with pytest.raises(sf.BranchPointError):
            sf.implicit_derivatives(BS0, np.array([0.0, 1.0, 0.0], dtype=complex))

    def test_off_surface_error(self):
        with pytest.raises(ValueError):
            sf.implicit_derivatives(BS0, np.array([1.0, 1.0, 1.0], dtype=complex))

    def test_matches_finite_differences_on_graph(self):
        rng = np.random.default_rng(2)
        h = 1e-6
        for _ in range(20):
            y = complex(rng.normal(), rng.normal()) * 0.5
            z = complex(rng.normal(), rng.normal()) * 0.5
            x = sf.solve_fiber(BS0, y, z)[2]
            if abs(evaluate_scalar(BS0, (x, y, z))) > 1e-10:
                continue
            dxdy, dxdz = sf.implicit_derivatives(BS0, np.array([x, y, z]))
            x_plus = _newton_x(BS0, x, y + h, z)
            x_minus = _newton_x(BS0, x, y - h, z)
            fd = (x_plus - x_minus) / (2 * h)
            assert abs(fd - dxdy) <= 1e-5 * (1.0 + abs(dxdy))


def _newton_x(s, x0, y, z):
    x = x0
    for _ in range(40):
        coeffs = sf.fiber_coefficients(s, y, z)
        f = np.polyval(coeffs[::-1], x)
        df = np.polyval(np.polyder(coeffs[::-1]), x)
        x = x - f / df
        if abs(f) < 1e-14:
            break
    return x


class TestTracking:
    def test_square_root_swap(self):
        # roots of x^2 - e^{2 pi i t} swap after one turn
        path = sf.track_root_system(
            lambda t: np.array([-cmath.exp(2j * math.pi * t), 0.0, 1.0]),
            np.linspace(0, 1, 65),
        )
        start, end = path.roots[0], path.roots[-1]
        assert abs(start[0] - end[1]) < 1e-9 and abs(start[1] - end[0]) < 1e-9
        assert np.allclose(path.dphase, math.pi, atol=1e-9)

    def test_disjoint_sheets_do_not_move(self):
        # x^2 - 1 has constant roots along any path
        path = sf.track_root_system(
            lambda t: np.array([-1.0, 0.0, 1.0]), np.linspace(0, 1, 17)
        )
        assert np.allclose(path.roots[0], path.roots[-1])
        assert np.allclose(path.dphase, 0.0)


class TestSerialization:
    def test_round_trip_exact(self):
        for s in (BS0, BS1, sf.brieskorn(2, 4, 5), sf.briancon_speder(0.5 + 0.25j)):
            text = sf.surface_to_text(s)
            back = sf.surface_from_text(text)
            assert back.weights == s.weights
            assert back.quasidegree == s.quasidegree
            assert back.terms == s.terms
            assert back.label == s.label

    def test_parse_error_reports_line(self):
        text = "weights 3 2 1\nquasidegree 15\nterm 5 0 0 bad 0\n"
        with pytest.raises(sf.SurfaceFormatError, match="line 3"):
            sf.surface_from_text(text)

    def test_missing_weights_rejected(self):
        with pytest.raises(sf.SurfaceFormatError):
            sf.surface_from_text("quasidegree 15\nterm 5 0 0 1 0\n")

    def test_invariants_enforced_on_load(self):
        text = "weights 1 2 3\nquasidegree 6\nterm 6 0 0 1 0\n"
        with pytest.raises(sf.SurfaceFormatError):
            sf.surface_from_text(text)
