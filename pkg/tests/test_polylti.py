import cmath
import math

import numpy as np
import pytest

from nmpinv.errors import (
    DegenerateApproximation,
    ImproperSystem,
    InsufficientPreview,
    PoleAtOne,
    PoleOnUnitCircle,
)
from nmpinv.polylti import (
    DiscreteTransferFunction,
    Polynomial,
    classify_zeros,
    dc_gain,
    exact_inverse,
    frequency_response,
    naive_approx_inverse,
    poly_eval,
    poly_roots,
    relative_degree,
    simulate,
    zos_inverse,
)

DT = 0.015


def tf(num, den, dt=DT):
    return DiscreteTransferFunction(num, den, dt)


def random_stable_tf(rng, n_poles, n_zeros, max_modulus=0.95, dt=DT):
    """Random proper system with poles and zeros inside the given modulus."""

    def draw(count):
        vals = []
        while len(vals) < count:
            if count - len(vals) >= 2 and rng.random() < 0.5:
                r = rng.uniform(0.1, max_modulus)
                th = rng.uniform(0.1, math.pi - 0.1)
                vals += [r * cmath.exp(1j * th), r * cmath.exp(-1j * th)]
            else:
                vals.append(rng.uniform(-max_modulus, max_modulus))
        return vals

    num = Polynomial.from_roots(draw(n_zeros), gain=rng.uniform(0.5, 2.0))
    den = Polynomial.from_roots(draw(n_poles))
    return DiscreteTransferFunction(num, den, dt)


class TestPolynomial:
    def test_trims_leading_zeros(self):
        p = Polynomial([1.0, 2.0, 0.0, 0.0])
        assert p.coeffs == (1.0, 2.0)
        assert p.degree == 1

    def test_zero_polynomial(self):
        assert Polynomial([0.0, 0.0]).is_zero()
        assert Polynomial().degree == -1

    def test_eval_constant(self):
        assert poly_eval(Polynomial([1.0]), 5.0) == 1.0

    def test_eval_root(self):
        assert poly_eval(Polynomial([-1.0, 0.0, 1.0]), 1.0) == 0.0

    def test_eval_zos_numerator_at_one(self):
        # direct summation of the documented fourth-order coefficients:
        # 0.6005 - 2.7290 + 4.6504 - 3.5217 + 1 = 0.0002
        p = Polynomial([0.6005, -2.7290, 4.6504, -3.5217, 1.0])
        assert poly_eval(p, 1.0).real == pytest.approx(0.0002, abs=1e-12)


class TestRoots:
    def test_symmetric_pair(self):
        roots = poly_roots(Polynomial([-1.0, 0.0, 1.0]))
        assert np.allclose(sorted(r.real for r in roots), [-1.0, 1.0], atol=1e-10)

    def test_constructed_factors(self):
        roots = poly_roots(Polynomial([0.6, -1.7, 1.0]))
        assert np.allclose(sorted(r.real for r in roots), [0.5, 1.2], atol=1e-10)

    def test_cubic_with_zero_root(self):
        # z^3 - 1.713 z^2 + 0.7493 z: quadratic formula on the depressed factor
        p = Polynomial([0.0, 0.7493, -1.713, 1.0])
        disc = cmath.sqrt(1.713**2 - 4 * 0.7493)
        expected = sorted(
            [0.0, (1.713 + disc) / 2, (1.713 - disc) / 2],
            key=lambda r: (r.real, r.imag),
        )
        roots = poly_roots(p)
        assert np.allclose(roots, expected, atol=1e-9)

    def test_requires_degree_one(self):
        with pytest.raises(ValueError):
            poly_roots(Polynomial([3.0]))

    def test_reconstruction_random(self):
        # gain * prod(z - r_i) reproduces coefficients within 1e-7 relative
        rng = np.random.default_rng(7)
        for _ in range(100):
            deg = int(rng.integers(1, 9))
            coeffs = rng.uniform(-2, 2, deg + 1)
            while abs(coeffs[-1]) < 0.1:
                coeffs[-1] = rng.uniform(-2, 2)
            p = Polynomial(coeffs)
            roots = poly_roots(p)
            rebuilt = np.polynomial.polynomial.polyfromroots(roots) * p.coeffs[-1]
            assert np.allclose(
                rebuilt.real, p.coeffs, atol=1e-7 * np.linalg.norm(p.coeffs)
            )

    def test_residuals_degree_eight(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            coeffs = rng.uniform(-2, 2, 9)
            while abs(coeffs[-1]) < 0.1:
                coeffs[-1] = rng.uniform(-2, 2)
            p = Polynomial(coeffs)
            scale = np.linalg.norm(p.coeffs)
            for r in poly_roots(p):
                assert abs(poly_eval(p, r)) / scale < 1e-8


class TestClassification:
    def test_single_stable_zero(self):
        cls = classify_zeros(tf([-0.5, 1.0], [0.0, 0.0, 1.0]))
        assert np.allclose(cls.stable_zeros, [0.5])
        assert cls.unstable_zeros == ()

    def test_straddling_moduli(self):
        cls = classify_zeros(tf([0.6, -1.7, 1.0], [0.0, 0.0, 0.0, 1.0]))
        assert np.allclose(cls.stable_zeros, [0.5], atol=1e-9)
        assert np.allclose(cls.unstable_zeros, [1.2], atol=1e-9)

    def test_boundary_counts_as_unstable(self):
        cls = classify_zeros(tf([-1.0, 1.0], [0.0, 0.0, 1.0]))
        assert cls.stable_zeros == ()
        assert np.allclose(cls.unstable_zeros, [1.0])

    def test_reconstruction(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            system = random_stable_tf(rng, 4, 3)
            cls = classify_zeros(system)
            rebuilt = cls.reconstructed_numerator()
            assert np.allclose(
                rebuilt.coeffs,
                system.num.coeffs,
                atol=1e-8 * np.linalg.norm(system.num.coeffs),
            )


class TestRelativeDegree:
    def test_pure_delay(self):
        assert relative_degree(tf([1.0], [0.0, 1.0])) == 1

    def test_third_order(self):
        assert relative_degree(tf([0.2, 1.0], [0.0, 0.0, 0.0, 1.0])) == 2

    def test_improper_raises(self):
        with pytest.raises(ImproperSystem):
            relative_degree(tf([0.0, 0.0, 1.0], [0.0, 1.0]))


class TestInverses:
    def test_delay_inverts_to_advance(self):
        inv = exact_inverse(tf([1.0], [0.0, 1.0]))
        assert inv.num.coeffs == (0.0, 1.0)
        assert inv.den.coeffs == (1.0,)
        assert inv.preview == 1

    def test_swap(self):
        inv = exact_inverse(tf([-0.5, 1.0], [0.2, -0.9, 1.0]))
        assert inv.num.coeffs == (0.2, -0.9, 1.0)
        assert inv.den.coeffs == (-0.5, 1.0)

    def test_cascade_identity(self):
        # H applied to H^-1(y_d) reproduces y_d after the startup transient
        rng = np.random.default_rng(21)
        k = np.arange(2000)
        for _ in range(50):
            system = random_stable_tf(rng, int(rng.integers(1, 5)), int(rng.integers(1, 4)))
            if system.num.degree > system.den.degree:
                continue
            ramp = np.minimum(k / 200.0, 1.0)
            y_d = ramp * np.sin(2 * np.pi * k / 400.0)
            u = simulate(exact_inverse(system), y_d)
            y = simulate(system, u)
            assert np.max(np.abs(y[600:1800] - y_d[600:1800])) < 1e-9

    def test_zos_equals_exact_for_minimum_phase(self):
        system = tf([-0.5, 1.0], [0.2, -0.9, 1.0])
        zos = zos_inverse(system)
        exact = exact_inverse(system)
        assert np.allclose(zos.num.coeffs, exact.num.coeffs)
        assert np.allclose(zos.den.coeffs, exact.den.coeffs)

    def test_zos_freezes_unstable_factor(self):
        # num = (z-1.2)(z-0.5): Nu(1) = -0.2, so den becomes -0.2*(z-0.5)
        system = tf([0.6, -1.7, 1.0], [0.1, -0.2, 0.3, 1.0])
        zos = zos_inverse(system)
        assert np.allclose(zos.num.coeffs, (0.1, -0.2, 0.3, 1.0))
        assert np.allclose(zos.den.coeffs, (0.1, -0.2))

    def test_zos_preview(self):
        system = tf([0.6, -1.7, 1.0], [0.1, -0.2, 0.3, 1.0])
        # deg(den of tf) - deg(Ns) = 3 - 1
        assert zos_inverse(system).preview == 2

    def test_zos_degenerate_zero_at_one(self):
        with pytest.raises(DegenerateApproximation):
            zos_inverse(tf([-1.0, 1.0], [0.0, 0.0, 1.0]))

    def test_zos_poles_are_stable_zeros(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            system = random_stable_tf(rng, 4, 2, max_modulus=0.9)
            # graft one unstable zero on
            unstable = rng.uniform(1.05, 2.0)
            system = tf(
                (system.num * Polynomial([-unstable, 1.0])).coeffs,
                system.den.coeffs,
            )
            zos = zos_inverse(system)
            poles = poly_roots(zos.den) if zos.den.degree >= 1 else []
            assert all(abs(p) < 1.0 for p in poles)

    def test_naive_scalar_division(self):
        inv = naive_approx_inverse(tf([-1.2, 1.0], [0.3, -1.0, 1.0]))
        assert np.allclose(inv.num.coeffs, (0.3, -1.0, 1.0))
        assert np.allclose(inv.den.coeffs, (-0.2,))
        assert inv.preview == 2

    def test_naive_all_pole_equals_exact(self):
        system = tf([1.0], [0.3, -1.0, 1.0])
        inv = naive_approx_inverse(system)
        assert np.allclose(inv.num.coeffs, system.den.coeffs)
        assert np.allclose(inv.den.coeffs, (1.0,))

    def test_naive_degenerate(self):
        with pytest.raises(DegenerateApproximation):
            naive_approx_inverse(tf([-1.0, 1.0], [0.0, 0.0, 1.0]))


class TestDCGain:
    def test_pure_delay(self):
        assert dc_gain(tf([1.0], [0.0, 1.0])) == pytest.approx(1.0)

    def test_direct_evaluation(self):
        assert dc_gain(tf([-1.2, 1.0], [0.3, -1.0, 1.0])) == pytest.approx(-0.2 / 0.3)

    def test_pole_at_one(self):
        with pytest.raises(PoleAtOne):
            dc_gain(tf([1.0], [-1.0, 1.0]))

    def test_dc_matching_random_nmp(self):
        # Insight-2 identity: both approximate inverses match H at z = 1
        rng = np.random.default_rng(17)
        for _ in range(50):
            system = random_stable_tf(rng, 4, 2, max_modulus=0.9)
            unstable = rng.uniform(1.05, 2.0)
            system = tf(
                (system.num * Polynomial([-unstable, 1.0])).coeffs,
                system.den.coeffs,
            )
            assert dc_gain(system) * dc_gain(zos_inverse(system)) == pytest.approx(
                1.0, abs=1e-10
            )
            assert dc_gain(system) * dc_gain(
                naive_approx_inverse(system)
            ) == pytest.approx(1.0, abs=1e-10)


class TestSimulate:
    def test_delay_impulse(self):
        u = np.zeros(8)
        u[0] = 1.0
        y = simulate(tf([1.0], [0.0, 1.0]), u)
        expected = np.zeros(8)
        expected[1] = 1.0
        assert np.allclose(y, expected)

    def test_advance_impulse(self):
        u = np.zeros(8)
        u[3] = 1.0
        y = simulate(tf([0.0, 1.0], [1.0]), u, preview=1)
        expected = np.zeros(8)
        expected[2] = 1.0
        assert np.allclose(y, expected)

    def test_insufficient_preview(self):
        with pytest.raises(InsufficientPreview):
            simulate(tf([0.0, 1.0], [1.0]), np.zeros(4), preview=0)

    def test_matches_direct_difference_equation(self):
        # independent oracle: naive difference-equation loop
        def direct(num, den, u):
            m = len(den) - 1
            p = len(num) - 1
            y = np.zeros(len(u))
            for k in range(len(u)):
                acc = 0.0
                for j in range(p + 1):
                    i = k - m + j
                    if 0 <= i < len(u):
                        acc += num[j] * u[i]
                for j in range(m):
                    i = k - m + j
                    if i >= 0:
                        acc -= den[j] * y[i]
                y[k] = acc / den[m]
            return y

        rng = np.random.default_rng(13)
        for _ in range(25):
            system = random_stable_tf(rng, int(rng.integers(1, 5)), int(rng.integers(0, 4)))
            u = rng.normal(size=300)
            want = direct(system.num.coeffs, system.den.coeffs, u)
            got = simulate(system, u, preview=system.preview)
            assert np.allclose(got, want, atol=1e-10)

    def test_matches_impulse_convolution(self):
        rng = np.random.default_rng(19)
        for _ in range(20):
            system = random_stable_tf(rng, 3, 1, max_modulus=0.8)
            impulse = np.zeros(400)
            impulse[0] = 1.0
            h = simulate(system, impulse)
            u = rng.normal(size=200)
            y = simulate(system, u)
            y_conv = np.convolve(u, h)[:200]
            assert np.max(np.abs(y - y_conv)) < 1e-10


class TestFrequencyResponse:
    def test_delay_at_dc(self):
        assert frequency_response(tf([1.0], [0.0, 1.0]), 0.0) == pytest.approx(1.0)

    def test_normalized_numerator_at_dc(self):
        system = tf([-1.2, 1.0], [-0.2])
        assert frequency_response(system, 0.0) == pytest.approx(1.0)

    def test_direct_complex_arithmetic(self):
        z = cmath.exp(1j * 0.1)
        expected = abs((z - 1.2) / (1.0 - 1.2))
        system = tf([-1.2, 1.0], [-0.2])
        assert abs(frequency_response(system, 0.1)) == pytest.approx(expected)

    def test_pole_on_circle(self):
        with pytest.raises(PoleOnUnitCircle):
            frequency_response(tf([1.0], [-1.0, 1.0]), 0.0)

    def test_error_shrinks_for_distant_zeros(self):
        # |N(e^jw)/N(1)| error decreases as the real zero moves away from 1
        for omega in (0.05, 0.2, math.pi / 4):
            errors = []
            for z0 in (1.2, 2.0, 5.0, 10.0):
                system = tf([-z0, 1.0], [1.0 - z0])
                errors.append(abs(abs(frequency_response(system, omega)) - 1.0))
            assert all(a > b for a, b in zip(errors, errors[1:]))


class TestSerialization:
    def test_round_trip(self):
        system = tf([0.6, -1.7, 1.0], [0.1, -0.2, 0.3, 1.0])
        again = DiscreteTransferFunction.from_json(system.to_json())
        assert again.num.coeffs == system.num.coeffs
        assert again.den.coeffs == system.den.coeffs
        assert again.sample_time == system.sample_time

    def test_schema_fields(self):
        import json

        obj = json.loads(tf([1.0], [0.0, 1.0]).to_json())
        assert set(obj) == {"num", "den", "dt"}
        assert obj["dt"] == DT
