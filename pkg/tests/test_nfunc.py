import numpy as np
import pytest

from orthofem.nfunc import (GrowthLaw, PowerNFunction, ShiftedNFunction,
                            conjugate_exponent)

# bounds of the monotonicity/distance ratio (A(s)-A(t))(s-t) / (V(s)-V(t))^2
# over the signed log grid below, found by the brute-force sweep in
# test_equivalence_ratio_within_frozen_bounds; frozen with a 1e-9 margin.
EQUIVALENCE_BOUNDS = {
    1.5: (0.890409857, 1.051463967),
    2.0: (0.999999999, 1.000000001),
    3.0: (0.894819348, 1.051463967),
}

# constants for the shifted Young inequality with epsilon = 1/2, found by
# sweeping t, s over log grids and shifts a in {0, 0.3, 1, 5}
YOUNG_CONSTANTS = {1.5: 2.0, 2.0: 2.0, 3.0: 15.6}


def central_diff(f, t, step=1e-6):
    return (f(t + step) - f(t - step)) / (2 * step)


class TestPowerNFunction:
    def test_plain_square(self):
        phi = PowerNFunction(2.0)
        assert phi.value(3.0) == pytest.approx(4.5, abs=0)

    def test_sqrt_derivative(self):
        phi = PowerNFunction(1.5)
        assert phi.deriv(4.0) == pytest.approx(2.0, abs=0)

    def test_derivatives_match_finite_differences(self):
        # oracle: central differences of value/deriv at step 1e-6
        phi = PowerNFunction(3.0)
        for t in (0.5, 1.0, 2.0):
            fd1 = central_diff(phi.value, t)
            fd2 = central_diff(phi.deriv, t)
            assert phi.deriv(t) == pytest.approx(fd1, rel=1e-6)
            assert phi.deriv2(t) == pytest.approx(fd2, rel=1e-6)

    def test_value_at_zero(self):
        assert PowerNFunction(3.0).value(0.0) == 0.0
        assert PowerNFunction(3.0).deriv(0.0) == 0.0
        phi = PowerNFunction(3.0, delta=0.5)
        assert phi.value(0.0) == pytest.approx(0.5 ** 3 / 3)

    def test_regularized_is_finite(self):
        phi = PowerNFunction(1.5, delta=0.1)
        t = np.logspace(-8, 3, 30)
        for f in (phi.value, phi.deriv, phi.deriv2):
            assert np.all(np.isfinite(f(t)))

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            PowerNFunction(1.0)
        with pytest.raises(ValueError):
            PowerNFunction(2.0, delta=-0.1)
        with pytest.raises(ValueError):
            PowerNFunction(2.0).value(-1.0)

    def test_doubling_bound(self):
        # phi(2t) / phi(t) equals 2^p for the plain power family
        for p in (1.5, 2.0, 3.0):
            phi = PowerNFunction(p)
            t = np.logspace(-5, 3, 40)
            ratio = phi.value(2 * t) / phi.value(t)
            assert np.all(ratio <= 2 ** p * (1 + 1e-12))


class TestShiftedNFunction:
    def test_zero_shift_reduces_to_base(self):
        phi = PowerNFunction(2.5)
        shifted = ShiftedNFunction(phi, 0.0)
        for t in (0.1, 0.7, 2.0, 9.0):
            assert shifted.value(t) == pytest.approx(phi.value(t) - phi.value(0.0),
                                                     rel=1e-13)

    def test_derivative_formula(self):
        shifted = ShiftedNFunction(PowerNFunction(2.0), 1.0)
        assert shifted.deriv(1.0) == pytest.approx(1.0, abs=0)
        assert shifted.deriv(0.0) == 0.0

    def test_value_matches_trapezoid_oracle(self):
        # oracle: composite trapezoid of the shifted derivative, 1e4 panels
        shifted = ShiftedNFunction(PowerNFunction(3.0), 0.7)
        for t in np.linspace(0.1, 5.0, 8):
            s = np.linspace(0.0, t, 10001)
            ref = np.trapezoid(shifted.deriv(s), s)
            assert shifted.value(t) == pytest.approx(ref, rel=1e-8)

    def test_regularized_value_matches_trapezoid_oracle(self):
        shifted = ShiftedNFunction(PowerNFunction(1.5, delta=0.2), 0.4)
        for t in (0.5, 2.0):
            s = np.linspace(0.0, t, 20001)
            ref = np.trapezoid(shifted.deriv(s), s)
            assert shifted.value(t) == pytest.approx(ref, rel=1e-8)

    def test_convexity_by_second_differences(self):
        shifted = ShiftedNFunction(PowerNFunction(1.5), 0.3)
        t = np.linspace(0.0, 4.0, 200)
        v = shifted.value(t)
        second = v[:-2] - 2 * v[1:-1] + v[2:]
        assert shifted.value(0.0) == 0.0
        assert np.all(np.diff(v) >= -1e-14)
        assert np.all(second >= -1e-12)

    def test_negative_input_rejected(self):
        shifted = ShiftedNFunction(PowerNFunction(2.0), 1.0)
        with pytest.raises(ValueError):
            shifted.deriv(-0.5)
        with pytest.raises(ValueError):
            ShiftedNFunction(PowerNFunction(2.0), -1.0)

    def test_shifted_young_inequality(self):
        # Phi_a'(t) s <= Phi_a(t)/2 + C Phi_a(s) with the frozen sweep constant
        ts = np.logspace(-3, 2, 40)
        ss = np.logspace(-3, 2, 40)
        for p, c_young in YOUNG_CONSTANTS.items():
            for a in (0.0, 0.3, 1.0, 5.0):
                shifted = ShiftedNFunction(PowerNFunction(p), a)
                for t in ts:
                    lhs = shifted.deriv(t) * ss
                    rhs = shifted.value(t) / 2 + c_young * shifted.value(ss)
                    assert np.all(lhs <= rhs * (1 + 1e-12))


class TestGrowthLaw:
    def test_flux_examples(self):
        law = GrowthLaw((3.0, 1.5))
        assert law.flux(0, 2.0) == pytest.approx(4.0, abs=0)
        assert law.flux(0, 0.0) == 0.0
        assert law.flux(1, 0.25) == pytest.approx(0.5, rel=1e-15)

    def test_flux_equals_weight_times_t(self):
        law = GrowthLaw((3.0, 1.5))
        for i, t in [(0, 0.7), (0, -2.0), (1, 0.3), (1, -1.2)]:
            assert law.flux(i, t) == pytest.approx(
                law.weight(i, t, clamp=1e-10) * t, rel=1e-13)

    def test_weight_examples(self):
        assert GrowthLaw((2.0, 2.0)).weight(0, 123.0) == 1.0
        assert GrowthLaw((3.0, 2.0)).weight(0, 4.0) == pytest.approx(4.0, abs=0)
        law = GrowthLaw((1.5, 2.0))
        assert law.weight(0, 0.0, clamp=1e-10) == pytest.approx(1e5, rel=1e-12)

    def test_weight_clamp_required(self):
        law = GrowthLaw((1.5, 2.0))
        with pytest.raises(ValueError):
            law.weight(0, 0.5, clamp=0.0)

    def test_natural_examples(self):
        assert GrowthLaw((2.0, 2.0)).natural(0, -3.0) == -3.0
        assert GrowthLaw((3.0, 2.0)).natural(0, 4.0) == pytest.approx(8.0, abs=0)
        # oracle: direct power evaluation |t|^(p/2) * sign(t)
        law = GrowthLaw((1.5, 2.0))
        t = 0.0625
        assert law.natural(0, t) == pytest.approx(t ** 0.75, rel=1e-14)
        assert law.natural(0, t) == pytest.approx(0.125, rel=1e-12)

    def test_oddness(self):
        law = GrowthLaw((3.0, 1.5))
        t = np.concatenate([-np.logspace(-4, 2, 20), np.logspace(-4, 2, 20)])
        for i in (0, 1):
            assert np.allclose(law.flux(i, -t), -law.flux(i, t), rtol=0, atol=0)
            assert np.allclose(law.natural(i, -t), -law.natural(i, t), rtol=0, atol=0)

    def test_natural_strictly_increasing(self):
        law = GrowthLaw((1.5, 3.0))
        t = np.linspace(-3, 3, 101)
        for i in (0, 1):
            assert np.all(np.diff(law.natural(i, t)) > 0)

    def test_psi_consistency(self):
        # psi'(t)^2 = t phi'(t) on a log grid
        for p in (1.5, 2.0, 3.0):
            law = GrowthLaw((p, p))
            t = np.logspace(-6, 3, 50)
            lhs = law.psi_deriv(0, t) ** 2
            rhs = t * law.phi(0).deriv(t)
            assert np.allclose(lhs, rhs, rtol=1e-12)

    def test_regularized_flux_finite_everywhere(self):
        law = GrowthLaw((1.5, 3.0), deltas=(0.05, 0.05))
        t = np.linspace(-10, 10, 101)
        for i in (0, 1):
            assert np.all(np.isfinite(law.flux(i, t)))
            assert np.all(np.isfinite(law.weight(i, t)))

    def test_equivalence_ratio_within_frozen_bounds(self):
        grid = np.concatenate([-np.logspace(-4, 2, 25)[::-1], np.logspace(-4, 2, 25)])
        for p, (c_lo, c_hi) in EQUIVALENCE_BOUNDS.items():
            law = GrowthLaw((p, p))
            s, t = np.meshgrid(grid, grid, indexing="ij")
            mask = s != t
            num = (law.flux(0, s) - law.flux(0, t)) * (s - t)
            den = (law.natural(0, s) - law.natural(0, t)) ** 2
            ratio = num[mask] / den[mask]
            assert c_lo > 0
            assert ratio.min() >= c_lo - 1e-12
            assert ratio.max() <= c_hi + 1e-12


def test_conjugate_exponent():
    assert conjugate_exponent(2.0) == pytest.approx(2.0, abs=0)
    assert conjugate_exponent(1.5) == pytest.approx(3.0, abs=0)
    assert conjugate_exponent(3.0) == pytest.approx(1.5, abs=0)
    with pytest.raises(ValueError):
        conjugate_exponent(1.0)
