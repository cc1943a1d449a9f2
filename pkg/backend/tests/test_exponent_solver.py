"""Unit tests for the covering exponent and its specializations."""
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from app.core.errors import CapExceededError
from app.services.exponent_solver import (
    concentration_exponent,
    exponent,
    exponent_oracle,
    exponent_sweep,
    hoeffding_exponent,
    marton_exponent,
    project_to_simplex,
    regime_boundaries,
    sup_rate,
    talagrand_bound,
)
from app.services.model import validate_model
from app.services.rate_solver import rate

HAMMING = [[0.0, 1.0], [1.0, 0.0]]
BERNOULLI_R_INFINITE = 0.610864
BERNOULLI_R_ZERO = 0.639323


def binary_kl(q: float, p: float) -> float:
    """H((q, 1-q) || (p, 1-p)) in nats."""
    total = 0.0
    if q > 0:
        total += q * math.log(q / p)
    if q < 1:
        total += (1 - q) * math.log((1 - q) / (1 - p))
    return total


def binary_entropy(p: float) -> float:
    return -p * math.log(p) - (1 - p) * math.log(1 - p)


def make_bernoulli():
    return validate_model(["0", "1"], None, [0.6, 0.4], [0.6, 0.4], HAMMING)


def make_ternary():
    return validate_model(
        ["a", "b", "c"],
        None,
        [0.5, 0.3, 0.2],
        [1.0, 0.5, 2.0],
        [[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]],
    )


def random_model(rng, size):
    """Strictly positive P, masses in [0.5, 2] and off-zero distortions of at least 0.2."""
    P = np.maximum(rng.dirichlet(np.ones(size)), 0.02)
    rho = rng.uniform(0.2, 1.0, (size, size))
    rho[np.arange(size), rng.integers(size, size=size)] = 0.0
    labels = [str(i) for i in range(size)]
    return validate_model(labels, None, P / P.sum(), rng.uniform(0.5, 2.0, size), rho)


def finite_levels(model, D, fractions=(0.1, 0.3, 0.5, 0.7, 0.85)):
    """Rates strictly inside the finite regime; none when the regime is too thin to sample."""
    g_p, g_max = regime_boundaries(model, D, orientation="R")
    if g_max - g_p < 1e-3:
        return []
    return [g_p + f * (g_max - g_p) for f in fractions]


def random_models(seed, count, size):
    rng = np.random.default_rng(seed)
    return [random_model(rng, size) for _ in range(count)]


class TestRegimes:
    """Test cases for regime decisions."""

    def test_bernoulli_boundaries(self):
        r_infinite, r_zero = regime_boundaries(make_bernoulli(), 0.3)
        assert r_infinite == pytest.approx(BERNOULLI_R_INFINITE, abs=1e-5)
        assert r_zero == pytest.approx(BERNOULLI_R_ZERO, abs=1e-6)

    def test_capital_orientation(self):
        low, high = regime_boundaries(make_bernoulli(), 0.3, orientation="R")
        assert low == pytest.approx(-BERNOULLI_R_ZERO, abs=1e-6)
        assert high == pytest.approx(-BERNOULLI_R_INFINITE, abs=1e-5)

    def test_zero_regime(self):
        result = exponent(make_bernoulli(), -0.65, 0.3)
        assert result.regime == "zero"
        assert result.value_nats == 0.0
        assert not result.boundary

    def test_infinite_regime(self):
        result = exponent(make_bernoulli(), -0.60, 0.3)
        assert result.regime == "infinite"
        assert result.value_nats == float("inf")

    def test_boundary_flag_at_source_rate(self):
        """R equal to R(D;P,M) is the zero regime, flagged as a boundary point."""
        model = make_bernoulli()
        g_p = rate(model, 0.3).rate_nats
        result = exponent(model, g_p, 0.3)
        assert result.regime == "zero"
        assert result.boundary
        assert result.label == "boundary"

    @pytest.mark.parametrize("offset", [1e-6, 1e-3, 0.05])
    def test_sandwich(self, offset):
        model = make_ternary()
        g_p = rate(model, 0.3).rate_nats
        g_max, _ = sup_rate(model, 0.3)
        assert exponent(model, g_p - offset, 0.3).regime == "zero"
        assert exponent(model, g_max + offset, 0.3).regime == "infinite"

    def test_rejects_distortion_at_maximum(self):
        with pytest.raises(ValueError, match="distortion level"):
            exponent(make_bernoulli(), -0.62, 1.0)


class TestFiniteExponent:
    """Test cases for the finite regime."""

    @pytest.mark.parametrize("r", [0.615, 0.62, 0.625, 0.63, 0.635])
    def test_matches_oracle(self, r):
        model = make_bernoulli()
        result = exponent(model, -r, 0.3)
        assert result.regime == "finite"
        assert result.value_nats == pytest.approx(exponent_oracle(model, -r, 0.3, 2000), abs=1e-6)

    def test_minimizer_is_feasible(self):
        result = exponent(make_bernoulli(), -0.625, 0.3)
        assert result.constraint_value >= -0.625 - 1e-9
        assert result.value_nats == pytest.approx(binary_kl(result.minimizer_Q[0], 0.6), abs=1e-12)

    def test_nondecreasing_in_rate(self):
        model = make_bernoulli()
        values = [exponent(model, -r, 0.3).value_nats for r in (0.635, 0.63, 0.625, 0.62, 0.615)]
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))

    def test_nondecreasing_in_distortion(self):
        model = make_bernoulli()
        values = [exponent(model, -0.625, D).value_nats for D in (0.28, 0.30, 0.32)]
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))

    def test_ternary_matches_oracle(self):
        model = make_ternary()
        g_p = rate(model, 0.3).rate_nats
        g_max, _ = sup_rate(model, 0.3)
        R = g_p + 0.5 * (g_max - g_p)
        result = exponent(model, R, 0.3)
        assert result.regime == "finite"
        oracle = exponent_oracle(model, R, 0.3, 150)
        assert result.value_nats <= oracle + 1e-6
        assert result.value_nats == pytest.approx(oracle, abs=1e-3)

    def test_oracle_cap(self):
        model = validate_model(
            ["a", "b", "c", "d"], None, [0.25] * 4, [1.0] * 4, 1.0 - np.eye(4),
        )
        with pytest.raises(CapExceededError):
            exponent_oracle(model, 0.5, 0.2, 10)


class TestSweep:
    """Test cases for exponent sweeps."""

    def test_sweep_crosses_all_regimes(self):
        curve = exponent_sweep(make_bernoulli(), [0.60, 0.62, 0.65], 0.3, orientation="r")
        regimes = [sample.result.regime for sample in curve.samples]
        assert regimes == ["infinite", "finite", "zero"]
        assert curve.r_infinite <= curve.r_zero

    @pytest.mark.slow
    def test_bernoulli_curve_is_monotone(self):
        grid = np.round(np.arange(0.611, 0.6395, 0.0005), 12)
        curve = exponent_sweep(make_bernoulli(), grid, 0.3, orientation="r")
        values = [sample.result.value_nats for sample in curve.samples]
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


class TestRandomInstances:
    """Exponent against the mesh oracle and the regime sandwich on random models."""

    D = 0.1

    def _check_oracle(self, model):
        for R in finite_levels(model, self.D):
            result = exponent(model, R, self.D)
            assert result.regime == "finite"
            assert result.value_nats == pytest.approx(exponent_oracle(model, R, self.D, 2000), abs=2e-3)

    def _check_sandwich(self, model):
        g_p, g_max = regime_boundaries(model, self.D, orientation="R")
        for offset in (2e-6, 1e-3, 0.1):
            assert exponent(model, g_p - offset, self.D).value_nats == 0.0
            assert exponent(model, g_max + offset, self.D).value_nats == float("inf")

    def test_binary_sample_matches_oracle(self):
        for model in random_models(31, 3, 2):
            self._check_oracle(model)

    def test_sandwich_sample(self):
        for model in random_models(31, 3, 2) + random_models(32, 2, 3):
            self._check_sandwich(model)

    @pytest.mark.slow
    def test_binary_suite_matches_oracle(self):
        for model in random_models(2026, 25, 2):
            self._check_oracle(model)

    @pytest.mark.slow
    def test_sandwich_suite(self):
        for model in random_models(2026, 25, 2) + random_models(2027, 20, 3):
            self._check_sandwich(model)


class TestCorollaries:
    """Test cases for the Hoeffding, Marton and concentration specializations."""

    def test_hoeffding_matches_boundary_search(self):
        P0, P1 = np.array([0.5, 0.5]), np.array([0.2, 0.8])
        r = 0.05 * math.log(2.0)
        result = hoeffding_exponent(P0, P1, r)
        q = brentq(lambda t: binary_kl(t, 0.5) - r, 0.2, 0.5)
        assert result.regime == "finite"
        assert result.value_nats == pytest.approx(binary_kl(q, 0.2), abs=1e-7)

    def test_hoeffding_ignores_symbol_order(self):
        """Relabeling both laws the same way leaves the exponent unchanged."""
        rng = np.random.default_rng(5)
        for size in (2, 3, 4):
            P0 = np.maximum(rng.dirichlet(np.ones(size)), 0.05)
            P1 = np.maximum(rng.dirichlet(np.ones(size)), 0.05)
            P0, P1 = P0 / P0.sum(), P1 / P1.sum()
            r = 0.5 * float(np.sum(P1 * np.log(P1 / P0)))
            order = rng.permutation(size)
            direct = hoeffding_exponent(P0, P1, r).value_nats
            permuted = hoeffding_exponent(P0[order], P1[order], r).value_nats
            assert permuted == pytest.approx(direct, abs=1e-7)

    def test_hoeffding_rejects_out_of_range(self):
        with pytest.raises(ValueError, match="r must lie"):
            hoeffding_exponent([0.5, 0.5], [0.2, 0.8], 0.0)
        with pytest.raises(ValueError, match="r must lie"):
            hoeffding_exponent([0.5, 0.5], [0.2, 0.8], 1.0)

    def test_marton_finite(self):
        R, D = 0.36, 0.1
        result = marton_exponent([0.4, 0.6], HAMMING, R, D)
        q = brentq(lambda t: binary_entropy(t) - binary_entropy(D) - R, 0.4, 0.5)
        assert result.regime == "finite"
        assert result.value_nats == pytest.approx(binary_kl(q, 0.4), abs=1e-7)

    def test_marton_regimes(self):
        assert marton_exponent([0.4, 0.6], HAMMING, 0.3, 0.1).regime == "zero"
        assert marton_exponent([0.4, 0.6], HAMMING, 0.5, 0.1).regime == "infinite"

    def test_marton_rejects_nonfinite_rate(self):
        with pytest.raises(ValueError):
            marton_exponent([0.4, 0.6], HAMMING, float("nan"), 0.1)

    def test_concentration_is_exponent_with_source_mass(self):
        direct = exponent(make_bernoulli(), -0.625, 0.3).value_nats
        assert concentration_exponent([0.6, 0.4], HAMMING, 0.625, 0.3).value_nats == pytest.approx(direct)

    def test_concentration_rejects_nonpositive_rate(self):
        with pytest.raises(ValueError):
            concentration_exponent([0.6, 0.4], HAMMING, 0.0, 0.3)

    @pytest.mark.parametrize("r", [0.01, 0.02, 0.03, 0.04])
    def test_concentration_beats_transport_bound(self, r):
        """Small sets blow up to cover everything: the exponent is infinite where the bound is finite."""
        result = concentration_exponent([0.6, 0.4], HAMMING, r, 0.3)
        assert result.regime == "infinite"
        assert math.isfinite(talagrand_bound(r, 0.3))

    @pytest.mark.parametrize("P", [[0.6, 0.4], [0.5, 0.3, 0.2]])
    def test_concentration_dominates_transport_bound(self, P):
        hamming = 1.0 - np.eye(len(P))
        for r in (0.05, 0.1, 0.2):
            for D in (0.1, 0.2, 0.3, 0.4):
                value = concentration_exponent(P, hamming, r, D).value_nats
                assert value >= talagrand_bound(r, D) - 1e-9

    def test_talagrand_bound(self):
        assert talagrand_bound(0.1, 0.3) == pytest.approx(-0.055)
        assert talagrand_bound(0.625, 0.3) <= exponent(make_bernoulli(), -0.625, 0.3).value_nats


class TestProjection:
    """Test cases for simplex projection."""

    def test_projection_lands_on_simplex(self):
        projected = project_to_simplex(np.array([0.8, 0.5, -0.1]))
        assert projected.sum() == pytest.approx(1.0)
        assert np.all(projected >= 0)
        np.testing.assert_allclose(projected, [0.65, 0.35, 0.0])


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
