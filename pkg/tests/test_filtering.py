import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

import colored_drift as cd
from colored_drift.errors import StabilityError
from colored_drift.experiments import batch_means
from colored_drift.filtering import ExponentialFilter


def grid_times(n, h):
    return np.arange(n + 1) * h


class TestAgainstClosedForms:
    def test_constant_input_exact_scheme(self):
        h, delta, c = 1e-3, 0.7, 3.0
        x = np.full((2001, 1), c)
        z = cd.filter_path(x, cd.FilterConfig(delta, "exact-exponential"), h=h)
        t = grid_times(2000, h)
        np.testing.assert_allclose(z[:, 0], c * (1 - np.exp(-t / delta)),
                                   atol=1e-12)

    def test_constant_input_euler_scheme(self):
        h, delta, c = 1e-3, 0.7, 3.0
        x = np.full((2001, 1), c)
        z = cd.filter_path(x, cd.FilterConfig(delta, "euler"), h=h)
        t = grid_times(2000, h)
        np.testing.assert_allclose(z[:, 0], c * (1 - np.exp(-t / delta)),
                                   atol=c * 2 * h / delta)

    def test_sine_input_matches_quadrature(self):
        # oracle: trapezoidal quadrature of the convolution integral
        delta = 1.0
        errs = {}
        for h in (2e-3, 1e-3):
            n = int(round(20.0 / h))
            t = grid_times(n, h)
            x = np.sin(t)
            z = cd.filter_path(x[:, None], cd.FilterConfig(delta), h=h)[:, 0]
            kernel_weight = np.exp(t / delta) / delta
            integrand = kernel_weight * x
            quad = np.concatenate([
                [0.0],
                np.cumsum(0.5 * h * (integrand[:-1] + integrand[1:]))])
            oracle = np.exp(-t / delta) * quad
            errs[h] = np.abs(z - oracle).max()
            assert errs[h] <= 2.0 * h
        assert 1.4 <= errs[2e-3] / errs[1e-3] <= 2.6


class TestSchemes:
    def test_euler_instability_rejected(self):
        with pytest.raises(StabilityError):
            ExponentialFilter(cd.FilterConfig(0.5, "euler"), h=0.5, dim=1)

    def test_scheme_discrepancy_is_first_order(self):
        rng = np.random.default_rng(0)
        width = 0.3
        gaps = {}
        fine = rng.standard_normal(4001).cumsum()
        for h, x in ((2e-3, fine[::2]), (1e-3, fine)):
            ze = cd.filter_path(x[:, None], cd.FilterConfig(width, "euler"), h=h)
            zx = cd.filter_path(x[:, None],
                                cd.FilterConfig(width, "exact-exponential"), h=h)
            gaps[h] = np.abs(ze - zx).max()
        assert 1.4 <= gaps[2e-3] / gaps[1e-3] <= 2.6

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            cd.FilterConfig(1.0, "midpoint")


class TestStreaming:
    def test_chunked_equals_whole(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((1000, 2))
        cfg = cd.FilterConfig(0.9)
        whole = cd.filter_path(np.vstack([x, x[-1:]]), cfg, h=1e-2)[:-1]
        filt = ExponentialFilter(cfg, h=1e-2, dim=2)
        parts = [filt.consume(x[:317]), filt.consume(x[317:800]),
                 filt.consume(x[800:])]
        np.testing.assert_array_equal(np.vstack(parts), whole)

    def test_first_output_is_zero(self):
        filt = ExponentialFilter(cd.FilterConfig(1.0), h=0.1, dim=3)
        out = filt.consume(np.ones((5, 3)))
        assert np.all(out[0] == 0.0)


@settings(max_examples=40, deadline=None)
@given(
    x=hnp.arrays(np.float64, st.integers(2, 60),
                 elements=st.floats(-50, 50)),
    delta=st.floats(0.05, 5.0),
)
def test_exact_scheme_is_a_contraction(x, delta):
    # each update is a convex combination, so Z never exceeds the data range
    z = cd.filter_path(x[:, None], cd.FilterConfig(delta), h=0.01)[:, 0]
    assert np.abs(z).max() <= np.abs(x).max() + 1e-12


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(3, 40),
    a=st.floats(-3, 3), b=st.floats(-3, 3),
    scheme=st.sampled_from(["euler", "exact-exponential"]),
)
def test_linearity(n, a, b, scheme):
    rng = np.random.default_rng(n)
    x1 = rng.standard_normal((n, 1))
    x2 = rng.standard_normal((n, 1))
    cfg = cd.FilterConfig(1.3, scheme)
    combo = cd.filter_path(a * x1 + b * x2, cfg, h=0.05)
    parts = a * cd.filter_path(x1, cfg, h=0.05) + b * cd.filter_path(x2, cfg, h=0.05)
    np.testing.assert_allclose(combo, parts, rtol=1e-12, atol=1e-12)


class TestStationaryMoments:
    def test_filtered_moments_on_limit_data(self):
        # unit model: E[Z X] and E[Z^2] approach 1 / (2 (1 + delta))
        delta = 1.0
        m = cd.LimitModel(theta=[[1.0]], basis=cd.neg_identity_basis(1),
                          dsym=[[0.5]])
        grid = cd.TimeGrid.from_horizon(1000.0, 1e-3)
        path = cd.simulate_limit(m, grid, seed=17)
        path = cd.filter_path(path, cd.FilterConfig(delta))
        burn = len(path.X) // 10
        x = path.X[burn:, 0]
        z = path.Z[burn:, 0]
        target = 1.0 / (2.0 * (1.0 + delta))
        for series in (z * x, z * z):
            mean, se = batch_means(series)
            assert abs(mean - target) <= 3.0 * se, (mean, target, se)
