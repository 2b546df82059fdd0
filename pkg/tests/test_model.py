import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

import colored_drift as cd
from colored_drift.errors import AssumptionError, ErgodicityError, UnstableMatrixError
from colored_drift.model import ROTATION_2D


def random_stable_matrix(rng, n):
    # negative-definite symmetric part guarantees eigenvalues in the right half plane
    q = rng.standard_normal((n, n))
    return q @ q.T + n * np.eye(n) + 0.5 * rng.standard_normal((n, n))


class TestStationaryCovariance:
    def test_rotational_example(self):
        a = np.eye(2) + ROTATION_2D
        s = cd.stationary_covariance(a, np.eye(2))
        np.testing.assert_allclose(s, 0.5 * np.eye(2), atol=1e-12)

    def test_identity_case(self):
        s = cd.stationary_covariance(np.eye(2), np.sqrt(2.0) * np.eye(2))
        np.testing.assert_allclose(s, np.eye(2), atol=1e-12)

    def test_random_stable_systems(self):
        rng = np.random.default_rng(0)
        for k in range(100):
            n = 2 + k % 3
            a = random_stable_matrix(rng, n)
            sig = rng.standard_normal((n, n))
            sig = sig + n * np.eye(n)  # keep sigma sigma^T well conditioned
            q = sig @ sig.T
            s = cd.stationary_covariance(a, sig)
            resid = np.linalg.norm(a @ s + s @ a.T - q)
            assert resid <= 1e-10 * np.linalg.norm(q)
            assert np.abs(s - s.T).max() <= 1e-12 * np.linalg.norm(s)
            assert np.linalg.eigvalsh(s).min() >= -1e-12 * np.linalg.norm(s)
            # independent route: the dedicated Bartels-Stewart solver
            ref = scipy.linalg.solve_continuous_lyapunov(a, q)
            np.testing.assert_allclose(s, ref, rtol=1e-8, atol=1e-10)

    def test_unstable_matrix_rejected(self):
        with pytest.raises(UnstableMatrixError, match="eigenvalue"):
            cd.stationary_covariance([[-1.0]], [[1.0]])


class TestLimitCoefficients:
    def test_constant_diffusion(self):
        m = cd.additive_2d_model([[2, 1], [1, 2]], alpha=1.2, gamma=0.4, eta=0.9)
        co = cd.limit_coefficients(m)
        assert co.constant
        s_inf = m.noise_stationary_covariance()
        expected = np.eye(2) @ s_inf @ np.linalg.inv(m.A).T @ np.eye(2).T
        np.testing.assert_allclose(co.D(np.zeros(2)), expected, atol=1e-14)
        np.testing.assert_allclose(co.Dsym(np.ones(2)),
                                   0.5 * (expected + expected.T), atol=1e-14)
        assert np.all(co.b(np.array([3.0, -2.0])) == 0.0)

    def test_rotational_symmetric_part(self):
        # A = alpha I + gamma J with sigma = sqrt(eta) I gives
        # Dsym(x) = eta/(2 rho) g(x) g(x)^T for any smooth g
        alpha, gamma, eta = 1.3, 0.7, 2.0
        rho = alpha**2 + gamma**2
        a = alpha * np.eye(2) + gamma * ROTATION_2D

        def g(x):
            return np.array([[np.sin(x[0]), x[1]], [x[0] ** 2, np.cos(x[1])]])

        m = cd.ColoredModel(
            theta=np.eye(2), basis=cd.neg_identity_basis(2),
            diffusion=cd.StateDiffusion(g, 2, 2),
            A=a, sigma=np.sqrt(eta) * np.eye(2), epsilon=0.1,
        )
        co = cd.limit_coefficients(m)
        rng = np.random.default_rng(1)
        for _ in range(5):
            x = rng.standard_normal(2)
            np.testing.assert_allclose(
                co.Dsym(x), eta / (2 * rho) * g(x) @ g(x).T, atol=1e-12)

    def test_levy_drift_correction(self):
        # h(x) + b(x) must equal -L x for the radial multiplicative model
        levy = cd.LevyModel(theta=1.0, alpha=1.0, gamma=1.0, kappa=1.0, beta=1.0)
        m = levy.colored(0.1)
        co = cd.limit_coefficients(m)
        l_mat = cd.levy_limit(levy)
        rng = np.random.default_rng(2)
        for _ in range(5):
            x = 2.0 * rng.standard_normal(2)
            drift = m.theta @ m.basis.eval(x) + co.b(x)
            np.testing.assert_allclose(drift, -l_mat @ x, atol=1e-12)

    def test_divergence_against_finite_differences(self):
        # independent oracle: central differences applied directly to D and R
        alpha, gamma, eta = 1.1, 0.5, 1.4
        a = alpha * np.eye(2) + gamma * ROTATION_2D
        sig = np.sqrt(eta) * np.eye(2)

        def g(x):
            return np.array([[np.sin(x[0]), x[1]], [x[0] ** 2, np.cos(x[1])]])

        m = cd.ColoredModel(
            theta=np.eye(2), basis=cd.neg_identity_basis(2),
            diffusion=cd.StateDiffusion(g, 2, 2), A=a, sigma=sig, epsilon=0.1,
        )
        co = cd.limit_coefficients(m)
        s_inf = cd.stationary_covariance(a, sig)
        p = s_inf @ np.linalg.inv(a).T
        a_inv = np.linalg.inv(a)

        def b_oracle(x):
            step = 1e-6 * (1 + np.linalg.norm(x))
            div_dt = np.zeros(2)
            div_rt = np.zeros(2)
            for j in range(2):
                e = np.zeros(2)
                e[j] = step
                dd = ((g(x + e) @ p @ g(x + e).T) - (g(x - e) @ p @ g(x - e).T)) \
                    / (2 * step)
                dr = (g(x + e) @ s_inf - g(x - e) @ s_inf) / (2 * step)
                div_dt += dd[j, :]
                div_rt += dr[j, :]
            return div_dt - g(x) @ a_inv @ div_rt

        rng = np.random.default_rng(3)
        for _ in range(5):
            x = rng.standard_normal(2)
            np.testing.assert_allclose(co.b(x), b_oracle(x), atol=1e-6)

    def test_finite_difference_jacobian_fallback(self):
        # no analytic diffusion jacobian supplied: b falls back to differences
        def g(x):
            return np.array([[np.exp(0.3 * x[0]), 0.0], [0.0, np.cos(x[1])]])

        def dg(x):
            out = np.zeros((2, 2, 2))
            out[0, 0, 0] = 0.3 * np.exp(0.3 * x[0])
            out[1, 1, 1] = -np.sin(x[1])
            return out

        a = 1.2 * np.eye(2) + 0.3 * ROTATION_2D
        kwargs = dict(theta=np.eye(2), basis=cd.neg_identity_basis(2),
                      A=a, sigma=np.eye(2), epsilon=0.1)
        with_jac = cd.limit_coefficients(cd.ColoredModel(
            diffusion=cd.StateDiffusion(g, 2, 2, jacobian=dg), **kwargs))
        without = cd.limit_coefficients(cd.ColoredModel(
            diffusion=cd.StateDiffusion(g, 2, 2), **kwargs))
        x = np.array([0.7, -0.2])
        np.testing.assert_allclose(with_jac.b(x), without.b(x), atol=1e-8)


class TestLevyLimit:
    def test_unit_parameters(self):
        levy = cd.LevyModel(theta=1.0, alpha=1.0, gamma=1.0, kappa=1.0,
                            beta=1.0, eta=1.0)
        np.testing.assert_allclose(
            cd.levy_limit(levy), [[0.75, 0.25], [-0.25, 0.75]], atol=1e-15)
        assert levy.rho == 2.0
        assert levy.beta0 == 0.5
        assert levy.kappa0 == 0.5

    def test_no_rotation_when_gamma_vanishes(self):
        levy = cd.LevyModel(theta=1.0, alpha=1.0, gamma=1e-12, kappa=1.0, beta=1.0)
        l_mat = cd.levy_limit(levy)
        np.testing.assert_allclose(l_mat, (1.0 - levy.beta0 / 2) * np.eye(2),
                                   atol=1e-12)

    def test_additive_reduces_to_theta(self):
        levy = cd.LevyModel(theta=1.0, alpha=1.0, gamma=1.0, kappa=1.0, beta=1e-14)
        np.testing.assert_allclose(cd.levy_limit(levy), np.eye(2), atol=1e-13)

    def test_ergodicity_violation(self):
        with pytest.raises(ErgodicityError):
            cd.LevyModel(theta=0.1, alpha=0.5, gamma=0.5, kappa=1.0, beta=1.0,
                         eta=1.0)


class TestFilterWidth:
    def test_bound_accepts(self):
        bounds = cd.DissipativityBounds(1.0, 1.0, 1.0)
        assert cd.validate_filter_width(bounds, g_norm=1.0, delta=1.01)

    def test_bound_rejects(self):
        bounds = cd.DissipativityBounds(1.0, 1.0, 1.0)
        assert not cd.validate_filter_width(bounds, g_norm=1.0, delta=0.5)

    def test_assumption_violated(self):
        bounds = cd.DissipativityBounds(1.0, 1.0, 1.0)
        with pytest.raises(AssumptionError):
            cd.validate_filter_width(bounds, g_norm=2.0, delta=5.0)


class TestDriftBases:
    @pytest.mark.parametrize("factory,dim", [
        (cd.neg_identity_basis, 1), (cd.neg_identity_basis, 3),
        (cd.identity_basis, 2), (cd.neg_cubic_basis, 1),
    ])
    def test_jacobian_matches_finite_differences(self, factory, dim):
        basis = factory(dim)
        rng = np.random.default_rng(4)
        for _ in range(50):
            x = rng.standard_normal(dim)
            jac = basis.jacobian(x)
            step = 1e-6 * (1 + np.linalg.norm(x))
            fd = np.empty((basis.dim_out, dim))
            for j in range(dim):
                e = np.zeros(dim)
                e[j] = step
                fd[:, j] = (basis.eval(x + e) - basis.eval(x - e)) / (2 * step)
            np.testing.assert_allclose(jac, fd, rtol=1e-5, atol=1e-7)

    def test_block_evaluation_matches_pointwise(self):
        for factory in (cd.neg_identity_basis, cd.identity_basis, cd.neg_cubic_basis):
            basis = factory(2)
            x = np.random.default_rng(5).standard_normal((7, 2))
            block = basis.eval_block(x)
            for k in range(7):
                np.testing.assert_allclose(block[k], basis.eval(x[k]))

    def test_jvp_block_matches_jacobian(self):
        basis = cd.neg_cubic_basis(1)
        rng = np.random.default_rng(6)
        x = rng.standard_normal((5, 1))
        w = rng.standard_normal((5, 1))
        jvp = basis.jac_vec_block(x, w)
        for k in range(5):
            np.testing.assert_allclose(jvp[k], basis.jacobian(x[k]) @ w[k])

    def test_unknown_basis_name(self):
        with pytest.raises(ValueError, match="unknown basis"):
            cd.make_basis("quartic", 1)


class TestModelValidation:
    def test_unstable_noise_matrix(self):
        with pytest.raises(UnstableMatrixError):
            cd.ColoredModel(theta=[[1.0]], basis=cd.neg_identity_basis(1),
                            diffusion=[[1.0]], A=[[-0.5]], sigma=[[1.0]],
                            epsilon=0.1)

    def test_degenerate_sigma(self):
        with pytest.raises(ValueError, match="positive definite"):
            cd.ColoredModel(theta=[[1.0]], basis=cd.neg_identity_basis(1),
                            diffusion=[[1.0]], A=[[1.0]], sigma=[[0.0]],
                            epsilon=0.1)

    def test_nonpositive_epsilon(self):
        with pytest.raises(ValueError, match="epsilon"):
            cd.ou1d_model(epsilon=0.0)

    def test_indefinite_limit_diffusion(self):
        with pytest.raises(ValueError, match="positive semi-definite"):
            cd.LimitModel(theta=[[1.0]], basis=cd.neg_identity_basis(1),
                          dsym=[[-1.0]])


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(0.2, 5.0), gamma=st.floats(0.0, 5.0),
       eta=st.floats(0.1, 4.0))
def test_rotational_noise_covariance_closed_form(alpha, gamma, eta):
    # A = alpha I + gamma J, sigma = sqrt(eta) I  =>  S_inf = eta/(2 alpha) I
    a = alpha * np.eye(2) + gamma * ROTATION_2D
    s = cd.stationary_covariance(a, np.sqrt(eta) * np.eye(2))
    np.testing.assert_allclose(s, eta / (2 * alpha) * np.eye(2),
                               rtol=1e-9, atol=1e-12)
