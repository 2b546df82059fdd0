import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import colored_drift as cd
from colored_drift.errors import SimulationError
from colored_drift.experiments import ReplicationTask, run_replications
from colored_drift.simulate import ColoredSimulator


class TestLearningRate:
    def test_validation(self):
        with pytest.raises(ValueError):
            cd.LearningRate(0.0, 1.0)
        with pytest.raises(ValueError):
            cd.LearningRate(1.0, -1.0)

    @settings(max_examples=50, deadline=None)
    @given(a=st.floats(0.01, 100), b=st.floats(0.01, 100),
           t1=st.floats(0, 1e4), dt=st.floats(0.01, 1e3))
    def test_strictly_decreasing(self, a, b, t1, dt):
        lr = cd.LearningRate(a, b)
        assert lr(t1 + dt) < lr(t1)

    def test_normality_threshold(self):
        assert cd.LearningRate(4.0, 1.0).clt_ready(1.0)
        assert not cd.LearningRate(2.0, 1.0).clt_ready(1.0)


class TestUpdateRule:
    def test_zero_data_keeps_initial_value(self):
        x = np.zeros((101, 1))
        ep = cd.sgdct_run(x, None, cd.neg_identity_basis(1),
                          cd.LearningRate(1.0, 0.1), theta0=[[0.7]], h=0.01)
        assert np.all(ep.values == 0.7)

    def test_vanishing_rate_freezes_the_path(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((201, 1)).cumsum(axis=0)
        ep = cd.sgdct_run(x, None, cd.neg_identity_basis(1),
                          cd.LearningRate(1e-14, 0.1), theta0=[[0.3]], h=0.01)
        np.testing.assert_allclose(ep.values, 0.3, atol=1e-9)

    def test_single_step_formula_and_innovation_factor(self):
        # one crafted step with distinct X and Z data; the innovation must use
        # f(X) while the outer factor uses f(Z)
        h = 0.1
        lr = cd.LearningRate(2.0, 1.0)
        x = np.array([[1.5], [2.5]])
        z = np.array([[0.5], [0.5]])
        theta0 = 0.4
        basis = cd.neg_identity_basis(1)
        ep = cd.sgdct_run(x, z, basis, lr, theta0=[[theta0]],
                          checkpoints=[h], h=h)
        dx = 1.0
        expected = theta0 + lr(0.0) * (dx - theta0 * (-1.5) * h) * (-0.5)
        assert ep.values[-1, 0, 0] == pytest.approx(expected, rel=1e-15)
        # swapping the roles changes the result: the factors are not symmetric
        wrong = theta0 + lr(0.0) * (dx - theta0 * (-0.5) * h) * (-1.5)
        assert abs(expected - wrong) > 1e-3

    def test_nonfinite_abort_reports_step(self):
        # a huge constant learning step on growing data must diverge
        x = np.linspace(0.0, 1e4, 2001)[:, None]
        with pytest.raises(SimulationError) as err:
            cd.sgdct_run(x, None, cd.identity_basis(1),
                         cd.LearningRate(1e6, 1e-9), h=1.0)
        assert err.value.step is not None

    def test_large_initial_factor_warns(self):
        x = np.full((101, 1), 5.0)
        with pytest.warns(RuntimeWarning, match="unstable"):
            cd.sgdct_run(x, None, cd.neg_identity_basis(1),
                         cd.LearningRate(100.0, 0.01), h=0.1)


class TestClosedForm:
    def _coupled_data(self, h_fine, t_end, seed):
        m = cd.ou1d_model(epsilon=0.1)
        n_fine = int(round(t_end / h_fine))
        rng = np.random.default_rng(seed)
        xi = rng.standard_normal((n_fine, 1))
        return m, xi

    def test_matches_numerical_path_first_order(self):
        # refine on one shared noise stream: the gap halves when h halves
        m, xi_fine = self._coupled_data(5e-4, 100.0, 77)
        lr = cd.LearningRate(1.0, 0.1)
        cps = np.linspace(5.0, 100.0, 20)
        gaps = {}
        for h, xi in ((1e-3, (xi_fine[0::2] + xi_fine[1::2]) / np.sqrt(2)),
                      (5e-4, xi_fine)):
            grid = cd.TimeGrid.from_horizon(100.0, h)
            path = ColoredSimulator(m, grid, seed=0, increments=xi).run()
            path = cd.filter_path(path, cd.FilterConfig(1.0))
            num = cd.sgdct_run(path.X, path.Z, m.basis, lr,
                               checkpoints=cps, h=h)
            closed = cd.sgdct_closed_form_1d(
                path.X, path.Z, path.Y, theta=1.0, g=1.0, epsilon=0.1,
                lr=lr, checkpoints=cps, h=h)
            gaps[h] = np.abs(num.values - closed.values).max()
        assert gaps[1e-3] <= 1e-4
        assert 1.4 <= gaps[1e-3] / gaps[5e-4] <= 2.6

    def test_plain_variant_matches(self):
        m = cd.ou1d_model(epsilon=0.1)
        grid = cd.TimeGrid.from_horizon(50.0, 1e-3)
        path = cd.simulate_colored(m, grid, seed=5)
        lr = cd.LearningRate(1.0, 0.1)
        num = cd.sgdct_run(path.X, None, m.basis, lr,
                           checkpoints=[50.0], h=grid.h)
        closed = cd.sgdct_closed_form_1d(
            path.X, None, path.Y, theta=1.0, g=1.0, epsilon=0.1, lr=lr,
            checkpoints=[50.0], h=grid.h, variant="colored")
        assert abs(num.values[-1, 0, 0] - closed.values[-1, 0, 0]) <= 1e-4

    def test_time_zero_returns_initial_value(self):
        m = cd.ou1d_model(epsilon=0.1)
        grid = cd.TimeGrid.from_horizon(1.0, 1e-3)
        path = cd.simulate_colored(m, grid, seed=1)
        path = cd.filter_path(path, cd.FilterConfig(1.0))
        closed = cd.sgdct_closed_form_1d(
            path.X, path.Z, path.Y, theta=1.0, g=1.0, epsilon=0.1,
            lr=cd.LearningRate(1.0, 0.1), theta0=0.25,
            checkpoints=[0.0, 1.0], h=grid.h)
        assert closed.values[0, 0, 0] == 0.25

    def test_missing_noise_channel_rejected(self):
        x = np.zeros((11, 1))
        with pytest.raises(ValueError, match="Y channel"):
            cd.sgdct_closed_form_1d(x, x, None, theta=1.0, g=1.0,
                                    epsilon=0.1, lr=cd.LearningRate(1.0, 1.0),
                                    h=0.1)


class TestLevyVariant:
    def test_zero_data_freezes(self):
        x = np.zeros((51, 2))
        ep = cd.sgdct_levy(x, x, cd.LearningRate(1.0, 0.1),
                           l0=[[0.3, 0.0], [0.0, 0.3]], h=0.01)
        assert np.all(ep.values[-1] == np.array([[0.3, 0.0], [0.0, 0.3]]))

    def test_deterministic_spiral_converges(self):
        # slow decay with strong rotation keeps all directions excited long
        # enough for the gradient flow to identify the full matrix
        levy = cd.LevyModel(theta=0.5, alpha=0.2, gamma=1.0, kappa=1.0, beta=1.0)
        l_mat = cd.levy_limit(levy)
        h = 5e-4
        lim = cd.LevyLimitModel(l_mat, 0.0, 0.0)
        grid = cd.TimeGrid.from_horizon(80.0, h)
        path = cd.simulate_limit(lim, grid, seed=0, x0=[2.0, 0.0])
        z = cd.filter_path(path, cd.FilterConfig(0.2))
        ep = cd.sgdct_levy(z.X, z.Z, cd.LearningRate(2.0, 0.5),
                           checkpoints=[80.0], h=h)
        np.testing.assert_allclose(ep.values[-1], l_mat, atol=0.01)


class TestVarianceDecay:
    def test_spread_shrinks_between_t_and_2t(self):
        colored = cd.ou1d_model(epsilon=0.1)
        grid = cd.TimeGrid.eps_cubed(400.0, 0.1)
        task = ReplicationTask(model=colored, grid=grid,
                               variants=("sgdct-filtered",), delta=1.0,
                               lr=cd.LearningRate(1.0, 0.1),
                               checkpoints=np.array([200.0, 400.0]))
        summary = run_replications(task, 40, base_seed=0)["sgdct-filtered"]
        assert summary.std[1, 0, 0] <= 1.1 * summary.std[0, 0, 0]
