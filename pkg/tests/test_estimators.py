import numpy as np
import pytest

import colored_drift as cd
from colored_drift.errors import GramSingularError
from colored_drift.experiments import ReplicationTask, run_replications


def unit_limit_model():
    return cd.LimitModel(theta=[[1.0]], basis=cd.neg_identity_basis(1),
                         dsym=[[0.5]])


class TestExactRecovery:
    def test_noiseless_linear_dynamics(self):
        # X_{k+1} = (1 - theta h) X_k makes the ratio estimator exact
        h = 1e-3
        x = (1.0 - h) ** np.arange(1001) * 1.0
        est = cd.mle(x, cd.neg_identity_basis(1), h=h)
        assert est.value[0, 0] == pytest.approx(1.0, abs=1e-10)
        assert est.condition_number < 1e12

    def test_deterministic_spiral_recovers_limit_matrix(self):
        levy = cd.LevyModel(1.0, 1.0, 1.0, 1.0, 1.0)
        l_mat = cd.levy_limit(levy)
        h = 1e-3
        lim = cd.LevyLimitModel(l_mat, 0.0, 0.0)  # noise switched off
        grid = cd.TimeGrid.from_horizon(20.0, h)
        path = cd.simulate_limit(lim, grid, seed=0, x0=[2.0, 1.0])
        z = cd.filter_path(path, cd.FilterConfig(0.5))
        est = cd.mle_levy(z.X, z.Z, h=h)
        np.testing.assert_allclose(est.value, l_mat, atol=1e-8)

    def test_white_noise_data_is_unbiased(self):
        m = unit_limit_model()
        grid = cd.TimeGrid.from_horizon(1000.0, 0.01)
        finals = []
        for seed in range(100):
            path = cd.simulate_limit(m, grid, seed=seed)
            finals.append(cd.mle(path.X, m.basis, h=grid.h).value[0, 0])
        assert abs(np.mean(finals) - 1.0) <= 0.05

    def test_colored_data_estimate_collapses(self):
        colored = cd.ou1d_model(epsilon=0.1)
        grid = cd.TimeGrid.eps_cubed(1000.0, 0.1)
        finals = []
        for seed in range(5):
            path = cd.simulate_colored(colored, grid, seed=seed)
            finals.append(cd.mle(path.X, colored.basis, h=grid.h).value[0, 0])
        assert abs(np.mean(finals)) <= 0.1


class TestFiltered:
    def test_colored_data_filtered_estimate_recovers_drift(self):
        colored = cd.ou1d_model(epsilon=0.1)
        grid = cd.TimeGrid.eps_cubed(1000.0, 0.1)
        task = ReplicationTask(model=colored, grid=grid,
                               variants=("mle-filtered",), delta=1.0,
                               checkpoints=np.array([1000.0]))
        summary = run_replications(task, 100, base_seed=0)["mle-filtered"]
        assert abs(summary.mean_final[0, 0] - 1.0) <= 0.15

    def test_vanishing_width_approaches_plain_estimator(self):
        m = unit_limit_model()
        grid = cd.TimeGrid.from_horizon(200.0, 1e-3)
        path = cd.simulate_limit(m, grid, seed=3)
        plain = cd.mle(path.X, m.basis, h=grid.h).value[0, 0]
        filt = cd.filter_path(path, cd.FilterConfig(1e-4))
        close = cd.mle_filtered(filt.X, filt.Z, m.basis, h=grid.h).value[0, 0]
        assert abs(close - plain) <= 0.05

    def test_grid_mismatch_rejected(self):
        x = np.zeros((11, 1))
        z = np.zeros((10, 1))
        with pytest.raises(ValueError, match="grid"):
            cd.mle_filtered(x, z, cd.neg_identity_basis(1), h=0.1)

    def test_levy_estimator_needs_planar_data(self):
        x = np.zeros((11, 1))
        with pytest.raises(ValueError, match="d = 2"):
            cd.mle_levy(x, x, h=0.1)


class TestSingularity:
    def test_zero_data_reports_singular_gram(self):
        x = np.zeros((101, 1))
        with pytest.raises(GramSingularError, match="T="):
            cd.mle(x, cd.neg_identity_basis(1), h=0.01)

    def test_estimate_path_marks_unavailable_entries(self):
        # data pinned at zero until half time, informative afterwards
        h = 0.01
        m = unit_limit_model()
        grid = cd.TimeGrid.from_horizon(10.0, h)
        path = cd.simulate_limit(m, grid, seed=1)
        x = path.X.copy()
        x[:500] = 0.0
        ep = cd.estimate_path("mle", x, basis=m.basis,
                              checkpoints=[1.0, 9.0], h=h)
        avail = ep.available()
        assert not avail[0] and avail[1]
        assert np.isinf(ep.cond[0])


class TestRunningEstimates:
    def test_final_checkpoint_equals_batch_bit_for_bit(self):
        colored = cd.ou1d_model(epsilon=0.1)
        grid = cd.TimeGrid.eps_cubed(50.0, 0.1)
        path = cd.simulate_colored(colored, grid, seed=9)
        path = cd.filter_path(path, cd.FilterConfig(1.0))
        batch = cd.mle_filtered(path.X, path.Z, colored.basis, h=grid.h)
        running = cd.estimate_path("mle-filtered", path.X, z=path.Z,
                                   basis=colored.basis,
                                   checkpoints=[10.0, 30.0, 50.0], h=grid.h)
        assert np.array_equal(running.values[-1], batch.value)
        assert running.cond[-1] == batch.condition_number

    def test_checkpoints_monotone(self):
        path = np.cumsum(np.random.default_rng(0).standard_normal((101, 1)),
                         axis=0)
        ep = cd.estimate_path("mle", path, basis=cd.neg_identity_basis(1),
                              checkpoints=[0.2, 0.5, 1.0], h=0.01)
        assert np.all(np.diff(ep.times) > 0)

    def test_off_grid_checkpoint_rejected(self):
        path = np.zeros((101, 1))
        with pytest.raises(ValueError, match="grid"):
            cd.estimate_path("mle", path, basis=cd.neg_identity_basis(1),
                             checkpoints=[0.505], h=0.01)

    def test_running_spread_shrinks_with_time(self):
        colored = cd.ou1d_model(epsilon=0.1)
        grid = cd.TimeGrid.eps_cubed(1000.0, 0.1)
        task = ReplicationTask(model=colored, grid=grid,
                               variants=("mle-filtered",), delta=1.0,
                               checkpoints=np.array([100.0, 1000.0]))
        summary = run_replications(task, 100, base_seed=50)["mle-filtered"]
        early = summary.std[0, 0, 0]
        late = summary.std[1, 0, 0]
        assert late < early


class TestDataAgnosticism:
    def test_same_operation_on_both_data_sources(self):
        # the estimator has no knowledge of the generating mechanism: it
        # converges to theta on limit data and to zero on colored data
        colored = cd.ou1d_model(epsilon=0.1)
        limit = cd.additive_limit(colored)
        grid_l = cd.TimeGrid.from_horizon(1000.0, 0.01)
        vals_limit = [cd.mle(cd.simulate_limit(limit, grid_l, seed=s).X,
                             limit.basis, h=grid_l.h).value[0, 0]
                      for s in range(20)]
        grid_c = cd.TimeGrid.eps_cubed(1000.0, 0.1)
        vals_colored = [cd.mle(cd.simulate_colored(colored, grid_c, seed=s).X,
                               colored.basis, h=grid_c.h).value[0, 0]
                        for s in range(5)]
        assert abs(np.mean(vals_limit) - 1.0) <= 0.1
        assert abs(np.mean(vals_colored)) <= 0.1


class TestCsvExport:
    def test_estimate_path_schema(self, tmp_path):
        ep = cd.EstimatePath(times=[1.0, 2.0],
                             values=np.arange(8.0).reshape(2, 2, 2),
                             cond=[3.0, 4.0])
        dest = tmp_path / "estimates.csv"
        ep.to_csv(dest)
        header = dest.read_text().splitlines()[0]
        assert header == "t,theta_11,theta_12,theta_21,theta_22,cond"
