import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqreg import (
    ALL_PAIRS,
    Dataset,
    EstimatorSpec,
    L0Penalty,
    L1Penalty,
    add_l0,
    add_l1,
    add_l1_budget,
    build_cer,
    build_cqr,
    check_loss,
    expectile_loss,
    fit,
    solve_lp,
    solve_mip,
    solve_qp,
)
from cqreg.model import extract_fit, validate_fit
from tests.conftest import make_instance


class TestCheckLoss:
    def test_positive_argument(self):
        assert check_loss(2.0, 0.3) == pytest.approx(0.6)

    def test_negative_argument(self):
        assert check_loss(-2.0, 0.3) == pytest.approx(1.4)

    @pytest.mark.parametrize("tau", [0.1, 0.5, 0.9])
    def test_zero_argument(self, tau):
        assert check_loss(0.0, tau) == 0.0

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            check_loss(np.nan, 0.5)
        with pytest.raises(ValueError):
            check_loss(np.inf, 0.5)

    def test_rejects_bad_level(self):
        with pytest.raises(ValueError):
            check_loss(1.0, 0.0)
        with pytest.raises(ValueError):
            check_loss(1.0, 1.0)

    @given(
        t=st.floats(-1e6, 1e6, allow_nan=False),
        tau=st.floats(0.01, 0.99),
    )
    def test_nonnegative_and_piecewise(self, t, tau):
        value = check_loss(t, tau)
        assert value >= 0.0
        if t > 0:
            assert value == pytest.approx(tau * t)
        else:
            assert value == pytest.approx((tau - 1.0) * t)

    def test_vectorized(self):
        out = check_loss(np.array([2.0, -2.0, 0.0]), 0.3)
        assert np.allclose(out, [0.6, 1.4, 0.0])


class TestExpectileLoss:
    def test_weights(self):
        assert expectile_loss(2.0, 0.9) == pytest.approx(0.9 * 4.0)
        assert expectile_loss(-2.0, 0.9) == pytest.approx(0.1 * 4.0)


class TestDataset:
    def test_rejects_negative_inputs(self):
        with pytest.raises(ValueError):
            Dataset(np.array([[1.0], [-0.5]]), np.array([1.0, 2.0]))

    def test_rejects_single_observation(self):
        with pytest.raises(ValueError):
            Dataset(np.array([[1.0]]), np.array([1.0]))

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            Dataset(np.array([[1.0], [np.nan]]), np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            Dataset(np.array([[1.0], [2.0]]), np.array([1.0, np.inf]))

    def test_restrict_keeps_names(self):
        ds = Dataset(
            np.array([[1.0, 2.0], [3.0, 4.0]]),
            np.array([1.0, 2.0]),
            variable_names=("a", "b"),
        )
        sub = ds.restrict([1])
        assert sub.variable_names == ("b",)
        assert sub.inputs.shape == (2, 1)


class TestBuilders:
    def test_cqr_all_pairs_counts(self):
        ds = make_instance(3, 1)
        problem = build_cqr(ds, 0.5, ALL_PAIRS)
        assert problem.n_vars == 12  # yhat(3) + beta(3) + eps+(3) + eps-(3)
        assert int((problem.sense == "E").sum()) == 3
        assert int((problem.sense == "L").sum()) == 6  # n(n-1)

    def test_cqr_empty_constraint_set(self):
        ds = make_instance(3, 1)
        problem = build_cqr(ds, 0.5, ())
        assert problem.n_vars == 12
        assert int((problem.sense == "L").sum()) == 0

    def test_cqr_full_pair_count_large(self):
        ds = make_instance(100, 6)
        problem = build_cqr(ds, 0.5, ALL_PAIRS)
        assert int((problem.sense == "L").sum()) == 9900

    def test_cqr_objective_weights(self):
        ds = make_instance(4, 2)
        problem = build_cqr(ds, 0.3, ALL_PAIRS)
        lay = problem.layout
        assert np.allclose(problem.obj_linear[lay.eps_plus()], 0.3)
        assert np.allclose(problem.obj_linear[lay.eps_minus()], 0.7)
        assert problem.obj_quad is None

    def test_cer_objective_weights(self):
        ds = make_instance(4, 2)
        problem = build_cer(ds, 0.9, ALL_PAIRS)
        lay = problem.layout
        assert np.allclose(problem.obj_quad[lay.eps_plus()], 0.9)
        assert np.allclose(problem.obj_quad[lay.eps_minus()], 0.1)

    def test_cer_collinear_zero_loss(self):
        # Three collinear 1-D points with y = x: the line is feasible, so the
        # optimum is exactly zero.
        ds = Dataset(np.array([[1.0], [2.0], [3.0]]), np.array([1.0, 2.0, 3.0]))
        sol = solve_qp(build_cer(ds, 0.5, ALL_PAIRS))
        assert sol.objective == pytest.approx(0.0, abs=1e-8)

    def test_rejects_bad_levels(self):
        ds = make_instance(3, 1)
        for bad in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(ValueError):
                build_cqr(ds, bad, ALL_PAIRS)
            with pytest.raises(ValueError):
                build_cer(ds, bad, ALL_PAIRS)

    def test_pair_validation(self):
        ds = make_instance(3, 1)
        with pytest.raises(ValueError):
            build_cqr(ds, 0.5, [(0, 0)])
        with pytest.raises(ValueError):
            build_cqr(ds, 0.5, [(0, 5)])


class TestL1:
    def test_zero_lambda_is_identity(self):
        ds = make_instance(5, 2)
        base = build_cqr(ds, 0.5, ALL_PAIRS)
        bumped = add_l1(base, L1Penalty(0.0))
        assert np.array_equal(base.obj_linear, bumped.obj_linear)

    def test_coefficient_bump(self):
        ds = make_instance(5, 2)
        base = build_cqr(ds, 0.5, ALL_PAIRS)
        bumped = add_l1(base, L1Penalty(0.95))
        lay = base.layout
        diff = bumped.obj_linear - base.obj_linear
        assert np.allclose(diff[lay.beta_all()], 0.95)
        assert np.allclose(np.delete(diff, np.arange(*lay.beta_all().indices(base.n_vars))), 0.0)

    def test_huge_lambda_kills_slopes(self, noiseless_linear):
        result = fit(
            noiseless_linear,
            EstimatorSpec("quantile", 0.5, penalty=L1Penalty(1e6)),
        )
        assert result.beta.max() <= 1e-9
        # Constant fit: fitted values do not vary with x.
        assert np.ptp(result.y_hat) <= 1e-6

    def test_rejects_negative_lambda(self):
        with pytest.raises(ValueError):
            L1Penalty(-0.1)


class TestL0:
    def test_row_and_variable_counts(self):
        ds = make_instance(5, 3)
        base = build_cqr(ds, 0.5, ALL_PAIRS)
        mip = add_l0(base, L0Penalty(2, 10.0))
        assert mip.n_vars == base.n_vars + 3
        assert mip.n_rows == base.n_rows + 5 * 3 + 1
        assert int(mip.integer.sum()) == 3
        # Coupling rows have exactly two nonzeros.
        coupling = mip.a.tocsr()[base.n_rows : base.n_rows + 15]
        assert (np.diff(coupling.indptr) == 2).all()

    def test_k_equals_d_matches_unpenalized(self, small_noisy):
        spec = EstimatorSpec("quantile", 0.5)
        plain = fit(small_noisy, spec)
        m = 10.0 * max(plain.beta.max(), 1e-6)
        capped = fit(
            small_noisy,
            EstimatorSpec("quantile", 0.5, penalty=L0Penalty(small_noisy.d, m)),
        )
        assert capped.objective == pytest.approx(plain.objective, abs=1e-6)

    def test_tiny_m_forces_constant_fit(self, small_noisy):
        result = fit(
            small_noisy,
            EstimatorSpec("quantile", 0.5, penalty=L0Penalty(small_noisy.d, 1e-9)),
        )
        assert result.beta.max() <= 1e-9

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            L0Penalty(0, 1.0)
        with pytest.raises(ValueError):
            L0Penalty(2, 0.0)
        ds = make_instance(4, 2)
        with pytest.raises(ValueError):
            add_l0(build_cqr(ds, 0.5, ALL_PAIRS), L0Penalty(3, 1.0))

    def test_objective_monotone_in_k(self):
        ds = make_instance(10, 3, seed=3)
        spec = EstimatorSpec("quantile", 0.5)
        anchor = fit(ds, spec)
        m = 10.0 * max(anchor.beta.max(), 1e-6)
        objectives = [
            fit(ds, EstimatorSpec("quantile", 0.5, penalty=L0Penalty(k, m))).objective
            for k in (1, 2, 3)
        ]
        assert objectives[0] >= objectives[1] - 1e-9
        assert objectives[1] >= objectives[2] - 1e-9


class TestRelaxation:
    def test_budget_rows_lower_bound_the_cardinality_optimum(self):
        for seed in range(4):
            ds = make_instance(8, 3, seed=seed)
            anchor = fit(ds, EstimatorSpec("quantile", 0.5))
            m = 2.0 * max(anchor.beta.max(), 1e-6)
            pen = L0Penalty(2, m)
            hard = solve_mip(add_l0(build_cqr(ds, 0.5, ALL_PAIRS), pen))
            relaxed = solve_lp(add_l1_budget(build_cqr(ds, 0.5, ALL_PAIRS), pen))
            assert relaxed.objective <= hard.objective + 1e-8


class TestFitResultInvariants:
    @pytest.mark.parametrize("family", ["quantile", "expectile"])
    def test_feasibility_round_trip(self, family, small_noisy):
        result = fit(small_noisy, EstimatorSpec(family, 0.7))
        assert validate_fit(result, small_noisy) == []

    def test_complementary_residuals(self, small_noisy):
        result = fit(small_noisy, EstimatorSpec("quantile", 0.3))
        assert np.minimum(result.eps_plus, result.eps_minus).max() <= 1e-7

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_random_instances_round_trip(self, seed):
        ds = make_instance(8, 2, seed=seed)
        result = fit(ds, EstimatorSpec("quantile", 0.5))
        assert validate_fit(result, ds) == []

    def test_extract_requires_layout(self, small_noisy):
        problem = build_cqr(small_noisy, 0.5, ALL_PAIRS)
        sol = solve_lp(problem)
        result = extract_fit(problem, small_noisy, sol)
        assert result.z is None
        assert result.y_hat.shape == (small_noisy.n,)
