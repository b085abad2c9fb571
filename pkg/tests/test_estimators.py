import numpy as np
import pytest

from cqreg import (
    Dataset,
    EstimatorSpec,
    L0Penalty,
    L1Penalty,
    anchor_big_m,
    expectile_to_quantile,
    fit,
    l0_oracle,
    returns_to_scale,
    support,
)
from cqreg.model import FitMeta, FitResult
from cqreg.solver import BnBConfig
from tests.conftest import make_instance


def fake_fit(beta, alpha=None, eps_minus=None, z=None):
    n, d = beta.shape
    return FitResult(
        alpha=np.zeros(n) if alpha is None else np.asarray(alpha, dtype=float),
        beta=np.asarray(beta, dtype=float),
        eps_plus=np.zeros(n),
        eps_minus=np.zeros(n) if eps_minus is None else np.asarray(eps_minus, dtype=float),
        y_hat=np.zeros(n),
        z=None if z is None else np.asarray(z, dtype=int),
        objective=0.0,
        meta=FitMeta(status="optimal"),
    )


class TestSpecValidation:
    def test_rejects_unknown_family(self):
        with pytest.raises(ValueError):
            EstimatorSpec("median", 0.5)

    def test_rejects_bad_level(self):
        with pytest.raises(ValueError):
            EstimatorSpec("quantile", 1.2)

    def test_rejects_bad_solve_mode(self):
        with pytest.raises(ValueError):
            EstimatorSpec("quantile", 0.5, solve="warm")


class TestFit:
    def test_noiseless_additive_zero_objective(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(1.0, 10.0, (20, 2))
        ds = Dataset(X, X.sum(axis=1))
        result = fit(ds, EstimatorSpec("quantile", 0.5))
        assert result.objective <= 1e-6
        err = np.sum((result.y_hat - ds.output) ** 2) / np.sum(ds.output**2)
        assert err <= 1e-6

    def test_l0_with_k_equal_d_matches_unpenalized(self, small_noisy):
        plain = fit(small_noisy, EstimatorSpec("quantile", 0.5))
        m = anchor_big_m(small_noisy, EstimatorSpec("quantile", 0.5), 10.0)
        capped = fit(
            small_noisy,
            EstimatorSpec("quantile", 0.5, penalty=L0Penalty(small_noisy.d, m)),
        )
        assert capped.objective == pytest.approx(plain.objective, abs=1e-6)

    def test_k_exceeding_d_rejected(self, small_noisy):
        with pytest.raises(ValueError):
            fit(
                small_noisy,
                EstimatorSpec("quantile", 0.5, penalty=L0Penalty(small_noisy.d + 1, 1.0)),
            )

    def test_meta_populated(self, small_noisy):
        result = fit(small_noisy, EstimatorSpec("quantile", 0.5))
        assert result.meta.status == "optimal"
        assert result.meta.constraints == small_noisy.n * (small_noisy.n - 1)
        assert result.meta.wall_time >= 0.0


class TestSupport:
    def test_all_zero_beta_is_empty(self):
        assert support(fake_fit(np.zeros((4, 3)))) == frozenset()

    def test_l0_cardinality_bound(self):
        ds = make_instance(10, 3, seed=4)
        m = anchor_big_m(ds, EstimatorSpec("quantile", 0.5), 10.0)
        result = fit(ds, EstimatorSpec("quantile", 0.5, penalty=L0Penalty(1, m)))
        assert len(support(result)) <= 1

    def test_threshold_gate(self):
        beta = np.zeros((4, 3))
        beta[:, 1] = 1e-9
        assert support(fake_fit(beta), threshold=1e-6) == frozenset()
        beta[:, 1] = 1e-3
        assert support(fake_fit(beta), threshold=1e-6) == {1}

    def test_selector_gates_support(self):
        beta = np.full((2, 2), 0.5)
        assert support(fake_fit(beta, z=[1, 0])) == {0}


class TestL0Oracle:
    def test_full_subset_matches_unrestricted(self, small_noisy):
        spec = EstimatorSpec("quantile", 0.5)
        obj, _ = l0_oracle(small_noisy, spec, small_noisy.d)
        assert obj == pytest.approx(fit(small_noisy, spec).objective, abs=1e-9)

    def test_k1_is_min_of_single_columns(self):
        ds = make_instance(10, 3, seed=5)
        spec = EstimatorSpec("quantile", 0.5)
        obj, chosen = l0_oracle(ds, spec, 1)
        singles = [fit(ds.restrict([j]), spec).objective for j in range(3)]
        assert obj == pytest.approx(min(singles), abs=1e-9)
        assert chosen == {int(np.argmin(singles))}

    def test_cross_check_with_mip(self):
        ds = make_instance(12, 4, seed=6)
        spec = EstimatorSpec("quantile", 0.5)
        m = anchor_big_m(ds, spec, 10.0)
        oracle_obj, _ = l0_oracle(ds, spec, 2)
        mip = fit(ds, EstimatorSpec("quantile", 0.5, penalty=L0Penalty(2, m)))
        assert abs(mip.objective - oracle_obj) <= 1e-6

    def test_enumeration_guard(self):
        # C(30, 15) is far beyond the 1e4 cap; the guard fires before any solve.
        ds = make_instance(5, 30)
        spec = EstimatorSpec("quantile", 0.5)
        with pytest.raises(ValueError):
            l0_oracle(ds, spec, 15)

    def test_rejects_penalized_spec(self, small_noisy):
        with pytest.raises(ValueError):
            l0_oracle(small_noisy, EstimatorSpec("quantile", 0.5, penalty=L1Penalty(1.0)), 1)


class TestConversions:
    def test_all_positive_side_quantile_zero(self):
        assert expectile_to_quantile(fake_fit(np.zeros((10, 1)))) == 0.0

    def test_half_negative(self):
        eps_minus = np.array([1.0] * 5 + [0.0] * 5)
        assert expectile_to_quantile(fake_fit(np.zeros((10, 1)), eps_minus=eps_minus)) == 0.5

    def test_returns_to_scale_labels(self):
        labels = returns_to_scale(fake_fit(np.zeros((3, 1)), alpha=[-10.249, 0.0, 0.5]))
        assert labels == ["increasing", "constant", "decreasing"]


class TestLambdaPath:
    def test_fidelity_up_shrinkage_down(self):
        ds = make_instance(25, 3, seed=7)
        tau = 0.5
        fidelity = []
        size = []
        for lam in np.linspace(0.0, 2.0, 8):
            result = fit(ds, EstimatorSpec("quantile", tau, penalty=L1Penalty(lam)))
            fidelity.append(tau * result.eps_plus.sum() + (1 - tau) * result.eps_minus.sum())
            size.append(result.beta.sum())
        assert (np.diff(fidelity) >= -1e-8).all()
        assert (np.diff(size) <= 1e-8).all()


class TestExpectileUniqueness:
    def test_objective_agrees_across_solves(self, small_noisy):
        spec = EstimatorSpec("expectile", 0.8)
        a = fit(small_noisy, spec)
        b = fit(small_noisy, spec)
        assert abs(a.objective - b.objective) <= 1e-8
        assert np.max(np.abs(a.y_hat - b.y_hat)) <= 1e-4


class TestAnchorBigM:
    def test_positive_even_on_flat_data(self):
        ds = Dataset(np.array([[1.0], [2.0], [3.0]]), np.array([5.0, 5.0, 5.0]))
        m = anchor_big_m(ds, EstimatorSpec("quantile", 0.5), 2.0)
        assert m > 0

    def test_scales_with_multiplier(self, small_noisy):
        spec = EstimatorSpec("quantile", 0.5)
        assert anchor_big_m(small_noisy, spec, 4.0) == pytest.approx(
            2.0 * anchor_big_m(small_noisy, spec, 2.0)
        )
