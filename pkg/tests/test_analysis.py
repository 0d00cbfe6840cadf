import numpy as np
import pytest
from numpy.testing import assert_allclose

from spurious_lens import (
    DesignMatrix,
    GroundTruth,
    LabeledData,
    RobustSpec,
    TestDistribution,
    fit_core,
    fit_full,
    fit_multi,
    fit_rst,
    UnlabeledData,
    groupwise_report,
    groupwise_spurious_error,
    groupwise_spurious_fit,
    min_norm_solve,
    population_error,
    projection,
    removal_verdict,
    robust_error,
)
from spurious_lens.exceptions import (
    DimensionMismatchError,
    NonOrthogonalGroupsError,
    NonPositiveGammaError,
    SingularSchurComplementError,
)


def table2_setup():
    truth = GroundTruth(np.array([2.0, 2.0, 2.0]), (np.array([1.0, 2.0, -2.0]),))
    data = LabeledData.from_truth(DesignMatrix(np.array([[1.0, 0.0, 0.0]])), truth)
    return truth, data, projection(data.Z)


def random_verdict_instance(rng, d_max=12):
    d = int(rng.integers(3, d_max + 1))
    n = int(rng.integers(1, d))
    z = rng.standard_normal((n, d))
    truth = GroundTruth(rng.standard_normal(d), (rng.standard_normal(d),))
    a = rng.standard_normal((d, d))
    dist = TestDistribution(sigma=a @ a.T, label="g")
    return truth, projection(DesignMatrix(z)), dist


class TestPopulationError:
    def test_table2_unit_variance_on_second_feature(self):
        truth, data, pi = table2_setup()
        dist = TestDistribution(np.diag([0.0, 1.0, 0.0]))
        assert population_error(fit_core(data), truth, dist, pi) == pytest.approx(4.0)
        assert population_error(fit_full(data), truth, dist, pi) == pytest.approx(0.0, abs=1e-12)

    def test_table2_unit_variance_on_third_feature(self):
        truth, data, pi = table2_setup()
        dist = TestDistribution(np.diag([0.0, 0.0, 1.0]))
        assert population_error(fit_core(data), truth, dist, pi) == pytest.approx(4.0)
        assert population_error(fit_full(data), truth, dist, pi) == pytest.approx(16.0)

    def test_degenerate_distribution(self):
        truth, data, pi = table2_setup()
        dist = TestDistribution(np.zeros((3, 3)))
        for model in (fit_core(data), fit_full(data)):
            assert population_error(model, truth, dist, pi) == pytest.approx(0.0, abs=1e-15)

    def test_nonnegative(self):
        rng = np.random.default_rng(20)
        for _ in range(50):
            truth, pi, dist = random_verdict_instance(rng)
            data = LabeledData.from_truth(
                DesignMatrix(rng.standard_normal((pi.rank, pi.dim))), truth
            )
            # reuse the drawn design's projector to stay consistent
            pi = projection(data.Z)
            for model in (fit_core(data), fit_full(data)):
                assert population_error(model, truth, dist, pi) >= -1e-10

    def test_matches_monte_carlo(self):
        rng = np.random.default_rng(21)
        d, n = 6, 3
        truth = GroundTruth(rng.standard_normal(d), (rng.standard_normal(d),))
        data = LabeledData.from_truth(DesignMatrix(rng.standard_normal((n, d))), truth)
        pi = projection(data.Z)
        a = rng.standard_normal((d, d))
        dist = TestDistribution(sigma=a @ a.T)
        chol = np.linalg.cholesky(dist.sigma + 1e-12 * np.eye(d))
        zs = rng.standard_normal((100_000, d)) @ chol.T
        for model in (fit_core(data), fit_full(data)):
            closed = population_error(model, truth, dist, pi)
            s_vals = zs @ truth.beta_stars[0]
            preds = zs @ model.theta_hat
            if model.w_hat.size:
                preds = preds + model.w_hat[0] * s_vals
            losses = (zs @ truth.theta_star - preds) ** 2
            mc, se = losses.mean(), losses.std(ddof=1) / np.sqrt(losses.size)
            assert abs(closed - mc) <= 3 * se

    def test_rst_error_via_implicit_weights(self):
        rng = np.random.default_rng(22)
        d, n, m = 5, 2, 7
        truth = GroundTruth(rng.standard_normal(d), (rng.standard_normal(d),))
        data = LabeledData.from_truth(DesignMatrix(rng.standard_normal((n, d))), truth)
        full = fit_full(data)
        zu = rng.standard_normal((m, d))
        rst = fit_rst(data, UnlabeledData(Zu=zu, Su=zu @ truth.beta_stars[0]), full)
        pi = projection(data.Z)
        a = rng.standard_normal((d, d))
        dist = TestDistribution(sigma=a @ a.T)
        e = rst.theta_hat
        expected = (truth.theta_star - e) @ dist.sigma @ (truth.theta_star - e)
        assert population_error(rst, truth, dist, pi) == pytest.approx(expected, rel=1e-12)


class TestRemovalVerdict:
    def test_table2_second_feature_full_wins(self):
        truth, _, pi = table2_setup()
        v = removal_verdict(truth, pi, TestDistribution(np.diag([0.0, 1.0, 0.0])))
        assert v.full_better and v.sign_match and v.magnitude_holds and not v.tie
        assert v.lhs_seen_corr == pytest.approx(2.0)
        assert v.rhs_unseen_corr == pytest.approx(4.0)
        assert v.w_hat == pytest.approx(1.0)

    def test_table2_third_feature_sign_mismatch(self):
        truth, _, pi = table2_setup()
        v = removal_verdict(truth, pi, TestDistribution(np.diag([0.0, 0.0, 1.0])))
        assert not v.full_better and not v.sign_match
        assert v.rhs_unseen_corr == pytest.approx(-4.0)

    def test_collinear_never_leaves_core_strictly_ahead(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            d = int(rng.integers(3, 10))
            n = int(rng.integers(1, d))
            theta = rng.standard_normal(d)
            truth = GroundTruth(theta, (3.0 * theta,))
            pi = projection(DesignMatrix(rng.standard_normal((n, d))))
            a = rng.standard_normal((d, d))
            v = removal_verdict(truth, pi, TestDistribution(a @ a.T))
            assert v.full_better or v.tie or v.error_full <= v.error_core + 1e-9

    def test_tie_when_unseen_variance_vanishes(self):
        truth, _, pi = table2_setup()
        # second moment supported on the seen direction only
        v = removal_verdict(truth, pi, TestDistribution(np.diag([1.0, 0.0, 0.0])))
        assert v.tie and not v.full_better and not v.sign_match
        assert v.error_core == pytest.approx(v.error_full, abs=1e-12)

    def test_matches_error_comparison(self):
        rng = np.random.default_rng(24)
        disagreements = 0
        for _ in range(300):
            truth, pi, dist = random_verdict_instance(rng)
            v = removal_verdict(truth, pi, dist)
            gap = v.error_core - v.error_full
            if abs(gap) > 1e-9 and v.full_better != (gap > 0):
                disagreements += 1
        assert disagreements == 0

    def test_error_difference_identity(self):
        rng = np.random.default_rng(25)
        for _ in range(100):
            truth, pi, dist = random_verdict_instance(rng)
            v = removal_verdict(truth, pi, dist)
            q = np.eye(pi.dim) - pi.matrix
            beta, theta = truth.beta_stars[0], truth.theta_star
            b = beta @ q @ dist.sigma @ q @ beta
            t = theta @ q @ dist.sigma @ q @ beta
            expected = v.w_hat**2 * b - 2 * v.w_hat * t
            scale = max(1.0, abs(v.error_core), abs(v.error_full))
            assert abs((v.error_full - v.error_core) - expected) <= 1e-9 * scale

    def test_disjoint_supports_identity_sigma_removal_never_hurts(self):
        # With disjoint supports, beta'theta = 0 forces the unseen-space
        # correlation to be minus the seen-space one under identity Sigma, so
        # the error difference w^2 B + 2(theta'P beta)^2/(1+beta'P beta) is
        # nonnegative: the core model is never strictly worse.
        rng = np.random.default_rng(26)
        for _ in range(50):
            d = int(rng.integers(4, 12))
            n = int(rng.integers(1, d))
            mask = rng.random(d) < 0.5
            if mask.all() or not mask.any():
                continue
            theta = rng.standard_normal(d) * mask
            beta = rng.standard_normal(d) * ~mask
            truth = GroundTruth(theta, (beta,))
            pi = projection(DesignMatrix(rng.standard_normal((n, d))))
            v = removal_verdict(truth, pi, TestDistribution(np.eye(d)))
            assert v.error_core <= v.error_full + 1e-10
            assert not v.full_better


class TestRobustError:
    def setup_method(self):
        self.truth, self.data, self.pi = table2_setup()
        self.dist = TestDistribution(np.eye(3) * 0.25)
        self.spec = RobustSpec(gamma=4.0, norm_kind="l2")

    def test_core_equals_standard_error_on_shared_sample(self):
        from spurious_lens.analysis import _sample_bounded_gaussian

        core = fit_core(self.data)
        r = robust_error(core, self.truth, self.dist, self.spec, samples=2000, seed=5)
        zs = _sample_bounded_gaussian(self.dist, self.spec, 2000, np.random.default_rng(5))
        plain = np.mean((zs @ self.truth.theta_star - zs @ core.theta_hat) ** 2)
        assert r == pytest.approx(plain, rel=0, abs=0)

    @pytest.mark.parametrize("gamma", [1.0, 4.0])
    def test_full_dominates_core(self, gamma):
        spec = RobustSpec(gamma=gamma, norm_kind="l2")
        core, full = fit_core(self.data), fit_full(self.data)
        r_core = robust_error(core, self.truth, self.dist, spec, samples=3000, seed=6)
        r_full = robust_error(full, self.truth, self.dist, spec, samples=3000, seed=6)
        assert r_core <= r_full + 1e-9

    def test_zero_weight_full_model_equals_standard(self):
        truth = GroundTruth(np.array([0.0, 1.0]), (np.array([1.0, 0.0]),))
        data = LabeledData.from_truth(DesignMatrix(np.eye(2)), truth)
        full = fit_full(data)
        assert full.w_hat[0] == pytest.approx(0.0, abs=1e-14)
        dist = TestDistribution(np.eye(2) * 0.1)
        spec = RobustSpec(gamma=3.0)
        r = robust_error(full, truth, dist, spec, samples=1000, seed=7)
        zs_loss = robust_error(fit_core(data), truth, dist, spec, samples=1000, seed=7)
        assert r == pytest.approx(zs_loss, abs=1e-12)

    def test_linf_norm_supported(self):
        full = fit_full(self.data)
        r = robust_error(full, self.truth, self.dist, RobustSpec(4.0, "linf"), samples=500, seed=8)
        assert np.isfinite(r) and r >= 0

    def test_bad_gamma(self):
        with pytest.raises(NonPositiveGammaError):
            RobustSpec(gamma=0.0)
        with pytest.raises(NonPositiveGammaError):
            RobustSpec(gamma=-1.0)

    def test_hopeless_truncation_fails_loudly(self):
        full = fit_full(self.data)
        wide = TestDistribution(np.eye(3) * 1e6)
        with pytest.raises(RuntimeError, match="gamma is too small"):
            robust_error(full, self.truth, wide, RobustSpec(gamma=1e-6), samples=100, seed=1)

    def test_multi_model_rejected(self):
        truth, data, _ = table2_setup()
        multi = fit_multi(data)
        with pytest.raises(ValueError):
            robust_error(multi, truth, self.dist, self.spec, samples=10)


class TestGroupwiseReport:
    def test_table2_deltas(self):
        truth, data, pi = table2_setup()
        groups = [
            TestDistribution(np.diag([0.0, 1.0, 0.0]), "z2"),
            TestDistribution(np.diag([0.0, 0.0, 1.0]), "z3"),
        ]
        table = groupwise_report([fit_core(data), fit_full(data)], truth, groups, pi)
        deltas = dict(table.deltas)
        assert deltas["z2"] == pytest.approx(4.0)
        assert deltas["z3"] == pytest.approx(-12.0)

    def test_zero_group(self):
        truth, data, pi = table2_setup()
        table = groupwise_report(
            [fit_core(data), fit_full(data)], truth, [TestDistribution(np.zeros((3, 3)), "null")], pi
        )
        assert all(abs(err) < 1e-15 for _, _, err in table.entries)

    def test_rows_match_monte_carlo(self):
        rng = np.random.default_rng(27)
        d, n = 5, 2
        truth = GroundTruth(rng.standard_normal(d), (rng.standard_normal(d),))
        data = LabeledData.from_truth(DesignMatrix(rng.standard_normal((n, d))), truth)
        pi = projection(data.Z)
        groups = []
        for i in range(20):
            a = rng.standard_normal((d, d))
            groups.append(TestDistribution(a @ a.T, f"g{i}"))
        models = [fit_core(data), fit_full(data)]
        table = groupwise_report(models, truth, groups, pi)
        by_label = {g.label: g for g in groups}
        by_kind = {m.kind: m for m in models}
        for label, kind, err in table.entries:
            g, m = by_label[label], by_kind[kind]
            chol = np.linalg.cholesky(g.sigma + 1e-12 * np.eye(d))
            zs = rng.standard_normal((40_000, d)) @ chol.T
            preds = zs @ m.theta_hat
            if m.w_hat.size:
                preds = preds + m.w_hat[0] * (zs @ truth.beta_stars[0])
            losses = (zs @ truth.theta_star - preds) ** 2
            se = losses.std(ddof=1) / np.sqrt(losses.size)
            assert abs(err - losses.mean()) <= 3 * se + 1e-12


class TestGroupwiseSpuriousFit:
    def test_two_axis_groups(self):
        z1 = DesignMatrix(np.array([[1.0, 0.0]]))
        z2 = DesignMatrix(np.array([[0.0, 1.0]]))
        out = groupwise_spurious_fit(z1, z2, np.array([2.0, 2.0]), np.array([-1.0, -1.0]))
        assert_allclose(out, [2.0, -1.0], atol=1e-12)

    def test_consistent_groups_preserve_action(self):
        rng = np.random.default_rng(28)
        d = 6
        z1 = DesignMatrix(rng.standard_normal((2, d)))
        z2 = DesignMatrix(rng.standard_normal((2, d)))
        alpha = rng.standard_normal(d)
        out = groupwise_spurious_fit(z1, z2, alpha, alpha)
        assert_allclose(z1.entries @ out, z1.entries @ alpha, atol=1e-9)
        assert_allclose(z2.entries @ out, z2.entries @ alpha, atol=1e-9)

    def test_matches_stacked_oracle_on_random_orthogonal_groups(self):
        rng = np.random.default_rng(29)
        for _ in range(20):
            d = 6
            q, _ = np.linalg.qr(rng.standard_normal((d, 4)))
            z1 = DesignMatrix(rng.standard_normal((2, 2)) @ q[:, :2].T)
            z2 = DesignMatrix(rng.standard_normal((2, 2)) @ q[:, 2:].T)
            a1, a2 = rng.standard_normal(d), rng.standard_normal(d)
            out = groupwise_spurious_fit(z1, z2, a1, a2)
            stacked = np.vstack([z1.entries, z2.entries])
            rhs = np.concatenate([z1.entries @ a1, z2.entries @ a2])
            assert_allclose(out, min_norm_solve(stacked, rhs).x, atol=1e-8)

    def test_overlapping_row_spaces_fall_back(self):
        shared = np.array([[1.0, 1.0, 0.0]])
        z1 = DesignMatrix(np.vstack([shared, [[0.0, 0.0, 1.0]]]))
        z2 = DesignMatrix(shared)
        alpha = np.array([1.0, 2.0, 3.0])
        out = groupwise_spurious_fit(z1, z2, alpha, alpha)
        stacked = np.vstack([z1.entries, z2.entries])
        rhs = np.concatenate([z1.entries @ alpha, z2.entries @ alpha])
        assert_allclose(out, min_norm_solve(stacked, rhs).x, atol=1e-8)
        with pytest.raises(SingularSchurComplementError):
            groupwise_spurious_fit(z1, z2, alpha, alpha, allow_fallback=False)


class TestGroupwiseSpuriousError:
    def worked_example(self):
        z1 = DesignMatrix(np.array([[1.0, 0.0]]))
        z2 = DesignMatrix(np.array([[0.0, 1.0]]))
        theta = np.array([1.0, 1.0])
        alpha1 = np.array([2.0, 2.0])
        alpha2 = np.array([-1.0, -1.0])
        return z1, z2, theta, alpha1, alpha2

    def test_point_from_other_group(self):
        z1, z2, theta, alpha1, alpha2 = self.worked_example()
        w = 1.0 / 6.0
        # e1 belongs to group 1's row space; as a group-2 test point its error
        # comes from the same expansion with the group roles swapped.
        err = groupwise_spurious_error(
            z2, z1, theta, alpha2, alpha1, w, TestDistribution(np.diag([1.0, 0.0]))
        )
        assert err == pytest.approx((3 * w) ** 2)
        assert err == pytest.approx(0.25)

    def test_group1_point_on_other_axis(self):
        z1, z2, theta, alpha1, alpha2 = self.worked_example()
        w = 1.0 / 6.0
        err = groupwise_spurious_error(
            z1, z2, theta, alpha1, alpha2, w, TestDistribution(np.diag([0.0, 1.0]))
        )
        assert err == pytest.approx((3 * w) ** 2)

    def test_zero_weight_reduces_to_core_error(self):
        rng = np.random.default_rng(30)
        d = 6
        q, _ = np.linalg.qr(rng.standard_normal((d, 4)))
        z1 = DesignMatrix(rng.standard_normal((2, 2)) @ q[:, :2].T)
        z2 = DesignMatrix(rng.standard_normal((2, 2)) @ q[:, 2:].T)
        theta = rng.standard_normal(d)
        a = rng.standard_normal((d, d))
        dist = TestDistribution(a @ a.T)
        err = groupwise_spurious_error(z1, z2, theta, rng.standard_normal(d), rng.standard_normal(d), 0.0, dist)
        pi = projection(DesignMatrix(np.vstack([z1.entries, z2.entries])))
        q_mat = np.eye(d) - pi.matrix
        expected = theta @ q_mat @ dist.sigma @ q_mat @ theta
        assert err == pytest.approx(expected, rel=1e-9, abs=1e-12)

    def test_matches_monte_carlo_over_group1_points(self):
        rng = np.random.default_rng(31)
        d = 6
        q, _ = np.linalg.qr(rng.standard_normal((d, 4)))
        z1 = DesignMatrix(rng.standard_normal((2, 2)) @ q[:, :2].T)
        z2 = DesignMatrix(rng.standard_normal((2, 2)) @ q[:, 2:].T)
        theta = rng.standard_normal(d)
        alpha1, alpha2 = rng.standard_normal(d), rng.standard_normal(d)
        # fit the full model on the combined groups
        z = np.vstack([z1.entries, z2.entries])
        s = np.concatenate([z1.entries @ alpha1, z2.entries @ alpha2])
        y = z @ theta
        full = fit_full(LabeledData(Z=DesignMatrix(z), S=s, Y=y))
        w = float(full.w_hat[0])
        a = rng.standard_normal((d, d))
        dist = TestDistribution(a @ a.T)
        closed = groupwise_spurious_error(z1, z2, theta, alpha1, alpha2, w, dist)
        chol = np.linalg.cholesky(dist.sigma + 1e-12 * np.eye(d))
        zs = rng.standard_normal((200_000, d)) @ chol.T
        preds = zs @ full.theta_hat + w * (zs @ alpha1)  # group-1 points carry s = alpha1'z
        losses = (zs @ theta - preds) ** 2
        se = losses.std(ddof=1) / np.sqrt(losses.size)
        assert abs(closed - losses.mean()) <= 3 * se

    def test_non_orthogonal_groups_rejected(self):
        z1 = DesignMatrix(np.array([[1.0, 0.0, 0.0]]))
        z2 = DesignMatrix(np.array([[1.0, 1.0, 0.0]]))
        with pytest.raises(NonOrthogonalGroupsError):
            groupwise_spurious_error(
                z1, z2, np.zeros(3), np.zeros(3), np.zeros(3), 0.5, TestDistribution(np.eye(3))
            )


class TestValidation:
    def test_sigma_must_be_psd(self):
        with pytest.raises(ValueError):
            TestDistribution(np.array([[1.0, 0.0], [0.0, -1.0]]))
        with pytest.raises(ValueError):
            TestDistribution(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_dimension_checks(self):
        truth, data, pi = table2_setup()
        with pytest.raises(DimensionMismatchError):
            population_error(fit_core(data), truth, TestDistribution(np.eye(2)), pi)
        with pytest.raises(DimensionMismatchError):
            removal_verdict(GroundTruth(np.zeros(3), ()), pi, TestDistribution(np.eye(3)))
