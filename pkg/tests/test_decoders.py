import numpy as np
import pytest

from qnc_lab.decoders import (DecoderProblem, cap_snr, default_epsilon,
                              exact_mmse_oracle, l1_decode, l1_lp_oracle,
                              mixture_mmse_decode, pooled_snr_db, snr_db)
from qnc_lab.messages import SourceModel, random_orthonormal


def gaussian_problem(rng, n, m, noise_var=1e-4, prior=None, z=None, s=None):
    A = rng.standard_normal((m, n))
    if z is None:
        if s is None:
            s = rng.standard_normal(n)
        z = A @ s
    prior = prior or SourceModel(n, 0.2)
    return DecoderProblem(A=A, z=z, noise_var=np.full(m, noise_var),
                          prior=prior, phi=np.eye(n))


class TestSnr:
    def test_exact_estimate_is_infinite(self):
        x = np.array([1.0, 2.0])
        assert snr_db(x, x) == float("inf")
        assert cap_snr(snr_db(x, x)) == 120.0

    def test_zero_estimate_is_zero_db(self):
        x = np.array([3.0, -1.0, 0.5])
        assert snr_db(x, np.zeros(3)) == pytest.approx(0.0)

    def test_reference_value(self):
        x = np.zeros(10)
        x[0] = 1.0
        x_hat = x.copy()
        x_hat[1] = 0.1
        assert snr_db(x, x_hat) == pytest.approx(20.0)

    def test_pooled_ratio_of_sums(self):
        assert pooled_snr_db([1.0, 1.0], [0.1, 0.3]) == pytest.approx(
            10 * np.log10(2.0 / 0.4))

    def test_zero_signal_rejected(self):
        with pytest.raises(ValueError):
            snr_db(np.zeros(3), np.ones(3))


class TestDefaultEpsilon:
    def test_zero_noise(self):
        p = gaussian_problem(np.random.default_rng(0), 6, 4)
        q = DecoderProblem(A=p.A, z=p.z, noise_var=np.full(4, 1e-300),
                           prior=p.prior, phi=p.phi)
        assert default_epsilon(q) == pytest.approx(0.0, abs=1e-140)

    def test_reference_value(self):
        p = gaussian_problem(np.random.default_rng(1), 20, 100, noise_var=0.01)
        assert default_epsilon(p) == pytest.approx(1.2)

    def test_homogeneity(self):
        rng = np.random.default_rng(2)
        p = gaussian_problem(rng, 10, 7, noise_var=0.02)
        doubled = DecoderProblem(A=p.A, z=p.z, noise_var=2 * p.noise_var,
                                 prior=p.prior, phi=p.phi)
        assert default_epsilon(doubled) == pytest.approx(
            np.sqrt(2) * default_epsilon(p))

    def test_safety_floor(self):
        p = gaussian_problem(np.random.default_rng(3), 5, 3)
        with pytest.raises(ValueError):
            default_epsilon(p, safety=0.5)


class TestL1Decode:
    def test_zero_observation_gives_zero(self):
        p = gaussian_problem(np.random.default_rng(0), 12, 6,
                             z=np.zeros(6))
        res = l1_decode(p, 0.5)
        assert np.all(res.s_hat == 0.0)
        assert res.converged

    def test_exact_sparse_recovery(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            s = np.zeros(40)
            s[rng.choice(40, 3, replace=False)] = rng.standard_normal(3)
            p = gaussian_problem(rng, 40, 30, s=s)
            res = l1_decode(p, 0.0)
            assert res.converged
            assert np.linalg.norm(res.s_hat - s) <= 1e-6 * np.linalg.norm(s)

    def test_matches_lp_oracle(self):
        rng = np.random.default_rng(5)
        for i in range(50):
            s = np.zeros(10)
            s[rng.choice(10, 3, replace=False)] = rng.standard_normal(3)
            z = None if i % 2 else rng.standard_normal(8)
            p = gaussian_problem(rng, 10, 8, s=s, z=z)
            res = l1_decode(p, 0.0)
            oracle = l1_lp_oracle(p.A, p.z)
            rel = np.linalg.norm(res.s_hat - oracle) / np.linalg.norm(oracle)
            assert res.converged
            assert rel <= 1e-6

    def test_feasibility_with_positive_epsilon(self):
        rng = np.random.default_rng(6)
        p = gaussian_problem(rng, 20, 12, noise_var=0.01)
        eps = default_epsilon(p)
        res = l1_decode(p, eps)
        assert res.converged
        assert np.linalg.norm(p.z - p.A @ res.s_hat) <= eps * (1 + 1e-6)
        # a larger budget must not increase the l1 norm
        res2 = l1_decode(p, 2 * eps)
        assert np.abs(res2.s_hat).sum() <= np.abs(res.s_hat).sum() + 1e-9

    def test_infeasible_epsilon_reports_nonconverged(self):
        rng = np.random.default_rng(7)
        A = rng.standard_normal((4, 2))  # rank 2: most z are unreachable
        z = rng.standard_normal(4)
        dist = np.linalg.norm(z - A @ np.linalg.lstsq(A, z, rcond=None)[0])
        p = DecoderProblem(A=A, z=z, noise_var=np.full(4, 1e-4),
                           prior=SourceModel(2, 0.5), phi=np.eye(2))
        res = l1_decode(p, dist * 0.5)
        assert not res.converged

    def test_objective_trace_non_increasing(self):
        rng = np.random.default_rng(8)
        p = gaussian_problem(rng, 15, 10, noise_var=0.01)
        res = l1_decode(p, default_epsilon(p))
        tr = res.objective_trace
        assert len(tr) >= 1
        assert np.all(np.diff(tr) <= 1e-12)

    def test_scaling_equivariance(self):
        # doubling z and epsilon doubles the solution (bit-exact for c = 2)
        rng = np.random.default_rng(9)
        p = gaussian_problem(rng, 12, 8, noise_var=0.01)
        eps = default_epsilon(p)
        base = l1_decode(p, eps)
        scaled_p = DecoderProblem(A=p.A, z=2.0 * p.z, noise_var=p.noise_var,
                                  prior=p.prior, phi=p.phi)
        scaled = l1_decode(scaled_p, 2.0 * eps)
        assert np.linalg.norm(scaled.s_hat - 2.0 * base.s_hat) \
            <= 1e-8 * np.linalg.norm(base.s_hat)

    def test_empty_problem(self):
        p = DecoderProblem(A=np.zeros((0, 5)), z=np.zeros(0),
                           noise_var=np.zeros(0), prior=SourceModel(5, 0.2),
                           phi=np.eye(5))
        res = l1_decode(p, 0.0)
        assert np.all(res.x_hat == 0.0)
        assert res.converged

    def test_x_hat_is_transformed_s_hat(self):
        rng = np.random.default_rng(10)
        phi = random_orthonormal(12, 11)
        A = rng.standard_normal((8, 12))
        p = DecoderProblem(A=A, z=rng.standard_normal(8),
                           noise_var=np.full(8, 1e-4),
                           prior=SourceModel(12, 0.2), phi=phi)
        res = l1_decode(p, 0.0)
        assert np.max(np.abs(res.x_hat - phi @ res.s_hat)) < 1e-9


class TestMixtureMmse:
    def test_clamped_equals_linear_mmse(self):
        rng = np.random.default_rng(0)
        n, m = 12, 9
        model = SourceModel(n, 0.25, sigma_s2=1.0, sigma_z2=0.01)
        Q = (rng.random(n) < model.sparsity_prob).astype(float)
        sig = np.where(Q > 0, 1.0, 0.1)
        s = rng.standard_normal(n) * sig
        A = rng.standard_normal((m, n))
        z = A @ s + 0.05 * rng.standard_normal(m)
        p = DecoderProblem(A=A, z=z, noise_var=np.full(m, 0.05 ** 2),
                           prior=model, phi=np.eye(n))
        res = mixture_mmse_decode(p, q_clamp=Q)
        D = np.diag(Q * model.sigma_s2 + (1 - Q) * model.sigma_z2)
        C = A @ D @ A.T + np.diag(p.noise_var)
        closed = D @ A.T @ np.linalg.solve(C, z)
        assert np.max(np.abs(res.s_hat - closed)) < 1e-9

    def test_equal_variances_single_iteration(self):
        rng = np.random.default_rng(1)
        model = SourceModel(10, 0.3, sigma_s2=0.5, sigma_z2=0.5)
        p = gaussian_problem(rng, 10, 6, prior=model, noise_var=0.01)
        res = mixture_mmse_decode(p)
        assert res.converged
        assert res.iterations <= 2

    def test_m_zero_returns_prior_mean(self):
        p = DecoderProblem(A=np.zeros((0, 8)), z=np.zeros(0),
                           noise_var=np.zeros(0), prior=SourceModel(8, 0.2),
                           phi=np.eye(8))
        res = mixture_mmse_decode(p)
        assert np.all(res.x_hat == 0.0)

    def test_q_stays_in_unit_interval(self):
        rng = np.random.default_rng(2)
        model = SourceModel(15, 0.2)
        p = gaussian_problem(rng, 15, 10, prior=model, noise_var=0.01)
        res = mixture_mmse_decode(p)
        assert np.all(res.state_probs >= 0.0)
        assert np.all(res.state_probs <= 1.0)

    def test_near_oracle_mse(self):
        # mean MSE within 1.5x of the exact enumeration oracle
        rng = np.random.default_rng(3)
        model = SourceModel(10, 0.2, sigma_s2=1.0, sigma_z2=0.01)
        ratio_num = ratio_den = 0.0
        for _ in range(120):
            Q = rng.random(10) < 0.2
            s = rng.standard_normal(10) * np.where(Q, 1.0, 0.1)
            A = rng.standard_normal((7, 10))
            z = A @ s + 0.1 * rng.standard_normal(7)
            p = DecoderProblem(A=A, z=z, noise_var=np.full(7, 0.01),
                               prior=model, phi=np.eye(10))
            approx = mixture_mmse_decode(p)
            oracle = exact_mmse_oracle(p)
            ratio_num += float(np.sum((approx.s_hat - s) ** 2))
            ratio_den += float(np.sum((oracle.s_hat - s) ** 2))
        assert ratio_num <= 1.5 * ratio_den


class TestExactOracle:
    def test_size_guard(self):
        p = gaussian_problem(np.random.default_rng(0), 15, 5)
        with pytest.raises(ValueError):
            exact_mmse_oracle(p)

    def test_degenerate_mixture_reduces_to_linear(self):
        rng = np.random.default_rng(1)
        model = SourceModel(8, 0.4, sigma_s2=0.7, sigma_z2=0.7)
        p = gaussian_problem(rng, 8, 5, prior=model, noise_var=0.02)
        res = exact_mmse_oracle(p)
        D = np.full(8, 0.7)
        C = (p.A * D) @ p.A.T + np.diag(p.noise_var)
        closed = D * (p.A.T @ np.linalg.solve(C, p.z))
        assert np.max(np.abs(res.s_hat - closed)) < 1e-9

    def test_two_state_hand_calculation(self):
        # n=2, one measurement; weights computed symbolically
        model = SourceModel(2, 0.5, sigma_s2=1.0, sigma_z2=0.25)
        A = np.array([[1.0, 2.0]])
        z = np.array([1.5])
        nv = np.array([0.1])
        p = DecoderProblem(A=A, z=z, noise_var=nv, prior=model, phi=np.eye(2))
        res = exact_mmse_oracle(p)
        states = [(a, b) for a in (0, 1) for b in (0, 1)]
        num = np.zeros(2)
        den = 0.0
        for qa, qb in states:
            d = np.array([1.0 if qa else 0.25, 1.0 if qb else 0.25])
            var = float((A @ np.diag(d) @ A.T)[0, 0]) + nv[0]
            w = 0.25 * np.exp(-z[0] ** 2 / (2 * var)) / np.sqrt(2 * np.pi * var)
            mean = d * A[0] * z[0] / var
            num += w * mean
            den += w
        assert np.max(np.abs(res.s_hat - num / den)) < 1e-10

    def test_bayes_optimality(self):
        # no decoder may beat the enumeration oracle by more than 3 sigma
        rng = np.random.default_rng(2)
        model = SourceModel(8, 0.25, sigma_s2=1.0, sigma_z2=0.01)
        diffs_mmse, diffs_l1 = [], []
        for _ in range(200):
            Q = rng.random(8) < 0.25
            s = rng.standard_normal(8) * np.where(Q, 1.0, 0.1)
            A = rng.standard_normal((5, 8))
            z = A @ s + 0.1 * rng.standard_normal(5)
            p = DecoderProblem(A=A, z=z, noise_var=np.full(5, 0.01),
                               prior=model, phi=np.eye(8))
            mse_oracle = float(np.mean((exact_mmse_oracle(p).s_hat - s) ** 2))
            mse_mmse = float(np.mean((mixture_mmse_decode(p).s_hat - s) ** 2))
            mse_l1 = float(np.mean(
                (l1_decode(p, default_epsilon(p)).s_hat - s) ** 2))
            diffs_mmse.append(mse_mmse - mse_oracle)
            diffs_l1.append(mse_l1 - mse_oracle)
        for diffs in (diffs_mmse, diffs_l1):
            arr = np.array(diffs)
            se = arr.std(ddof=1) / np.sqrt(len(arr))
            assert arr.mean() >= -3 * se
