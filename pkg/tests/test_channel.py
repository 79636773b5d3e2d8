import numpy as np
import pytest

from seqllr.channel import (
    ChannelRealization,
    SpatialProfile,
    assign_pilots,
    build_profile,
    despread_covariance,
    draw_channel,
    hermitian_sqrt,
    mmse_estimate,
    pilot_phase,
)
from seqllr.model import SystemConfig

N_MC = 100_000


def rel_fro(A, B):
    return np.linalg.norm(A - B) / np.linalg.norm(B)


def sample_cov(x):
    """x: (n_samples, N) -> E{x x^H}."""
    return x.T @ x.conj() / x.shape[0]


def config(**kw):
    args = dict(L=1, N=3, K=1, tau_c=50, tau_p=1, noise_power=1.0, ue_powers=(1.0,))
    args.update(kw)
    return SystemConfig(**args)


class TestProfile:
    def test_identity(self):
        R = build_profile(config(N=2, large_scale_gain=2.0)).R
        np.testing.assert_array_equal(R[0, 0], [[2, 0], [0, 2]])

    def test_exponential_rho_zero_is_identity(self):
        a = build_profile(config(correlation={"kind": "exponential", "rho": 0.0})).R
        b = build_profile(config()).R
        np.testing.assert_array_equal(a, b)

    def test_exponential_eigenvalues(self):
        R = build_profile(config(correlation={"kind": "exponential", "rho": 0.5})).R[0, 0]
        w = np.linalg.eigvalsh(R)
        assert np.all(w > 0)
        assert np.isclose(np.trace(R).real, 3.0)
        assert R[0, 2] == 0.25

    def test_hermitian_and_trace(self):
        cfg = config(L=3, K=2, ue_powers=(1.0, 1.0), correlation={"kind": "exponential", "rho": 0.7},
                     large_scale_gain=((1.0, 2.0, 3.0), (0.5, 0.25, 4.0)))
        R = build_profile(cfg).R
        np.testing.assert_allclose(R, np.conj(np.swapaxes(R, -1, -2)), atol=1e-12)
        np.testing.assert_allclose(np.trace(R, axis1=-2, axis2=-1).real, cfg.N * cfg.beta)


class TestDrawChannel:
    def test_zero_covariance(self, rng):
        profile = SpatialProfile(R=np.zeros((1, 1, 3, 3), dtype=complex))
        np.testing.assert_array_equal(draw_channel(profile, rng).H, 0)

    @pytest.mark.parametrize("rho", [0.0, 0.5])
    def test_sample_covariance(self, rng, rho):
        profile = build_profile(config(correlation={"kind": "exponential", "rho": rho}))
        H = draw_channel(profile, rng, size=(N_MC,)).H  # (n, L, N, K)
        assert rel_fro(sample_cov(H[:, 0, :, 0]), profile.R[0, 0]) < 0.02

    def test_pairs_independent(self, rng):
        profile = build_profile(config(L=2, K=2, ue_powers=(1.0, 1.0)))
        H = draw_channel(profile, rng, size=(N_MC,)).H
        cross = H[:, 0, :, 0].T @ H[:, 1, :, 1].conj() / N_MC
        assert np.linalg.norm(cross) < 0.02 * np.sqrt(3)

    def test_non_psd_rejected(self):
        with pytest.raises(np.linalg.LinAlgError):
            hermitian_sqrt(np.diag([1.0, -0.5]).astype(complex))

    def test_rank_deficient_sqrt(self):
        v = np.array([1.0, 1j, 0.5])
        R = np.outer(v, v.conj())
        S = hermitian_sqrt(R)
        np.testing.assert_allclose(S @ S, R, atol=1e-12)


class TestPilots:
    def test_orthogonal(self):
        a = assign_pilots(4, 4)
        assert a.pilots == (0, 1, 2, 3)
        assert all(len(c) == 1 for c in a.cosets)

    def test_round_robin(self):
        a = assign_pilots(4, 2)
        assert a.pilots == (0, 1, 0, 1)
        assert a.cosets[0] == (0, 2)
        assert all(k in a.cosets[k] for k in range(4))

    def test_eight_users_eight_pilots(self):
        a = assign_pilots(8, 8)
        assert len(set(a.pilots)) == 8

    def test_noiseless_single_user(self, rng):
        cfg = config(N=2, tau_p=4, tau_c=10, noise_power=1e-300)
        h = rng.standard_normal((1, 2, 1)) + 0j
        y = pilot_phase(ChannelRealization(H=h), assign_pilots(1, 4), cfg, rng)
        np.testing.assert_allclose(y[0, 0], 2 * h[0, :, 0], atol=1e-140)

    def test_noiseless_shared_pilot(self, rng):
        cfg = config(N=2, K=2, tau_p=1, ue_powers=(1.0, 3.0), noise_power=1e-300)
        h = rng.standard_normal((1, 2, 2)) + 1j * rng.standard_normal((1, 2, 2))
        y = pilot_phase(ChannelRealization(H=h), assign_pilots(2, 1), cfg, rng)
        np.testing.assert_allclose(y[0, 0], h[0, :, 0] + np.sqrt(3) * h[0, :, 1], atol=1e-140)

    def test_despread_covariance_monte_carlo(self, rng):
        cfg = config(K=2, tau_p=1, ue_powers=(1.0, 0.5), noise_power=0.3,
                     correlation={"kind": "exponential", "rho": 0.5})
        profile = build_profile(cfg)
        a = assign_pilots(2, 1)
        H = draw_channel(profile, rng, size=(N_MC,))
        y = pilot_phase(H, a, cfg, rng)
        Psi = despread_covariance(profile, a, cfg)
        assert rel_fro(sample_cov(y[:, 0, 0]), Psi[0, 0]) < 0.02


class TestMMSE:
    def test_perfect_csi_limit(self, rng):
        cfg = config(N=2, K=2, tau_p=2, ue_powers=(1.0, 1.0), noise_power=1e-300)
        profile = build_profile(cfg)
        a = assign_pilots(2, 2)
        H = draw_channel(profile, rng)
        est = mmse_estimate(pilot_phase(H, a, cfg, rng), profile, a, cfg)
        np.testing.assert_allclose(est.H_hat, H.H, atol=1e-12)
        np.testing.assert_allclose(est.R_tilde, 0, atol=1e-12)

    def test_zero_covariance(self, rng):
        cfg = config(N=2)
        profile = SpatialProfile(R=np.zeros((1, 1, 2, 2), dtype=complex))
        a = assign_pilots(1, 1)
        est = mmse_estimate(pilot_phase(draw_channel(profile, rng), a, cfg, rng), profile, a, cfg)
        np.testing.assert_array_equal(est.H_hat, 0)
        np.testing.assert_array_equal(est.R_hat, 0)

    def test_scalar_identity_case(self, rng):
        # R = I, p = tau_p = 1: R_hat = I / (1 + sigma^2)
        sigma2 = 0.5
        cfg = config(N=2, noise_power=sigma2)
        profile = build_profile(cfg)
        a = assign_pilots(1, 1)
        H = draw_channel(profile, rng, size=(N_MC,))
        est = mmse_estimate(pilot_phase(H, a, cfg, rng), profile, a, cfg)
        np.testing.assert_allclose(est.R_hat[0, 0], np.eye(2) / (1 + sigma2), atol=1e-14)
        assert rel_fro(sample_cov(est.H_hat[:, 0, :, 0]), est.R_hat[0, 0]) < 0.02

    def test_statistics_contaminated(self, rng):
        cfg = config(N=3, K=2, L=2, tau_p=1, ue_powers=(1.0, 0.7), noise_power=0.4,
                     correlation={"kind": "exponential", "rho": 0.6},
                     large_scale_gain=((1.0, 0.3), (0.6, 1.4)))
        profile = build_profile(cfg)
        a = assign_pilots(2, 1)
        H = draw_channel(profile, rng, size=(N_MC,))
        est = mmse_estimate(pilot_phase(H, a, cfg, rng), profile, a, cfg)
        np.testing.assert_allclose(est.R_hat + est.R_tilde, profile.R, rtol=0, atol=1e-12)
        for k in range(2):
            for l in range(2):
                h_hat = est.H_hat[:, l, :, k]
                h_err = H.H[:, l, :, k] - h_hat
                scale = np.linalg.norm(profile.R[k, l])
                assert rel_fro(sample_cov(h_hat), est.R_hat[k, l]) < 0.05
                assert rel_fro(sample_cov(h_err), est.R_tilde[k, l]) < 0.05
                assert np.linalg.norm(h_hat.T @ h_err.conj() / N_MC) / scale < 0.05
        # pilot contamination: the two estimates at an AP are correlated
        cross = est.H_hat[:, 0, :, 0].T @ est.H_hat[:, 0, :, 1].conj() / N_MC
        assert np.linalg.norm(cross) > 0.1 * np.sqrt(np.linalg.norm(est.R_hat[0, 0]) * np.linalg.norm(est.R_hat[1, 0]))

    def test_covariances_hermitian_and_psi_pd(self, rng):
        cfg = config(N=3, K=3, L=2, tau_p=2, ue_powers=(1.0, 0.7, 2.0),
                     correlation={"kind": "exponential", "rho": 0.9})
        profile = build_profile(cfg)
        a = assign_pilots(3, 2)
        est = mmse_estimate(pilot_phase(draw_channel(profile, rng), a, cfg, rng), profile, a, cfg)
        for M in (est.R_hat, est.R_tilde, est.Psi):
            np.testing.assert_allclose(M, np.conj(np.swapaxes(M, -1, -2)), atol=1e-12)
        assert np.all(np.linalg.eigvalsh(est.Psi) > 0)
        assert np.all(np.linalg.eigvalsh(est.R_tilde) > -1e-12)
