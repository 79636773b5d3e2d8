"""
Correlated Rayleigh channels, pilot transmission and MMSE channel estimation.

Random quantities (channels, despread pilots, estimates) accept arbitrary
leading batch axes so Monte Carlo checks can draw many coherence blocks at
once; covariance matrices are deterministic and never batched.

Array layouts
-------------
R, R_hat, R_tilde : (K, L, N, N)
H, H_hat          : (..., L, N, K)    column k of H[l] is h_kl
despread pilots   : (..., tau_p, L, N)
Psi               : (tau_p, L, N, N)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import SystemConfig, _frozen

PSD_TOLERANCE = 1e-12


@dataclass(frozen=True)
class SpatialProfile:
    R: np.ndarray

    @property
    def K(self) -> int:
        return self.R.shape[0]

    @property
    def L(self) -> int:
        return self.R.shape[1]

    @property
    def N(self) -> int:
        return self.R.shape[2]


@dataclass(frozen=True)
class ChannelRealization:
    H: np.ndarray


@dataclass(frozen=True)
class PilotAssignment:
    """Pilot index per UE (0-based) and the co-pilot sets ``S_k``."""

    pilots: tuple[int, ...]
    cosets: tuple[tuple[int, ...], ...]
    tau_p: int


@dataclass(frozen=True)
class ChannelEstimate:
    H_hat: np.ndarray
    R_hat: np.ndarray
    R_tilde: np.ndarray
    Psi: np.ndarray | None = None


def build_profile(config: SystemConfig) -> SpatialProfile:
    """Spatial correlation matrices ``R_kl`` for every (UE, AP) pair."""
    N = config.N
    corr = config.correlation
    if not 0.0 <= corr.rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {corr.rho}")
    if corr.kind == "identity":
        base = np.eye(N)
    else:
        idx = np.arange(N)
        base = corr.rho ** np.abs(np.subtract.outer(idx, idx))
    R = config.beta[:, :, None, None] * base[None, None, :, :]
    return SpatialProfile(R=_frozen(R.astype(complex)))


def hermitian_sqrt(A: np.ndarray, tol: float = PSD_TOLERANCE) -> np.ndarray:
    """Hermitian square root via eigendecomposition, clamping round-off negatives.

    Works on stacks of matrices. Eigenvalues below ``-tol * max(1, ||A||)``
    mean the input is not PSD and raise ``np.linalg.LinAlgError``.
    """
    A = 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))
    w, V = np.linalg.eigh(A)
    scale = np.maximum(1.0, np.max(np.abs(w), axis=-1, keepdims=True))
    if np.any(w < -tol * scale):
        raise np.linalg.LinAlgError("covariance matrix is not positive semidefinite")
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))


def complex_normal(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Samples of CN(0, 1)."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def draw_channel(
    profile: SpatialProfile, rng: np.random.Generator, size: tuple[int, ...] = ()
) -> ChannelRealization:
    """Draw ``h_kl ~ CN(0, R_kl)`` independently for every pair.

    ``size`` prepends batch axes (independent coherence blocks).
    """
    K, L, N = profile.K, profile.L, profile.N
    root = hermitian_sqrt(profile.R)  # (K, L, N, N)
    z = complex_normal(rng, tuple(size) + (K, L, N))
    h = np.einsum("klab,...klb->...lak", root, z)
    return ChannelRealization(H=h)


def assign_pilots(K: int, tau_p: int) -> PilotAssignment:
    """Round-robin pilot assignment, UE k (0-based) gets pilot ``k % tau_p``."""
    if tau_p < 1:
        raise ValueError("tau_p must be at least 1")
    pilots = tuple(k % tau_p for k in range(K))
    cosets = tuple(tuple(i for i in range(K) if pilots[i] == pilots[k]) for k in range(K))
    return PilotAssignment(pilots=pilots, cosets=cosets, tau_p=tau_p)


def pilot_phase(
    realization: ChannelRealization,
    assignment: PilotAssignment,
    config: SystemConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Despread pilot observations ``y_tl``, shape ``(..., tau_p, L, N)``.

    Simulated directly in the despread domain: the noise after despreading
    with a pilot of squared norm ``tau_p`` is again ``CN(0, sigma^2 I)``.
    """
    H = realization.H
    batch = H.shape[:-3]
    L, N, K = H.shape[-3:]
    tau_p = assignment.tau_p
    # (tau_p, K) weights sqrt(p_i tau_p) where UE i uses pilot t
    weights = np.zeros((tau_p, K))
    for i, t in enumerate(assignment.pilots):
        weights[t, i] = np.sqrt(config.ue_powers[i] * tau_p)
    signal = np.einsum("tk,...lnk->...tln", weights, H)
    noise = np.sqrt(config.noise_power) * complex_normal(rng, batch + (tau_p, L, N))
    return signal + noise


def despread_covariance(
    profile: SpatialProfile, assignment: PilotAssignment, config: SystemConfig
) -> np.ndarray:
    """``Psi_tl = sum_{i: t_i = t} tau_p p_i R_il + sigma^2 I``, shape (tau_p, L, N, N)."""
    tau_p = assignment.tau_p
    Psi = np.zeros((tau_p, profile.L, profile.N, profile.N), dtype=complex)
    for i, t in enumerate(assignment.pilots):
        Psi[t] += tau_p * config.ue_powers[i] * profile.R[i]
    Psi += config.noise_power * np.eye(profile.N)
    return Psi


def mmse_estimate(
    despread: np.ndarray,
    profile: SpatialProfile,
    assignment: PilotAssignment,
    config: SystemConfig,
) -> ChannelEstimate:
    """MMSE estimates of all channels and their estimate/error covariances.

    ``h_hat_kl = sqrt(p_k tau_p) R_kl Psi^{-1} y_{t_k l}`` with
    ``R_hat = p_k tau_p R Psi^{-1} R`` and ``R_tilde = R - R_hat``.
    ``Psi`` is applied through a Cholesky solve.
    """
    K, L, N = profile.K, profile.L, profile.N
    tau_p = assignment.tau_p
    Psi = despread_covariance(profile, assignment, config)

    # filters A_kl = sqrt(p_k tau_p) R_kl Psi^{-1}, so h_hat_kl = A_kl y
    A = np.empty((K, L, N, N), dtype=complex)
    R_hat = np.empty((K, L, N, N), dtype=complex)
    for l in range(L):
        for t in range(tau_p):
            users = [k for k in range(K) if assignment.pilots[k] == t]
            if not users:
                continue
            try:
                factor = scipy.linalg.cho_factor(Psi[t, l], lower=True)
            except np.linalg.LinAlgError as exc:
                cond = np.linalg.cond(Psi[t, l])
                raise np.linalg.LinAlgError(
                    f"Psi for pilot {t}, AP {l} is not positive definite (cond={cond:.3e})"
                ) from exc
            for k in users:
                Rkl = profile.R[k, l]
                # Psi^{-1} R is the solve; A = (Psi^{-1} R)^H since both are Hermitian
                PsiInvR = scipy.linalg.cho_solve(factor, Rkl)
                gain = config.ue_powers[k] * tau_p
                A[k, l] = np.sqrt(gain) * PsiInvR.conj().T
                R_hat[k, l] = gain * Rkl @ PsiInvR
    R_hat = 0.5 * (R_hat + np.conj(np.swapaxes(R_hat, -1, -2)))
    R_tilde = profile.R - R_hat

    y_per_ue = despread[..., list(assignment.pilots), :, :]  # (..., K, L, N)
    H_hat = np.einsum("klab,...klb->...lak", A, y_per_ue)
    return ChannelEstimate(H_hat=H_hat, R_hat=R_hat, R_tilde=R_tilde, Psi=Psi)


def perfect_csi(realization: ChannelRealization, profile: SpatialProfile) -> ChannelEstimate:
    """Genie estimate: ``H_hat = H`` and zero error covariance."""
    return ChannelEstimate(
        H_hat=realization.H,
        R_hat=profile.R.copy(),
        R_tilde=np.zeros_like(profile.R),
        Psi=None,
    )


def estimate_channel(
    config: SystemConfig,
    profile: SpatialProfile,
    assignment: PilotAssignment,
    rng: np.random.Generator,
) -> tuple[ChannelRealization, ChannelEstimate]:
    """Draw a channel and run the pilot phase and MMSE estimation on it."""
    realization = draw_channel(profile, rng)
    despread = pilot_phase(realization, assignment, config, rng)
    return realization, mmse_estimate(despread, profile, assignment, config)
