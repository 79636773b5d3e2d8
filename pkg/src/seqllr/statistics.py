"""
Local AP processing and sequential fusion of sufficient statistics.

Each AP whitens its observation with a Cholesky factor of its colored-noise
covariance and adds its contribution to the running statistics
``(b, M, a, c)`` received from the previous AP:

    b += ||r||^2,   M += C^H C,   a += C^H r,   c += ln det(Sigma)

with ``r = T^{-1} y`` and ``C = T^{-1} H_hat`` for ``Sigma = T T^H``. Only
``Sigma^{-1}`` quadratic forms reach the statistics, so the choice of
square root does not matter.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .channel import ChannelEstimate, ChannelRealization, complex_normal
from .model import HypothesisCapError, HypothesisSet, SystemConfig


def _hermitian(A: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(A, -1, -2))


@dataclass(frozen=True)
class APStatistics:
    """Fused statistics after some prefix of the chain.

    Fields may carry a leading hypothesis axis (see HypothesisStatistics).
    """

    b: np.ndarray | float
    M: np.ndarray
    a: np.ndarray
    c: np.ndarray | float

    @classmethod
    def zeros(cls, K: int) -> "APStatistics":
        return cls(b=0.0, M=np.zeros((K, K), dtype=complex), a=np.zeros(K, dtype=complex), c=0.0)

    @property
    def K(self) -> int:
        return self.M.shape[-1]


@dataclass(frozen=True)
class HypothesisStatistics(APStatistics):
    """Per-hypothesis statistics; every field has a leading axis of length H.

    ``log_d`` is the running log of ``prod_l det(Sigma_{l|s})^{-1}``; it is
    carried in the log domain because the product underflows on long chains.
    """

    log_d: np.ndarray = None  # type: ignore[assignment]

    @classmethod
    def zeros(cls, K: int, n_hypotheses: int) -> "HypothesisStatistics":  # type: ignore[override]
        return cls(
            b=np.zeros(n_hypotheses),
            M=np.zeros((n_hypotheses, K, K), dtype=complex),
            a=np.zeros((n_hypotheses, K), dtype=complex),
            c=np.zeros(n_hypotheses),
            log_d=np.zeros(n_hypotheses),
        )

    def __len__(self) -> int:
        return len(self.b)

    def __getitem__(self, index: int) -> APStatistics:
        return APStatistics(b=float(self.b[index]), M=self.M[index], a=self.a[index], c=float(self.c[index]))


@dataclass(frozen=True)
class WhitenedLocal:
    r: np.ndarray
    C_hat: np.ndarray


def uplink_receive(
    realization: ChannelRealization,
    s: np.ndarray,
    config: SystemConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Data-phase observations ``y_l = H_l s + n_l``, shape ``(..., L, N)``."""
    H = realization.H
    signal = np.einsum("...lnk,k->...ln", H, np.asarray(s, dtype=complex))
    noise = np.sqrt(config.noise_power) * complex_normal(rng, signal.shape)
    return signal + noise


def conditional_covariance(
    s: np.ndarray, estimate: ChannelEstimate, config: SystemConfig, l: int
) -> np.ndarray:
    """``Sigma_{l|s} = sum_i |s_i|^2 R_tilde_il + sigma^2 I``.

    ``s`` may be a single K-vector or an (H, K) stack of hypotheses.
    """
    power = np.abs(np.asarray(s)) ** 2
    return _covariance_from_power(power, estimate.R_tilde[:, l], config.noise_power)


def psk_covariance(estimate: ChannelEstimate, config: SystemConfig, l: int) -> np.ndarray:
    """Symbol-independent covariance ``sum_i p_i R_tilde_il + sigma^2 I``."""
    return _covariance_from_power(config.powers, estimate.R_tilde[:, l], config.noise_power)


def _covariance_from_power(power: np.ndarray, R_tilde_l: np.ndarray, noise_power: float) -> np.ndarray:
    N = R_tilde_l.shape[-1]
    Sigma = np.einsum("...i,iab->...ab", power, R_tilde_l) + noise_power * np.eye(N)
    return 0.5 * (Sigma + _hermitian(Sigma))


def whiten(Sigma: np.ndarray, y_l: np.ndarray, H_hat_l: np.ndarray) -> WhitenedLocal:
    """Whiten one AP's observation and channel estimate.

    Parameters
    ----------
    Sigma : (..., N, N)
        Hermitian positive definite noise covariance, optionally stacked.
    y_l : (N,)
    H_hat_l : (N, K)

    Raises
    ------
    np.linalg.LinAlgError
        If ``Sigma`` is not positive definite.
    """
    T = np.linalg.cholesky(Sigma)
    N, K = H_hat_l.shape
    rhs = np.concatenate([y_l[:, None], H_hat_l], axis=1)
    rhs = np.broadcast_to(rhs, Sigma.shape[:-2] + (N, K + 1))
    solved = np.linalg.solve(T, rhs)
    return WhitenedLocal(r=solved[..., 0], C_hat=solved[..., 1:])


def local_update(prev: APStatistics, local: WhitenedLocal, Sigma: np.ndarray) -> APStatistics:
    """Add one AP's whitened contribution to the running statistics."""
    r, C = local.r, local.C_hat
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(C))):
        raise ValueError("non-finite whitened observation")
    sign, logdet = np.linalg.slogdet(Sigma)
    if np.any(sign.real <= 0):
        raise np.linalg.LinAlgError("noise covariance has non-positive determinant")
    C_H = _hermitian(C)
    updates = dict(
        b=prev.b + np.sum(np.abs(r) ** 2, axis=-1),
        M=prev.M + C_H @ C,
        a=prev.a + np.einsum("...kn,...n->...k", C_H, r),
        c=prev.c + logdet,
    )
    if isinstance(prev, HypothesisStatistics):
        updates["log_d"] = prev.log_d - logdet
    elif np.ndim(updates["b"]) == 0:
        updates["b"] = float(updates["b"])
        updates["c"] = float(updates["c"])
    return dataclasses.replace(prev, **updates)


def run_chain(
    estimate: ChannelEstimate,
    y: np.ndarray,
    config: SystemConfig,
    mode: Literal["simplified", "exact"] = "simplified",
    hypotheses: HypothesisSet | None = None,
    order: Sequence[int] | None = None,
) -> APStatistics | HypothesisStatistics:
    """Pass the statistics along the chain AP 1 -> ... -> AP L.

    Parameters
    ----------
    estimate : ChannelEstimate
        Channel estimates of a single coherence block.
    y : (L, N)
        Observations of one channel use.
    mode : {"simplified", "exact"}
        ``simplified`` whitens with the symbol-independent covariance (exact
        for constant-modulus constellations); ``exact`` runs the recursion for
        every hypothesis with its conditional covariance.
    hypotheses : HypothesisSet
        Required in exact mode.
    order : sequence of int, optional
        AP visiting order, defaults to ``0..L-1``.
    """
    L = estimate.H_hat.shape[-3]
    K = estimate.H_hat.shape[-1]
    order = range(L) if order is None else order

    if mode == "simplified":
        stats: APStatistics = APStatistics.zeros(K)
        for l in order:
            Sigma = psk_covariance(estimate, config, l)
            stats = local_update(stats, whiten(Sigma, y[l], estimate.H_hat[l]), Sigma)
        return stats

    if mode != "exact":
        raise ValueError(f"unknown chain mode {mode!r}")
    if hypotheses is None:
        raise ValueError("exact mode needs the hypothesis set")
    if len(hypotheses) > config.hypothesis_cap:
        raise HypothesisCapError(
            f"{len(hypotheses)} hypotheses exceed the cap {config.hypothesis_cap}"
        )

    # Sigma_{l|s} depends on s only through |s_i|^2: run once per distinct power pattern
    power = np.abs(hypotheses.symbols) ** 2
    _, first, inverse = np.unique(
        np.round(power, 12), axis=0, return_index=True, return_inverse=True
    )
    patterns = power[first]
    inverse = inverse.reshape(-1)
    grouped = HypothesisStatistics.zeros(K, len(patterns))
    for l in order:
        Sigma = _covariance_from_power(patterns, estimate.R_tilde[:, l], config.noise_power)
        grouped = local_update(grouped, whiten(Sigma, y[l], estimate.H_hat[l]), Sigma)
    return HypothesisStatistics(
        b=grouped.b[inverse],
        M=grouped.M[inverse],
        a=grouped.a[inverse],
        c=grouped.c[inverse],
        log_d=grouped.log_d[inverse],
    )
