"""
MAP hard detection and per-bit posterior LLRs from fused chain statistics,
plus centralized reference detectors that work on the stacked model.

LLRs are ``ln P(b_i = 1 | z) / P(b_i = 0 | z)``; a positive value favors
bit 1. All likelihood arithmetic stays in the log domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from .channel import ChannelEstimate
from .model import HypothesisSet, SystemConfig
from .statistics import APStatistics, HypothesisStatistics, conditional_covariance, psk_covariance


@dataclass(frozen=True)
class DetectionResult:
    s_hat: np.ndarray
    hypothesis_index: int
    objective: float
    bits: np.ndarray


def quadratic_metric(stats: APStatistics, symbols: np.ndarray) -> np.ndarray:
    """``-s^H M s + 2 Re{a^H s}`` for every row of ``symbols``.

    Accepts shared (K x K) or per-hypothesis (H x K x K) statistics.
    """
    s = symbols
    if stats.M.ndim == 2:
        quad = np.einsum("hk,kj,hj->h", s.conj(), stats.M, s).real
        lin = (s @ stats.a.conj()).real
    else:
        quad = np.einsum("hk,hkj,hj->h", s.conj(), stats.M, s).real
        lin = np.einsum("hk,hk->h", stats.a.conj(), s).real
    return -quad + 2.0 * lin


def exact_log_metric(hyp_stats: HypothesisStatistics, hypotheses: HypothesisSet) -> np.ndarray:
    """``log d_{L|s} - b_{L|s} + log psi'(s)``: the log-likelihood up to a shared constant."""
    _check_sizes(hyp_stats.b, hypotheses)
    return hyp_stats.log_d - hyp_stats.b + quadratic_metric(hyp_stats, hypotheses.symbols)


def _check_sizes(per_hypothesis: np.ndarray, hypotheses: HypothesisSet) -> None:
    if len(hypotheses) == 0:
        raise ValueError("empty hypothesis set")
    if np.shape(per_hypothesis)[0] != len(hypotheses):
        raise ValueError("statistics and hypothesis set disagree in size")


def _argmin(objective: np.ndarray, hypotheses: HypothesisSet) -> DetectionResult:
    if len(hypotheses) == 0:
        raise ValueError("empty hypothesis set")
    # np.argmin returns the first occurrence, i.e. the lowest index on ties
    idx = int(np.argmin(objective))
    return DetectionResult(
        s_hat=hypotheses.symbols[idx],
        hypothesis_index=idx,
        objective=float(objective[idx]),
        bits=hypotheses.bits[idx],
    )


def map_simplified(stats: APStatistics, hypotheses: HypothesisSet) -> DetectionResult:
    """Minimize ``s^H M_L s - 2 Re{a_L^H s}`` by exhaustive search."""
    if stats.M.ndim != 2:
        raise ValueError("map_simplified expects symbol-independent statistics")
    return _argmin(-quadratic_metric(stats, hypotheses.symbols), hypotheses)


def map_exact(hyp_stats: HypothesisStatistics, hypotheses: HypothesisSet) -> DetectionResult:
    """Minimize ``b + s^H M s - 2 Re{a^H s} + c`` with per-hypothesis statistics."""
    _check_sizes(hyp_stats.b, hypotheses)
    objective = hyp_stats.b - quadratic_metric(hyp_stats, hypotheses.symbols) + hyp_stats.c
    return _argmin(objective, hypotheses)


def log_prior(hypotheses: HypothesisSet, priors: np.ndarray | None) -> np.ndarray | float:
    """Log prior of each hypothesis from independent per-bit ``P(b_i = 1)``."""
    if priors is None:
        return 0.0
    p1 = np.asarray(priors, dtype=float)
    if p1.shape != (hypotheses.n_bits,):
        raise ValueError(f"expected {hypotheses.n_bits} bit priors")
    if np.any((p1 <= 0) | (p1 >= 1)):
        raise ValueError("bit priors must lie strictly inside (0, 1)")
    bits = hypotheses.bits
    return bits @ np.log(p1) + (1 - bits) @ np.log1p(-p1)


def bit_llrs(
    log_terms: np.ndarray, bits: np.ndarray, reduce: Literal["sum", "max"] = "sum"
) -> np.ndarray:
    """Per-bit log ratio of the ``log_terms`` mass on ``b_i = 1`` vs ``b_i = 0``.

    ``reduce="sum"`` gives the exact log-sum-exp ratio, ``"max"`` the
    max-log approximation.
    """
    ones = bits.astype(bool)
    terms = log_terms[:, None]
    num = np.where(ones, terms, -np.inf)
    den = np.where(ones, -np.inf, terms)
    if reduce == "sum":
        return logsumexp(num, axis=0) - logsumexp(den, axis=0)
    if reduce == "max":
        return num.max(axis=0) - den.max(axis=0)
    raise ValueError(f"unknown reduction {reduce!r}")


def llr_exact(
    hyp_stats: HypothesisStatistics, hypotheses: HypothesisSet, priors: np.ndarray | None = None
) -> np.ndarray:
    """Exact posterior LLRs from per-hypothesis statistics, shape (m*K,)."""
    terms = exact_log_metric(hyp_stats, hypotheses) + log_prior(hypotheses, priors)
    return bit_llrs(terms, hypotheses.bits, "sum")


def llr_simplified(
    stats: APStatistics, hypotheses: HypothesisSet, priors: np.ndarray | None = None
) -> np.ndarray:
    """LLRs from symbol-independent statistics (exact for constant-modulus alphabets)."""
    if stats.M.ndim != 2:
        raise ValueError("llr_simplified expects symbol-independent statistics")
    terms = quadratic_metric(stats, hypotheses.symbols) + log_prior(hypotheses, priors)
    return bit_llrs(terms, hypotheses.bits, "sum")


def llr_maxlog(
    stats: APStatistics,
    hypotheses: HypothesisSet,
    variant: Literal["simplified", "exact"] = "simplified",
    priors: np.ndarray | None = None,
) -> np.ndarray:
    """Max-log LLRs: each log-sum-exp is replaced by its largest term.

    Per bit this is ``max_{b_i=1} T(s) - max_{b_i=0} T(s)`` where ``T`` is
    ``log psi`` (simplified) or ``log d - b + log psi'`` (exact).
    """
    if variant == "exact":
        if not isinstance(stats, HypothesisStatistics):
            raise ValueError("exact max-log needs per-hypothesis statistics")
        terms = exact_log_metric(stats, hypotheses)
    elif variant == "simplified":
        if stats.M.ndim != 2:
            raise ValueError("simplified max-log expects symbol-independent statistics")
        terms = quadratic_metric(stats, hypotheses.symbols)
    else:
        raise ValueError(f"unknown max-log variant {variant!r}")
    return bit_llrs(terms + log_prior(hypotheses, priors), hypotheses.bits, "max")


def apriori_llr(priors: np.ndarray) -> np.ndarray:
    """``ln(P(b = 1) / P(b = 0))`` per bit."""
    p1 = np.asarray(priors, dtype=float)
    if np.any((p1 <= 0) | (p1 >= 1)):
        raise ValueError("priors must lie strictly inside (0, 1)")
    return np.log(p1) - np.log1p(-p1)


def hard_decision(llr: np.ndarray) -> np.ndarray:
    """Slice LLRs to bits; ties (LLR == 0) resolve to 0."""
    return (np.asarray(llr) > 0).astype(np.uint8)


# --- centralized references -------------------------------------------------


@dataclass(frozen=True)
class StackedModel:
    """``z = G s + w`` over all APs with block-diagonal noise covariance.

    ``K`` is (NL, NL) for the symbol-independent covariance or
    (H, NL, NL) with one covariance per hypothesis.
    """

    z: np.ndarray
    G: np.ndarray
    K: np.ndarray


def stack_model(
    estimate: ChannelEstimate,
    y: np.ndarray,
    config: SystemConfig,
    hypotheses: HypothesisSet | None = None,
    mode: Literal["simplified", "exact"] = "exact",
) -> StackedModel:
    """Build the centralized stacked model from per-AP data."""
    L = estimate.H_hat.shape[0]
    z = np.concatenate([y[l] for l in range(L)])
    G = np.concatenate([estimate.H_hat[l] for l in range(L)], axis=0)
    if mode == "simplified":
        K = scipy.linalg.block_diag(*[psk_covariance(estimate, config, l) for l in range(L)])
    else:
        if hypotheses is None:
            raise ValueError("exact stacked model needs the hypothesis set")
        N = estimate.H_hat.shape[1]
        K = np.zeros((len(hypotheses), N * L, N * L), dtype=complex)
        for l in range(L):
            block = slice(l * N, (l + 1) * N)
            K[:, block, block] = conditional_covariance(hypotheses.symbols, estimate, config, l)
    return StackedModel(z=z, G=G, K=K)


def centralized_log_likelihoods(
    z: np.ndarray, G: np.ndarray, covariances: np.ndarray, hypotheses: HypothesisSet
) -> np.ndarray:
    """``ln CN(z; G s, K_s)`` for every hypothesis, evaluated directly."""
    n = z.shape[0]
    residual = z[None, :] - hypotheses.symbols @ G.T  # (H, NL)
    Ks = np.broadcast_to(covariances, (len(hypotheses), n, n))
    solved = np.linalg.solve(Ks, residual[..., None])[..., 0]
    quad = np.einsum("hn,hn->h", residual.conj(), solved).real
    _, logdet = np.linalg.slogdet(Ks)
    return -n * np.log(np.pi) - logdet - quad


def llr_centralized_oracle(
    z: np.ndarray,
    G_hat: np.ndarray,
    covariances: np.ndarray,
    hypotheses: HypothesisSet,
    priors: np.ndarray | None = None,
    reduce: Literal["sum", "max"] = "sum",
) -> np.ndarray:
    """Posterior LLRs computed from the stacked-model Gaussian densities."""
    terms = centralized_log_likelihoods(z, G_hat, covariances, hypotheses)
    return bit_llrs(terms + log_prior(hypotheses, priors), hypotheses.bits, reduce)


def map_centralized_oracle(
    z: np.ndarray, G_hat: np.ndarray, covariances: np.ndarray, hypotheses: HypothesisSet
) -> DetectionResult:
    """argmin of ``||K^{-1/2}(z - G s)||^2 + ln det K`` over all hypotheses."""
    n = z.shape[0]
    objective = -(centralized_log_likelihoods(z, G_hat, covariances, hypotheses) + n * np.log(np.pi))
    return _argmin(objective, hypotheses)
