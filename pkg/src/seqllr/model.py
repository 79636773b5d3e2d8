"""
Scenario configuration, constellations and hypothesis enumeration.

Bit labeling convention used throughout the package: within a symbol,
bit value 0 selects the more positive coordinate on its axis. QPSK and
16QAM are Gray-labeled per axis; the first half of a symbol's bits drives
the in-phase axis and the second half the quadrature axis. Symbol index
``j`` of a constellation carries the label ``binary(j)`` (MSB first).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Sequence

import numpy as np

DEFAULT_HYPOTHESIS_CAP = 2**20


class ConfigError(ValueError):
    """Raised for an invalid or inconsistent scenario configuration."""


class HypothesisCapError(ValueError):
    """Raised when exhaustive enumeration would exceed the hypothesis cap."""


class ConstellationId(str, Enum):
    BPSK = "BPSK"
    QPSK = "QPSK"
    QAM16 = "16QAM"


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CorrelationModel:
    """Spatial correlation model applied to every (UE, AP) pair.

    ``kind`` is ``"identity"`` or ``"exponential"``; ``rho`` is only used
    by the exponential model, ``(R)_ab = beta * rho**|a - b|``.
    """

    kind: str = "identity"
    rho: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("identity", "exponential"):
            raise ConfigError(f"unknown correlation model {self.kind!r}")
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError(f"correlation rho must lie in [0, 1), got {self.rho}")


@dataclass(frozen=True)
class SystemConfig:
    """All parameters of one uplink scenario.

    Parameters
    ----------
    L, N, K : int
        Number of APs, antennas per AP and single-antenna UEs.
    tau_c, tau_p : int
        Coherence block length and pilot length, in channel uses.
    noise_power : float
        Receiver noise power (linear scale).
    ue_powers : sequence of float
        Transmit power ``p_k`` of each UE (linear scale).
    constellation_id : ConstellationId
    correlation : CorrelationModel
    large_scale_gain : float or K x L table
        ``beta_kl``; a scalar is broadcast to every pair.
    seed : int
        Master seed (64-bit unsigned).
    hypothesis_cap : int
        Upper bound on ``M**K`` for exhaustive (exact) detectors.
    """

    L: int
    N: int
    K: int
    tau_c: int
    tau_p: int
    noise_power: float
    ue_powers: tuple[float, ...]
    constellation_id: ConstellationId = ConstellationId.QPSK
    correlation: CorrelationModel = field(default_factory=CorrelationModel)
    large_scale_gain: float | tuple[tuple[float, ...], ...] = 1.0
    seed: int = 0
    hypothesis_cap: int = DEFAULT_HYPOTHESIS_CAP

    def __post_init__(self) -> None:
        for name in ("L", "N", "K", "tau_c", "tau_p", "hypothesis_cap"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.tau_p > self.tau_c:
            raise ConfigError(f"tau_p={self.tau_p} exceeds tau_c={self.tau_c}")
        if not (np.isfinite(self.noise_power) and self.noise_power > 0):
            raise ConfigError(f"noise_power must be positive, got {self.noise_power}")
        powers = tuple(float(p) for p in np.atleast_1d(self.ue_powers))
        if len(powers) != self.K:
            raise ConfigError(f"expected {self.K} UE powers, got {len(powers)}")
        if any(not np.isfinite(p) or p < 0 for p in powers):
            raise ConfigError("UE powers must be finite and non-negative")
        object.__setattr__(self, "ue_powers", powers)
        try:
            object.__setattr__(self, "constellation_id", ConstellationId(self.constellation_id))
        except ValueError as exc:
            raise ConfigError(f"unsupported constellation {self.constellation_id!r}") from exc
        if isinstance(self.correlation, Mapping):
            object.__setattr__(self, "correlation", CorrelationModel(**self.correlation))
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

        beta = np.asarray(self.large_scale_gain, dtype=float)
        if beta.ndim == 0:
            beta = np.full((self.K, self.L), float(beta))
        if beta.shape != (self.K, self.L):
            raise ConfigError(f"large_scale_gain must be scalar or {self.K}x{self.L}")
        if not np.all(np.isfinite(beta)) or np.any(beta <= 0):
            raise ConfigError("all large-scale gains must be positive")
        object.__setattr__(self, "large_scale_gain", tuple(map(tuple, beta.tolist())))

    @property
    def beta(self) -> np.ndarray:
        """K x L array of large-scale gains."""
        return np.array(self.large_scale_gain)

    @property
    def powers(self) -> np.ndarray:
        return np.array(self.ue_powers)

    def to_dict(self) -> dict[str, Any]:
        return {
            "L": self.L,
            "N": self.N,
            "K": self.K,
            "tau_c": self.tau_c,
            "tau_p": self.tau_p,
            "noise_power": self.noise_power,
            "ue_powers": list(self.ue_powers),
            "constellation_id": self.constellation_id.value,
            "correlation": {"kind": self.correlation.kind, "rho": self.correlation.rho},
            "large_scale_gain": [list(row) for row in self.large_scale_gain],
            "seed": int(self.seed),
            "hypothesis_cap": self.hypothesis_cap,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SystemConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario fields: {sorted(unknown)}")
        kwargs = dict(data)
        if "ue_powers" in kwargs:
            kwargs["ue_powers"] = tuple(np.atleast_1d(kwargs["ue_powers"]).tolist())
        elif "K" in kwargs:
            kwargs["ue_powers"] = (1.0,) * int(kwargs["K"])
        gain = kwargs.get("large_scale_gain")
        if isinstance(gain, list):
            kwargs["large_scale_gain"] = tuple(tuple(row) for row in gain)
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class Constellation:
    """Unit-average-energy alphabet with its bit labels.

    ``labels[j]`` is the m-bit pattern of ``symbols[j]``.
    """

    name: str
    symbols: np.ndarray
    labels: np.ndarray
    bits_per_symbol: int
    is_constant_modulus: bool

    @property
    def order(self) -> int:
        return len(self.symbols)

    def index_of(self, bits: np.ndarray) -> np.ndarray:
        """Symbol indices for bit patterns along the last axis."""
        bits = np.asarray(bits, dtype=np.int64)
        weights = 1 << np.arange(self.bits_per_symbol - 1, -1, -1)
        return bits @ weights


def _gray_pam(bits_per_axis: int) -> dict[tuple[int, ...], float]:
    """Gray-labeled PAM levels, bit pattern 0...0 on the most positive level."""
    n_levels = 2**bits_per_axis
    levels = np.arange(n_levels - 1, -n_levels, -2, dtype=float)  # descending
    mapping = {}
    for position, level in enumerate(levels):
        gray = position ^ (position >> 1)
        pattern = tuple(int(b) for b in np.binary_repr(gray, width=bits_per_axis))
        mapping[pattern] = level
    return mapping


def build_constellation(constellation_id: ConstellationId | str) -> Constellation:
    """Construct a Gray-labeled, unit-average-energy constellation."""
    try:
        cid = ConstellationId(constellation_id)
    except ValueError as exc:
        raise ValueError(f"unsupported constellation {constellation_id!r}") from exc

    if cid is ConstellationId.BPSK:
        m = 1
        labels = np.array([[0], [1]], dtype=np.uint8)
        symbols = np.array([1.0 + 0j, -1.0 + 0j])
    else:
        m = 2 if cid is ConstellationId.QPSK else 4
        half = m // 2
        pam = _gray_pam(half)
        labels = np.array(list(itertools.product((0, 1), repeat=m)), dtype=np.uint8)
        symbols = np.array(
            [pam[tuple(lab[:half])] + 1j * pam[tuple(lab[half:])] for lab in labels]
        )
        symbols /= np.sqrt(np.mean(np.abs(symbols) ** 2))

    magnitudes = np.abs(symbols)
    return Constellation(
        name=cid.value,
        symbols=_frozen(symbols),
        labels=_frozen(labels),
        bits_per_symbol=m,
        is_constant_modulus=bool(np.ptp(magnitudes) < 1e-12),
    )


@dataclass(frozen=True)
class HypothesisSet:
    """Every transmit vector in ``M**K`` with its bit pattern.

    Attributes
    ----------
    symbols : (H, K) complex
        Power-scaled symbol vectors, ``s_k = sqrt(p_k) * a_j``.
    indices : (H, K) int
        Constellation index of each UE's symbol.
    bits : (H, m*K) uint8
        Concatenated per-UE labels; UE 1 owns the first m bits.
    """

    constellation: Constellation
    symbols: np.ndarray
    indices: np.ndarray
    bits: np.ndarray

    def __len__(self) -> int:
        return len(self.symbols)

    @property
    def K(self) -> int:
        return self.symbols.shape[1]

    @property
    def n_bits(self) -> int:
        return self.bits.shape[1]

    def index_of_bits(self, bits: np.ndarray) -> int:
        """Hypothesis index carrying the given mK-bit pattern."""
        m = self.constellation.bits_per_symbol
        per_ue = self.constellation.index_of(np.asarray(bits).reshape(self.K, m))
        M = self.constellation.order
        return int(per_ue @ (M ** np.arange(self.K - 1, -1, -1)))


def enumerate_hypotheses(
    constellation: Constellation,
    K: int,
    ue_powers: Sequence[float],
    cap: int = DEFAULT_HYPOTHESIS_CAP,
) -> HypothesisSet:
    """Enumerate all ``M**K`` transmit vectors, UE 1 as most significant digit.

    Raises
    ------
    HypothesisCapError
        If ``M**K`` exceeds ``cap``.
    """
    M = constellation.order
    count = M**K
    if count > cap:
        raise HypothesisCapError(
            f"{constellation.name} with K={K} gives {count} hypotheses (cap {cap}); "
            "exact detectors are infeasible, use the max-log or simplified detectors only "
            "or raise the cap"
        )
    powers = np.asarray(ue_powers, dtype=float)
    if powers.shape != (K,):
        raise ValueError(f"expected {K} UE powers, got shape {powers.shape}")

    indices = np.array(list(itertools.product(range(M), repeat=K)), dtype=np.int64).reshape(count, K)
    symbols = constellation.symbols[indices] * np.sqrt(powers)
    bits = constellation.labels[indices].reshape(count, K * constellation.bits_per_symbol)
    return HypothesisSet(
        constellation=constellation,
        symbols=_frozen(symbols),
        indices=_frozen(indices),
        bits=_frozen(np.ascontiguousarray(bits)),
    )


def bits_to_symbol_vector(
    bits: Sequence[int] | np.ndarray, constellation: Constellation, ue_powers: Sequence[float]
) -> np.ndarray:
    """Map ``m*K`` bits to the K-vector of power-scaled symbols."""
    bits = np.asarray(bits, dtype=np.int64)
    powers = np.asarray(ue_powers, dtype=float)
    m = constellation.bits_per_symbol
    if bits.ndim != 1 or bits.size != m * powers.size:
        raise ValueError(f"expected {m * powers.size} bits, got {bits.size}")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0 or 1")
    idx = constellation.index_of(bits.reshape(powers.size, m))
    return constellation.symbols[idx] * np.sqrt(powers)


def symbol_vector_to_bits(
    s: np.ndarray, constellation: Constellation, ue_powers: Sequence[float]
) -> np.ndarray:
    """Inverse of :func:`bits_to_symbol_vector` (nearest-point labeling)."""
    powers = np.asarray(ue_powers, dtype=float)
    unit = np.asarray(s) / np.where(powers > 0, np.sqrt(powers), 1.0)
    idx = np.argmin(np.abs(unit[:, None] - constellation.symbols[None, :]), axis=1)
    return constellation.labels[idx].reshape(-1).copy()


def check_hypothesis_budget(config: SystemConfig) -> int:
    """Return ``M**K`` for ``config``; raise if it exceeds the configured cap."""
    m = {ConstellationId.BPSK: 1, ConstellationId.QPSK: 2, ConstellationId.QAM16: 4}[
        config.constellation_id
    ]
    count = 2 ** (m * config.K)
    if count > config.hypothesis_cap:
        raise HypothesisCapError(
            f"{config.constellation_id.value} with K={config.K} gives {count} hypotheses "
            f"(cap {config.hypothesis_cap}); use max-log/simplified detectors only"
        )
    return count


def snr_db_to_noise_power(snr_db: float, reference_power: float = 1.0) -> float:
    """Noise power giving ``reference_power / sigma^2`` equal to ``snr_db``."""
    return reference_power * math.pow(10.0, -snr_db / 10.0)
