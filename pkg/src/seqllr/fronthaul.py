"""
Fronthaul load on the AP L <-> CPU link, in real symbols per coherence block.

Centralized: every AP forwards its raw observations (2N reals per channel
use, pilots included), so ``2 N L tau_c``. Sequential: AP L forwards
``a_L`` each data channel use and ``M_L`` once per block, so
``2 K (tau_c - tau_p) + K^2``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import asdict, dataclass, field
from typing import Iterable

from .model import ConstellationId, SystemConfig

_BITS_PER_SYMBOL = {ConstellationId.BPSK: 1, ConstellationId.QPSK: 2, ConstellationId.QAM16: 4}


def centralized_load(config: SystemConfig) -> int:
    return 2 * config.N * config.L * config.tau_c


def sequential_load(config: SystemConfig) -> int:
    K = config.K
    return 2 * K * (config.tau_c - config.tau_p) + K * K


def exact_mode_overhead(config: SystemConfig) -> int:
    """Reals per channel use if per-hypothesis statistics were forwarded.

    Informational only; not part of the sequential load.
    """
    K = config.K
    n_hyp = 2 ** (_BITS_PER_SYMBOL[config.constellation_id] * K)
    return n_hyp * (K * K + 2 * K + 4)


@dataclass(frozen=True)
class FronthaulReport:
    L: int
    N: int
    K: int
    tau_c: int
    tau_p: int
    centralized_load: int
    sequential_load: int
    saving_percent: float
    exact_mode_overhead: int
    breakdown: dict[str, int] = field(default_factory=dict)
    label: str = ""

    def to_row(self) -> dict[str, object]:
        row = asdict(self)
        row["breakdown"] = json.dumps(self.breakdown, sort_keys=True)
        return row


def saving_report(config: SystemConfig) -> FronthaulReport:
    """Loads, saving percentage and the itemized contributions."""
    central = centralized_load(config)
    sequential = sequential_load(config)
    if central <= 0:
        raise ValueError("centralized load must be positive")
    N, L, K = config.N, config.L, config.K
    data_uses = config.tau_c - config.tau_p
    breakdown = {
        "centralized_data": 2 * N * L * data_uses,
        "centralized_pilots": 2 * N * L * config.tau_p,
        "sequential_a_per_use": 2 * K * data_uses,
        "sequential_M_per_block": K * K,
        # b_L and c_L travel with the chain but are left out of sequential_load
        "uncounted_scalars_b_c": 2,
    }
    return FronthaulReport(
        L=L,
        N=N,
        K=K,
        tau_c=config.tau_c,
        tau_p=config.tau_p,
        centralized_load=central,
        sequential_load=sequential,
        saving_percent=100.0 * (1.0 - sequential / central),
        exact_mode_overhead=exact_mode_overhead(config),
        breakdown=breakdown,
    )


def _point(L: int, N: int, K: int, tau_c: int, tau_p: int, label: str) -> FronthaulReport:
    config = SystemConfig(L=L, N=N, K=K, tau_c=tau_c, tau_p=tau_p, noise_power=1.0, ue_powers=(1.0,) * K)
    return dataclasses.replace(saving_report(config), label=label)


def ratio_sweep(
    ratio: int, L_values: Iterable[int], N: int = 4, tau_c: int = 2000
) -> list[FronthaulReport]:
    """Fixed ``L/K = ratio`` with ``tau_p = K``; L values not divisible by ratio are skipped."""
    reports = []
    for L in L_values:
        if L % ratio:
            continue
        K = L // ratio
        reports.append(_point(L, N, K, tau_c, K, f"L/K={ratio}"))
    return reports


def fixed_k_sweep(
    K: int, L_values: Iterable[int], N: int = 4, tau_c: int = 2000, tau_p: int | None = None
) -> list[FronthaulReport]:
    """Fixed K (``tau_p = K`` unless given) over a range of L."""
    tau_p = K if tau_p is None else tau_p
    return [_point(L, N, K, tau_c, tau_p, f"K={K}") for L in L_values]
