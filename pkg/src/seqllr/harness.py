"""
Monte Carlo BER experiments, the randomized equivalence suite and fronthaul sweeps.

Seeding: the random stream of trial ``t`` at SNR grid index ``j`` is
``SeedSequence(seed, spawn_key=(j, t))``. Trials are therefore independent,
reproducible and can be evaluated in any order. All detectors of one SNR
point see the same realizations.
"""

from __future__ import annotations

import dataclasses
import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import detect
from .channel import assign_pilots, build_profile, draw_channel, mmse_estimate, perfect_csi, pilot_phase
from .fronthaul import FronthaulReport, fixed_k_sweep, ratio_sweep, saving_report
from .model import (
    ConfigError,
    ConstellationId,
    CorrelationModel,
    HypothesisSet,
    SystemConfig,
    bits_to_symbol_vector,
    build_constellation,
    enumerate_hypotheses,
    snr_db_to_noise_power,
)
from .statistics import run_chain, uplink_receive

log = logging.getLogger(__name__)

DETECTORS = ("map_simplified", "map_exact", "llr_exact", "llr_simplified", "llr_maxlog", "llr_maxlog_exact")
EXACT_DETECTORS = frozenset({"map_exact", "llr_exact", "llr_maxlog_exact"})
# simplified-only runs keep no per-hypothesis statistics, so they may enumerate more
SIMPLIFIED_HYPOTHESIS_CAP = 2**24

EQUIVALENCE_TOL = 1e-9


def trial_rng(seed: int, snr_index: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(snr_index, trial)))


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: SystemConfig
    snr_db: tuple[float, ...]
    detectors: tuple[str, ...] = ("map_simplified", "llr_simplified")
    trials: int = 1000
    perfect_csi: bool = False
    cross_check: bool = True
    output_path: str | None = None

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if len(self.snr_db) == 0:
            raise ConfigError("snr grid is empty")
        unknown = set(self.detectors) - set(DETECTORS)
        if unknown or not self.detectors:
            raise ConfigError(f"unknown detectors {sorted(unknown)}; choose from {DETECTORS}")


@dataclass(frozen=True)
class BERRecord:
    snr_db: float
    detector: str
    bit_errors: int
    bits_total: int
    ber: float
    trials: int
    seed: int
    # trials whose decisions differ from the centralized reference; None when not checked
    centralized_mismatches: int | None = None


def _hypotheses_for(config: SystemConfig, detectors: Iterable[str]) -> HypothesisSet:
    cap = config.hypothesis_cap if EXACT_DETECTORS & set(detectors) else max(
        config.hypothesis_cap, SIMPLIFIED_HYPOTHESIS_CAP
    )
    constellation = build_constellation(config.constellation_id)
    return enumerate_hypotheses(constellation, config.K, config.ue_powers, cap=cap)


def _decide(name: str, simplified, exact, hypotheses: HypothesisSet) -> np.ndarray:
    if name == "map_simplified":
        return detect.map_simplified(simplified, hypotheses).bits
    if name == "map_exact":
        return detect.map_exact(exact, hypotheses).bits
    if name == "llr_exact":
        return detect.hard_decision(detect.llr_exact(exact, hypotheses))
    if name == "llr_simplified":
        return detect.hard_decision(detect.llr_simplified(simplified, hypotheses))
    if name == "llr_maxlog":
        return detect.hard_decision(detect.llr_maxlog(simplified, hypotheses, "simplified"))
    if name == "llr_maxlog_exact":
        return detect.hard_decision(detect.llr_maxlog(exact, hypotheses, "exact"))
    raise ValueError(name)


def _decide_centralized(name: str, stacked_simplified, stacked_exact, hypotheses: HypothesisSet) -> np.ndarray:
    stacked = stacked_exact if name in EXACT_DETECTORS else stacked_simplified
    if name.startswith("map"):
        return detect.map_centralized_oracle(stacked.z, stacked.G, stacked.K, hypotheses).bits
    reduce = "max" if name.startswith("llr_maxlog") else "sum"
    llr = detect.llr_centralized_oracle(stacked.z, stacked.G, stacked.K, hypotheses, reduce=reduce)
    return detect.hard_decision(llr)


@functools.lru_cache(maxsize=32)
def _geometry(config: SystemConfig):
    return build_profile(config), assign_pilots(config.K, config.tau_p)


def run_trial(
    config: SystemConfig,
    hypotheses: HypothesisSet,
    detectors: Sequence[str],
    rng: np.random.Generator,
    use_perfect_csi: bool = False,
    cross_check: bool = False,
) -> tuple[np.ndarray, dict[str, np.ndarray], dict[str, np.ndarray]]:
    """One coherence block with one data channel use.

    Returns the transmitted bits, each detector's decided bits, and (when
    ``cross_check``) the centralized reference decisions.
    """
    profile, assignment = _geometry(config)
    realization = draw_channel(profile, rng)
    if use_perfect_csi:
        estimate = perfect_csi(realization, profile)
    else:
        despread = pilot_phase(realization, assignment, config, rng)
        estimate = mmse_estimate(despread, profile, assignment, config)

    bits = rng.integers(0, 2, hypotheses.n_bits)
    s = bits_to_symbol_vector(bits, hypotheses.constellation, config.ue_powers)
    y = uplink_receive(realization, s, config, rng)

    need_exact = bool(EXACT_DETECTORS & set(detectors))
    need_simplified = bool(set(detectors) - EXACT_DETECTORS)
    simplified = run_chain(estimate, y, config, "simplified") if need_simplified else None
    exact = run_chain(estimate, y, config, "exact", hypotheses) if need_exact else None
    decisions = {name: _decide(name, simplified, exact, hypotheses) for name in detectors}

    reference: dict[str, np.ndarray] = {}
    if cross_check:
        st_simple = detect.stack_model(estimate, y, config, mode="simplified") if need_simplified else None
        st_exact = detect.stack_model(estimate, y, config, hypotheses, mode="exact") if need_exact else None
        reference = {name: _decide_centralized(name, st_simple, st_exact, hypotheses) for name in detectors}
    return bits, decisions, reference


def run_ber(spec: ExperimentSpec) -> list[BERRecord]:
    """Uncoded BER of every requested detector on every SNR grid point."""
    base = spec.scenario
    hypotheses = _hypotheses_for(base, spec.detectors)
    records = []
    for j, snr in enumerate(spec.snr_db):
        config = dataclasses.replace(base, noise_power=snr_db_to_noise_power(snr))
        errors = dict.fromkeys(spec.detectors, 0)
        mismatches = dict.fromkeys(spec.detectors, 0)
        for t in range(spec.trials):
            bits, decisions, reference = run_trial(
                config,
                hypotheses,
                spec.detectors,
                trial_rng(base.seed, j, t),
                use_perfect_csi=spec.perfect_csi,
                cross_check=spec.cross_check,
            )
            for name, decided in decisions.items():
                errors[name] += int(np.count_nonzero(decided != bits))
                if spec.cross_check and not np.array_equal(decided, reference[name]):
                    mismatches[name] += 1
        bits_total = spec.trials * hypotheses.n_bits
        for name in spec.detectors:
            records.append(
                BERRecord(
                    snr_db=float(snr),
                    detector=name,
                    bit_errors=errors[name],
                    bits_total=bits_total,
                    ber=errors[name] / bits_total,
                    trials=spec.trials,
                    seed=int(base.seed),
                    centralized_mismatches=mismatches[name] if spec.cross_check else None,
                )
            )
        log.info("snr %.2f dB done: %s", snr, {n: errors[n] for n in spec.detectors})
    return records


# --- equivalence suite ------------------------------------------------------


@dataclass(frozen=True)
class EquivalenceSpec:
    constellations: tuple[str, ...] = ("BPSK", "QPSK", "16QAM")
    K_values: tuple[int, ...] = (1, 2, 3)
    L_values: tuple[int, ...] = (1, 2, 4)
    N_values: tuple[int, ...] = (1, 2)
    instances: int = 100
    snr_db_range: tuple[float, float] = (0.0, 10.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.instances < 1:
            raise ConfigError("instances must be at least 1")
        for cid in self.constellations:
            try:
                ConstellationId(cid)
            except ValueError as exc:
                raise ConfigError(f"unsupported constellation {cid!r}") from exc
        for name in ("K_values", "L_values", "N_values"):
            if not getattr(self, name) or min(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be non-empty positive integers")


@dataclass
class InvariantResult:
    invariant_name: str
    instances: int = 0
    max_abs_dev: float = 0.0
    max_rel_dev: float = 0.0
    passed: bool = True
    informational: bool = False

    def add(self, abs_dev: float, rel_dev: float, ok: bool) -> None:
        self.instances += 1
        self.max_abs_dev = max(self.max_abs_dev, float(abs_dev))
        self.max_rel_dev = max(self.max_rel_dev, float(rel_dev))
        self.passed = self.passed and bool(ok)

    def to_row(self) -> dict[str, Any]:
        return {
            "invariant_name": self.invariant_name,
            "instances": self.instances,
            "max_abs_dev": self.max_abs_dev,
            "max_rel_dev": self.max_rel_dev,
            "pass": self.passed,
        }


@dataclass(frozen=True)
class RandomInstance:
    config: SystemConfig
    hypotheses: HypothesisSet
    estimate: Any
    y: np.ndarray
    bits: np.ndarray


def random_instance(
    constellation_id: str,
    K: int,
    L: int,
    N: int,
    rng: np.random.Generator,
    snr_db_range: tuple[float, float] = (0.0, 10.0),
) -> RandomInstance:
    """A random scenario with imperfect CSI, correlation and possible pilot contamination."""
    config = SystemConfig(
        L=L,
        N=N,
        K=K,
        tau_c=100,
        tau_p=int(rng.integers(1, K + 1)),
        noise_power=snr_db_to_noise_power(rng.uniform(*snr_db_range)),
        ue_powers=tuple(rng.uniform(0.5, 1.5, K)),
        constellation_id=constellation_id,
        correlation=CorrelationModel("exponential", float(rng.uniform(0.0, 0.8))),
        large_scale_gain=tuple(map(tuple, rng.uniform(0.5, 2.0, (K, L)))),
    )
    profile = build_profile(config)
    assignment = assign_pilots(K, config.tau_p)
    realization = draw_channel(profile, rng)
    estimate = mmse_estimate(pilot_phase(realization, assignment, config, rng), profile, assignment, config)
    hypotheses = enumerate_hypotheses(build_constellation(constellation_id), K, config.ue_powers)
    bits = rng.integers(0, 2, hypotheses.n_bits)
    s = bits_to_symbol_vector(bits, hypotheses.constellation, config.ue_powers)
    y = uplink_receive(realization, s, config, rng)
    return RandomInstance(config, hypotheses, estimate, y, bits)


def _devs(x: np.ndarray, ref: np.ndarray) -> tuple[float, float]:
    diff = float(np.max(np.abs(np.asarray(x) - np.asarray(ref))))
    scale = float(np.max(np.abs(ref)))
    return diff, diff / scale if scale > 0 else diff


def check_instance(inst: RandomInstance, results: dict[str, InvariantResult]) -> None:
    """Evaluate every sequential-vs-centralized invariant on one instance."""
    config, hyps, est, y = inst.config, inst.hypotheses, inst.estimate, inst.y

    def record(name: str, abs_dev: float, rel_dev: float, ok: bool, informational: bool = False) -> None:
        res = results.setdefault(name, InvariantResult(name, informational=informational))
        res.add(abs_dev, rel_dev, ok)

    simple = run_chain(est, y, config, "simplified")
    exact = run_chain(est, y, config, "exact", hyps)
    st_simple = detect.stack_model(est, y, config, mode="simplified")
    st_exact = detect.stack_model(est, y, config, hyps, mode="exact")

    # fusion identities against the block-diagonal stacked model
    Kinv_G = np.linalg.solve(st_simple.K, st_simple.G)
    Kinv_z = np.linalg.solve(st_simple.K, st_simple.z)
    for name, value, ref in (
        ("fusion_M", simple.M, st_simple.G.conj().T @ Kinv_G),
        ("fusion_a", simple.a, st_simple.G.conj().T @ Kinv_z),
        ("fusion_b", simple.b, np.real(st_simple.z.conj() @ Kinv_z)),
        ("fusion_c", simple.c, np.linalg.slogdet(st_simple.K)[1]),
    ):
        a, r = _devs(value, ref)
        record(name, a, r, r < EQUIVALENCE_TOL)

    a, r = _devs(exact.log_d, -exact.c)
    record("log_d_equals_minus_c", a, r, a <= EQUIVALENCE_TOL * max(1.0, np.max(np.abs(exact.c))))

    llr_seq = detect.llr_exact(exact, hyps)
    llr_ref = detect.llr_centralized_oracle(st_exact.z, st_exact.G, st_exact.K, hyps)
    a, r = _devs(llr_seq, llr_ref)
    record("llr_exact_vs_centralized", a, r, a < EQUIVALENCE_TOL)

    map_seq = detect.map_exact(exact, hyps)
    map_ref = detect.map_centralized_oracle(st_exact.z, st_exact.G, st_exact.K, hyps)
    same = map_seq.hypothesis_index == map_ref.hypothesis_index
    record("map_exact_vs_centralized", 0.0 if same else 1.0, 0.0 if same else 1.0, same)

    llr_simple = detect.llr_simplified(simple, hyps)
    a, r = _devs(llr_simple, llr_seq)
    if hyps.constellation.is_constant_modulus:
        record("psk_llr_simplified_vs_exact", a, r, a < EQUIVALENCE_TOL)
        same = detect.map_simplified(simple, hyps).hypothesis_index == map_seq.hypothesis_index
        record("psk_map_simplified_vs_exact", 0.0 if same else 1.0, 0.0 if same else 1.0, same)
    else:
        record("nonpsk_llr_simplified_gap", a, r, True, informational=True)

    bound = math.log(len(hyps) / 2)
    maxlog = detect.llr_maxlog(exact, hyps, "exact")
    gap = float(np.max(np.abs(llr_seq - maxlog)))
    record("maxlog_bound", gap, gap / bound if bound > 0 else gap, gap <= bound + 1e-12)

    nonzero = np.all(np.abs(maxlog) > 0)
    consistent = (not nonzero) or np.array_equal(detect.hard_decision(maxlog), map_seq.bits)
    record("maxlog_sign_matches_map", 0.0 if consistent else 1.0, 0.0, consistent)


def run_equivalence(spec: EquivalenceSpec) -> list[InvariantResult]:
    """Run the invariant suite over every (constellation, K, L, N) cell."""
    results: dict[str, InvariantResult] = {}
    cell = 0
    for cid in spec.constellations:
        for K in spec.K_values:
            for L in spec.L_values:
                for N in spec.N_values:
                    for i in range(spec.instances):
                        rng = trial_rng(spec.seed, cell, i)
                        check_instance(random_instance(cid, K, L, N, rng, spec.snr_db_range), results)
                    cell += 1
    return list(results.values())


# --- fronthaul --------------------------------------------------------------


@dataclass(frozen=True)
class FronthaulSweepSpec:
    ratios: tuple[int, ...] = (2, 3, 4)
    fixed_K: tuple[int, ...] = (8,)
    L_values: tuple[int, ...] = tuple(range(12, 121, 12))
    N: int = 4
    tau_c: int = 2000
    point: SystemConfig | None = None


def run_fronthaul(spec: FronthaulSweepSpec) -> list[FronthaulReport]:
    """Saving curves: fixed L/K families and fixed-K sweeps, or a single point."""
    if spec.point is not None:
        return [dataclasses.replace(saving_report(spec.point), label="point")]
    reports = []
    for ratio in spec.ratios:
        reports += ratio_sweep(ratio, spec.L_values, spec.N, spec.tau_c)
    for K in spec.fixed_K:
        reports += fixed_k_sweep(K, [L for L in spec.L_values if L >= K], spec.N, spec.tau_c)
    return reports


# --- config parsing ---------------------------------------------------------


def _tuple(value: Any) -> tuple:
    return tuple(value) if isinstance(value, (list, tuple)) else (value,)


def experiment_from_dict(data: Mapping[str, Any], seed: int | None = None) -> ExperimentSpec:
    try:
        scenario = dict(data["scenario"])
        if seed is not None:
            scenario["seed"] = seed
        scenario.setdefault("noise_power", 1.0)
        return ExperimentSpec(
            scenario=SystemConfig.from_dict(scenario),
            snr_db=tuple(float(x) for x in _tuple(data["snr_db"])),
            detectors=_tuple(data.get("detectors", ExperimentSpec.detectors)),
            trials=int(data.get("trials", 1000)),
            perfect_csi=bool(data.get("perfect_csi", False)),
            cross_check=bool(data.get("cross_check", True)),
            output_path=data.get("output_path"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid experiment config: {exc}") from exc


def equivalence_from_dict(data: Mapping[str, Any], seed: int | None = None) -> EquivalenceSpec:
    defaults = EquivalenceSpec()
    try:
        return EquivalenceSpec(
            constellations=_tuple(data.get("constellations", defaults.constellations)),
            K_values=tuple(int(k) for k in _tuple(data.get("K", defaults.K_values))),
            L_values=tuple(int(k) for k in _tuple(data.get("L", defaults.L_values))),
            N_values=tuple(int(k) for k in _tuple(data.get("N", defaults.N_values))),
            instances=int(data.get("instances", defaults.instances)),
            snr_db_range=tuple(float(x) for x in data.get("snr_db_range", defaults.snr_db_range)),
            seed=int(seed if seed is not None else data.get("seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid equivalence config: {exc}") from exc


def fronthaul_from_dict(data: Mapping[str, Any]) -> FronthaulSweepSpec:
    try:
        if "scenario" in data:
            scenario = dict(data["scenario"])
            scenario.setdefault("noise_power", 1.0)
            return FronthaulSweepSpec(point=SystemConfig.from_dict(scenario))
        sweep = data.get("sweep", {})
        defaults = FronthaulSweepSpec()
        return FronthaulSweepSpec(
            ratios=tuple(int(r) for r in _tuple(sweep.get("ratios", defaults.ratios))),
            fixed_K=tuple(int(k) for k in _tuple(sweep.get("fixed_K", defaults.fixed_K))),
            L_values=tuple(int(L) for L in _tuple(sweep.get("L", defaults.L_values))),
            N=int(sweep.get("N", defaults.N)),
            tau_c=int(sweep.get("tau_c", defaults.tau_c)),
        )
    except (TypeError, ValueError, AttributeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid fronthaul config: {exc}") from exc
