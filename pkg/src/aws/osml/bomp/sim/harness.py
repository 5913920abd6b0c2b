#  Copyright 2023-2026 Amazon.com, Inc. or its affiliates.

"""
Monte Carlo driver: sweeps SNR points and stopping rules, aggregates iteration counts, NMSE,
support detection and symbol error rates, and writes one CSV row per (rule, SNR) cell.
"""

import logging
import math
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Callable, Collection, Dict, List, Optional, Sequence, Tuple

import numpy as np
import orjson
import pandas as pd
import scipy.linalg as spla

from ..coding import PacketCodec
from ..comms import CommsParams, generate_comms_instance, run_icbomp
from ..errors import BompError, ConfigError, ParameterError, TrialError
from ..model import ModelParams, generate_instance
from ..numerics import make_rng, sample_complex_gaussian, std_normal_inv_cdf
from ..recovery import run_bomp
from ..sim_utils import db_to_linear, worker_count
from ..stopping import (
    DerivedThreshold,
    EnergyContext,
    MaxIterations,
    RelativeChange,
    ResidualEnergy,
    StoppingRule,
    ThresholdParams,
)

logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    "scenario",
    "rule",
    "snr_db",
    "mean_iterations",
    "nmse",
    "detection_prob",
    "detection_all_prob",
    "ser",
    "trials",
    "wall_ms",
]
CSV_FLOAT_FORMAT = "%.10g"
SCENARIOS = ("bomp", "icbomp")

PRESETS: Dict[str, Dict[str, object]] = {
    "desk-bomp": {"scenario": "bomp", "N": 128, "d": 10, "M": 400, "N_a": 8},
    "paper-bomp": {"scenario": "bomp", "N": 640, "d": 50, "M": 2000, "N_a": 16},
    "desk-icbomp": {"scenario": "icbomp", "N": 64, "N_a": 4, "d": 48, "M_ant": 4, "T": 240},
    "paper-icbomp": {"scenario": "icbomp", "N": 640, "N_a": 16, "d": 200, "M_ant": 8, "T": 1000},
}
# full-size aliases
PRESETS["full-bomp"] = PRESETS["paper-bomp"]
PRESETS["full-icbomp"] = PRESETS["paper-icbomp"]


@dataclass(frozen=True)
class RuleSpec:
    """
    A stopping rule as named on the command line. Values that depend on the SNR cell (the noise
    energy threshold) or on the instance (the known sparsity) are resolved late.

    :param name: One of derived, relchange, energy, maxiter, oracle
    :param value: Optional explicit parameter (epsilon1, epsilon2 or K)
    """

    name: str
    value: Optional[float] = None

    @property
    def label(self) -> str:
        return self.name if self.value is None else f"{self.name}:{self.value:g}"

    def resolve(self, thresholds: ThresholdParams, noise_energy: float, sparsity: int) -> StoppingRule:
        if self.name == "derived":
            return DerivedThreshold(thresholds)
        if self.name == "relchange":
            return RelativeChange(0.25 if self.value is None else self.value)
        if self.name == "energy":
            return ResidualEnergy(noise_energy if self.value is None else self.value)
        if self.name == "maxiter":
            return MaxIterations(30 if self.value is None else int(self.value))
        if self.name == "oracle":
            return MaxIterations(sparsity)
        raise ConfigError(f"Unknown stopping rule '{self.name}'")


def parse_rule(token: str) -> RuleSpec:
    """
    Parse a rule token such as ``derived``, ``relchange:0.25``, ``energy``, ``maxiter:30`` or
    ``oracle``.
    """
    name, _, raw = token.strip().partition(":")
    name = name.lower()
    if name not in ("derived", "relchange", "energy", "maxiter", "oracle"):
        raise ConfigError(f"Unknown stopping rule '{token}'")
    if not raw:
        return RuleSpec(name)
    if name in ("derived", "oracle"):
        raise ConfigError(f"Rule '{name}' takes no parameter")
    try:
        value = float(raw)
    except ValueError as err:
        raise ConfigError(f"Rule parameter in '{token}' is not a number") from err
    return RuleSpec(name, value)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything needed to reproduce a sweep.

    :param scenario: bomp or icbomp
    :param snr_db: SNR grid in dB (1/sigma^2 for bomp, rho0 for icbomp)
    :param rules: Stopping rules to compare
    :param trials: Independent trials per cell
    :param seed: Master seed
    :param out: CSV destination, or None to skip writing
    :param p_m: Missed-detection probability of the derived threshold
    :param p_f: False-detection probability of the derived threshold
    :param N: Blocks (bomp) or users (icbomp)
    :param d: Block length
    :param N_a: Nonzero blocks or active users
    :param M: Measurements (bomp)
    :param M_ant: Antennas (icbomp)
    :param T: Symbol-time length (icbomp)
    :param max_iter_guard: Iteration cap; None picks min(30, floor((M - 1) / d))
    :param record_wall_time: Write measured wall time, or 0 for byte-comparable output
    :param workers: Worker threads per cell; None reads BOMP_SIM_WORKERS
    """

    scenario: str = "bomp"
    snr_db: Tuple[float, ...] = (20.0,)
    rules: Tuple[RuleSpec, ...] = (RuleSpec("derived"),)
    trials: int = 10
    seed: int = 0
    out: Optional[Path] = None
    p_m: float = 0.001
    p_f: float = 0.005
    N: int = 128
    d: int = 10
    N_a: int = 8
    M: int = 400
    M_ant: int = 4
    T: int = 240
    max_iter_guard: Optional[int] = None
    record_wall_time: bool = True
    workers: Optional[int] = None

    def validate(self) -> "ExperimentConfig":
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"Scenario must be one of {SCENARIOS}, got '{self.scenario}'")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not self.snr_db:
            raise ConfigError("SNR grid is empty")
        if not self.rules:
            raise ConfigError("No stopping rules given")
        try:
            self.thresholds()
            if self.scenario == "bomp":
                self.model_params(self.snr_db[0]).validate()
            else:
                self.comms_params(self.snr_db[0]).validate()
        except ParameterError as err:
            raise ConfigError(str(err)) from err
        return self

    def thresholds(self) -> ThresholdParams:
        return ThresholdParams(p_m=self.p_m, p_f=self.p_f)

    def model_params(self, snr_db: float) -> ModelParams:
        return ModelParams(N=self.N, d=self.d, M=self.M, N_a=self.N_a, sigma2=1.0 / db_to_linear(snr_db), seed=self.seed)

    def comms_params(self, snr_db: float) -> CommsParams:
        return CommsParams(
            N=self.N, N_a=self.N_a, d=self.d, M_ant=self.M_ant, T=self.T, rho0=db_to_linear(snr_db), seed=self.seed
        )


@dataclass(frozen=True)
class TrialOutcome:
    iterations: int
    nmse: float
    detection: float
    detection_all: bool
    ser: Optional[float] = None


@dataclass(frozen=True)
class MetricsRow:
    """One aggregated (rule, SNR) cell."""

    scenario: str
    rule: str
    snr_db: float
    mean_iterations: float
    nmse: float
    detection_prob: float
    detection_all_prob: float
    ser: Optional[float]
    trials: int
    wall_ms: float


def nmse(truth: np.ndarray, estimate: np.ndarray) -> float:
    """
    Normalized mean square error ||s - s_hat||^2 / ||s||^2.

    :param truth: True signal
    :param estimate: Estimate of equal length
    :return: The error ratio
    """
    truth = np.asarray(truth)
    estimate = np.asarray(estimate)
    if truth.shape != estimate.shape:
        raise ParameterError("equal lengths", f"Truth {truth.shape} and estimate {estimate.shape} differ")
    energy = float(np.vdot(truth, truth).real)
    if energy == 0.0:
        raise ParameterError("||truth|| > 0", "NMSE is undefined for a zero-energy signal")
    error = truth - estimate
    return float(np.vdot(error, error).real) / energy


def detection_probability(true_support: Collection[int], detected: Collection[int]) -> float:
    """
    Fraction of supporting blocks that were detected.

    :param true_support: Indices of the nonzero blocks
    :param detected: Indices reported by the recovery
    :return: |true ∩ detected| / |true|
    """
    truth = set(true_support)
    if not truth:
        raise ParameterError("true support nonempty")
    return len(truth & set(detected)) / len(truth)


def symbol_error_rate(true_symbols: np.ndarray, decided_symbols: np.ndarray) -> float:
    """
    Fraction of mismatched QPSK symbols. Missing users should be passed as zeros so they count
    as errors.
    """
    true_symbols = np.asarray(true_symbols)
    decided_symbols = np.asarray(decided_symbols)
    if true_symbols.shape != decided_symbols.shape:
        raise ParameterError("equal lengths", f"{true_symbols.shape} vs {decided_symbols.shape} symbols")
    if true_symbols.size == 0:
        raise ParameterError("nonempty symbols")
    return float(np.mean(np.abs(true_symbols - decided_symbols) > 1e-6))


def binomial_interval(p: float, n: int, confidence: float = 0.99) -> Tuple[float, float]:
    """Normal-approximation interval in which the frequency of n Bernoulli(p) draws falls."""
    z = std_normal_inv_cdf(0.5 + confidence / 2.0)
    half = z * math.sqrt(p * (1.0 - p) / n)
    return p - half, p + half


def run_bomp_trial(config: ExperimentConfig, spec: RuleSpec, snr_db: float, keys: Sequence[int]) -> TrialOutcome:
    params = config.model_params(snr_db)
    instance = generate_instance(params, make_rng(config.seed, *keys))
    rule = spec.resolve(config.thresholds(), params.M * params.sigma2, params.N_a)
    result = run_bomp(instance, rule, config.max_iter_guard)
    detection = detection_probability(instance.support, result.lam)
    return TrialOutcome(
        iterations=result.iterations,
        nmse=nmse(instance.s, result.estimate_full),
        detection=detection,
        detection_all=detection == 1.0,
    )


def run_icbomp_trial(config: ExperimentConfig, spec: RuleSpec, snr_db: float, keys: Sequence[int]) -> TrialOutcome:
    params = config.comms_params(snr_db)
    codec = PacketCodec(params.d)
    instance = generate_comms_instance(params, make_rng(config.seed, *keys), codec)
    rule = spec.resolve(config.thresholds(), float(params.measurements), params.N_a)
    result = run_icbomp(instance, codec, rule, config.max_iter_guard)

    found = set(result.decoded_users) | set(result.detected_not_decoded)
    detection = detection_probability(instance.active, found)
    columns = np.concatenate([np.arange(u * params.d, (u + 1) * params.d) for u in instance.active])
    return TrialOutcome(
        iterations=result.iterations,
        nmse=nmse(instance.s, result.estimate_full),
        detection=detection,
        detection_all=detection == 1.0,
        ser=symbol_error_rate(instance.s[columns], result.symbol_decisions[columns]),
    )


TRIAL_RUNNERS: Dict[str, Callable[[ExperimentConfig, RuleSpec, float, Sequence[int]], TrialOutcome]] = {
    "bomp": run_bomp_trial,
    "icbomp": run_icbomp_trial,
}


def _fmean(values: List[float]) -> float:
    # exactly rounded sum, so the aggregate does not depend on trial order
    return math.fsum(values) / len(values)


def aggregate(
    config: ExperimentConfig, spec: RuleSpec, snr_db: float, outcomes: List[TrialOutcome], wall_ms: float
) -> MetricsRow:
    sers = [o.ser for o in outcomes if o.ser is not None]
    return MetricsRow(
        scenario=config.scenario,
        rule=spec.label,
        snr_db=snr_db,
        mean_iterations=_fmean([float(o.iterations) for o in outcomes]),
        nmse=_fmean([o.nmse for o in outcomes]),
        detection_prob=_fmean([o.detection for o in outcomes]),
        detection_all_prob=_fmean([1.0 if o.detection_all else 0.0 for o in outcomes]),
        ser=_fmean(sers) if sers else None,
        trials=len(outcomes),
        wall_ms=wall_ms if config.record_wall_time else 0.0,
    )


def run_cell(config: ExperimentConfig, spec: RuleSpec, snr_index: int) -> MetricsRow:
    """
    Run every trial of one (rule, SNR) cell on a thread pool. Trial t at SNR point i draws its
    instance from the stream keyed (seed, i, t), so all rules at one SNR see the same instances.

    :param config: Experiment configuration
    :param spec: Rule of the cell
    :param snr_index: Position of the cell in the SNR grid
    :return: The aggregated row
    """
    snr_db = config.snr_db[snr_index]
    runner = TRIAL_RUNNERS[config.scenario]

    def run_trial(trial: int) -> TrialOutcome:
        try:
            return runner(config, spec, snr_db, (snr_index, trial))
        except BompError as err:
            raise TrialError(config.scenario, spec.label, snr_db, trial, err) from err
        except np.linalg.LinAlgError as err:
            raise TrialError(config.scenario, spec.label, snr_db, trial, err) from err

    start = time.perf_counter()
    workers = config.workers or worker_count()
    with ThreadPoolExecutor(max_workers=workers) as executor:
        outcomes = list(executor.map(run_trial, range(config.trials)))
    wall_ms = (time.perf_counter() - start) * 1000.0

    row = aggregate(config, spec, snr_db, outcomes, wall_ms)
    logger.info(
        f"Cell {config.scenario}/{row.rule} at {snr_db:g} dB: iterations={row.mean_iterations:.3f} "
        f"nmse={row.nmse:.4g} detection={row.detection_prob:.4f} trials={row.trials} wall_ms={wall_ms:.0f}"
    )
    return row


def rows_to_frame(rows: Sequence[MetricsRow]) -> pd.DataFrame:
    return pd.DataFrame([asdict(row) for row in rows], columns=CSV_COLUMNS)


def write_csv(rows: Sequence[MetricsRow], path: Path) -> None:
    """
    Write rows atomically: the CSV goes to a temporary file in the destination directory and is
    renamed over the target once complete. Missing SER values are left empty.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = rows_to_frame(rows)
    handle, temp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(handle, "w", newline="") as stream:
            frame.to_csv(stream, index=False, float_format=CSV_FLOAT_FORMAT, na_rep="", lineterminator="\n")
        os.replace(temp_name, path)
    except BaseException:
        if os.path.exists(temp_name):
            os.unlink(temp_name)
        raise


def write_manifest(config: ExperimentConfig, rows: Sequence[MetricsRow], path: Path) -> None:
    """Store the configuration and rows next to the CSV as JSON."""
    try:
        package_version = version("osml-bomp")
    except PackageNotFoundError:
        package_version = "unknown"
    document = {
        "version": package_version,
        "config": {
            **asdict(config),
            "rules": [spec.label for spec in config.rules],
            "out": None if config.out is None else str(config.out),
        },
        "rows": [asdict(row) for row in rows],
    }
    Path(path).write_bytes(orjson.dumps(document, option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY))


def run_sweep(config: ExperimentConfig) -> List[MetricsRow]:
    """
    Run every (rule, SNR) cell of an experiment and write the CSV when an output path is set.

    :param config: Validated experiment configuration
    :return: One MetricsRow per cell, rules outermost
    """
    config.validate()
    rows = [
        run_cell(config, spec, snr_index) for spec in config.rules for snr_index in range(len(config.snr_db))
    ]
    if config.out is not None:
        write_csv(rows, config.out)
        write_manifest(config, rows, Path(config.out).with_suffix(".json"))
        logger.info(f"Wrote {len(rows)} rows to {config.out}")
    return rows


@dataclass
class CalibrationReport:
    """
    Empirical behaviour of the residual energy at a fixed iteration against its model.

    :param n_a: Undetected supporting blocks simulated
    :param cols_in_ls: Columns in the least-squares fit
    :param energies: Simulated residual energies
    :param model_mean: Model mean
    :param model_variance: Model variance
    :param eta_missed: Missed-detection threshold
    :param eta_false: False-detection threshold
    """

    n_a: int
    cols_in_ls: int
    energies: np.ndarray = field(repr=False)
    model_mean: float
    model_variance: float
    eta_missed: float
    eta_false: float

    @property
    def trials(self) -> int:
        return int(self.energies.size)

    @property
    def empirical_mean(self) -> float:
        return float(np.mean(self.energies))

    @property
    def empirical_variance(self) -> float:
        return float(np.var(self.energies, ddof=1))

    @property
    def missed_rate(self) -> float:
        """Frequency of E_k <= eta_k1."""
        return float(np.mean(self.energies <= self.eta_missed))

    @property
    def false_rate(self) -> float:
        """Frequency of E_k >= eta_k0."""
        return float(np.mean(self.energies >= self.eta_false))


def calibrate_energy(
    M: int,
    d: int,
    k: int,
    n_a: int,
    sigma2: float,
    thresholds: ThresholdParams,
    trials: int,
    seed: int = 0,
    signal: str = "gaussian",
    exact_chi2: bool = False,
) -> CalibrationReport:
    """
    Draw residual energies after k iterations with exactly n_a supporting blocks outside the
    detected set. The detected set is drawn independently of the matrix, so detected supporting
    blocks cancel exactly and only the k detected blocks, the n_a missing ones and the noise need
    to be simulated.

    :param M: Measurements
    :param d: Block length
    :param k: Detected blocks
    :param n_a: Undetected supporting blocks
    :param sigma2: Noise variance
    :param thresholds: Probabilities for the thresholds; n_a_assumed applies to the missed one
    :param trials: Number of energies to draw
    :param seed: Master seed
    :param signal: "gaussian" for CN(0, 1) block entries, "qpsk" for constant-modulus entries
    :param exact_chi2: Use chi-square instead of Gaussian threshold quantiles
    :return: The CalibrationReport
    """
    if signal not in ("gaussian", "qpsk"):
        raise ParameterError("signal in {gaussian, qpsk}", f"Unknown signal model '{signal}'")
    if trials < 1:
        raise ParameterError("trials >= 1")
    context = EnergyContext.for_bomp(M, d, sigma2)
    cols = k * d
    energies = np.empty(trials)
    for trial in range(trials):
        rng = make_rng(seed, trial)
        observation = np.zeros(M, dtype=np.complex128)
        if n_a:
            missing = sample_complex_gaussian(rng, 1.0 / M, (M, n_a * d))
            if signal == "qpsk":
                values = np.exp(1j * (np.pi / 4 + np.pi / 2 * rng.integers(0, 4, n_a * d)))
            else:
                values = sample_complex_gaussian(rng, 1.0, n_a * d)
            observation += missing @ values
        if sigma2 > 0:
            observation += sample_complex_gaussian(rng, sigma2, M)
        if cols:
            q_factor, _ = spla.qr(sample_complex_gaussian(rng, 1.0 / M, (M, cols)), mode="economic")
            observation = observation - q_factor @ (q_factor.conj().T @ observation)
        energies[trial] = float(np.vdot(observation, observation).real)

    stats = context.stats(cols, n_a)
    return CalibrationReport(
        n_a=n_a,
        cols_in_ls=cols,
        energies=energies,
        model_mean=stats.mu,
        model_variance=stats.sigma2,
        eta_missed=context.missed_threshold(cols, thresholds, exact_chi2),
        eta_false=context.false_threshold(cols, thresholds, exact_chi2),
    )

