#  Copyright 2023-2026 Amazon.com, Inc. or its affiliates.

"""
Residual-energy statistics and stopping rules for greedy block-sparse recovery.

After k iterations the residual energy E_k = ||r_k||^2 is modelled as Gaussian with mean
mu_k = (M - c)(sigma^2 + n_a P) and variance mu_k^2 / M, where c is the number of columns in the
least-squares fit, n_a the number of supporting blocks still undetected and P the per-entry power
one undetected block leaves in the residual. For BOMP P = d/M; for ICBOMP the roles of M, sigma^2
and P are taken by M_ant*T, 1 and rho0*d/T. Thresholds follow from the allowed missed and false
detection probabilities.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import ClassVar, Optional

import numpy as np
from scipy.stats import chi2

from .errors import DegenerateRegressionError, ParameterError
from .numerics import std_normal_inv_cdf

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResidualStats:
    """
    Model moments of the residual energy.

    :param mu: Mean of E_k
    :param sigma2: Variance of E_k
    :param per_entry_variance: Variance of one residual entry, mu / M
    """

    mu: float
    sigma2: float
    per_entry_variance: float


@dataclass(frozen=True)
class ThresholdParams:
    """
    :param p_m: Allowed missed-detection probability
    :param p_f: Allowed false-detection probability
    :param n_a_assumed: Undetected supporting blocks assumed when deriving the missed threshold
    """

    p_m: float = 0.001
    p_f: float = 0.005
    n_a_assumed: int = 1

    def __post_init__(self):
        if not 0.0 < self.p_m < 1.0:
            raise ParameterError("0 < p_m < 1", f"Missed-detection probability {self.p_m} outside (0, 1)")
        if not 0.0 < self.p_f < 1.0:
            raise ParameterError("0 < p_f < 1", f"False-detection probability {self.p_f} outside (0, 1)")
        if self.n_a_assumed < 1:
            raise ParameterError("n_a_assumed >= 1")


@dataclass(frozen=True)
class EnergyContext:
    """
    Dimensions that turn the generic residual-energy model into a concrete one.

    :param measurements: Length of the residual vector (M, or M_ant*T)
    :param d: Block length
    :param noise_var: Noise variance per residual entry (sigma^2, or 1)
    :param block_power: Per-entry residual power contributed by one undetected block
    """

    measurements: int
    d: int
    noise_var: float
    block_power: float

    @classmethod
    def for_bomp(cls, M: int, d: int, sigma2: float) -> "EnergyContext":
        return cls(measurements=M, d=d, noise_var=sigma2, block_power=d / M)

    @classmethod
    def for_icbomp(cls, M_ant: int, T: int, d: int, rho0: float) -> "EnergyContext":
        return cls(measurements=M_ant * T, d=d, noise_var=1.0, block_power=rho0 * d / T)

    def _free_dims(self, cols_in_ls: int) -> int:
        if cols_in_ls < 0:
            raise ParameterError("cols_in_ls >= 0")
        if cols_in_ls >= self.measurements:
            raise DegenerateRegressionError(
                "cols_in_ls < M",
                f"Least squares over {cols_in_ls} columns leaves no residual in {self.measurements} measurements",
            )
        return self.measurements - cols_in_ls

    def mean(self, cols_in_ls: int, n_a: int) -> float:
        if n_a < 0:
            raise ParameterError("n_a >= 0")
        return self._free_dims(cols_in_ls) * (self.noise_var + n_a * self.block_power)

    def stats(self, cols_in_ls: int, n_a: int) -> ResidualStats:
        mu = self.mean(cols_in_ls, n_a)
        # M(M+1)(mu/M)^2 - mu^2 reduces to mu^2 / M
        return ResidualStats(mu=mu, sigma2=mu * mu / self.measurements, per_entry_variance=mu / self.measurements)

    def missed_threshold(self, cols_in_ls: int, tp: ThresholdParams, exact_chi2: bool = False) -> float:
        mu = self.mean(cols_in_ls, tp.n_a_assumed)
        if exact_chi2:
            # E_k = (mu / 2M) * chi-square with 2M degrees of freedom
            return mu / (2.0 * self.measurements) * float(chi2.ppf(tp.p_m, 2 * self.measurements))
        return mu * (1.0 + std_normal_inv_cdf(tp.p_m) / math.sqrt(self.measurements))

    def false_threshold(self, cols_in_ls: int, tp: ThresholdParams, exact_chi2: bool = False) -> float:
        free = self._free_dims(cols_in_ls)
        if exact_chi2:
            mu = free * self.noise_var
            return mu / (2.0 * self.measurements) * float(chi2.isf(tp.p_f, 2 * self.measurements))
        return free * (1.0 - std_normal_inv_cdf(tp.p_f) / math.sqrt(self.measurements)) * self.noise_var

    def threshold(self, cols_in_ls: int, tp: ThresholdParams, exact_chi2: bool = False) -> float:
        eta = min(
            self.missed_threshold(cols_in_ls, tp, exact_chi2),
            self.false_threshold(cols_in_ls, tp, exact_chi2),
        )
        # negative when Phi^-1(p_m)/sqrt(M) < -1; never stop on it
        return max(eta, 0.0)


def residual_mean(M: int, cols_in_ls: int, d: int, n_a: int, sigma2: float) -> float:
    """
    Mean residual energy mu_k = (M - cols_in_ls)(sigma^2 + n_a d / M).

    :param M: Measurement count
    :param cols_in_ls: Columns in the least-squares fit (k*d for BOMP)
    :param d: Block length
    :param n_a: Supporting blocks not yet detected
    :param sigma2: Noise variance
    :return: Expected residual energy
    """
    return EnergyContext.for_bomp(M, d, sigma2).mean(cols_in_ls, n_a)


def residual_variance(M: int, cols_in_ls: int, d: int, n_a: int, sigma2: float) -> float:
    """
    Residual energy variance ((M - cols_in_ls)^2 / M)(sigma^2 + n_a d / M)^2.
    """
    mu = residual_mean(M, cols_in_ls, d, n_a, sigma2)
    return mu * mu / M


def residual_stats(M: int, cols_in_ls: int, d: int, n_a: int, sigma2: float) -> ResidualStats:
    """Both residual energy moments for the BOMP model, via the chi-square identity."""
    return EnergyContext.for_bomp(M, d, sigma2).stats(cols_in_ls, n_a)


def threshold_missed(M: int, cols_in_ls: int, d: int, tp: ThresholdParams, sigma2: float) -> float:
    """
    Largest threshold keeping P(E_k <= eta | n_a undetected blocks) at p_m. Not clamped.

    :return: (M - cols_in_ls)(sigma^2 + n_a d / M)(1 + Phi^-1(p_m) / sqrt(M))
    """
    return EnergyContext.for_bomp(M, d, sigma2).missed_threshold(cols_in_ls, tp)


def threshold_false(M: int, cols_in_ls: int, tp: ThresholdParams, sigma2: float) -> float:
    """
    Threshold keeping P(E_k >= eta | all blocks detected) at p_f.

    :return: (M - cols_in_ls)(1 - Phi^-1(p_f) / sqrt(M)) sigma^2
    """
    return EnergyContext.for_bomp(M, 1, sigma2).false_threshold(cols_in_ls, tp)


def derived_threshold(M: int, cols_in_ls: int, d: int, tp: ThresholdParams, sigma2: float) -> float:
    """
    Stopping threshold eta_k = min(eta_k1, eta_k0), clamped at zero.
    """
    return EnergyContext.for_bomp(M, d, sigma2).threshold(cols_in_ls, tp)


def icbomp_stats(M_ant: int, T: int, l: int, d: int, n_a: int, rho0: float) -> ResidualStats:
    """
    Residual energy moments for interference-cancellation BOMP with unit noise variance.

    :param M_ant: Base station antenna count
    :param T: Symbol-time length
    :param l: Blocks currently in the least-squares fit
    :param d: Symbols per block
    :param n_a: Active users not yet detected
    :param rho0: Linear SNR
    :return: mu = (M_ant T - l d)(1 + n_a rho0 d / T) and sigma^2 = mu^2 / (M_ant T)
    """
    return EnergyContext.for_icbomp(M_ant, T, d, rho0).stats(l * d, n_a)


def icbomp_threshold(M_ant: int, T: int, l: int, d: int, tp: ThresholdParams, rho0: float) -> float:
    """Stopping threshold for interference-cancellation BOMP with l blocks in the fit."""
    return EnergyContext.for_icbomp(M_ant, T, d, rho0).threshold(l * d, tp)


class StoppingRule:
    """Base class of the stopping rules. `tag` names the rule in results and CSV rows."""

    tag: ClassVar[str] = "rule"

    @property
    def energy_based(self) -> bool:
        return False


@dataclass(frozen=True)
class DerivedThreshold(StoppingRule):
    """Stop once E_k <= eta_k, the probabilistic residual-energy threshold."""

    params: ThresholdParams = field(default_factory=ThresholdParams)
    exact_chi2: bool = False
    tag: ClassVar[str] = "derived"

    @property
    def energy_based(self) -> bool:
        return True


@dataclass(frozen=True)
class RelativeChange(StoppingRule):
    """Stop once ||s_k - s_(k-1)|| / ||s_(k-1)|| < epsilon1."""

    epsilon1: float = 0.25
    tag: ClassVar[str] = "relchange"

    def __post_init__(self):
        if not self.epsilon1 > 0:
            raise ParameterError("epsilon1 > 0")


@dataclass(frozen=True)
class ResidualEnergy(StoppingRule):
    """Stop once ||r_k||^2 < epsilon2."""

    epsilon2: float
    tag: ClassVar[str] = "energy"

    def __post_init__(self):
        if not self.epsilon2 > 0:
            raise ParameterError("epsilon2 > 0")

    @classmethod
    def for_noise(cls, M: int, sigma2: float) -> "ResidualEnergy":
        """The noise-energy threshold epsilon2 = M sigma^2."""
        return cls(epsilon2=M * sigma2)

    @property
    def energy_based(self) -> bool:
        return True


@dataclass(frozen=True)
class MaxIterations(StoppingRule):
    """Stop after K iterations."""

    K: int = 30
    tag: ClassVar[str] = "maxiter"

    def __post_init__(self):
        if self.K < 1:
            raise ParameterError("K >= 1")


@dataclass(frozen=True)
class StopDecision:
    """
    :param stop: Whether the iteration should end
    :param threshold_used: Energy threshold compared against, for energy-based rules only
    :param rule_tag: Tag of the rule that produced the decision
    :param flagged: Set when the rule could not be evaluated (zero-norm previous estimate)
    """

    stop: bool
    threshold_used: Optional[float]
    rule_tag: str
    flagged: bool = False


def should_stop(
    rule: StoppingRule,
    k: int,
    energy: float,
    prev_estimate: Optional[np.ndarray],
    cur_estimate: Optional[np.ndarray],
    context: EnergyContext,
    cols_in_ls: Optional[int] = None,
) -> StopDecision:
    """
    Evaluate a stopping rule after iteration k.

    :param rule: Rule to evaluate
    :param k: Completed iteration count (1 after the first iteration)
    :param energy: Residual energy E_k
    :param prev_estimate: Full-length estimate after iteration k-1 (zero padded)
    :param cur_estimate: Full-length estimate after iteration k (zero padded)
    :param context: Energy model dimensions, see EnergyContext.for_bomp / for_icbomp
    :param cols_in_ls: Columns in the current least-squares fit; defaults to k*d
    :return: The decision
    """
    if isinstance(rule, DerivedThreshold):
        cols = k * context.d if cols_in_ls is None else cols_in_ls
        eta = context.threshold(cols, rule.params, rule.exact_chi2)
        return StopDecision(stop=energy <= eta, threshold_used=eta, rule_tag=rule.tag)

    if isinstance(rule, ResidualEnergy):
        return StopDecision(stop=energy < rule.epsilon2, threshold_used=rule.epsilon2, rule_tag=rule.tag)

    if isinstance(rule, MaxIterations):
        return StopDecision(stop=k >= rule.K, threshold_used=None, rule_tag=rule.tag)

    if isinstance(rule, RelativeChange):
        if k <= 1 or prev_estimate is None or cur_estimate is None:
            return StopDecision(stop=False, threshold_used=None, rule_tag=rule.tag)
        prev_norm = float(np.linalg.norm(prev_estimate))
        if prev_norm == 0.0:
            logger.warning(f"Relative change undefined at iteration {k}: previous estimate has zero norm")
            return StopDecision(stop=False, threshold_used=None, rule_tag=rule.tag, flagged=True)
        ratio = float(np.linalg.norm(cur_estimate - prev_estimate)) / prev_norm
        return StopDecision(stop=ratio < rule.epsilon1, threshold_used=None, rule_tag=rule.tag)

    raise ParameterError("known stopping rule", f"Unsupported stopping rule {rule!r}")

