#  Copyright 2023-2026 Amazon.com, Inc. or its affiliates.

"""
Block orthogonal matching pursuit (BOMP): correlate, extend the detected set, refit by least
squares, update the residual, and consult a stopping rule after every iteration.
"""

import logging
from dataclasses import dataclass, field
from typing import Collection, List, Optional, Tuple

import numpy as np

from .errors import ExhaustionError, ParameterError, SingularMatrixError
from .model import ProblemInstance, block_indices
from .numerics import least_squares
from .stopping import EnergyContext, StoppingRule, should_stop

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITERATIONS = 30
GUARD_REASON = "guard"
# residual energies below this fraction of ||y||^2 are rounding noise and recorded as zero
ZERO_ENERGY_TOLERANCE = 1e-24


@dataclass(frozen=True)
class IterationState:
    """
    Snapshot after iteration k.

    :param k: Iteration count
    :param lam: Detected block indices in detection order
    :param residual: r_k = y - B_lam s_lam
    :param estimate: Least-squares coefficients over the detected blocks, in lam order
    :param energy: ||r_k||^2
    :param threshold: Energy threshold the stopping rule compared against, if any
    """

    k: int
    lam: Tuple[int, ...]
    residual: np.ndarray
    estimate: np.ndarray
    energy: float
    threshold: Optional[float] = None


@dataclass
class RecoveryResult:
    """
    Outcome of a recovery run.

    :param estimate_full: Length N*d estimate, zero outside the detected blocks
    :param lam: Final detected blocks in detection order
    :param iterations: Iterations performed
    :param energy_trace: E_k for k = 1..iterations
    :param stop_reason: Tag of the rule that fired, or "guard"
    :param thresholds: Threshold used at each iteration (None for non-energy rules)
    :param history: Per-iteration states
    """

    estimate_full: np.ndarray
    lam: Tuple[int, ...]
    iterations: int
    energy_trace: List[float]
    stop_reason: str
    thresholds: List[Optional[float]] = field(default_factory=list)
    history: List[IterationState] = field(default_factory=list)


def default_guard(M: int, d: int) -> int:
    """Iteration cap min(30, floor((M - 1) / d)) keeping every least-squares fit overdetermined."""
    return min(DEFAULT_MAX_ITERATIONS, (M - 1) // d)


def block_correlations(B: np.ndarray, residual: np.ndarray, d: int) -> np.ndarray:
    """
    ||B_j^H r||^2 for every block j.

    :param B: Measurement matrix
    :param residual: Current residual
    :param d: Block length
    :return: One correlation energy per block
    """
    # r^H B is the conjugate of B^H r and avoids materializing B^H
    products = residual.conj() @ B
    return np.sum(np.abs(products.reshape(-1, d)) ** 2, axis=1)


def select_block(B: np.ndarray, residual: np.ndarray, excluded: Collection[int], d: int) -> int:
    """
    Pick the block most correlated with the residual among blocks not excluded. Ties go to the
    lowest index.

    :param B: Measurement matrix
    :param residual: Current residual
    :param excluded: Blocks that cannot be selected
    :param d: Block length
    :return: Selected block index
    """
    correlations = block_correlations(B, residual, d)
    if excluded:
        correlations[np.fromiter(excluded, dtype=np.intp)] = -np.inf
    if np.all(np.isneginf(correlations)):
        raise ExhaustionError(f"All {correlations.size} blocks are excluded from selection")
    return int(np.argmax(correlations))


def run_bomp(
    instance: ProblemInstance, rule: StoppingRule, max_iter_guard: Optional[int] = None
) -> RecoveryResult:
    """
    Run BOMP on a problem instance until the stopping rule fires or the guard is reached.

    :param instance: Problem to recover
    :param rule: Stopping rule consulted after every residual update
    :param max_iter_guard: Hard iteration cap; defaults to default_guard(M, d)
    :return: The RecoveryResult
    """
    B, y, d = instance.B, instance.y, instance.d
    M = B.shape[0]
    guard = default_guard(M, d) if max_iter_guard is None else max_iter_guard
    if guard < 1 or guard * d >= M:
        raise ParameterError("max_iter_guard*d < M", f"Guard {guard} with d={d} exceeds M={M} measurements")

    context = EnergyContext.for_bomp(M, d, instance.sigma2)
    lam: List[int] = []
    y_energy = float(np.vdot(y, y).real)
    residual = y
    estimate_full = np.zeros(B.shape[1], dtype=np.complex128)
    previous_full = estimate_full
    energies: List[float] = []
    thresholds: List[Optional[float]] = []
    history: List[IterationState] = []
    stop_reason = GUARD_REASON

    for k in range(1, guard + 1):
        j = select_block(B, residual, lam, d)
        lam.append(j)
        columns = block_indices(lam, d)
        sub_matrix = B[:, columns]
        try:
            coefficients = least_squares(sub_matrix, y)
        except SingularMatrixError as err:
            raise err.at_iteration(k) from err

        residual = y - sub_matrix @ coefficients
        energy = float(np.vdot(residual, residual).real)
        if energy <= ZERO_ENERGY_TOLERANCE * y_energy:
            energy = 0.0
        estimate_full = np.zeros(B.shape[1], dtype=np.complex128)
        estimate_full[columns] = coefficients

        decision = should_stop(rule, k, energy, previous_full, estimate_full, context)
        energies.append(energy)
        thresholds.append(decision.threshold_used)
        history.append(IterationState(k, tuple(lam), residual, coefficients, energy, decision.threshold_used))
        logger.debug(f"BOMP k={k} block={j} energy={energy:.6g} threshold={decision.threshold_used}")

        if decision.stop:
            stop_reason = decision.rule_tag
            break
        previous_full = estimate_full

    if stop_reason == GUARD_REASON:
        logger.debug(f"BOMP reached the {guard} iteration guard before rule '{rule.tag}' fired")

    return RecoveryResult(
        estimate_full=estimate_full,
        lam=tuple(lam),
        iterations=len(lam),
        energy_trace=energies,
        stop_reason=stop_reason,
        thresholds=thresholds,
        history=history,
    )
