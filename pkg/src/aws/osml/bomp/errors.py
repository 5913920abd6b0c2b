#  Copyright 2023-2026 Amazon.com, Inc. or its affiliates.

from typing import Optional

import numpy as np


class BompError(Exception):
    """Base class for every error raised by the block-sparse recovery library."""


class ParameterError(BompError, ValueError):
    """
    Raised when an input violates one of the documented model constraints.

    :param constraint: Short text naming the violated constraint, e.g. "M > N_a*d"
    :param message: Optional longer description
    """

    def __init__(self, constraint: str, message: Optional[str] = None):
        self.constraint = constraint
        super().__init__(message or f"Parameter constraint violated: {constraint}")


class DomainError(ParameterError):
    """Argument outside the domain of a mathematical function."""


class DegenerateRegressionError(ParameterError):
    """The least-squares column count reached or exceeded the measurement count."""


class SingularMatrixError(BompError, np.linalg.LinAlgError):
    """
    Raised when a least-squares system is rank deficient.

    :param columns: Column count of the offending matrix
    :param iteration: Recovery iteration at which the failure happened, if known
    """

    def __init__(self, columns: int, iteration: Optional[int] = None):
        self.columns = columns
        self.iteration = iteration
        where = f" at iteration {iteration}" if iteration is not None else ""
        super().__init__(f"Least-squares matrix with {columns} columns is rank deficient{where}")

    def at_iteration(self, iteration: int) -> "SingularMatrixError":
        return SingularMatrixError(self.columns, iteration)


class ExhaustionError(BompError):
    """Every block is excluded from selection."""


class CodecError(BompError, ValueError):
    """Malformed input to the modulation or channel coding chain."""


class ConfigError(BompError):
    """Invalid experiment configuration (CLI flags, config file or preset)."""


class TrialError(BompError):
    """A Monte Carlo trial failed; carries the cell coordinates for context."""

    def __init__(self, scenario: str, rule: str, snr_db: float, trial: int, cause: Exception):
        self.scenario = scenario
        self.rule = rule
        self.snr_db = snr_db
        self.trial = trial
        super().__init__(f"Trial {trial} of cell ({scenario}, {rule}, {snr_db} dB) failed: {cause}")
