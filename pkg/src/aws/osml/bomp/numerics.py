#  Copyright 2023-2026 Amazon.com, Inc. or its affiliates.

"""
Complex linear algebra primitives, the standard normal quantile function and reproducible
random sampling shared by the model, recovery and simulation modules.
"""

import logging
import math
from typing import Tuple, Union

import numpy as np
import scipy.linalg as spla
from scipy.special import ndtr

from .errors import DomainError, ParameterError, SingularMatrixError

logger = logging.getLogger(__name__)

# Rank test on |R_ii| of the Householder factor; matches a 1e12 condition number ceiling
RANK_TOLERANCE = 1e-12

# Rational approximation coefficients for the normal quantile (P. J. Acklam)
_A = (
    -3.969683028665376e01,
    2.209460984245205e02,
    -2.759285104469687e02,
    1.383577518672690e02,
    -3.066479806614716e01,
    2.506628277459239e00,
)
_B = (
    -5.447609879822406e01,
    1.615858368580409e02,
    -1.556989798598866e02,
    6.680131188771972e01,
    -1.328068155288572e01,
)
_C = (
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e00,
    -2.549732539343734e00,
    4.374664141464968e00,
    2.938163982698783e00,
)
_D = (
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e00,
    3.754408661907416e00,
)
_P_LOW = 0.02425
_P_HIGH = 1.0 - _P_LOW

Rng = np.random.Generator


def std_normal_cdf(x: float) -> float:
    """
    Standard normal cumulative distribution function Φ(x).

    :param x: Evaluation point
    :return: Probability that a standard normal variable is at most x
    """
    return float(ndtr(x))


def _tail_rational(q: float) -> float:
    c, d = _C, _D
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
        (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
    )


def std_normal_inv_cdf(p: float) -> float:
    """
    Inverse of the standard normal CDF. A rational approximation accurate to about 1e-9 is
    refined by a single Newton step on Φ, which brings |Φ(x) - p| down to rounding level.

    :param p: Probability strictly between 0 and 1
    :return: x such that Φ(x) = p
    """
    if not (0.0 < p < 1.0):
        raise DomainError("0 < p < 1", f"Normal quantile undefined for p={p}")

    if p < _P_LOW:
        x = _tail_rational(math.sqrt(-2.0 * math.log(p)))
    elif p > _P_HIGH:
        x = -_tail_rational(math.sqrt(-2.0 * math.log1p(-p)))
    else:
        q = p - 0.5
        r = q * q
        a, b = _A, _B
        x = ((((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q) / (
            ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
        )

    pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return x - (std_normal_cdf(x) - p) / pdf


def least_squares(
    a: np.ndarray, y: np.ndarray, return_factor: bool = False
) -> Union[np.ndarray, Tuple[np.ndarray, np.ndarray]]:
    """
    Solve min ||y - A x||_2 through an economic Householder QR factorization of A.

    :param a: M x q complex matrix with M >= q and full column rank
    :param y: Length M observation
    :param return_factor: Also return the triangular factor R (for coefficient covariances)
    :return: The q coefficients, or (coefficients, R) when return_factor is set
    """
    a = np.asarray(a)
    y = np.asarray(y)
    rows, cols = a.shape
    if rows < cols:
        raise ParameterError("M >= q", f"Least squares needs at least as many rows as columns, got {rows}x{cols}")
    if y.shape[0] != rows:
        raise ParameterError("len(y) == M", f"Observation length {y.shape[0]} does not match {rows} rows")

    q_factor, r_factor = spla.qr(a, mode="economic", check_finite=False)
    diag = np.abs(np.diag(r_factor))
    if diag.size == 0 or diag.max() == 0.0 or diag.min() < RANK_TOLERANCE * diag.max():
        raise SingularMatrixError(cols)

    x = spla.solve_triangular(r_factor, q_factor.conj().T @ y, lower=False, check_finite=False)
    if return_factor:
        return x, r_factor
    return x


def coefficient_variance_factors(r_factor: np.ndarray) -> np.ndarray:
    """
    Diagonal of (A^H A)^-1 from the triangular QR factor of A.

    :param r_factor: Upper triangular factor returned by least_squares
    :return: Per-coefficient noise amplification factors
    """
    r_inv = spla.solve_triangular(r_factor, np.eye(r_factor.shape[0], dtype=r_factor.dtype), lower=False)
    return np.sum(np.abs(r_inv) ** 2, axis=1)


def sample_complex_gaussian(rng: Rng, variance: float, n: Union[int, Tuple[int, ...]]) -> np.ndarray:
    """
    Draw circularly symmetric complex Gaussian samples CN(0, variance).

    :param rng: Generator owning the sample stream
    :param variance: Total complex variance, split evenly between real and imaginary parts
    :param n: Sample count or array shape
    :return: Complex128 samples
    """
    if not variance > 0.0:
        raise ParameterError("variance > 0", f"Complex Gaussian variance must be positive, got {variance}")
    scale = math.sqrt(variance / 2.0)
    real = rng.standard_normal(n)
    imag = rng.standard_normal(n)
    return scale * (real + 1j * imag)


def spawn_seed(master_seed: int, *keys: int) -> np.random.SeedSequence:
    """
    Derive an independent seed sequence for a coordinate (cell, trial, ...) of an experiment.

    :param master_seed: Non-negative 64-bit master seed
    :param keys: Non-negative integer coordinates
    :return: Seed sequence whose stream is disjoint from every other coordinate's
    """
    if master_seed < 0 or master_seed >= 2**64:
        raise ParameterError("0 <= seed < 2**64", f"Seed {master_seed} is not an unsigned 64-bit integer")
    return np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(int(k) for k in keys))


def make_rng(seed: int, *keys: int) -> Rng:
    """
    Build a counter-based (Philox) generator so identical seeds and keys replay bit-identically
    regardless of which worker thread runs them.

    :param seed: Non-negative 64-bit seed
    :param keys: Optional coordinates appended to the seed
    :return: A numpy Generator
    """
    return np.random.Generator(np.random.Philox(spawn_seed(seed, *keys)))
