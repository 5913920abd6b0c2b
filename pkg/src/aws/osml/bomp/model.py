#  Copyright 2023-2026 Amazon.com, Inc. or its affiliates.

"""
Block-sparse problem instances y = B_I s_I + z with Gaussian measurement matrices.

Block indices are zero based: block j occupies columns j*d .. j*d + d - 1 of B.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np
import orjson

from .errors import ParameterError
from .numerics import Rng, sample_complex_gaussian

logger = logging.getLogger(__name__)

INSTANCE_MAGIC = b"BOMPINST1\n"


@dataclass(frozen=True)
class ModelParams:
    """
    Dimensions and noise level of a block-sparse recovery problem.

    :param N: Number of blocks
    :param d: Block length
    :param M: Number of measurements
    :param N_a: Number of nonzero (supporting) blocks
    :param sigma2: Noise variance per complex measurement
    :param seed: Seed of the instance generator
    """

    N: int
    d: int
    M: int
    N_a: int
    sigma2: float
    seed: int = 0

    def validate(self) -> "ModelParams":
        if self.d < 1:
            raise ParameterError("d >= 1")
        if not 1 <= self.N_a <= self.N:
            raise ParameterError("1 <= N_a <= N", f"N_a={self.N_a} is outside [1, N={self.N}]")
        if not self.M < self.N * self.d:
            raise ParameterError("M < N*d", f"M={self.M} is not compressive for N*d={self.N * self.d}")
        if not self.M > self.N_a * self.d:
            raise ParameterError("M > N_a*d", f"M={self.M} cannot recover N_a*d={self.N_a * self.d} unknowns")
        if self.sigma2 < 0:
            raise ParameterError("sigma2 >= 0")
        return self


@dataclass(frozen=True)
class ProblemInstance:
    """
    One realization of the measurement model.

    :param B: M x (N*d) measurement matrix
    :param s: True block-sparse signal of length N*d
    :param z: Measurement noise of length M
    :param y: Observation B s + z
    :param support: Sorted indices of the nonzero blocks
    :param d: Block length
    :param sigma2: Noise variance the instance was drawn with
    """

    B: np.ndarray
    s: np.ndarray
    z: np.ndarray
    y: np.ndarray
    support: Tuple[int, ...]
    d: int
    sigma2: float

    @property
    def M(self) -> int:
        return self.B.shape[0]

    @property
    def N(self) -> int:
        return self.B.shape[1] // self.d


def _freeze(*arrays: np.ndarray) -> None:
    for array in arrays:
        array.setflags(write=False)


def sample_support(rng: Rng, N: int, N_a: int) -> Tuple[int, ...]:
    """
    Draw N_a distinct block indices uniformly with a partial Fisher-Yates shuffle.

    :param rng: Generator owning the sample stream
    :param N: Number of blocks to choose from
    :param N_a: Number of blocks to choose
    :return: Sorted tuple of chosen indices
    """
    pool = np.arange(N)
    for i in range(N_a):
        j = int(rng.integers(i, N))
        pool[i], pool[j] = pool[j], pool[i]
    return tuple(sorted(int(v) for v in pool[:N_a]))


def generate_instance(params: ModelParams, rng: Rng) -> ProblemInstance:
    """
    Draw B with i.i.d. CN(0, 1/M) entries, a uniformly placed support of N_a blocks carrying
    i.i.d. CN(0, 1) entries and noise CN(0, sigma2), then form y = B s + z.

    :param params: Problem dimensions
    :param rng: Generator owning the sample stream
    :return: An immutable ProblemInstance
    """
    params.validate()
    N, d, M = params.N, params.d, params.M

    B = sample_complex_gaussian(rng, 1.0 / M, (M, N * d))
    support = sample_support(rng, N, params.N_a)

    s = np.zeros(N * d, dtype=np.complex128)
    values = sample_complex_gaussian(rng, 1.0, params.N_a * d)
    for position, block in enumerate(support):
        s[block * d : (block + 1) * d] = values[position * d : (position + 1) * d]

    if params.sigma2 > 0:
        z = sample_complex_gaussian(rng, params.sigma2, M)
    else:
        z = np.zeros(M, dtype=np.complex128)

    y = B @ s + z
    _freeze(B, s, z, y)
    logger.debug(f"Generated instance M={M} N={N} d={d} support={support}")
    return ProblemInstance(B=B, s=s, z=z, y=y, support=support, d=d, sigma2=params.sigma2)


def block_columns(B: np.ndarray, j: int, d: int) -> np.ndarray:
    """
    Return the j-th block of d contiguous columns of B.

    :param B: Measurement matrix whose column count is a multiple of d
    :param j: Zero-based block index
    :param d: Block length
    :return: M x d view of B
    """
    n_blocks = B.shape[1] // d
    if not 0 <= j < n_blocks:
        raise IndexError(f"Block index {j} out of range for {n_blocks} blocks")
    return B[:, j * d : (j + 1) * d]


def block_indices(blocks, d: int) -> np.ndarray:
    """Column indices covered by an ordered collection of blocks."""
    blocks = np.asarray(list(blocks), dtype=np.intp)
    if blocks.size == 0:
        return np.zeros(0, dtype=np.intp)
    return (blocks[:, None] * d + np.arange(d)[None, :]).ravel()


def save_instance(path: Union[str, Path], instance: ProblemInstance) -> None:
    """
    Write an instance as: the magic line, one JSON header line, then the raw little-endian
    complex128 entries of B (row major), s, z and y.

    :param path: Destination file
    :param instance: Instance to serialize
    """
    header = {
        "M": instance.M,
        "N": instance.N,
        "d": instance.d,
        "N_a": len(instance.support),
        "sigma2": instance.sigma2,
        "support": list(instance.support),
    }
    with open(path, "wb") as stream:
        stream.write(INSTANCE_MAGIC)
        stream.write(orjson.dumps(header) + b"\n")
        for array in (instance.B, instance.s, instance.z, instance.y):
            stream.write(np.ascontiguousarray(array, dtype="<c16").tobytes())


def load_instance(path: Union[str, Path]) -> ProblemInstance:
    """
    Read an instance written by save_instance.

    :param path: Source file
    :return: The deserialized ProblemInstance
    """
    with open(path, "rb") as stream:
        if stream.readline() != INSTANCE_MAGIC:
            raise ParameterError("instance magic", f"{path} is not a serialized problem instance")
        header = orjson.loads(stream.readline())
        payload = stream.read()

    M, N, d = header["M"], header["N"], header["d"]
    sizes = [M * N * d, N * d, M, M]
    entries = np.frombuffer(payload, dtype="<c16")
    if entries.size != sum(sizes):
        raise ParameterError("payload size", f"Expected {sum(sizes)} complex entries, found {entries.size}")
    offsets = np.cumsum([0] + sizes)
    B, s, z, y = (entries[offsets[i] : offsets[i + 1]].astype(np.complex128) for i in range(4))
    B = B.reshape(M, N * d)
    _freeze(B, s, z, y)
    return ProblemInstance(B=B, s=s, z=z, y=y, support=tuple(header["support"]), d=d, sigma2=header["sigma2"])
