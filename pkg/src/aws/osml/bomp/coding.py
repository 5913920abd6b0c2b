#  Copyright 2023-2026 Amazon.com, Inc. or its affiliates.

"""
Channel coding chain for the multiuser packets: a zero-tail rate-1/2 convolutional code, a
16-level soft-decision Viterbi decoder and a 24-bit CRC.

Bits are numpy uint8 arrays of 0/1. LLRs follow log(P(b=0) / P(b=1)), so a positive LLR favours
a zero bit. Packed octets are most-significant-bit first.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from .errors import CodecError

logger = logging.getLogger(__name__)

SOFT_LEVELS = 16
SOFT_MIDPOINT = (SOFT_LEVELS - 1) / 2.0
CLIP_SIGMAS = 3.0


@dataclass(frozen=True)
class ConvCode:
    """
    Feed-forward rate-1/2 convolutional code. The generator MSB taps the newest input bit.

    :param constraint_length: Register length K including the current bit
    :param generators: Two generator polynomials (octal 133 and 171 by default)
    """

    constraint_length: int = 7
    generators: Tuple[int, int] = (0o133, 0o171)

    @property
    def tail_bits(self) -> int:
        return self.constraint_length - 1

    @property
    def n_states(self) -> int:
        return 1 << self.tail_bits

    def coded_length(self, info_length: int) -> int:
        return 2 * (info_length + self.tail_bits)


@dataclass(frozen=True)
class CrcSpec:
    """
    Non-reflected CRC with zero init and zero final xor.

    :param width: Register width in bits
    :param polynomial: Generator without its leading x^width term
    """

    width: int = 24
    polynomial: int = 0x864CFB
    init: int = 0
    xor_out: int = 0


@dataclass(frozen=True)
class SoftWord:
    """
    Quantized soft decisions for a coded packet.

    :param levels: One level in [0, 15] per coded bit; levels >= 8 lean towards bit 0
    :param clip: LLR magnitude mapped to the outermost levels
    """

    levels: np.ndarray
    clip: float

    @classmethod
    def from_llr(cls, llr: np.ndarray, clip: Optional[float] = None) -> "SoftWord":
        """Quantize a packet of LLRs, clipping at three times their RMS unless clip is given."""
        llr = np.asarray(llr, dtype=np.float64)
        if clip is None:
            sigma = float(np.sqrt(np.mean(llr**2))) if llr.size else 0.0
            clip = CLIP_SIGMAS * sigma if sigma > 0 else 1.0
        return cls(levels=quantize_soft(llr, clip), clip=clip)

    @property
    def hard_bits(self) -> np.ndarray:
        return (self.levels < SOFT_LEVELS // 2).astype(np.uint8)

    def __len__(self) -> int:
        return int(self.levels.size)


def _parity(value: int) -> int:
    return bin(value).count("1") & 1


@lru_cache(maxsize=8)
def _trellis(code: ConvCode) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Predecessor tables keyed by next state: pred[ns, j] is the j-th previous state, signs[ns, j]
    the +/-1 images of the two output bits on that branch and inputs[ns] the input bit.
    """
    n_states = code.n_states
    shift = code.tail_bits
    pred = np.zeros((n_states, 2), dtype=np.intp)
    signs = np.zeros((n_states, 2, 2), dtype=np.float64)
    inputs = (np.arange(n_states) >> (shift - 1)).astype(np.uint8)
    for ns in range(n_states):
        bit = ns >> (shift - 1)
        for j in (0, 1):
            state = ((ns << 1) & (n_states - 1)) | j
            register = (bit << shift) | state
            pred[ns, j] = state
            for g, generator in enumerate(code.generators):
                signs[ns, j, g] = 1.0 - 2.0 * _parity(register & generator)
    return pred, signs, inputs


def conv_encode(info_bits: np.ndarray, code: ConvCode = ConvCode()) -> np.ndarray:
    """
    Encode and terminate to the zero state with K-1 tail bits.

    :param info_bits: Message bits
    :param code: Code definition
    :return: 2(L + K - 1) coded bits, the two generator outputs interleaved
    """
    info_bits = np.asarray(info_bits, dtype=np.uint8)
    if info_bits.size == 0:
        raise CodecError("Cannot encode an empty message")

    shift = code.tail_bits
    padded = np.concatenate([info_bits, np.zeros(shift, dtype=np.uint8)])
    coded = np.empty(2 * padded.size, dtype=np.uint8)
    state = 0
    for t, bit in enumerate(padded):
        register = (int(bit) << shift) | state
        coded[2 * t] = _parity(register & code.generators[0])
        coded[2 * t + 1] = _parity(register & code.generators[1])
        state = register >> 1
    return coded


def quantize_soft(llr, clip: float) -> np.ndarray:
    """
    Uniform mid-rise quantizer over [-clip, clip] with 16 levels. Zero maps to level 8; inputs
    beyond the range saturate at 0 or 15.

    :param llr: LLR value or array
    :param clip: Positive clipping magnitude
    :return: uint8 levels
    """
    if not clip > 0:
        raise CodecError(f"Quantizer clip range must be positive, got {clip}")
    step = 2.0 * clip / SOFT_LEVELS
    levels = np.floor((np.asarray(llr, dtype=np.float64) + clip) / step)
    return np.clip(levels, 0, SOFT_LEVELS - 1).astype(np.uint8)


def dequantize_soft(levels, clip: float) -> np.ndarray:
    """Centre of each quantizer cell."""
    step = 2.0 * clip / SOFT_LEVELS
    return (np.asarray(levels, dtype=np.float64) + 0.5) * step - clip


def _viterbi(values: np.ndarray, code: ConvCode) -> np.ndarray:
    """Maximum-correlation path through the terminated trellis; values > 0 favour bit 0."""
    if values.size % 2 or values.size // 2 <= code.tail_bits:
        raise CodecError(f"Coded length {values.size} is not 2(L + {code.tail_bits}) for any L >= 1")
    pred, signs, inputs = _trellis(code)
    pairs = values.reshape(-1, 2)
    steps = pairs.shape[0]

    metrics = np.full(code.n_states, -np.inf)
    metrics[0] = 0.0
    choices = np.zeros((steps, code.n_states), dtype=np.uint8)
    for t in range(steps):
        candidates = metrics[pred] + signs @ pairs[t]
        best = np.argmax(candidates, axis=1)
        choices[t] = best
        metrics = candidates[np.arange(code.n_states), best]

    decoded = np.zeros(steps, dtype=np.uint8)
    state = 0
    for t in range(steps - 1, -1, -1):
        decoded[t] = inputs[state]
        state = pred[state, choices[t, state]]
    return decoded[: steps - code.tail_bits]


def viterbi_decode(soft: SoftWord, code: ConvCode = ConvCode()) -> np.ndarray:
    """
    Soft-decision Viterbi decoding of a quantized packet.

    :param soft: Quantized coded bits
    :param code: Code definition
    :return: The L decoded message bits (tail removed)
    """
    return _viterbi(soft.levels.astype(np.float64) - SOFT_MIDPOINT, code)


def hard_viterbi_decode(coded_bits: np.ndarray, code: ConvCode = ConvCode()) -> np.ndarray:
    """Hamming-metric Viterbi decoding of hard coded bits."""
    coded_bits = np.asarray(coded_bits, dtype=np.float64)
    return _viterbi(1.0 - 2.0 * coded_bits, code)


@lru_cache(maxsize=8)
def _crc_table(spec: CrcSpec) -> np.ndarray:
    mask = (1 << spec.width) - 1
    top = 1 << (spec.width - 1)
    table = np.zeros(256, dtype=np.int64)
    for byte in range(256):
        register = byte << (spec.width - 8)
        for _ in range(8):
            register = ((register << 1) ^ spec.polynomial) if register & top else (register << 1)
            register &= mask
        table[byte] = register
    return table


def crc_remainder(bits: np.ndarray, spec: CrcSpec = CrcSpec()) -> int:
    """
    CRC register after feeding a bit sequence: whole octets through the lookup table, any
    trailing bits one at a time.

    :param bits: Message bits
    :param spec: CRC definition
    :return: Remainder as an integer of `spec.width` bits
    """
    bits = np.asarray(bits, dtype=np.uint8)
    mask = (1 << spec.width) - 1
    table = _crc_table(spec)
    register = spec.init
    n_bytes = bits.size // 8
    for byte in np.packbits(bits[: n_bytes * 8]):
        index = ((register >> (spec.width - 8)) ^ int(byte)) & 0xFF
        register = ((register << 8) & mask) ^ int(table[index])
    for bit in bits[n_bytes * 8 :]:
        feedback = ((register >> (spec.width - 1)) & 1) ^ int(bit)
        register = (register << 1) & mask
        if feedback:
            register ^= spec.polynomial
    return register ^ spec.xor_out


def crc_append(bits: np.ndarray, spec: CrcSpec = CrcSpec()) -> np.ndarray:
    """
    Append the CRC of a message, most significant bit first.

    :param bits: Non-empty message bits
    :param spec: CRC definition
    :return: Message followed by `spec.width` check bits
    """
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size == 0:
        raise CodecError("Cannot compute the CRC of an empty message")
    remainder = crc_remainder(bits, spec)
    check = (remainder >> np.arange(spec.width - 1, -1, -1)) & 1
    return np.concatenate([bits, check.astype(np.uint8)])


def crc_check(bits: np.ndarray, spec: CrcSpec = CrcSpec()) -> bool:
    """True iff the word (message followed by its check bits) leaves a zero remainder."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size <= spec.width:
        raise CodecError(f"Word of {bits.size} bits is too short to carry a {spec.width}-bit CRC")
    return crc_remainder(bits, spec) == spec.xor_out


def pack_bits(bits: np.ndarray) -> bytes:
    """Pack bits into octets, most significant bit first, zero padding the last octet."""
    return np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="big").tobytes()


def unpack_bits(data: bytes, count: int) -> np.ndarray:
    """Inverse of pack_bits for a known bit count."""
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=count, bitorder="big")


@dataclass(frozen=True)
class PacketCodec:
    """
    Framing of one user packet into a block of d QPSK symbols: payload + CRC + zero tail is
    encoded to 2d coded bits, so the payload carries d - (K - 1) - width bits.

    :param d: Symbols per block
    :param code: Convolutional code
    :param crc: CRC definition
    """

    d: int
    code: ConvCode = ConvCode()
    crc: CrcSpec = CrcSpec()

    def __post_init__(self):
        if self.payload_bits < 1:
            raise CodecError(
                f"Block of {self.d} symbols cannot carry a {self.crc.width}-bit CRC and {self.code.tail_bits} tail bits"
            )

    @property
    def payload_bits(self) -> int:
        return self.d - self.code.tail_bits - self.crc.width

    def encode(self, payload: np.ndarray) -> np.ndarray:
        """Payload bits to the 2d coded bits of one block."""
        payload = np.asarray(payload, dtype=np.uint8)
        if payload.size != self.payload_bits:
            raise CodecError(f"Payload must have {self.payload_bits} bits, got {payload.size}")
        return conv_encode(crc_append(payload, self.crc), self.code)

    def decode(self, llr: np.ndarray) -> Tuple[bool, np.ndarray]:
        """
        Quantize, Viterbi decode and CRC check the LLRs of one block.

        :param llr: 2d coded-bit LLRs
        :return: (CRC passed, decoded payload bits)
        """
        llr = np.asarray(llr, dtype=np.float64)
        if llr.size != 2 * self.d:
            raise CodecError(f"Expected {2 * self.d} LLRs, got {llr.size}")
        word = viterbi_decode(SoftWord.from_llr(llr), self.code)
        return crc_check(word, self.crc), word[: self.payload_bits]
