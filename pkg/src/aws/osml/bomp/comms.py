#  Copyright 2023-2026 Amazon.com, Inc. or its affiliates.

"""
Uplink multiuser scenario: N users, N_a of them active, each sending one coded QPSK packet of d
symbols through a precoder P_n (T x d) and a channel h_n (M_ant), observed as
y = sqrt(rho0) sum_n (P_n kron h_n) s_n + z. Recovery runs BOMP with per-block decoding, CRC
checks and interference cancellation of every packet that decodes.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .coding import PacketCodec
from .errors import CodecError, ParameterError, SingularMatrixError
from .model import block_indices, sample_support
from .numerics import Rng, coefficient_variance_factors, least_squares, sample_complex_gaussian
from .recovery import DEFAULT_MAX_ITERATIONS, GUARD_REASON, ZERO_ENERGY_TOLERANCE, select_block
from .stopping import EnergyContext, StoppingRule, should_stop

logger = logging.getLogger(__name__)

EXHAUSTED_REASON = "exhausted"
_INV_SQRT2 = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class CommsParams:
    """
    :param N: Number of users
    :param N_a: Number of active users
    :param d: QPSK symbols per packet
    :param M_ant: Base station antennas
    :param T: Symbol-time length of the precoders
    :param rho0: Linear SNR
    :param seed: Seed of the instance generator
    """

    N: int
    N_a: int
    d: int
    M_ant: int
    T: int
    rho0: float
    seed: int = 0

    @property
    def measurements(self) -> int:
        return self.M_ant * self.T

    def validate(self) -> "CommsParams":
        if not 1 <= self.N_a <= self.N:
            raise ParameterError("1 <= N_a <= N", f"N_a={self.N_a} is outside [1, N={self.N}]")
        if self.d < 1 or self.M_ant < 1:
            raise ParameterError("d >= 1 and M_ant >= 1")
        if self.T < self.d:
            raise ParameterError("T >= d", f"Precoder of {self.T}x{self.d} is wide")
        if not self.N_a * self.d < self.measurements:
            raise ParameterError("N_a*d < M_ant*T", f"{self.N_a} packets of {self.d} symbols exceed M_ant*T")
        if self.rho0 < 0:
            raise ParameterError("rho0 >= 0")
        return self


@dataclass(frozen=True)
class CommsInstance:
    """
    One realization of the uplink.

    :param precoders: N x T x d precoding matrices
    :param channels: N x M_ant channel vectors
    :param B: (M_ant T) x (N d) matrix of Kronecker blocks
    :param s: QPSK symbols, zero for inactive users
    :param z: Unit-variance noise
    :param y: sqrt(rho0) B s + z
    :param active: Sorted active users
    :param payloads: Payload bits per active user
    :param params: Generating parameters
    :param codec: Packet framing used for the payloads
    """

    precoders: np.ndarray
    channels: np.ndarray
    B: np.ndarray
    s: np.ndarray
    z: np.ndarray
    y: np.ndarray
    active: Tuple[int, ...]
    payloads: Dict[int, np.ndarray]
    params: CommsParams
    codec: PacketCodec


@dataclass
class IcbompResult:
    """
    :param decoded_users: Recovered payload per user whose CRC passed
    :param detected_not_decoded: Users still in the detected set when the run ended
    :param iterations: Iterations performed
    :param energy_trace: E_k after cancellations, per iteration
    :param thresholds: Threshold used per iteration (energy-based rules only)
    :param stop_reason: Tag of the rule that fired, "guard" or "exhausted"
    :param symbol_decisions: Decided QPSK symbols for every user (zero where nothing was detected)
    :param estimate_full: Re-modulated symbols for decoded users, least-squares values otherwise
    :param set_sizes: |Lambda| after each iteration's cancellations
    :param observation: Working observation left after every cancellation, y minus the
        re-modulated contribution of each decoded user
    """

    decoded_users: Dict[int, np.ndarray]
    detected_not_decoded: Tuple[int, ...]
    iterations: int
    energy_trace: List[float]
    thresholds: List[Optional[float]]
    stop_reason: str
    symbol_decisions: np.ndarray
    estimate_full: np.ndarray
    set_sizes: List[int] = field(default_factory=list)
    observation: Optional[np.ndarray] = None


def kron_block(P: np.ndarray, h: np.ndarray) -> np.ndarray:
    """
    Kronecker product P kron h of a T x d precoder and an M_ant channel vector.

    :return: (M_ant T) x d block whose row t*M_ant + m is P[t, :] h[m]
    """
    P = np.atleast_2d(np.asarray(P))
    h = np.asarray(h).reshape(-1, 1)
    return np.kron(P, h)


def qpsk_modulate(bits: np.ndarray) -> np.ndarray:
    """
    Gray-mapped unit-energy QPSK: the first bit of each pair sets the sign of the real part, the
    second the sign of the imaginary part (0 -> +, 1 -> -).

    :param bits: Even number of bits
    :return: len(bits) / 2 symbols
    """
    bits = np.asarray(bits, dtype=np.float64)
    if bits.size % 2:
        raise CodecError(f"QPSK needs an even number of bits, got {bits.size}")
    pairs = bits.reshape(-1, 2)
    return _INV_SQRT2 * ((1.0 - 2.0 * pairs[:, 0]) + 1j * (1.0 - 2.0 * pairs[:, 1]))


def qpsk_soft_demodulate(symbol_estimates: np.ndarray, noise_var_estimate) -> np.ndarray:
    """
    Exact per-bit LLRs log(P(b=0)/P(b=1)) for the Gray mapping under CN(0, noise_var) noise.

    :param symbol_estimates: Noisy symbols
    :param noise_var_estimate: Complex noise variance, scalar or one per symbol
    :return: Interleaved LLRs (real-part bit, imaginary-part bit) per symbol
    """
    symbols = np.asarray(symbol_estimates, dtype=np.complex128)
    noise_var = np.asarray(noise_var_estimate, dtype=np.float64)
    if np.any(noise_var <= 0):
        raise CodecError("Noise variance estimate must be positive")
    scale = 2.0 * math.sqrt(2.0) / noise_var
    llr = np.empty(2 * symbols.size, dtype=np.float64)
    llr[0::2] = scale * symbols.real
    llr[1::2] = scale * symbols.imag
    return llr


def qpsk_hard_demodulate(symbol_estimates: np.ndarray) -> np.ndarray:
    """Nearest-point bit decisions."""
    symbols = np.asarray(symbol_estimates, dtype=np.complex128)
    bits = np.empty(2 * symbols.size, dtype=np.uint8)
    bits[0::2] = symbols.real < 0
    bits[1::2] = symbols.imag < 0
    return bits


def qpsk_decide(symbol_estimates: np.ndarray) -> np.ndarray:
    """Map estimates onto the nearest constellation points."""
    return qpsk_modulate(qpsk_hard_demodulate(symbol_estimates))


def generate_comms_instance(
    params: CommsParams, rng: Rng, codec: Optional[PacketCodec] = None
) -> CommsInstance:
    """
    Draw precoders CN(0, 1/T), channels CN(0, 1), a uniform set of active users with random
    coded payloads, and noise CN(0, 1).

    :param params: Scenario dimensions and SNR
    :param rng: Generator owning the sample stream
    :param codec: Packet framing; defaults to PacketCodec(d)
    :return: An immutable CommsInstance
    """
    params.validate()
    codec = codec or PacketCodec(params.d)
    if codec.d != params.d:
        raise CodecError(f"Codec frames {codec.d} symbols but blocks carry {params.d}")
    N, d, T, M_ant = params.N, params.d, params.T, params.M_ant

    precoders = sample_complex_gaussian(rng, 1.0 / T, (N, T, d))
    channels = sample_complex_gaussian(rng, 1.0, (N, M_ant))
    B = np.hstack([kron_block(precoders[n], channels[n]) for n in range(N)])

    active = sample_support(rng, N, params.N_a)
    s = np.zeros(N * d, dtype=np.complex128)
    payloads: Dict[int, np.ndarray] = {}
    for user in active:
        payload = rng.integers(0, 2, codec.payload_bits, dtype=np.uint8)
        payloads[user] = payload
        s[user * d : (user + 1) * d] = qpsk_modulate(codec.encode(payload))

    z = sample_complex_gaussian(rng, 1.0, params.measurements)
    y = math.sqrt(params.rho0) * (B @ s) + z
    for array in (precoders, channels, B, s, z, y):
        array.setflags(write=False)
    return CommsInstance(
        precoders=precoders,
        channels=channels,
        B=B,
        s=s,
        z=z,
        y=y,
        active=active,
        payloads=payloads,
        params=params,
        codec=codec,
    )


def run_icbomp(
    instance: CommsInstance,
    codec: PacketCodec,
    rule: StoppingRule,
    max_iter_guard: Optional[int] = None,
) -> IcbompResult:
    """
    Interference-cancellation BOMP. Each iteration selects the strongest user that is neither
    detected nor decoded, refits all detected users by least squares on the working observation,
    tries to decode every detected user, subtracts each packet whose CRC passes, and evaluates the
    stopping rule on the residual left after those cancellations with l = |Lambda|.

    :param instance: Scenario realization
    :param codec: Packet framing used to decode and re-encode
    :param rule: Stopping rule
    :param max_iter_guard: Iteration cap; defaults to min(30, floor((M_ant T - 1) / d))
    :return: The IcbompResult
    """
    params = instance.params
    d, N = params.d, params.N
    M = params.measurements
    if not params.rho0 > 0:
        raise ParameterError("rho0 > 0", "Recovery needs a positive SNR")
    guard = min(DEFAULT_MAX_ITERATIONS, (M - 1) // d) if max_iter_guard is None else max_iter_guard
    if guard < 1 or guard * d >= M:
        raise ParameterError("max_iter_guard*d < M_ant*T", f"Guard {guard} with d={d} exceeds {M} measurements")

    gain = math.sqrt(params.rho0)
    A = gain * instance.B
    context = EnergyContext.for_icbomp(params.M_ant, params.T, d, params.rho0)

    working = np.array(instance.y, dtype=np.complex128)
    y_energy = float(np.vdot(working, working).real)
    residual = working
    lam: List[int] = []
    coefficients = np.zeros(0, dtype=np.complex128)
    decoded: Dict[int, np.ndarray] = {}
    decoded_symbols: Dict[int, np.ndarray] = {}
    previous_full = np.zeros(N * d, dtype=np.complex128)
    estimate_full = previous_full
    energies: List[float] = []
    thresholds: List[Optional[float]] = []
    set_sizes: List[int] = []
    stop_reason = GUARD_REASON

    for k in range(1, guard + 1):
        excluded = set(lam) | set(decoded)
        if len(excluded) == N:
            stop_reason = EXHAUSTED_REASON
            break
        j = select_block(instance.B, residual, excluded, d)
        lam.append(j)

        try:
            coefficients, r_factor = least_squares(A[:, block_indices(lam, d)], working, return_factor=True)
        except SingularMatrixError as err:
            raise err.at_iteration(k) from err
        residual = working - A[:, block_indices(lam, d)] @ coefficients
        noise_var = float(np.vdot(residual, residual).real) / (M - len(lam) * d)
        noise_var = max(noise_var, ZERO_ENERGY_TOLERANCE * y_energy / M)
        symbol_vars = noise_var * coefficient_variance_factors(r_factor)

        newly_decoded = []
        for position, user in enumerate(lam):
            block = slice(position * d, (position + 1) * d)
            llr = qpsk_soft_demodulate(coefficients[block], symbol_vars[block])
            passed, payload = codec.decode(llr)
            if not passed:
                continue
            symbols = qpsk_modulate(codec.encode(payload))
            working = working - gain * (instance.B[:, user * d : (user + 1) * d] @ symbols)
            decoded[user] = payload
            decoded_symbols[user] = symbols
            newly_decoded.append(user)
            if user not in instance.payloads:
                logger.warning(f"CRC passed for inactive user {user} at iteration {k}")

        if newly_decoded:
            lam = [user for user in lam if user not in decoded]
            if lam:
                try:
                    coefficients = least_squares(A[:, block_indices(lam, d)], working)
                except SingularMatrixError as err:
                    raise err.at_iteration(k) from err
                residual = working - A[:, block_indices(lam, d)] @ coefficients
            else:
                coefficients = np.zeros(0, dtype=np.complex128)
                residual = working

        energy = float(np.vdot(residual, residual).real)
        if energy <= ZERO_ENERGY_TOLERANCE * y_energy:
            energy = 0.0
        estimate_full = np.zeros(N * d, dtype=np.complex128)
        for user, symbols in decoded_symbols.items():
            estimate_full[user * d : (user + 1) * d] = symbols
        for position, user in enumerate(lam):
            estimate_full[user * d : (user + 1) * d] = coefficients[position * d : (position + 1) * d]

        decision = should_stop(rule, k, energy, previous_full, estimate_full, context, cols_in_ls=len(lam) * d)
        energies.append(energy)
        thresholds.append(decision.threshold_used)
        set_sizes.append(len(lam))
        logger.debug(
            f"ICBOMP k={k} user={j} decoded={newly_decoded} l={len(lam)} energy={energy:.6g} "
            f"threshold={decision.threshold_used}"
        )
        if decision.stop:
            stop_reason = decision.rule_tag
            break
        previous_full = estimate_full

    symbol_decisions = np.zeros(N * d, dtype=np.complex128)
    for user, symbols in decoded_symbols.items():
        symbol_decisions[user * d : (user + 1) * d] = symbols
    for position, user in enumerate(lam):
        symbol_decisions[user * d : (user + 1) * d] = qpsk_decide(coefficients[position * d : (position + 1) * d])

    return IcbompResult(
        decoded_users=decoded,
        detected_not_decoded=tuple(lam),
        iterations=len(energies),
        energy_trace=energies,
        thresholds=thresholds,
        stop_reason=stop_reason,
        symbol_decisions=symbol_decisions,
        estimate_full=estimate_full,
        set_sizes=set_sizes,
        observation=working,
    )
