#  Copyright 2023-2026 Amazon.com, Inc. or its affiliates.

import math
import unittest
from dataclasses import replace
from unittest.mock import patch

import numpy as np

from aws.osml.bomp.coding import PacketCodec
from aws.osml.bomp.comms import (
    CommsParams,
    generate_comms_instance,
    kron_block,
    qpsk_decide,
    qpsk_hard_demodulate,
    qpsk_modulate,
    qpsk_soft_demodulate,
    run_icbomp,
)
from aws.osml.bomp.errors import CodecError, ParameterError
from aws.osml.bomp.numerics import make_rng
from aws.osml.bomp.sim_utils import db_to_linear
from aws.osml.bomp.stopping import DerivedThreshold, MaxIterations, ThresholdParams

TP = ThresholdParams(p_m=0.001, p_f=0.005)
DESK = CommsParams(N=64, N_a=4, d=48, M_ant=4, T=240, rho0=db_to_linear(2.0))


def noise_free(params: CommsParams, seed: int):
    instance = generate_comms_instance(params, make_rng(seed))
    z = np.zeros_like(instance.z)
    y = math.sqrt(params.rho0) * (instance.B @ instance.s)
    return replace(instance, z=z, y=y)


class TestKronBlock(unittest.TestCase):
    def test_definition(self):
        np.testing.assert_array_equal(kron_block(np.array([[1, 2]]), np.array([3, 4])), [[3, 6], [4, 8]])

    def test_matches_double_loop(self):
        rng = make_rng(1)
        P = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
        h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        expected = np.zeros((12, 2), dtype=complex)
        for t in range(3):
            for m in range(4):
                for c in range(2):
                    expected[t * 4 + m, c] = P[t, c] * h[m]
        np.testing.assert_allclose(kron_block(P, h), expected)


class TestQpsk(unittest.TestCase):
    def test_gray_mapping(self):
        r = 1 / math.sqrt(2)
        symbols = qpsk_modulate(np.array([0, 0, 0, 1, 1, 0, 1, 1]))
        np.testing.assert_allclose(symbols, [r + 1j * r, r - 1j * r, -r + 1j * r, -r - 1j * r])

    def test_unit_modulus(self):
        bits = make_rng(2).integers(0, 2, 200, dtype=np.uint8)
        self.assertTrue(np.all(np.abs(np.abs(qpsk_modulate(bits)) - 1.0) < 1e-12))

    def test_odd_bits(self):
        with self.assertRaises(CodecError):
            qpsk_modulate(np.array([0, 1, 1]))

    def test_soft_demodulate(self):
        symbols = np.array([0.5 - 0.25j, -1.0 + 2.0j])
        llr = qpsk_soft_demodulate(symbols, 0.5)
        scale = 2 * math.sqrt(2) / 0.5
        np.testing.assert_allclose(llr, scale * np.array([0.5, -0.25, -1.0, 2.0]))
        np.testing.assert_allclose(qpsk_soft_demodulate(symbols, 1.0), llr / 2)
        np.testing.assert_allclose(qpsk_soft_demodulate(symbols, np.array([0.5, 1.0]))[2:], llr[2:] / 2)

    def test_soft_demodulate_signs_match_bits(self):
        bits = make_rng(3).integers(0, 2, 40, dtype=np.uint8)
        llr = qpsk_soft_demodulate(qpsk_modulate(bits), 0.1)
        np.testing.assert_array_equal(llr < 0, bits.astype(bool))

    def test_soft_demodulate_rejects_nonpositive_variance(self):
        with self.assertRaises(CodecError):
            qpsk_soft_demodulate(np.ones(2), 0.0)

    def test_hard_decisions(self):
        np.testing.assert_array_equal(qpsk_hard_demodulate(np.array([0.1 - 3j, -0.2 + 0.1j])), [0, 1, 1, 0])
        np.testing.assert_allclose(qpsk_decide(np.array([2.0 + 0.1j])), qpsk_modulate(np.array([0, 0])))


class TestCommsInstance(unittest.TestCase):
    def setUp(self):
        self.params = CommsParams(N=12, N_a=3, d=48, M_ant=2, T=96, rho0=2.0)
        self.instance = generate_comms_instance(self.params, make_rng(4))

    def test_shapes(self):
        instance = self.instance
        self.assertEqual(instance.B.shape, (192, 576))
        self.assertEqual(instance.precoders.shape, (12, 96, 48))
        self.assertEqual(instance.channels.shape, (12, 2))
        self.assertEqual(instance.y.shape, (192,))
        self.assertEqual(len(instance.active), 3)

    def test_blocks_are_kronecker_products(self):
        instance = self.instance
        np.testing.assert_array_equal(instance.B[:, 48:96], kron_block(instance.precoders[1], instance.channels[1]))

    def test_observation(self):
        instance = self.instance
        np.testing.assert_array_equal(instance.y, math.sqrt(2.0) * (instance.B @ instance.s) + instance.z)

    def test_symbols_carry_coded_payloads(self):
        instance = self.instance
        codec = PacketCodec(48)
        for user in range(12):
            block = instance.s[user * 48 : (user + 1) * 48]
            if user in instance.active:
                self.assertEqual(instance.payloads[user].size, 18)
                np.testing.assert_allclose(block, qpsk_modulate(codec.encode(instance.payloads[user])))
            else:
                self.assertFalse(np.any(block))

    def test_zero_snr(self):
        instance = generate_comms_instance(replace(self.params, rho0=0.0), make_rng(4))
        np.testing.assert_array_equal(instance.y, instance.z)

    def test_precoder_variance(self):
        params = CommsParams(N=100, N_a=1, d=48, M_ant=1, T=200, rho0=1.0)
        instance = generate_comms_instance(params, make_rng(5))
        self.assertAlmostEqual(float(np.mean(np.abs(instance.precoders) ** 2)) * 200, 1.0, delta=0.02)

    def test_validation(self):
        with self.assertRaises(ParameterError):
            CommsParams(N=4, N_a=5, d=48, M_ant=2, T=96, rho0=1.0).validate()
        with self.assertRaises(ParameterError):
            CommsParams(N=4, N_a=2, d=48, M_ant=1, T=48, rho0=1.0).validate()
        with self.assertRaises(ParameterError):
            CommsParams(N=4, N_a=2, d=48, M_ant=2, T=40, rho0=1.0).validate()
        with self.assertRaises(CodecError):
            generate_comms_instance(self.params, make_rng(0), PacketCodec(64))


class TestRunIcbomp(unittest.TestCase):
    def test_noise_free_decodes_everyone(self):
        params = CommsParams(N=8, N_a=2, d=48, M_ant=4, T=240, rho0=100.0)
        instance = noise_free(params, 6)
        result = run_icbomp(instance, PacketCodec(48), DerivedThreshold(TP))
        self.assertEqual(sorted(result.decoded_users), list(instance.active))
        for user in instance.active:
            np.testing.assert_array_equal(result.decoded_users[user], instance.payloads[user])
        self.assertEqual(result.iterations, 2)
        self.assertEqual(result.energy_trace[-1], 0.0)
        self.assertEqual(result.stop_reason, "derived")
        self.assertEqual(result.detected_not_decoded, ())
        np.testing.assert_allclose(result.symbol_decisions, instance.s)
        np.testing.assert_allclose(result.estimate_full, instance.s)

    def test_desk_scale_iterations(self):
        codec = PacketCodec(48)
        iterations = []
        for trial in range(30):
            instance = generate_comms_instance(DESK, make_rng(7, trial), codec)
            iterations.append(run_icbomp(instance, codec, DerivedThreshold(TP)).iterations)
        self.assertLessEqual(abs(float(np.mean(iterations)) - DESK.N_a), 1.0)

    def test_max_iterations_hits_guard(self):
        codec = PacketCodec(48)
        instance = generate_comms_instance(DESK, make_rng(8), codec)
        result = run_icbomp(instance, codec, MaxIterations(30))
        self.assertEqual(result.iterations, 19)
        self.assertEqual(result.stop_reason, "guard")
        self.assertEqual(len(result.set_sizes), 19)
        self.assertEqual(result.thresholds, [None] * 19)

    def test_decoded_users_leave_detected_set(self):
        codec = PacketCodec(48)
        instance = generate_comms_instance(DESK, make_rng(9), codec)
        result = run_icbomp(instance, codec, MaxIterations(6))
        self.assertFalse(set(result.decoded_users) & set(result.detected_not_decoded))
        self.assertEqual(len(result.decoded_users) + len(result.detected_not_decoded), 6)
        self.assertEqual(result.set_sizes[-1], len(result.detected_not_decoded))

    def test_noisy_run_decodes_payloads_exactly(self):
        params = CommsParams(N=16, N_a=3, d=48, M_ant=4, T=240, rho0=10.0)
        codec = PacketCodec(48)
        for trial in range(3):
            instance = generate_comms_instance(params, make_rng(12, trial), codec)
            result = run_icbomp(instance, codec, DerivedThreshold(TP))
            self.assertEqual(sorted(result.decoded_users), list(instance.active))
            for user in instance.active:
                np.testing.assert_array_equal(result.decoded_users[user], instance.payloads[user])

    def test_cancellation_is_exact(self):
        params = CommsParams(N=16, N_a=3, d=48, M_ant=4, T=240, rho0=10.0)
        codec = PacketCodec(48)
        instance = generate_comms_instance(params, make_rng(13), codec)
        result = run_icbomp(instance, codec, DerivedThreshold(TP))
        self.assertTrue(result.decoded_users)
        expected = np.array(instance.y)
        for user, payload in result.decoded_users.items():
            symbols = qpsk_modulate(codec.encode(payload))
            expected -= math.sqrt(params.rho0) * (instance.B[:, user * 48 : (user + 1) * 48] @ symbols)
        np.testing.assert_allclose(result.observation, expected, rtol=0, atol=1e-10)
        if sorted(result.decoded_users) == list(instance.active):
            np.testing.assert_allclose(result.observation, instance.z, rtol=0, atol=1e-10)

    def test_energy_rises_when_cancellation_shrinks_the_fit(self):
        # decodes are held back until all three active users sit in the fit, then the next
        # iteration cancels them and refits on the one remaining block
        params = CommsParams(N=16, N_a=3, d=48, M_ant=4, T=240, rho0=100.0)
        codec = PacketCodec(48)
        instance = generate_comms_instance(params, make_rng(14), codec)
        original = PacketCodec.decode
        calls = []

        def held_back(self, llr):
            calls.append(llr.size)
            if len(calls) <= 6:
                return False, np.zeros(self.payload_bits, dtype=np.uint8)
            return original(self, llr)

        with patch.object(PacketCodec, "decode", autospec=True, side_effect=held_back):
            result = run_icbomp(instance, codec, MaxIterations(4))

        self.assertEqual(result.set_sizes, [1, 2, 3, 1])
        self.assertEqual(sorted(result.decoded_users), list(instance.active))
        self.assertGreater(result.energy_trace[3], result.energy_trace[2])

    def test_requires_positive_snr(self):
        instance = generate_comms_instance(replace(DESK, rho0=0.0), make_rng(0))
        with self.assertRaises(ParameterError):
            run_icbomp(instance, PacketCodec(48), DerivedThreshold(TP))


if __name__ == "__main__":
    unittest.main()
