#  Copyright 2023-2026 Amazon.com, Inc. or its affiliates.

import unittest

import numpy as np

from aws.osml.bomp.coding import (
    ConvCode,
    CrcSpec,
    PacketCodec,
    SoftWord,
    conv_encode,
    crc_append,
    crc_check,
    crc_remainder,
    dequantize_soft,
    hard_viterbi_decode,
    pack_bits,
    quantize_soft,
    unpack_bits,
    viterbi_decode,
)
from aws.osml.bomp.errors import CodecError
from aws.osml.bomp.numerics import make_rng


def bits_to_llr(bits: np.ndarray, amplitude: float = 4.0) -> np.ndarray:
    return amplitude * (1.0 - 2.0 * np.asarray(bits, dtype=np.float64))


class TestConvolutionalCode(unittest.TestCase):
    def test_impulse_response_follows_generators(self):
        # 0o133 = 1011011 and 0o171 = 1111001, newest bit first
        expected = [1, 1, 0, 1, 1, 1, 1, 1, 0, 0, 1, 0, 1, 1]
        np.testing.assert_array_equal(conv_encode(np.array([1])), expected)

    def test_lengths(self):
        code = ConvCode()
        self.assertEqual(code.tail_bits, 6)
        self.assertEqual(code.n_states, 64)
        self.assertEqual(code.coded_length(42), 96)
        self.assertEqual(conv_encode(np.ones(42, dtype=np.uint8)).size, 96)

    def test_all_zero_message(self):
        self.assertFalse(np.any(conv_encode(np.zeros(10, dtype=np.uint8))))

    def test_linear(self):
        rng = make_rng(1)
        a = rng.integers(0, 2, 30, dtype=np.uint8)
        b = rng.integers(0, 2, 30, dtype=np.uint8)
        np.testing.assert_array_equal(conv_encode(a ^ b), conv_encode(a) ^ conv_encode(b))

    def test_empty_message(self):
        with self.assertRaises(CodecError):
            conv_encode(np.zeros(0, dtype=np.uint8))


class TestViterbi(unittest.TestCase):
    def setUp(self):
        self.message = make_rng(2).integers(0, 2, 64, dtype=np.uint8)
        self.coded = conv_encode(self.message)

    def test_hard_decoding_clean(self):
        np.testing.assert_array_equal(hard_viterbi_decode(self.coded), self.message)

    def test_hard_decoding_corrects_scattered_errors(self):
        corrupted = self.coded.copy()
        corrupted[[5, 60, 121]] ^= 1
        np.testing.assert_array_equal(hard_viterbi_decode(corrupted), self.message)

    def test_soft_decoding_noisy(self):
        rng = make_rng(3)
        llr = bits_to_llr(self.coded, 1.0) + 0.45 * rng.standard_normal(self.coded.size)
        np.testing.assert_array_equal(viterbi_decode(SoftWord.from_llr(llr)), self.message)

    def test_soft_decoding_uses_reliability(self):
        # two flipped bits carried with low confidence lose against confident neighbours
        llr = bits_to_llr(self.coded)
        llr[[10, 11]] = -0.3 * np.sign(llr[[10, 11]])
        np.testing.assert_array_equal(viterbi_decode(SoftWord.from_llr(llr, clip=4.0)), self.message)

    def test_every_single_coded_bit_flip_is_corrected(self):
        for position in range(self.coded.size):
            corrupted = self.coded.copy()
            corrupted[position] ^= 1
            np.testing.assert_array_equal(hard_viterbi_decode(corrupted), self.message, err_msg=f"flip at {position}")

    def test_saturated_soft_input_matches_hard_decoding(self):
        rng = make_rng(9)
        for _ in range(20):
            corrupted = self.coded ^ (rng.random(self.coded.size) < 0.08).astype(np.uint8)
            soft = SoftWord.from_llr(bits_to_llr(corrupted, 100.0), clip=1.0)
            self.assertTrue(set(soft.levels.tolist()) <= {0, 15})
            np.testing.assert_array_equal(viterbi_decode(soft), hard_viterbi_decode(corrupted))

    def test_random_round_trips(self):
        rng = make_rng(10)
        for _ in range(10000):
            message = rng.integers(0, 2, 64, dtype=np.uint8)
            np.testing.assert_array_equal(hard_viterbi_decode(conv_encode(message)), message)
        for length in rng.integers(8, 513, 200):
            message = rng.integers(0, 2, int(length), dtype=np.uint8)
            decoded = viterbi_decode(SoftWord.from_llr(bits_to_llr(conv_encode(message))))
            np.testing.assert_array_equal(decoded, message)

    def test_decoding_lowers_bit_error_rate_at_4db(self):
        rng = make_rng(11)
        noise_std = np.sqrt(1.0 / 10 ** (4.0 / 10.0))
        coded_errors = info_errors = coded_total = info_total = 0
        for _ in range(200):
            message = rng.integers(0, 2, 512, dtype=np.uint8)
            coded = conv_encode(message)
            received = (1.0 - 2.0 * coded) + noise_std * rng.standard_normal(coded.size)
            coded_errors += int(np.sum((received < 0).astype(np.uint8) != coded))
            coded_total += coded.size
            decoded = viterbi_decode(SoftWord.from_llr(2.0 * received / noise_std**2))
            info_errors += int(np.sum(decoded != message))
            info_total += message.size
        self.assertGreaterEqual(info_total, 100000)
        self.assertGreater(coded_errors / coded_total, 0.03)
        self.assertLess(info_errors / info_total, coded_errors / coded_total)

    def test_bad_length(self):
        with self.assertRaises(CodecError):
            hard_viterbi_decode(self.coded[:-1])
        with self.assertRaises(CodecError):
            hard_viterbi_decode(np.zeros(12, dtype=np.uint8))


class TestSoftQuantizer(unittest.TestCase):
    def test_levels(self):
        np.testing.assert_array_equal(quantize_soft([0.0, 100.0, -100.0, 0.99, -0.01], 8.0), [8, 15, 0, 8, 7])

    def test_dequantize_is_cell_centre(self):
        np.testing.assert_allclose(dequantize_soft([0, 8, 15], 8.0), [-7.5, 0.5, 7.5])

    def test_monotone(self):
        levels = quantize_soft(np.linspace(-5, 5, 101), 3.0)
        self.assertTrue(np.all(np.diff(levels.astype(int)) >= 0))
        self.assertEqual(set(levels.tolist()), set(range(16)))

    def test_soft_word(self):
        word = SoftWord.from_llr(np.array([2.0, -2.0, 0.5, -0.5]))
        self.assertEqual(len(word), 4)
        np.testing.assert_array_equal(word.hard_bits, [0, 1, 0, 1])
        self.assertAlmostEqual(word.clip, 3.0 * np.sqrt(2.125))

    def test_soft_word_of_zeros(self):
        word = SoftWord.from_llr(np.zeros(4))
        self.assertEqual(word.clip, 1.0)
        np.testing.assert_array_equal(word.levels, [8, 8, 8, 8])

    def test_bad_clip(self):
        with self.assertRaises(CodecError):
            quantize_soft([1.0], 0.0)


class TestCrc(unittest.TestCase):
    def test_check_value(self):
        self.assertEqual(crc_remainder(unpack_bits(b"123456789", 72)), 0xCDE703)

    def test_partial_octets_match_bitwise_register(self):
        rng = make_rng(4)
        bits = rng.integers(0, 2, 45, dtype=np.uint8)
        register = 0
        for bit in bits:
            feedback = ((register >> 23) & 1) ^ int(bit)
            register = (register << 1) & 0xFFFFFF
            if feedback:
                register ^= 0x864CFB
        self.assertEqual(crc_remainder(bits), register)

    def test_append_and_check(self):
        message = make_rng(5).integers(0, 2, 170, dtype=np.uint8)
        word = crc_append(message)
        self.assertEqual(word.size, 194)
        np.testing.assert_array_equal(word[:170], message)
        self.assertTrue(crc_check(word))
        for position in (0, 99, 193):
            corrupted = word.copy()
            corrupted[position] ^= 1
            self.assertFalse(crc_check(corrupted))

    def test_all_one_and_two_bit_errors_in_window_detected(self):
        word = crc_append(make_rng(12).integers(0, 2, 64, dtype=np.uint8))
        for i in range(64):
            corrupted = word.copy()
            corrupted[i] ^= 1
            self.assertFalse(crc_check(corrupted), f"flip at {i}")
            for j in range(i + 1, 64):
                pair = corrupted.copy()
                pair[j] ^= 1
                self.assertFalse(crc_check(pair), f"flips at {i}, {j}")

    def test_appended_words_check(self):
        rng = make_rng(13)
        for length in rng.integers(1, 513, 200):
            self.assertTrue(crc_check(crc_append(rng.integers(0, 2, int(length), dtype=np.uint8))))

    def test_burst_error_detected(self):
        word = crc_append(make_rng(6).integers(0, 2, 18, dtype=np.uint8))
        word[3:20] ^= 1
        self.assertFalse(crc_check(word))

    def test_other_crc_definition(self):
        spec = CrcSpec(width=8, polynomial=0x07)
        self.assertEqual(crc_remainder(unpack_bits(b"123456789", 72), spec), 0xF4)
        self.assertTrue(crc_check(crc_append(np.array([1, 0, 1], dtype=np.uint8), spec), spec))

    def test_invalid_lengths(self):
        with self.assertRaises(CodecError):
            crc_append(np.zeros(0, dtype=np.uint8))
        with self.assertRaises(CodecError):
            crc_check(np.zeros(24, dtype=np.uint8))


class TestBitPacking(unittest.TestCase):
    def test_msb_first(self):
        self.assertEqual(pack_bits(np.array([1, 0, 0, 0, 0, 0, 0, 1, 1])), b"\x81\x80")
        np.testing.assert_array_equal(unpack_bits(b"\x81\x80", 9), [1, 0, 0, 0, 0, 0, 0, 1, 1])


class TestPacketCodec(unittest.TestCase):
    def test_payload_sizes(self):
        self.assertEqual(PacketCodec(48).payload_bits, 18)
        self.assertEqual(PacketCodec(200).payload_bits, 170)
        with self.assertRaises(CodecError):
            PacketCodec(30)

    def test_encode_decode(self):
        codec = PacketCodec(48)
        payload = make_rng(7).integers(0, 2, 18, dtype=np.uint8)
        coded = codec.encode(payload)
        self.assertEqual(coded.size, 96)
        passed, decoded = codec.decode(bits_to_llr(coded))
        self.assertTrue(passed)
        np.testing.assert_array_equal(decoded, payload)

    def test_noise_fails_crc(self):
        codec = PacketCodec(48)
        passed, decoded = codec.decode(make_rng(8).standard_normal(96))
        self.assertFalse(passed)
        self.assertEqual(decoded.size, 18)

    def test_wrong_sizes(self):
        codec = PacketCodec(48)
        with self.assertRaises(CodecError):
            codec.encode(np.zeros(17, dtype=np.uint8))
        with self.assertRaises(CodecError):
            codec.decode(np.zeros(95))


if __name__ == "__main__":
    unittest.main()
