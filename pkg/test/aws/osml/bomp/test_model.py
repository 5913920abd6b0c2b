#  Copyright 2023-2026 Amazon.com, Inc. or its affiliates.

import tempfile
import unittest
from pathlib import Path

import numpy as np

from aws.osml.bomp.errors import ParameterError
from aws.osml.bomp.model import (
    ModelParams,
    block_columns,
    block_indices,
    generate_instance,
    load_instance,
    sample_support,
    save_instance,
)
from aws.osml.bomp.numerics import make_rng


class TestModelParams(unittest.TestCase):
    def test_valid(self):
        params = ModelParams(N=128, d=10, M=400, N_a=8, sigma2=0.01)
        self.assertIs(params.validate(), params)

    def test_constraint_names(self):
        cases = [
            (ModelParams(N=8, d=4, M=10, N_a=3, sigma2=0.1), "M > N_a*d"),
            (ModelParams(N=8, d=4, M=40, N_a=2, sigma2=0.1), "M < N*d"),
            (ModelParams(N=8, d=4, M=20, N_a=9, sigma2=0.1), "1 <= N_a <= N"),
            (ModelParams(N=8, d=4, M=20, N_a=0, sigma2=0.1), "1 <= N_a <= N"),
            (ModelParams(N=8, d=4, M=20, N_a=2, sigma2=-1.0), "sigma2 >= 0"),
            (ModelParams(N=8, d=0, M=20, N_a=2, sigma2=0.1), "d >= 1"),
        ]
        for params, constraint in cases:
            with self.assertRaises(ParameterError) as context:
                params.validate()
            self.assertEqual(context.exception.constraint, constraint)


class TestGenerateInstance(unittest.TestCase):
    def setUp(self):
        self.params = ModelParams(N=32, d=4, M=60, N_a=5, sigma2=0.05)
        self.instance = generate_instance(self.params, make_rng(21))

    def test_shapes_and_support(self):
        instance = self.instance
        self.assertEqual(instance.B.shape, (60, 128))
        self.assertEqual(instance.M, 60)
        self.assertEqual(instance.N, 32)
        self.assertEqual(len(instance.support), 5)
        self.assertEqual(list(instance.support), sorted(set(instance.support)))
        for block in range(32):
            values = instance.s[block * 4 : (block + 1) * 4]
            if block in instance.support:
                self.assertTrue(np.all(values != 0))
            else:
                self.assertTrue(np.all(values == 0))

    def test_observation_recorded_exactly(self):
        instance = self.instance
        np.testing.assert_array_equal(instance.y, instance.B @ instance.s + instance.z)

    def test_arrays_read_only(self):
        with self.assertRaises(ValueError):
            self.instance.y[0] = 0

    def test_reproducible(self):
        again = generate_instance(self.params, make_rng(21))
        np.testing.assert_array_equal(again.B, self.instance.B)
        np.testing.assert_array_equal(again.y, self.instance.y)
        self.assertEqual(again.support, self.instance.support)

    def test_noise_free(self):
        params = ModelParams(N=32, d=4, M=60, N_a=5, sigma2=0.0)
        instance = generate_instance(params, make_rng(1))
        self.assertFalse(np.any(instance.z))
        np.testing.assert_array_equal(instance.y, instance.B @ instance.s)

    def test_column_energy(self):
        params = ModelParams(N=64, d=8, M=500, N_a=4, sigma2=0.1)
        instance = generate_instance(params, make_rng(5))
        column_energy = np.sum(np.abs(instance.B) ** 2, axis=0)
        self.assertAlmostEqual(float(np.mean(column_energy)), 1.0, delta=0.02)

    def test_invalid_params(self):
        with self.assertRaises(ParameterError):
            generate_instance(ModelParams(N=8, d=4, M=10, N_a=3, sigma2=0.1), make_rng(0))


class TestSupport(unittest.TestCase):
    def test_distinct_and_in_range(self):
        rng = make_rng(3)
        for _ in range(50):
            support = sample_support(rng, 20, 7)
            self.assertEqual(len(set(support)), 7)
            self.assertTrue(all(0 <= j < 20 for j in support))

    def test_full_support(self):
        self.assertEqual(sample_support(make_rng(0), 6, 6), tuple(range(6)))

    def test_roughly_uniform(self):
        rng = make_rng(9)
        counts = np.zeros(10)
        for _ in range(4000):
            counts[list(sample_support(rng, 10, 3))] += 1
        np.testing.assert_allclose(counts / 4000, 0.3, atol=0.04)


class TestBlocks(unittest.TestCase):
    def test_block_columns(self):
        B = np.arange(24).reshape(2, 12)
        np.testing.assert_array_equal(block_columns(B, 1, 4), B[:, 4:8])
        with self.assertRaises(IndexError):
            block_columns(B, 3, 4)
        with self.assertRaises(IndexError):
            block_columns(B, -1, 4)

    def test_block_indices(self):
        np.testing.assert_array_equal(block_indices([2, 0], 3), [6, 7, 8, 0, 1, 2])
        self.assertEqual(block_indices([], 3).size, 0)


class TestInstanceFile(unittest.TestCase):
    def test_save_and_load(self):
        instance = generate_instance(ModelParams(N=16, d=3, M=30, N_a=4, sigma2=0.2), make_rng(4))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "instance.bin"
            save_instance(path, instance)
            self.assertTrue(path.read_bytes().startswith(b"BOMPINST1\n"))
            loaded = load_instance(path)
        np.testing.assert_array_equal(loaded.B, instance.B)
        np.testing.assert_array_equal(loaded.y, instance.y)
        self.assertEqual(loaded.support, instance.support)
        self.assertEqual(loaded.sigma2, instance.sigma2)

    def test_rejects_foreign_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "other.bin"
            path.write_bytes(b"NOTANINSTANCE\n{}\n")
            with self.assertRaises(ParameterError):
                load_instance(path)

    def test_rejects_truncated_payload(self):
        instance = generate_instance(ModelParams(N=16, d=3, M=30, N_a=4, sigma2=0.2), make_rng(4))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "instance.bin"
            save_instance(path, instance)
            path.write_bytes(path.read_bytes()[:-16])
            with self.assertRaises(ParameterError):
                load_instance(path)


if __name__ == "__main__":
    unittest.main()
