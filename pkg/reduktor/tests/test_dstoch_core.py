import itertools

import numpy as np
from django.test import SimpleTestCase

from reduktor.channel_gen import model_source, random_model
from reduktor.dstoch_core import (
    BlockPartition,
    DStochMatrix,
    compression,
    decomposability_witness,
    support_blocks,
    theta_of,
    validate_dstoch,
)
from reduktor.exceptions import (
    ColSumViolationError,
    DimensionTooLargeForExhaustiveError,
    EmptySampleListError,
    InvalidPartitionError,
    NegativeEntryError,
    NotSquareError,
    RowSumViolationError,
)

CYCLE_3 = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])


class ValidateDStochTests(SimpleTestCase):
    def test_identity_passes(self):
        M = validate_dstoch(np.eye(3))
        self.assertIsInstance(M, DStochMatrix)
        np.testing.assert_array_equal(M.entries, np.eye(3))

    def test_not_square(self):
        with self.assertRaises(NotSquareError):
            validate_dstoch(np.ones((2, 3)) / 3)

    def test_row_sum_violation_reports_row(self):
        raw = np.array([[0.5, 0.6], [0.5, 0.4]])
        with self.assertRaises(RowSumViolationError) as ctx:
            validate_dstoch(raw)
        self.assertEqual(ctx.exception.row, 0)
        self.assertAlmostEqual(ctx.exception.magnitude, 1.1)

    def test_column_sum_violation(self):
        raw = np.array([[0.7, 0.3], [0.5, 0.5]])
        with self.assertRaises(ColSumViolationError) as ctx:
            validate_dstoch(raw)
        self.assertEqual(ctx.exception.col, 0)
        self.assertAlmostEqual(ctx.exception.magnitude, 1.2)

    def test_first_violating_column_is_reported(self):
        # deviations 0.3999999999999999 and 0.4: the first column still wins
        raw = np.array([[0.7, 0.3], [0.7, 0.3]])
        with self.assertRaises(ColSumViolationError) as ctx:
            validate_dstoch(raw)
        self.assertEqual(ctx.exception.col, 0)

    def test_negative_entry(self):
        raw = np.array([[1.5, -0.5], [-0.5, 1.5]])
        with self.assertRaises(NegativeEntryError) as ctx:
            validate_dstoch(raw)
        self.assertLess(ctx.exception.magnitude, 0)

    def test_tiny_negative_is_clamped(self):
        raw = np.array([[1.0 + 1e-13, -1e-13], [-1e-13, 1.0 + 1e-13]])
        M = validate_dstoch(raw)
        self.assertGreaterEqual(M.entries.min(), 0.0)
        self.assertLessEqual(M.entries.max(), 1.0)

    def test_entries_are_read_only(self):
        M = DStochMatrix.identity(2)
        with self.assertRaises(ValueError):
            M.entries[0, 0] = 0.5


class CompressionTests(SimpleTestCase):
    def test_identity_and_permutations_have_unit_compression(self):
        self.assertAlmostEqual(compression(np.eye(4)), 1.0)
        self.assertAlmostEqual(compression(CYCLE_3), 1.0)

    def test_theta_has_zero_compression(self):
        self.assertAlmostEqual(compression(DStochMatrix.theta(5)), 0.0)

    def test_dimension_one(self):
        self.assertEqual(compression(np.eye(1)), 0.0)

    def test_convex_family(self):
        for alpha in (0.0, 0.3, 0.9):
            M = alpha * np.eye(3) + (1 - alpha) * np.full((3, 3), 1 / 3)
            self.assertAlmostEqual(compression(M), alpha)

    def test_bounded_by_one(self):
        rng = np.random.default_rng(4)
        perms = [np.eye(4)[list(p)] for p in itertools.permutations(range(4))]
        for _ in range(20):
            w = rng.dirichlet(np.ones(len(perms)))
            M = sum(wi * P for wi, P in zip(w, perms))
            self.assertLessEqual(compression(M), 1.0 + 1e-12)


    def test_submultiplicative(self):
        rng = np.random.default_rng(5)
        perms = [np.eye(3)[list(p)] for p in itertools.permutations(range(3))]
        for _ in range(50):
            M, N = (sum(wi * P for wi, P in zip(rng.dirichlet(np.ones(6)), perms)) for _ in range(2))
            self.assertLessEqual(compression(M @ N), compression(M) * compression(N) + 1e-10)

class PartitionTests(SimpleTestCase):
    def test_theta_of_blocks(self):
        partition = BlockPartition(((0, 2), (1, 3)), (4,))
        theta = theta_of(partition, 5).entries
        self.assertAlmostEqual(theta[0, 2], 0.5)
        self.assertAlmostEqual(theta[1, 3], 0.5)
        self.assertEqual(theta[4, 4], 1.0)
        self.assertEqual(theta[0, 1], 0.0)
        np.testing.assert_allclose(theta @ theta, theta)

    def test_invalid_partition(self):
        with self.assertRaises(InvalidPartitionError):
            theta_of(BlockPartition(((0, 1),), ()), 3)
        with self.assertRaises(InvalidPartitionError):
            theta_of(BlockPartition(((0,), (1, 2)), ()), 3)

    def test_from_labels_moves_singletons_to_identity_sector(self):
        partition = BlockPartition.from_labels([0, 1, 0, 2])
        self.assertEqual(partition.blocks, ((0, 2),))
        self.assertEqual(partition.id_sector, (1, 3))


class DecomposabilityTests(SimpleTestCase):
    def test_mixing_matrix_has_no_witness(self):
        M = 0.5 * (np.eye(3) + CYCLE_3)
        self.assertIsNone(decomposability_witness(M))

    def test_permuted_block_matrix(self):
        block = np.array([[0.3, 0.7], [0.7, 0.3]])
        M = np.zeros((4, 4))
        M[np.ix_([0, 2], [1, 3])] = block
        M[np.ix_([1, 3], [0, 2])] = block
        witness = decomposability_witness(M)
        self.assertIsNotNone(witness)
        aligned = witness.apply(M)
        for block_idx in witness.partition.blocks:
            outside = [i for i in range(4) if i not in block_idx]
            self.assertEqual(aligned[np.ix_(block_idx, outside)].sum(), 0.0)
        np.testing.assert_array_equal(witness.permutation @ M, aligned)

    def test_exhaustive_refuses_large_dimension(self):
        with self.assertRaises(DimensionTooLargeForExhaustiveError):
            decomposability_witness(np.eye(9), method='exhaustive')

    def test_witness_iff_unit_compression_on_convex_grid(self):
        perms = [np.eye(3)[list(p)] for p in itertools.permutations(range(3))]
        weights = (0.0, 0.25, 0.5, 0.75, 1.0)
        for P, Q in itertools.combinations(perms, 2):
            for w in weights:
                M = w * P + (1 - w) * Q
                unit = compression(M) >= 1 - 1e-8
                for method in ('bipartite', 'exhaustive'):
                    witness = decomposability_witness(M, method=method)
                    self.assertEqual(witness is not None, unit, msg=f"{method} w={w}\n{M}")
        for P, Q, S in itertools.combinations(perms, 3):
            M = (P + Q + S) / 3
            unit = compression(M) >= 1 - 1e-8
            self.assertEqual(decomposability_witness(M) is not None, unit)


class SupportBlocksTests(SimpleTestCase):
    def test_union_of_supports(self):
        a = np.eye(4)
        b = np.eye(4)[[1, 0, 2, 3]]
        partition = support_blocks([a, b])
        self.assertEqual(partition.blocks, ((0, 1),))
        self.assertEqual(partition.id_sector, (2, 3))

    def test_generic_random_model_is_one_block(self):
        model = random_model(3, 2, np.random.default_rng(6))
        partition = support_blocks(list(model_source(model).sample(np.linspace(0.0, 5.0, 16))))
        self.assertTrue(partition.is_single_block)
        self.assertEqual(partition.blocks, ((0, 1, 2),))

    def test_empty(self):
        with self.assertRaises(EmptySampleListError):
            support_blocks([])
