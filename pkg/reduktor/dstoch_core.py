"""
Doubly stochastic matrices: validation, the compression functional, the
block-uniform maximal-entropy projector and the unit-compression
(decomposability) characterization.
"""

import functools
import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import helmert
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import conf
from .exceptions import (
    ColSumViolationError,
    DimensionTooLargeForExhaustiveError,
    EmptySampleListError,
    InvalidInputError,
    InvalidPartitionError,
    NegativeEntryError,
    NotSquareError,
    RowSumViolationError,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DStochMatrix:
    """An n x n doubly stochastic matrix. The entries array is read-only."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, 'entries', arr)

    @property
    def n(self):
        return self.entries.shape[0]

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n))

    @classmethod
    def theta(cls, n):
        return cls(np.full((n, n), 1.0 / n))

    def __eq__(self, other):
        if not isinstance(other, DStochMatrix):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())


@dataclass(frozen=True)
class BlockPartition:
    """Disjoint index blocks (size >= 2) plus the sector where the limit is the identity.

    Indices are 0-based.
    """

    blocks: tuple = ()
    id_sector: tuple = ()

    def __post_init__(self):
        blocks = tuple(sorted((tuple(sorted(int(i) for i in b)) for b in self.blocks), key=lambda b: b[0] if b else -1))
        object.__setattr__(self, 'blocks', blocks)
        object.__setattr__(self, 'id_sector', tuple(sorted(int(i) for i in self.id_sector)))

    @classmethod
    def from_labels(cls, labels):
        """Group indices by component label; singleton components go to the identity sector."""
        groups = {}
        for idx, label in enumerate(labels):
            groups.setdefault(int(label), []).append(idx)
        blocks = [g for g in groups.values() if len(g) >= 2]
        id_sector = [g[0] for g in groups.values() if len(g) == 1]
        return cls(tuple(blocks), tuple(id_sector))

    @classmethod
    def single_block(cls, n):
        return cls((tuple(range(n)),), ())

    @property
    def is_single_block(self):
        return len(self.blocks) == 1 and not self.id_sector

    def validate(self, n):
        seen = []
        for block in self.blocks:
            if len(block) < 2:
                raise InvalidPartitionError(f"block {block} has fewer than two indices")
            seen.extend(block)
        seen.extend(self.id_sector)
        if sorted(seen) != list(range(n)):
            raise InvalidPartitionError(
                f"blocks {self.blocks} and identity sector {self.id_sector} do not partition range({n})"
            )


@dataclass(frozen=True)
class DecompositionWitness:
    """Rows reordering `row_order` such that M[row_order] is block diagonal along `partition`."""

    row_order: tuple
    partition: BlockPartition

    @property
    def permutation(self):
        return np.eye(len(self.row_order))[list(self.row_order)]

    def apply(self, M):
        return as_array(M)[list(self.row_order)]


def as_array(M):
    if isinstance(M, DStochMatrix):
        return M.entries
    return np.asarray(M, dtype=float)


def validate_dstoch(raw, tol=None, *, tol_entry=None):
    """Check that `raw` is doubly stochastic and return it as a DStochMatrix.

    Entries within `tol_entry` below zero are clamped to zero.
    """
    arr = np.array(raw, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise NotSquareError(arr.shape)
    tol = conf.setting('TOL_SUM', tol)
    tol_entry = conf.setting('TOL_ENTRY', tol_entry)

    bad = ~np.isfinite(arr)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise NegativeEntryError((i, j), float(arr[i, j]))

    if arr.size and arr.min() < -tol_entry:
        i, j = np.unravel_index(np.argmin(arr), arr.shape)
        raise NegativeEntryError((i, j), float(arr[i, j]))

    rows = arr.sum(axis=1)
    row_dev = np.abs(rows - 1.0)
    if arr.size and row_dev.max() > tol:
        first = int(np.flatnonzero(row_dev > tol)[0])
        raise RowSumViolationError(first, float(rows[first]))

    cols = arr.sum(axis=0)
    col_dev = np.abs(cols - 1.0)
    if arr.size and col_dev.max() > tol:
        first = int(np.flatnonzero(col_dev > tol)[0])
        raise ColSumViolationError(first, float(cols[first]))

    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        logger.debug(f"Clamping entries into [0, 1] (min {arr.min():.3e}, max {arr.max():.17g})")
        arr = np.clip(arr, 0.0, 1.0)
    return DStochMatrix(arr)


@functools.lru_cache(maxsize=32)
def zero_sum_basis(n):
    """Helmert basis: n x (n-1), orthonormal columns spanning {v : sum(v) = 0}."""
    basis = np.ascontiguousarray(helmert(n).T)
    basis.setflags(write=False)
    return basis


def compression(M):
    """Spectral norm of M restricted to the zero-sum subspace."""
    arr = as_array(M)
    n = arr.shape[0]
    if n < 2:
        return 0.0
    Q = zero_sum_basis(n)
    return float(np.linalg.norm(Q.T @ arr @ Q, 2))


def theta_of(partition, n):
    """Block-diagonal maximal-entropy projector for `partition`."""
    partition.validate(n)
    out = np.zeros((n, n))
    for block in partition.blocks:
        idx = np.array(block)
        out[np.ix_(idx, idx)] = 1.0 / len(block)
    for i in partition.id_sector:
        out[i, i] = 1.0
    return DStochMatrix(out)


def _symmetric_components(support):
    n_comp, labels = connected_components(csr_matrix(support | support.T), directed=False)
    return n_comp, labels


def _bipartite_witness(arr, support_tol):
    n = arr.shape[0]
    support = arr > support_tol
    # rows are nodes 0..n-1, columns are nodes n..2n-1
    adjacency = np.zeros((2 * n, 2 * n), dtype=bool)
    adjacency[:n, n:] = support
    n_comp, labels = connected_components(csr_matrix(adjacency), directed=False)
    if n_comp < 2:
        return None

    row_order = [0] * n
    col_labels = [None] * n
    for comp in range(n_comp):
        rows = [i for i in range(n) if labels[i] == comp]
        cols = [j for j in range(n) if labels[n + j] == comp]
        if len(rows) != len(cols):
            logger.warning(f"Support component {comp} has {len(rows)} rows but {len(cols)} columns")
            return None
        for r, c in zip(rows, cols):
            row_order[c] = r
            col_labels[c] = comp
    return DecompositionWitness(tuple(row_order), BlockPartition.from_labels(col_labels))


def _exhaustive_witness(arr, support_tol, cap):
    n = arr.shape[0]
    if n > cap:
        raise DimensionTooLargeForExhaustiveError(n, cap)
    for order in itertools.permutations(range(n)):
        permuted = arr[list(order)]
        n_comp, labels = _symmetric_components(permuted > support_tol)
        if n_comp >= 2:
            return DecompositionWitness(tuple(order), BlockPartition.from_labels(labels))
    return None


def decomposability_witness(M, tol=None, *, method='bipartite', support_tol=None, max_exhaustive_n=None):
    """Permutation and partition making P∘M block decomposable, or None when c(M) < 1 - tol.

    method='bipartite' reads the components of the rows x columns support graph;
    method='exhaustive' tries every row permutation (n <= EXHAUSTIVE_MAX_N).
    """
    tol = conf.setting('COMPRESSION_UNIT_TOL', tol)
    support_tol = conf.setting('SUPPORT_TOL', support_tol)
    arr = as_array(M)
    if compression(arr) < 1.0 - tol:
        return None
    if method == 'bipartite':
        return _bipartite_witness(arr, support_tol)
    if method == 'exhaustive':
        cap = conf.setting('EXHAUSTIVE_MAX_N', max_exhaustive_n)
        return _exhaustive_witness(arr, support_tol, cap)
    raise ValueError(f"unknown method {method!r}")


def support_blocks(samples, tol=None):
    """Connected components of the symmetrized union of sample supports."""
    samples = [as_array(s) for s in samples]
    if not samples:
        raise EmptySampleListError("support_blocks needs at least one sample")
    n = samples[0].shape[0]
    if any(s.shape != (n, n) for s in samples):
        raise InvalidInputError("samples do not share a common dimension")
    tol = conf.setting('SUPPORT_TOL', tol)

    support = np.zeros((n, n), dtype=bool)
    for sample in samples:
        support |= sample > tol
    _, labels = _symmetric_components(support)
    return BlockPartition.from_labels(labels)
