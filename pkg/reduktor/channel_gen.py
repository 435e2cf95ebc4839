"""
Kraus families and doubly stochastic evolution matrices generated by a
system-bath model.

The joint generator is the (n2*n) x (n2*n) Hermitian matrix assembled from
the blocks B_ab; A_ab(t) are the blocks of exp(-i G t) scaled by 1/sqrt(n2).
"""

import functools
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from . import conf
from .dstoch_core import compression, validate_dstoch
from .exceptions import (
    BlockIndexOutOfRangeError,
    InvalidInputError,
    NonHermitianModelError,
    NonUnitaryBasisError,
)
from .utils import chunk_ranges, map_in_order
from .volterra import MatrixSource

logger = logging.getLogger(__name__)

# below this many times, M(t) is evaluated on the calling thread
PARALLEL_SAMPLE_MIN = 256


@dataclass(frozen=True, eq=False)
class BathModel:
    """Hermitian block family B[a, b] (shape n2 x n2 x n x n) and a measurement basis.

    Columns of `basis` are the measurement vectors |i>; the computational basis
    is used when none is given.
    """

    blocks: np.ndarray
    basis: np.ndarray = None

    def __post_init__(self):
        blocks = np.array(self.blocks, dtype=complex)
        if blocks.ndim != 4 or blocks.shape[0] != blocks.shape[1] or blocks.shape[2] != blocks.shape[3]:
            raise InvalidInputError(f"blocks must have shape (n2, n2, n, n), got {blocks.shape}")
        n = blocks.shape[2]
        basis = np.eye(n, dtype=complex) if self.basis is None else np.array(self.basis, dtype=complex)
        if basis.shape != (n, n):
            raise InvalidInputError(f"basis must be {n} x {n}, got {basis.shape}")

        tol_h = conf.setting('TOL_HERMITIAN')
        n2 = blocks.shape[0]
        for a in range(n2):
            for b in range(a, n2):
                residual = float(np.max(np.abs(blocks[a, b] - blocks[b, a].conj().T)))
                if residual > tol_h:
                    raise NonHermitianModelError(a, b, residual)

        unitary_residual = float(np.max(np.abs(basis.conj().T @ basis - np.eye(n))))
        if unitary_residual > conf.setting('TOL_UNITARY'):
            raise NonUnitaryBasisError(unitary_residual)

        blocks.setflags(write=False)
        basis.setflags(write=False)
        object.__setattr__(self, 'blocks', blocks)
        object.__setattr__(self, 'basis', basis)

    @classmethod
    def from_hamiltonian(cls, H, basis=None):
        """Bathless model (n2 = 1): A(t) = exp(-iHt)."""
        H = np.asarray(H, dtype=complex)
        return cls(H[None, None, :, :], basis)

    @classmethod
    def block_diagonal(cls, *models):
        """Direct sum over the system space of models sharing n2; no cross terms."""
        n2 = models[0].n2
        if any(m.n2 != n2 for m in models):
            raise InvalidInputError("block_diagonal needs a common bath dimension")
        n = sum(m.n for m in models)
        blocks = np.zeros((n2, n2, n, n), dtype=complex)
        basis = np.zeros((n, n), dtype=complex)
        offset = 0
        for m in models:
            sl = slice(offset, offset + m.n)
            blocks[:, :, sl, sl] = m.blocks
            basis[sl, sl] = m.basis
            offset += m.n
        return cls(blocks, basis)

    @property
    def n(self):
        return self.blocks.shape[2]

    @property
    def n2(self):
        return self.blocks.shape[0]

    @functools.cached_property
    def generator(self):
        """Joint Hermitian generator, rows indexed by (a, i) -> a*n + i."""
        n, n2 = self.n, self.n2
        return self.blocks.transpose(0, 2, 1, 3).reshape(n2 * n, n2 * n)

    @functools.cached_property
    def measured_blocks(self):
        """B_ab written in the measurement basis: W^dagger B_ab W."""
        W = self.basis
        return np.einsum('ki,abkl,lj->abij', W.conj(), self.blocks, W)

    @functools.cached_property
    def _plain_spectrum(self):
        return eigh(self.generator)

    @functools.cached_property
    def _spectrum(self):
        """Eigendecomposition of the generator in the measurement basis."""
        n, n2 = self.n, self.n2
        measured = self.measured_blocks.transpose(0, 2, 1, 3).reshape(n2 * n, n2 * n)
        evals, evecs = eigh(measured)
        return evals, evecs

    def propagator(self, t):
        """exp(-i G t) by eigendecomposition, computational basis."""
        evals, evecs = self._plain_spectrum
        return (evecs * np.exp(-1j * evals * t)) @ evecs.conj().T

    def propagators(self, times):
        """Measured-basis propagators for an array of times, shape (len(times), N, N)."""
        evals, evecs = self._spectrum
        phases = np.exp(-1j * np.outer(np.asarray(times, dtype=float), evals))
        return np.einsum('ik,tk,jk->tij', evecs, phases, evecs.conj())


@dataclass(frozen=True, eq=False)
class KrausFamily:
    """Kraus operators A[a, b] at time t, shape n2 x n2 x n x n."""

    t: float
    A: np.ndarray

    def normalization_residual(self):
        n = self.A.shape[2]
        ops = self.A.reshape(-1, n, n)
        left = np.einsum('kij,klj->il', ops, ops.conj())
        right = np.einsum('kji,kjl->il', ops.conj(), ops)
        eye = np.eye(n)
        return float(max(np.max(np.abs(left - eye)), np.max(np.abs(right - eye))))


def kraus_at(model, t):
    """Kraus family A_ab(t) = [exp(-i G t)]_ab / sqrt(n2), computational basis."""
    n, n2 = model.n, model.n2
    U = model.propagator(t)
    A = U.reshape(n2, n, n2, n).transpose(0, 2, 1, 3) / np.sqrt(n2)
    family = KrausFamily(float(t), A)
    residual = family.normalization_residual()
    if residual > conf.setting('TOL_KRAUS'):
        logger.warning(f"Kraus normalization residual {residual:.3e} at t={t}")
    return family


def _m_from_propagators(U, n, n2):
    # M_ij = (1/n2) sum_ab |<i|U_ab|j>|^2, with U indexed by (a, i), (b, j)
    weights = np.abs(U) ** 2
    return weights.reshape(-1, n2, n, n2, n).sum(axis=(1, 3)) / n2


def m_of_t(model, t, tol=None):
    """Evolution matrix M_ij(t) = sum_ab |<i|A_ab(t)|j>|^2 in the model basis."""
    U = model.propagators([t])
    raw = _m_from_propagators(U, model.n, model.n2)[0]
    return validate_dstoch(raw, conf.setting('TOL_SUM', tol))


def m_of_t_batch(model, times):
    """Raw M(t) for many times at once, shape (len(times), n, n)."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    return _m_from_propagators(model.propagators(times), model.n, model.n2)


def sample_m(model, times, workers=None):
    """M(t) on a grid of times, evaluated in chunks on the worker pool."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    workers = conf.setting('WORKERS', workers)
    chunks = chunk_ranges(len(times), workers)
    parts = map_in_order(lambda r: m_of_t_batch(model, times[r.start:r.stop]), chunks, workers)
    return np.concatenate(parts, axis=0) if parts else np.zeros((0, model.n, model.n))


def second_order_matrix(model):
    """Second Taylor coefficient of M(t): M(t) = 1 + M2 t^2 / 2 + O(t^3).

    (M2)_jl = (2/n2) (sum_ab |<j|B_ab|l>|^2 - delta_jl sum_ac <j|B_ac B_ca|j>)
    """
    B = model.measured_blocks
    n2 = model.n2
    squares = np.sum(np.abs(B) ** 2, axis=(0, 1))
    diag = np.einsum('acjk,cakj->j', B, B).real
    return (2.0 / n2) * (squares - np.diag(diag))


def basis_genericity(model, which_block, tol_offdiag=None):
    """True iff every off-diagonal element of the chosen block exceeds tol_offdiag in modulus."""
    a, b = which_block
    if not (0 <= a < model.n2 and 0 <= b < model.n2):
        raise BlockIndexOutOfRangeError(f"block ({a}, {b}) outside a {model.n2} x {model.n2} bath")
    tol_offdiag = conf.setting('TOL_OFFDIAG', tol_offdiag)
    block = model.measured_blocks[a, b]
    off = ~np.eye(model.n, dtype=bool)
    return bool(np.all(np.abs(block[off]) > tol_offdiag))


@dataclass(frozen=True)
class GenericityReport:
    generic: bool
    witness_t: float
    c_min: float


def genericity_check(model, t_samples, delta_threshold=0.9, workers=None):
    """Sampled surrogate of genericity: some c(M(t)) <= delta_threshold < 1."""
    if not delta_threshold < 1.0:
        raise InvalidInputError(f"delta_threshold must be below 1, got {delta_threshold}")
    times = np.atleast_1d(np.asarray(t_samples, dtype=float))
    if times.size == 0:
        raise InvalidInputError("genericity_check needs a nonempty time grid")
    samples = sample_m(model, times, workers)
    c_values = np.array([compression(m) for m in samples])
    best = int(np.argmin(c_values))
    report = GenericityReport(
        generic=bool(c_values[best] <= delta_threshold),
        witness_t=float(times[best]),
        c_min=float(c_values[best]),
    )
    logger.info(f"Genericity over {times.size} samples: c_min={report.c_min:.6g} at t={report.witness_t:.6g}")
    return report


def random_model(n, n2, rng, scale=1.0, random_basis=False):
    """Random Hermitian bath model (standard complex Gaussian blocks), optionally in a Haar-random basis."""
    N = n * n2
    X = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    G = scale * (X + X.conj().T) / 2.0
    blocks = G.reshape(n2, n, n2, n).transpose(0, 2, 1, 3)
    basis = random_unitary(n, rng) if random_basis else None
    return BathModel(blocks, basis)


def random_unitary(n, rng):
    """Haar-distributed unitary via QR with phase correction."""
    Z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    Q, R = np.linalg.qr(Z)
    phases = np.diag(R) / np.abs(np.diag(R))
    return Q * phases


def model_source(model, workers=None):
    """M(t) of a bath model as a matrix source for the solvers and the simulator."""
    return MatrixSource(
        func=lambda t: m_of_t_batch(model, [t])[0],
        n=model.n,
        batch=lambda times: sample_m(model, times, workers) if len(times) > PARALLEL_SAMPLE_MIN else m_of_t_batch(model, times),
        label=f'bath(n={model.n}, n2={model.n2})',
    )
