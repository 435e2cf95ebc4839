"""
Direct Monte Carlo over Poisson reduction times.

Realization r draws from its own generator seeded with SeedSequence([seed, r]),
so the estimate depends on (seed, R) only and never on the worker count.
"""

import logging
import time
from dataclasses import dataclass

import numpy as np

from . import conf
from .dstoch_core import DStochMatrix
from .exceptions import InvalidInputError
from .utils import chunk_ranges, csv_writer, fmt, map_in_order

logger = logging.getLogger(__name__)

MIN_REALIZATIONS = 100


@dataclass(frozen=True)
class PoissonRealization:
    T: float
    jumps: tuple = ()

    def __post_init__(self):
        jumps = tuple(float(t) for t in self.jumps)
        if any(not 0.0 < t < self.T for t in jumps) or any(b <= a for a, b in zip(jumps, jumps[1:])):
            raise InvalidInputError(f"jump times must be strictly increasing inside (0, {self.T})")
        object.__setattr__(self, 'jumps', jumps)

    @property
    def gaps(self):
        edges = np.concatenate(([0.0], self.jumps, [self.T]))
        return np.diff(edges)


@dataclass(frozen=True, eq=False)
class McEstimate:
    mean: np.ndarray
    stderr: np.ndarray
    R: int
    seed: int

    def write_csv(self, handle, meta=None):
        for key, value in (meta or {}).items():
            handle.write(f"# {key}={value}\n")
        n = self.mean.shape[0]
        writer = csv_writer(handle)
        writer.writerow(['block', 'row'] + [f'col_{j}' for j in range(n)])
        for name, block in (('mean', self.mean), ('stderr', self.stderr)):
            for i, row in enumerate(block):
                writer.writerow([name, i] + [fmt(x) for x in row])


def realization_rng(seed, r):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(r)]))


def sample_realization(nu, T, rng):
    """Poisson count with mean nu*T, then sorted uniform jump positions."""
    if nu < 0 or not T > 0:
        raise InvalidInputError(f"need nu >= 0 and T > 0, got nu={nu}, T={T}")
    count = int(rng.poisson(nu * T))
    jumps = np.sort(rng.uniform(0.0, T, size=count))
    # uniform draws are in [0, T); a draw of exactly 0 or a tie has probability zero
    return PoissonRealization(T, tuple(jumps))


def _ordered_product(factors):
    # latest gap leftmost
    out = factors[-1]
    for factor in factors[-2::-1]:
        out = out @ factor
    return out


def evolve_realization(source, r):
    """M(T - t_k) ... M(t_2 - t_1) M(t_1) for the jump times of r."""
    return DStochMatrix(_ordered_product(source.sample(r.gaps)))


def _run_chunk(source, nu, T, seed, indices):
    out = np.empty((len(indices), source.n, source.n))
    for pos, r in enumerate(indices):
        realization = sample_realization(nu, T, realization_rng(seed, r))
        out[pos] = _ordered_product(source.sample(realization.gaps))
    return out


def monte_carlo_average(source, nu, T, R, seed, workers=None):
    """Entrywise mean and standard error of the composed evolution over R realizations."""
    if R < MIN_REALIZATIONS:
        raise InvalidInputError(f"R must be at least {MIN_REALIZATIONS}, got {R}")
    if nu == 0:
        value = source.at(T)
        return McEstimate(np.array(value, dtype=float), np.zeros_like(value, dtype=float), R, seed)

    started = time.perf_counter()
    workers = conf.setting('WORKERS', workers)
    chunks = chunk_ranges(R, workers)
    parts = map_in_order(lambda idx: _run_chunk(source, nu, T, seed, idx), chunks, workers)
    products = np.concatenate(parts, axis=0)

    mean = products.mean(axis=0)
    stderr = products.std(axis=0, ddof=1) / np.sqrt(R)
    logger.info(
        f"Monte Carlo: R={R}, nu={nu:g}, T={T:g}, max stderr {stderr.max():.3e}, "
        f"{time.perf_counter() - started:.2f}s"
    )
    return McEstimate(mean, stderr, R, seed)
