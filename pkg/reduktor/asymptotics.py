"""
Long-time behaviour of the averaged evolution: the delta statistic, convergence
profiles toward the block-uniform limit, the cyclic permutation case and the
time-rescaling law.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import conf
from .dstoch_core import DStochMatrix, as_array, compression, support_blocks, theta_of
from .exceptions import InvalidInputError, NotCyclicOfOrderKError, PeriodMismatchError
from .utils import csv_writer, fmt, map_in_order
from .volterra import SolverConfig, TimeGrid, Trajectory, constant_closed_form, march_solve

logger = logging.getLogger(__name__)

CONVERGED = 'converged'
NOT_CONVERGED = 'not_converged'
IDENTITY_SECTOR_ONLY = 'identity_sector_only'

# a single-block limit also needs c(Mbar) at the end to drop this far below its maximum
COMPRESSION_DROP = 0.1


@dataclass(frozen=True)
class DeltaStatistic:
    value: float
    error_bar: float


def delta_statistic(alpha, horizon=40.0, steps=4000):
    """Trapezoid value of int_0^H alpha(t) e^{-t} dt; error bar = step-halving difference + e^{-H}."""
    if not horizon > 0 or steps < 2:
        raise InvalidInputError("need a positive horizon and at least two steps")

    def trapezoid(m):
        t = np.linspace(0.0, horizon, m + 1)
        return float(np.trapezoid(np.asarray(alpha(t), dtype=float) * np.exp(-t), t))

    fine = trapezoid(steps)
    coarse = trapezoid(steps // 2)
    return DeltaStatistic(fine, abs(fine - coarse) + float(np.exp(-horizon)))


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    times: np.ndarray
    c_values: np.ndarray
    predicted_limit: DStochMatrix
    partition: object
    distance: np.ndarray
    verdict: str

    @property
    def c_max(self):
        return float(self.c_values.max())

    @property
    def c_final(self):
        return float(self.c_values[-1])

    @property
    def final_distance(self):
        return float(self.distance[-1])

    def write_csv(self, handle):
        writer = csv_writer(handle)
        writer.writerow(['t', 'c_value', 'distance'])
        for t, c, d in zip(self.times, self.c_values, self.distance):
            writer.writerow([fmt(t), fmt(c), fmt(d)])

    def as_dict(self):
        return {
            'verdict': self.verdict,
            'predicted_limit': self.predicted_limit.entries.tolist(),
            'final_distance': self.final_distance,
            'c_max': self.c_max,
            'c_final': self.c_final,
            'blocks': [list(b) for b in self.partition.blocks],
            'id_sector': list(self.partition.id_sector),
        }


def predict_limit(source, horizon, samples=None):
    """Block partition from the support of M over `samples` times in [0, horizon] and its Theta."""
    samples = conf.setting('SUPPORT_SAMPLES', samples)
    times = np.linspace(0.0, horizon, samples)
    partition = support_blocks(list(source.sample(times)))
    return partition, theta_of(partition, source.n)


def compression_profile(trajectory):
    return np.array([compression(v) for v in trajectory.values])


def convergence_report(source, nu, cfg, window=None, *, eps=None, period=None, samples=None):
    """March Mbar on cfg.grid and compare it with the predicted block limit."""
    trajectory = march_solve(source, SolverConfig(nu, cfg.grid))
    partition, limit = predict_limit(source, period or cfg.grid.t_max, samples)

    c_values = compression_profile(trajectory)
    distance = np.abs(trajectory.values - limit.entries).max(axis=(1, 2))

    eps = conf.setting('CONVERGENCE_EPS', eps)
    window = conf.setting('PLATEAU_FRACTION', window)
    tail = max(1, int(np.ceil(window * len(distance))))
    if not partition.blocks:
        verdict = IDENTITY_SECTOR_ONLY
    elif distance[-tail:].max() < eps and (
        not partition.is_single_block or c_values[-1] <= COMPRESSION_DROP * c_values.max()
    ):
        verdict = CONVERGED
    else:
        verdict = NOT_CONVERGED

    report = ConvergenceReport(trajectory.times, c_values, limit, partition, distance, verdict)
    logger.info(
        f"Convergence: {verdict}, final distance {report.final_distance:.3e}, "
        f"c_final/c_max = {report.c_final:.3e}/{report.c_max:.3e}"
    )
    return report


def convergence_battery(sources, nu, cfg, workers=None, **kwargs):
    """One convergence_report per source, run on the worker pool; reports in input order."""
    workers = conf.setting('WORKERS', workers)
    reports = map_in_order(lambda source: convergence_report(source, nu, cfg, **kwargs), sources, workers)
    converged = sum(report.verdict == CONVERGED for report in reports)
    logger.info(f"Convergence battery: {converged}/{len(reports)} converged")
    return reports


@dataclass(frozen=True, eq=False)
class CyclicResult:
    trajectory: Trajectory
    limit: DStochMatrix
    limit_residual: float


def _is_permutation(P):
    return (
        P.ndim == 2 and P.shape[0] == P.shape[1]
        and np.all((P == 0) | (P == 1))
        and np.all(P.sum(axis=0) == 1) and np.all(P.sum(axis=1) == 1)
    )


def cyclic_limit(P, k):
    """(1/k) sum_{i=1}^{k} P^i, after checking that P has order exactly k."""
    P = np.asarray(as_array(P))
    if k < 1 or not _is_permutation(P):
        raise NotCyclicOfOrderKError(f"expected a permutation matrix and k >= 1, got k={k}")
    eye = np.eye(P.shape[0])
    powers = [P]
    for _ in range(k - 1):
        powers.append(powers[-1] @ P)
    if not np.array_equal(powers[-1], eye) or any(np.array_equal(Q, eye) for Q in powers[:-1]):
        raise NotCyclicOfOrderKError(f"permutation does not have order {k}")
    return DStochMatrix(sum(powers) / k)


def cyclic_example(P, k, nu, T, steps=300):
    """Constant source M = P: Mbar(t) = P exp(nu t (P - 1)) on [0, T], and its distance to the cyclic average."""
    limit = cyclic_limit(P, k)
    grid = TimeGrid(T, steps)
    values = constant_closed_form(P, nu, grid.nodes)
    residual = float(np.max(np.abs(values[-1] - limit.entries)))
    logger.info(f"Cyclic example: order {k}, nu={nu:g}, T={T:g}, limit residual {residual:.3e}")
    return CyclicResult(Trajectory(grid, values), limit, residual)


def rescaled_solve(source, nu, s, grid):
    """Solve with (M(s t), s nu) on the grid with the same step count over [0, t_max / s]."""
    return march_solve(source.rescaled(s), SolverConfig(s * nu, TimeGrid(grid.t_max / s, grid.steps)))


def period_residual(source, period=2 * np.pi, samples=32):
    t = np.linspace(0.0, period, samples, endpoint=False)
    return float(np.max(np.abs(source.sample(t + period) - source.sample(t))))


def rescaling_check(source, tau, nu, cfg, *, period_tol=1e-9):
    """Sup over nodes of |Mbar'(t) - Mbar(2 pi t / tau)| for M'(t) = M(2 pi t / tau), nu' = 2 pi nu / tau."""
    residual = period_residual(source)
    if residual > period_tol:
        raise PeriodMismatchError(residual)
    if not tau > 0:
        raise InvalidInputError(f"tau must be positive, got {tau}")
    s = 2 * np.pi / tau
    base = march_solve(source, SolverConfig(nu, cfg.grid))
    scaled = rescaled_solve(source, nu, s, cfg.grid)
    return float(np.max(np.abs(scaled.values - base.values)))