"""
Scalar reduction: M(t) = alpha(t) I + (1 - alpha(t)) Theta keeps the averaged
evolution in the same family, Mbar(t) = beta(t) I + (1 - beta(t)) Theta, with

    beta(T) = exp(-nu T) alpha(T) + nu int_0^T alpha(T - t) beta(t) exp(-nu (T - t)) dt.

Three solution routes: marching (shared with the matrix solver), the
method of steps for the alternating 1, 0, 1, 0 input, and the constant
coefficient ODE system for alpha(t) = 1/2 + cos(t)/2 at nu = 1.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from . import conf
from .exceptions import GridAlignmentError, InvalidInputError, NonRealReconstructionError, ValueEscapeError
from .utils import csv_writer, fmt
from .volterra import Kernel, MatrixSource, TimeGrid, Trajectory, march_arrays, off_grid_jumps, off_grid_limits

logger = logging.getLogger(__name__)

_EDGE = 1e-9


@dataclass(frozen=True, eq=False)
class ScalarInput:
    """alpha(t) in [0, 1]: constant, piecewise (right-continuous, period len(pattern)*tau), trig or tabulated."""

    kind: str
    c: float = None
    tau: float = None
    pattern: tuple = ()
    mean: float = None
    amplitude: float = None
    times: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind == 'constant':
            levels = [self.c]
        elif self.kind == 'piecewise':
            if self.tau is None or not self.tau > 0 or not self.pattern:
                raise InvalidInputError("piecewise input needs tau > 0 and a nonempty pattern")
            levels = list(self.pattern)
        elif self.kind == 'trig':
            levels = [self.mean - abs(self.amplitude), self.mean + abs(self.amplitude)]
        elif self.kind == 'tabulated':
            if len(self.times) < 2 or len(self.times) != len(self.values):
                raise InvalidInputError("tabulated input needs matching times and values, at least two")
            if np.any(np.diff(self.times) <= 0):
                raise InvalidInputError("tabulated times must be strictly increasing")
            levels = list(self.values)
        else:
            raise InvalidInputError(f"unknown scalar input kind {self.kind!r}")
        if any(v is None or not -_EDGE <= v <= 1.0 + _EDGE for v in levels):
            raise InvalidInputError(f"alpha must stay within [0, 1], got {levels}")

    @classmethod
    def constant(cls, c):
        return cls('constant', c=float(c))

    @classmethod
    def piecewise(cls, tau, pattern):
        return cls('piecewise', tau=float(tau), pattern=tuple(float(v) for v in pattern))

    @classmethod
    def alternating(cls, tau):
        """1 on [2k tau, (2k+1) tau), 0 on [(2k+1) tau, (2k+2) tau)."""
        return cls.piecewise(tau, (1.0, 0.0))

    @classmethod
    def trig(cls, mean=0.5, amplitude=0.5):
        return cls('trig', mean=float(mean), amplitude=float(amplitude))

    @classmethod
    def tabulated(cls, times, values):
        return cls('tabulated', times=tuple(float(t) for t in times), values=tuple(float(v) for v in values))

    @property
    def has_jumps(self):
        return self.kind == 'piecewise'

    def _level(self, index):
        return np.asarray(self.pattern)[np.asarray(index) % len(self.pattern)]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == 'constant':
            return np.full_like(t, self.c)
        if self.kind == 'piecewise':
            return self._level(np.floor(t / self.tau + _EDGE).astype(int))
        if self.kind == 'trig':
            return self.mean + self.amplitude * np.cos(t)
        return np.interp(t, self.times, self.values)

    def left(self, t):
        """Left limits; equal to the value away from discontinuities and at t = 0."""
        t = np.asarray(t, dtype=float)
        if self.kind != 'piecewise':
            return self(t)
        index = np.ceil(t / self.tau - _EDGE).astype(int) - 1
        return np.where(t > 0, self._level(np.maximum(index, 0)), self(t))

    def discontinuities(self, t_max):
        if self.kind != 'piecewise':
            return np.zeros(0)
        k = np.arange(1, int(np.floor(t_max / self.tau + _EDGE)) + 1)
        changes = self._level(k) != self._level(k - 1)
        return k[changes] * self.tau


@dataclass(frozen=True, eq=False)
class ScalarTrajectory:
    """beta at the nodes (right-continuous), its left limits, and the logged jumps (t, left, right)."""

    grid: TimeGrid
    beta: np.ndarray
    beta_left: np.ndarray = None
    jumps: list = field(default_factory=list)

    @property
    def times(self):
        return self.grid.nodes

    def write_csv(self, handle):
        writer = csv_writer(handle)
        writer.writerow(['t', 'beta'])
        for t, value in zip(self.times, self.beta):
            writer.writerow([fmt(t), fmt(value)])
        handle.write('# jumps\n')
        writer.writerow(['t', 'left', 'right'])
        for t, left, right in self.jumps:
            writer.writerow([fmt(t), fmt(left), fmt(right)])


def lift_values(beta, n):
    """beta I + (1 - beta) Theta_n for every entry of beta, shape (len(beta), n, n)."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    eye = np.eye(n)
    theta = np.full((n, n), 1.0 / n)
    return beta[:, None, None] * eye + (1.0 - beta)[:, None, None] * theta


def lifted_source(alpha, n):
    """Matrix source alpha(t) I + (1 - alpha(t)) Theta_n."""
    if n < 2:
        raise InvalidInputError(f"lifting needs n >= 2, got {n}")
    return MatrixSource(
        func=lambda t: lift_values(alpha(t), n)[0],
        n=n,
        batch=lambda times: lift_values(alpha(times), n),
        left=(lambda t: lift_values(alpha.left(t), n)[0]) if alpha.has_jumps else None,
        label=f'lifted-{alpha.kind}',
        discontinuities=alpha.discontinuities if alpha.has_jumps else None,
    )


def lift_scalar(trajectory, n):
    if n < 2:
        raise InvalidInputError(f"lifting needs n >= 2, got {n}")
    left = None if trajectory.beta_left is None else lift_values(trajectory.beta_left, n)
    return Trajectory(trajectory.grid, lift_values(trajectory.beta, n), left)


def _jump_log(times, left, right, nodes):
    return [(float(times[k]), float(left[k]), float(right[k])) for k in nodes]


def _aligned_nodes(times, grid):
    nodes = []
    for t in times:
        try:
            nodes.append(grid.index_of(t))
        except GridAlignmentError:
            pass
    return nodes


def _scalar_source(alpha):
    return MatrixSource(
        func=lambda t: np.full((1, 1), float(alpha(t))),
        n=1,
        left=lambda t: np.full((1, 1), float(alpha.left(t))),
        label=f'scalar-{alpha.kind}',
        discontinuities=alpha.discontinuities,
    )


def scalar_march(alpha, nu, grid, *, tol_traj=None):
    """Trapezoidal marching for beta, the 1 x 1 case of the matrix scheme.

    Jumps of alpha between nodes split the panels that hold them.
    """
    if not nu >= 0:
        raise InvalidInputError(f"nu must be nonnegative, got {nu}")
    discontinuities = alpha.discontinuities(grid.t_max)
    jump_nodes = _aligned_nodes(discontinuities, grid)
    jumps = off_grid_jumps(_scalar_source(alpha), grid) if len(discontinuities) else None

    nodes = grid.nodes
    a_right = np.asarray(alpha(nodes), dtype=float)[:, None, None]
    a_left = np.asarray(alpha.left(nodes), dtype=float)[:, None, None] if alpha.has_jumps else a_right
    disc = Kernel.poisson(nu).discretize(grid)
    bar_l, bar_r = march_arrays(a_right, a_left, disc, grid.h, jumps)
    beta = bar_r[:, 0, 0]
    beta_left = bar_l[:, 0, 0]

    tol = conf.setting('TOL_TRAJ', tol_traj)
    for values in (beta, beta_left):
        escaped = np.flatnonzero((values < -tol) | (values > 1.0 + tol) | ~np.isfinite(values))
        if escaped.size:
            k = int(escaped[0])
            raise ValueEscapeError(k, float(values[k]))
    beta = np.clip(beta, 0.0, 1.0)
    beta_left = np.clip(beta_left, 0.0, 1.0)
    jump_log = _jump_log(nodes, beta_left, beta, jump_nodes)
    if jumps is not None:
        jump_log += [
            (t, float(np.clip(left[0, 0], 0.0, 1.0)), float(np.clip(right[0, 0], 0.0, 1.0)))
            for t, left, right in off_grid_limits(jumps, disc, grid.h, bar_r, bar_l)
        ]
        jump_log.sort()
    return ScalarTrajectory(grid, beta, beta_left if alpha.has_jumps else None, jump_log)


def piecewise_delay_solve(tau, nu, intervals, points_per_interval=200):
    """Method of steps for alpha = 1, 0, 1, 0, ... on intervals of length tau.

    Intervals 0 and 1 are closed form. From interval 2 on, beta' follows

        beta'(T + 2 tau) = e^{-2 nu tau} beta'(T) - nu e^{-nu tau} beta(T + tau) + nu e^{-2 nu tau} beta(T)

    and beta is accumulated with RK4 steps, the lagged intervals interpolated
    by cubic Hermite splines. Each interval starts from the jump condition
    beta(k tau+) - beta(k tau-) = (-1)^k e^{-nu k tau}.
    """
    if not tau > 0 or intervals < 2 or points_per_interval < 2:
        raise InvalidInputError("need tau > 0, at least two intervals and two points per interval")
    m = int(points_per_interval)
    h = tau / m
    s = np.arange(m + 1) * h
    mid = s[:-1] + 0.5 * h
    e1 = np.exp(-nu * tau)
    e2 = e1 * e1

    # per interval: beta, beta', beta'' on [k tau, (k+1) tau], last entry a left limit
    beta = [np.ones(m + 1), 1.0 - (nu * s + 1.0) * e1]
    d1 = [np.zeros(m + 1), np.full(m + 1, -nu * e1)]
    d2 = [np.zeros(m + 1), np.zeros(m + 1)]

    for k in range(2, intervals):
        b0, b1 = beta[k - 2], beta[k - 1]
        g0, g1 = d1[k - 2], d1[k - 1]
        slope = e2 * g0 - nu * e1 * b1 + nu * e2 * b0
        curvature = e2 * d2[k - 2] - nu * e1 * g1 + nu * e2 * g0
        slope_mid = (
            e2 * CubicHermiteSpline(s, g0, d2[k - 2])(mid)
            - nu * e1 * CubicHermiteSpline(s, b1, g1)(mid)
            + nu * e2 * CubicHermiteSpline(s, b0, g0)(mid)
        )
        start = b1[-1] + (-1) ** k * np.exp(-nu * k * tau)
        increments = (h / 6.0) * (slope[:-1] + 4.0 * slope_mid + slope[1:])
        beta.append(start + np.concatenate(([0.0], np.cumsum(increments))))
        d1.append(slope)
        d2.append(curvature)

    grid = TimeGrid(intervals * tau, intervals * m)
    right = np.empty(grid.steps + 1)
    left = np.empty(grid.steps + 1)
    for k in range(intervals):
        right[k * m:(k + 1) * m] = beta[k][:-1]
        left[k * m + 1:(k + 1) * m + 1] = beta[k][1:]
    left[0] = right[0]
    right[-1] = left[-1] + (-1) ** intervals * np.exp(-nu * intervals * tau)

    jump_nodes = [k * m for k in range(1, intervals + 1)]
    logger.info(f"Delay recurrence: tau={tau:g}, nu={nu:g}, {intervals} intervals of {m} points")
    return ScalarTrajectory(grid, right, left, _jump_log(grid.nodes, left, right, jump_nodes))


def _trig_rhs(t, y):
    # y = [a, a', a'', Re b, Im b, Re b', Im b', Re b'', Im b'']
    a, da, dda = y[0], y[1], y[2]
    b, db, ddb = complex(y[3], y[4]), complex(y[5], y[6]), complex(y[7], y[8])
    dddb = -(3j - 1.0) * ddb + 2.0 * (1.0 + 1j) * db - 0.5 * b
    return np.array([
        da, dda, dda - da + 0.5 * a,
        db.real, db.imag, ddb.real, ddb.imag, dddb.real, dddb.imag,
    ])


TRIG_INITIAL_STATE = np.array([0.5, 0.5, 0.5, 0.25, 0.0, 0.25, 0.0, 0.25, 0.25])


def _integrate_trig(t_max, rtol=1e-12, atol=1e-14):
    return solve_ivp(
        _trig_rhs, (0.0, t_max), TRIG_INITIAL_STATE,
        method='DOP853', rtol=rtol, atol=atol, dense_output=True,
    )


def _reconstruct(t, states, tol):
    a = states[0]
    b = states[3] + 1j * states[4]
    rotation = np.exp(1j * t)
    combined = np.exp(-t) * (a + b * rotation + np.conj(b) * np.conj(rotation))
    residue = float(np.max(np.abs(combined.imag))) if combined.size else 0.0
    if residue > tol:
        raise NonRealReconstructionError(residue)
    return combined.real


def trig_ode_solve(grid, *, imag_tol=1e-7):
    """beta for alpha(t) = 1/2 + cos(t)/2 and nu = 1 from the two third-order ODEs for a and b."""
    solution = _integrate_trig(grid.t_max)
    if not solution.success:
        raise InvalidInputError(f"ODE integration failed: {solution.message}")
    t = grid.nodes
    beta = _reconstruct(t, solution.sol(t), imag_tol)
    logger.info(f"Trig ODE: {solution.nfev} evaluations over [0, {grid.t_max:g}]")
    return ScalarTrajectory(grid, beta)


def trig_ode_residual(grid, delta=1e-3):
    """Max relative residual of the ODE system on the dense output, derivatives by 4th-order central differences."""
    solution = _integrate_trig(grid.t_max)
    t = grid.nodes
    t = t[(t >= 2 * delta) & (t <= grid.t_max - 2 * delta)]
    y = solution.sol
    derivative = (-y(t + 2 * delta) + 8 * y(t + delta) - 8 * y(t - delta) + y(t - 2 * delta)) / (12 * delta)
    worst = 0.0
    for k, tk in enumerate(t):
        rhs = _trig_rhs(tk, y(tk))
        scale = max(1.0, float(np.max(np.abs(rhs))))
        worst = max(worst, float(np.max(np.abs(derivative[:, k] - rhs))) / scale)
    return worst


def trig_ode_modal(times):
    """Closed form beta(t) = e^{-t} sum_r c_r e^{r t} over the roots of r^3 - r^2 + r - 1/2."""
    roots = np.roots([1.0, -1.0, 1.0, -0.5])
    vandermonde = np.vander(roots, 3, increasing=True).T
    coefficients = np.linalg.solve(vandermonde, np.array([1.0, 1.0, 0.5], dtype=complex))
    t = np.atleast_1d(np.asarray(times, dtype=float))
    u = np.exp(np.outer(t, roots)) @ coefficients
    return np.exp(-t) * u.real

