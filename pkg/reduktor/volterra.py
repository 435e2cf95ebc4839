"""
The averaged-evolution integral equation

    Mbar(T) = a(T) M(T) + int_0^T M(T - t) Mbar(t) b(t, T) dt

with the Poisson kernel a(T) = exp(-nu T), b(t, T) = nu exp(-nu (T - t)) as
the main case, solved by trapezoidal marching on a uniform grid, by its
Neumann series, and checked through the once-differentiated form.

Discretization notes:

- The Poisson kernel is discretized with the decay factors q**k,
  q = (1 - nu h / 2) / (1 + nu h / 2). This is the trapezoidal scheme for the
  rescaled unknown exp(nu T) Mbar(T), normalized by its own discrete growth,
  so every node is exactly doubly stochastic.
- Sources may carry left limits. Trapezoid panels never straddle a
  discontinuity: each panel uses the one-sided limits at its ends, and the
  solution is stored with both limits at every node.
"""

import logging
import time
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import expm
from scipy.stats import poisson

from . import conf
from .dstoch_core import DStochMatrix, as_array, validate_dstoch
from .exceptions import (
    GridAlignmentError,
    GridTooCoarseError,
    InvalidInputError,
    KernelNormalizationViolationError,
    ReduktorError,
    TailBoundExceedsTolError,
    UnsupportedOrderError,
    ValidationFailureError,
)
from .utils import csv_writer, fmt

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform nodes 0, h, 2h, ..., t_max with h = t_max / steps."""

    t_max: float
    steps: int

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise InvalidInputError(f"steps must be a positive integer, got {self.steps}")
        if not self.t_max > 0:
            raise InvalidInputError(f"t_max must be positive, got {self.t_max}")
        object.__setattr__(self, 'steps', int(self.steps))
        object.__setattr__(self, 't_max', float(self.t_max))

    @property
    def h(self):
        return self.t_max / self.steps

    @property
    def nodes(self):
        return np.arange(self.steps + 1) * self.h

    def index_of(self, T):
        k = int(round(T / self.h))
        if k < 0 or k > self.steps or abs(k * self.h - T) > 1e-9 * max(1.0, abs(T)):
            raise GridAlignmentError(f"T={T} is not a node of a grid with h={self.h}")
        return k

    def truncated(self, k):
        return TimeGrid(k * self.h, k)


@dataclass(frozen=True, eq=False)
class MatrixSource:
    """A map t -> M(t) evaluated lazily at the nodes a solver asks for.

    `func` gives the right-continuous value, `left` the left limit where the map
    jumps (None for continuous maps), `batch` an optional vectorized evaluator.
    `discontinuities(t_max)` lists the jump times in (0, t_max] when they are known.
    """

    func: object
    n: int
    batch: object = None
    left: object = None
    label: str = 'callable'
    discontinuities: object = None

    @classmethod
    def constant(cls, M):
        arr = np.array(as_array(M), dtype=float)
        arr.setflags(write=False)
        n = arr.shape[0]
        return cls(
            func=lambda t: arr,
            n=n,
            batch=lambda times: np.broadcast_to(arr, (len(times), n, n)).copy(),
            label='constant',
        )

    @property
    def has_jumps(self):
        return self.left is not None

    def at(self, t):
        return np.asarray(self.func(float(t)), dtype=float)

    def left_at(self, t):
        if self.left is None:
            return self.at(t)
        return np.asarray(self.left(float(t)), dtype=float)

    def sample(self, times):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if self.batch is not None:
            return np.asarray(self.batch(times), dtype=float)
        if times.size == 0:
            return np.zeros((0, self.n, self.n))
        return np.stack([self.at(t) for t in times])

    def sample_left(self, times):
        if self.left is None:
            return self.sample(times)
        times = np.atleast_1d(np.asarray(times, dtype=float))
        return np.stack([self.left_at(t) for t in times])

    def rescaled(self, s):
        """The source t -> M(s t)."""
        return MatrixSource(
            func=lambda t: self.func(s * t),
            n=self.n,
            batch=None if self.batch is None else (lambda times: self.batch(s * np.asarray(times))),
            left=None if self.left is None else (lambda t: self.left(s * t)),
            label=f'{self.label}(t*{s:g})',
            discontinuities=None if self.discontinuities is None else (
                lambda t_max: np.asarray(self.discontinuities(s * t_max), dtype=float) / s
            ),
        )


@dataclass(frozen=True, eq=False)
class OffGridJumps:
    """Jump times of a source strictly between grid nodes, with evaluators of M(x) and M(x-)."""

    times: np.ndarray
    right: object
    left: object


def off_grid_jumps(M, grid):
    """Discontinuities of M inside (0, t_max) that are not nodes of `grid`; None when there are none."""
    if M.discontinuities is None:
        return None
    times = set()
    for s in np.atleast_1d(np.asarray(M.discontinuities(grid.t_max), dtype=float)):
        if not 0.0 < s < grid.t_max:
            continue
        try:
            grid.index_of(s)
        except GridAlignmentError:
            times.add(float(s))
    if not times:
        return None
    logger.debug(f"Splitting panels at {len(times)} off-grid discontinuities of {M.label}")
    return OffGridJumps(np.array(sorted(times)), M.at, M.left_at)


@dataclass(frozen=True)
class SolverConfig:
    nu: float
    grid: TimeGrid
    series_cap: int = None
    quad: str = 'trapezoid'

    def __post_init__(self):
        if not self.nu >= 0:
            raise InvalidInputError(f"nu must be nonnegative, got {self.nu}")
        if self.quad != 'trapezoid':
            raise InvalidInputError(f"unsupported quadrature {self.quad!r}")
        if self.series_cap is not None and self.series_cap < 0:
            raise InvalidInputError(f"series_cap must be nonnegative, got {self.series_cap}")


@dataclass(frozen=True, eq=False)
class DiscreteKernel:
    """Kernel values on a grid: a[k] = a(t_k), row(k)[j] = b(t_j, t_k) for j <= k."""

    a: np.ndarray
    row: object


@dataclass(frozen=True, eq=False)
class Kernel:
    """Reduction-time kernel (a, b); `poisson_rate` marks the Poisson case."""

    a: object
    b: object
    description: str = 'custom'
    poisson_rate: float = None

    @classmethod
    def poisson(cls, nu):
        return cls(
            a=lambda T: np.exp(-nu * np.asarray(T, dtype=float)),
            b=lambda t, T: nu * np.exp(-nu * (T - np.asarray(t, dtype=float))),
            description=f'poisson(nu={nu:g})',
            poisson_rate=float(nu),
        )

    @classmethod
    def no_reduction(cls):
        return cls(
            a=lambda T: np.ones_like(np.asarray(T, dtype=float)),
            b=lambda t, T: np.zeros_like(np.asarray(t, dtype=float)),
            description='no-reduction',
        )

    @classmethod
    def rational(cls):
        return cls(
            a=lambda T: 1.0 / (1.0 + np.asarray(T, dtype=float)),
            b=lambda t, T: np.full_like(np.asarray(t, dtype=float), 1.0 / (1.0 + T)),
            description='rational',
        )

    def scaled_b(self, factor):
        return Kernel(self.a, lambda t, T: factor * self.b(t, T), f'{self.description}*b{factor:g}')

    def discretize(self, grid):
        nodes = grid.nodes
        if self.poisson_rate is not None:
            decay = _poisson_decay(self.poisson_rate, grid.h, grid.steps)
            nu = self.poisson_rate
            return DiscreteKernel(decay, lambda k: nu * decay[k::-1])
        a = np.asarray(self.a(nodes), dtype=float)
        return DiscreteKernel(a, lambda k: np.asarray(self.b(nodes[:k + 1], nodes[k]), dtype=float))


def _poisson_decay(nu, h, steps):
    x = 0.5 * nu * h
    if x >= 1.0:
        raise GridTooCoarseError(nu * h, 2.0)
    q = (1.0 - x) / (1.0 + x)
    return q ** np.arange(steps + 1)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Matrix values at the grid nodes; `left` holds left limits when the solution jumps."""

    grid: TimeGrid
    values: np.ndarray
    left: np.ndarray = None

    @property
    def times(self):
        return self.grid.nodes

    @property
    def n(self):
        return self.values.shape[1]

    def node(self, k):
        return DStochMatrix(self.values[k])

    def at_time(self, T):
        return self.node(self.grid.index_of(T))

    def write_csv(self, handle):
        n = self.n
        writer = csv_writer(handle)
        writer.writerow(['t'] + [f'entry_{i}_{j}' for i in range(n) for j in range(n)])
        for t, value in zip(self.times, self.values):
            writer.writerow([fmt(t)] + [fmt(x) for x in value.ravel()])


@dataclass(frozen=True, eq=False)
class NeumannResult:
    value: DStochMatrix
    trajectory: Trajectory
    terms: int
    tail_bound: float


def _history_sum(weights, m_hist, x_hist):
    """sum_j weights[j] * m_hist[j] @ x_hist[j], as a single matrix product."""
    k, n, _ = m_hist.shape
    if k == 0:
        return np.zeros((n, x_hist.shape[2]))
    w = (weights[:, None, None] * m_hist).transpose(1, 0, 2).reshape(n, k * n)
    return w @ x_hist.reshape(k * n, -1)


class _PanelSplitter:
    """Split-trapezoid corrections for the panels that hold an off-grid jump.

    At step k the breakpoints are the jump times s < t_k, where the unknown
    jumps by J_s = a(s) (M(s) - M(s-)), and their reflections t_k - s, where
    M(t_k - t) jumps. Inside a panel the unknown minus its own jumps is linear
    between the nodes and so is b; the weights of a step keep their plain
    trapezoid sum.
    """

    def __init__(self, jumps, a, h):
        self.h = h
        self.times = jumps.times
        self.right = jumps.right
        self.left = jumps.left
        self.panels = np.floor(self.times / h).astype(int)
        theta = self.times / h - self.panels
        a_s = (1.0 - theta) * a[self.panels] + theta * a[self.panels + 1]
        self.sizes = np.stack([w * (self.right(t) - self.left(t)) for w, t in zip(a_s, self.times)])

    def _breakpoints(self, k):
        T = k * self.h
        inside = self.times[self.panels < k]
        points = np.sort(np.concatenate([inside, T - inside]))
        if points.size:
            points = points[np.concatenate([[True], np.diff(points) > 1e-12 * max(1.0, T)])]
        return points

    def corrections(self, k, b, m_right, m_left, x_r, sizes=None):
        """Yield (j, const, coef) per split panel j: split minus plain panel = const + coef @ x(t_{j+1}-)."""
        sizes = self.sizes if sizes is None else sizes
        h = self.h
        T = k * h
        eps = 1e-12 * max(1.0, T)
        points = self._breakpoints(k)
        panels = np.clip(np.floor(points / h).astype(int), 0, k - 1)
        for j in np.unique(panels):
            inner = points[panels == j]
            t_j = j * h
            widths = np.diff(np.concatenate([[t_j], inner, [t_j + h]]))
            const = 0.5 * (widths[0] - h) * b[j] * m_left[k - j] @ x_r[j]
            coef = 0.5 * (widths[-1] - h) * b[j + 1] * m_right[k - j - 1]

            own = self.panels == j
            own_times, own_sizes = self.times[own], sizes[own]
            total = own_sizes.sum(axis=0)
            for i, p in enumerate(inner, start=1):
                theta = (p - t_j) / h
                bp = b[j] + theta * (b[j + 1] - b[j])
                base = (1.0 - theta) * x_r[j] - theta * total
                before = base + own_sizes[own_times < p - eps].sum(axis=0)
                after = base + own_sizes[own_times <= p + eps].sum(axis=0)
                # t -> p- means T - t -> (T - p)+
                m_before = 0.5 * widths[i - 1] * bp * self.right(T - p)
                m_after = 0.5 * widths[i] * bp * self.left(T - p)
                const = const + m_before @ before + m_after @ after
                coef = coef + theta * (m_before + m_after)
            yield int(j), const, coef

    def limits(self, x_r, x_l):
        """(s, left, right) of the unknown at every off-grid jump, from the panel interpolant."""
        out = []
        for j in np.unique(self.panels):
            own = np.flatnonzero(self.panels == j)
            total = self.sizes[own].sum(axis=0)
            running = np.zeros_like(total)
            for idx in own:
                theta = self.times[idx] / self.h - j
                left = (1.0 - theta) * x_r[j] + theta * (x_l[j + 1] - total) + running
                running = running + self.sizes[idx]
                out.append((float(self.times[idx]), left, left + self.sizes[idx]))
        return out


def off_grid_limits(jumps, kernel, h, bar_r, bar_l):
    """Left and right limits of a marched solution at the off-grid jumps of its source."""
    return _PanelSplitter(jumps, kernel.a, h).limits(bar_r, bar_l)


def march_arrays(m_right, m_left, kernel, h, jumps=None):
    """Trapezoidal marching with one-sided limits; returns (left, right) node values.

    Panels holding a jump listed in `jumps` (an OffGridJumps) are split there.
    """
    a = kernel.a
    K = len(a) - 1
    n = m_right.shape[1]
    eye = np.eye(n)
    bar_l = np.empty_like(m_right)
    bar_r = np.empty_like(m_right)
    bar_l[0] = bar_r[0] = a[0] * m_right[0]
    splitter = None if jumps is None else _PanelSplitter(jumps, a, h)

    for k in range(1, K + 1):
        b = kernel.row(k)
        acc = _history_sum(b[:k], m_left[k:0:-1], bar_r[:k])
        if k > 1:
            acc += _history_sum(b[1:k], m_right[k - 1:0:-1], bar_l[1:k])
        rhs = a[k] * m_left[k] + 0.5 * h * acc
        lhs = eye - 0.5 * h * b[k] * m_right[0]
        if splitter is not None:
            for j, const, coef in splitter.corrections(k, b, m_right, m_left, bar_r):
                rhs = rhs + const
                if j + 1 == k:
                    lhs = lhs - coef
                else:
                    rhs = rhs + coef @ bar_l[j + 1]
        bar_l[k] = np.linalg.solve(lhs, rhs)
        bar_r[k] = bar_l[k] + a[k] * (m_right[k] - m_left[k])
    return bar_l, bar_r


def _validate_nodes(values, tol):
    """Clamp round-off negatives and raise on the first node that is not doubly stochastic."""
    row_dev = np.abs(values.sum(axis=2) - 1.0).max(axis=1)
    col_dev = np.abs(values.sum(axis=1) - 1.0).max(axis=1)
    neg = -values.min(axis=(1, 2))
    worst = np.maximum(np.maximum(row_dev, col_dev), neg)
    bad = np.flatnonzero(~(worst <= tol))
    if bad.size:
        k = int(bad[0])
        try:
            validate_dstoch(values[k], tol, tol_entry=tol)
            cause = 'non-finite entries'
        except ReduktorError as e:
            cause = str(e)
        raise ValidationFailureError(k, float(worst[k]), cause)
    return np.clip(values, 0.0, 1.0)


def _sample_source(M, grid):
    nodes = grid.nodes
    m_right = M.sample(nodes)
    if m_right.shape != (len(nodes), M.n, M.n):
        raise InvalidInputError(f"source returned shape {m_right.shape} on {len(nodes)} nodes")
    m_left = M.sample_left(nodes) if M.has_jumps else m_right
    return m_right, m_left


def march_solve_general(M, kernel, grid, *, tol_traj=None, validate=True, check_normalization=True):
    """Solve Mbar(T) = a(T) M(T) + int_0^T M(T-t) Mbar(t) b(t,T) dt on `grid`."""
    started = time.perf_counter()
    disc = kernel.discretize(grid)
    if check_normalization:
        _check_discrete_normalization(disc, grid)

    m_right, m_left = _sample_source(M, grid)
    bar_l, bar_r = march_arrays(m_right, m_left, disc, grid.h, off_grid_jumps(M, grid))

    if validate:
        tol_traj = conf.setting('TOL_TRAJ', tol_traj)
        bar_r = _validate_nodes(bar_r, tol_traj)
        if M.has_jumps:
            bar_l = _validate_nodes(bar_l, tol_traj)
    logger.info(
        f"Marched {kernel.description} kernel: n={M.n}, steps={grid.steps}, h={grid.h:.4g}, "
        f"{time.perf_counter() - started:.2f}s"
    )
    return Trajectory(grid, bar_r, bar_l if M.has_jumps else None)


def march_solve(M, cfg, *, tol_traj=None):
    """Trapezoidal marching for the Poisson-averaged evolution Mbar on cfg.grid."""
    return march_solve_general(M, Kernel.poisson(cfg.nu), cfg.grid, tol_traj=tol_traj, check_normalization=False)


def _discrete_residual(disc, grid, k):
    if k == 0:
        return abs(disc.a[0] - 1.0)
    row = disc.row(k)
    integral = grid.h * (row.sum() - 0.5 * (row[0] + row[-1]))
    return abs(integral + disc.a[k] - 1.0)


def _check_discrete_normalization(disc, grid, samples=8):
    tol = conf.setting('KERNEL_TOL')
    for k in np.unique(np.linspace(0, grid.steps, samples + 1).astype(int)):
        residual = _discrete_residual(disc, grid, int(k))
        if residual > tol:
            raise KernelNormalizationViolationError(float(k * grid.h), float(residual))


def kernel_normalization_residual(kernel, T, quad_steps=1000):
    """|int_0^T b(t,T) dt + a(T) - 1| for the supplied a and b, Simpson's rule on quad_steps panels.

    An odd quad_steps is rounded up.
    """
    if T < 0:
        raise InvalidInputError(f"T must be nonnegative, got {T}")
    a_T = float(np.asarray(kernel.a(np.array([float(T)])), dtype=float)[0])
    if T == 0:
        return abs(a_T - 1.0)
    panels = max(2, quad_steps + quad_steps % 2)
    t = np.linspace(0.0, float(T), panels + 1)
    values = np.broadcast_to(np.asarray(kernel.b(t, float(T)), dtype=float), t.shape)
    return float(abs(simpson(values, x=t) + a_T - 1.0))


def poisson_terms_for(mean, tail_tol):
    """Smallest N with P[K > N] < tail_tol for K ~ Poisson(mean)."""
    n_terms = 0
    while poisson.sf(n_terms, mean) >= tail_tol:
        n_terms += 1
    return n_terms


def neumann_series_trajectory(M, cfg, T=None, *, tail_tol=None):
    """Truncated Neumann series of the discretized equation at every node up to T."""
    grid = cfg.grid
    nu = cfg.nu
    limit = conf.setting('MAX_H_NU')
    if grid.h * nu > limit:
        raise GridTooCoarseError(grid.h * nu, limit)
    T = grid.t_max if T is None else T
    sub = grid.truncated(grid.index_of(T))
    tail_tol = conf.setting('SERIES_TAIL_TOL', tail_tol)

    mean = nu * sub.t_max
    n_max = cfg.series_cap if cfg.series_cap is not None else poisson_terms_for(mean, tail_tol)
    tail = float(poisson.sf(n_max, mean))
    if tail > tail_tol:
        raise TailBoundExceedsTolError(tail, tail_tol, n_max)

    started = time.perf_counter()
    disc = Kernel.poisson(nu).discretize(sub)
    m_right, m_left = _sample_source(M, sub)
    h = sub.h
    K = sub.steps

    jumps = off_grid_jumps(M, sub)
    splitter = None if jumps is None else _PanelSplitter(jumps, disc.a, h)
    # only the first term jumps between nodes
    sizes = None if splitter is None else splitter.sizes

    term_l = disc.a[:, None, None] * m_left
    term_r = disc.a[:, None, None] * m_right
    total_l = term_l.copy()
    total_r = term_r.copy()
    for _ in range(n_max):
        nxt = np.zeros_like(term_r)
        for k in range(1, K + 1):
            b = disc.row(k)
            acc = _history_sum(b[:k], m_left[k:0:-1], term_r[:k])
            acc += _history_sum(b[1:k + 1], m_right[k - 1::-1], term_l[1:k + 1])
            nxt[k] = 0.5 * h * acc
            if splitter is not None:
                for j, const, coef in splitter.corrections(k, b, m_right, m_left, term_r, sizes):
                    nxt[k] += const + coef @ term_l[j + 1]
        if splitter is not None:
            sizes = np.zeros_like(sizes)
        term_l = term_r = nxt
        total_l += nxt
        total_r += nxt

    logger.info(
        f"Neumann series: {n_max} terms, tail bound {tail:.2e}, steps={K}, "
        f"{time.perf_counter() - started:.2f}s"
    )
    trajectory = Trajectory(sub, total_r, total_l if M.has_jumps else None)
    return trajectory, n_max, tail


def neumann_series(M, cfg, T=None, *, tail_tol=None, tol_traj=None):
    """Mbar(T) as the Poisson-weighted sum over reduction counts, truncated at N_max."""
    trajectory, n_max, tail = neumann_series_trajectory(M, cfg, T, tail_tol=tail_tol)
    tol_traj = conf.setting('TOL_TRAJ', tol_traj)
    value = validate_dstoch(trajectory.values[-1], tol_traj, tol_entry=tol_traj)
    return NeumannResult(value, trajectory, n_max, tail)


def l_term(m_derivs, mbar_derivs_at_0, nu, order):
    """L_order(T) from L_{k+1} = nu M(T) Mbar^(k)(0) + (1 - nu) L_k - nu M^(k)(T), L_0 = 0.

    m_derivs[k] is M^(k) at the nodes (shape (K+1, n, n)); mbar_derivs_at_0[k] is Mbar^(k)(0).
    """
    L = np.zeros_like(m_derivs[0])
    for k in range(order):
        L = nu * (m_derivs[0] @ mbar_derivs_at_0[k]) + (1.0 - nu) * L - nu * m_derivs[k]
    return L


def derivative_consistency(M, trajectory, cfg, k=1):
    """Max node residual of the once-differentiated equation, derivatives by central differences."""
    if k != 1:
        raise UnsupportedOrderError(f"only the first derivative is supported, got k={k}")
    grid = trajectory.grid
    h = grid.h
    nu = cfg.nu
    t = grid.nodes
    m = M.sample(t)
    mbar = trajectory.values
    dm = np.gradient(m, h, axis=0, edge_order=2)
    dmbar = np.gradient(mbar, h, axis=0, edge_order=2)
    L1 = l_term([m], [mbar[0]], nu, 1)

    worst = 0.0
    for K in range(grid.steps + 1):
        weights = np.full(K + 1, h)
        weights[0] = weights[-1] = 0.5 * h
        if K == 0:
            integral = np.zeros_like(mbar[0])
        else:
            weights *= np.exp(-nu * (t[K] - t[:K + 1]))
            integral = _history_sum(weights, m[K::-1], dmbar[:K + 1])
        rhs = np.exp(-nu * t[K]) * (dm[K] + L1[K]) + nu * integral
        worst = max(worst, float(np.max(np.abs(dmbar[K] - rhs))))
    return worst


def constant_closed_form(M, nu, times):
    """Solution for a constant source: Mbar(T) = M exp(nu (M - 1) T)."""
    arr = as_array(M)
    n = arr.shape[0]
    generator = nu * (arr - np.eye(n))
    return np.stack([arr @ expm(generator * t) for t in np.atleast_1d(times)])
