"""Time grid, recombining binomial lattice and lattice-evaluated problem data.

Level ``i`` of the lattice holds ``i + 1`` nodes. Node ``k`` (``k = 0..i``)
carries the Brownian value ``j * sqrt(dt)`` with ``j = 2k - i``; its children
are nodes ``k + 1`` (up) and ``k`` (down) of level ``i + 1``. Every process
on the lattice is stored as a tuple of per-level numpy arrays indexed by ``k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InfeasibleProblem, InvalidArgument

BarrierFn = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int
    knots: np.ndarray = field(repr=False)

    @property
    def dt(self) -> float:
        return self.horizon / self.steps


def build_time_grid(horizon: float, steps: int) -> TimeGrid:
    """Uniform grid ``0 = t_0 < ... < t_N = horizon``."""
    if not np.isfinite(horizon) or horizon <= 0:
        raise InvalidArgument(f"horizon must be positive, got {horizon!r}")
    if int(steps) != steps or steps < 1:
        raise InvalidArgument(f"steps must be a positive integer, got {steps!r}")
    steps = int(steps)
    knots = horizon * np.arange(steps + 1) / steps
    knots[-1] = horizon
    knots.setflags(write=False)
    return TimeGrid(float(horizon), steps, knots)


@dataclass(frozen=True)
class Lattice:
    grid: TimeGrid

    @property
    def steps(self) -> int:
        return self.grid.steps

    @property
    def dt(self) -> float:
        return self.grid.dt

    @property
    def sqrt_dt(self) -> float:
        return float(np.sqrt(self.grid.dt))

    def node_indices(self, level: int) -> np.ndarray:
        """Signed indices ``j = -i, -i+2, ..., i`` of a level."""
        return np.arange(-level, level + 1, 2)

    def values(self, level: int) -> np.ndarray:
        """Brownian values of the nodes at ``level``."""
        return self.node_indices(level) * self.sqrt_dt

    def time(self, level: int) -> float:
        return float(self.grid.knots[level])

    def probabilities(self, level: int) -> np.ndarray:
        """Binomial node probabilities ``C(i, k) / 2**i``."""
        probs = np.ones(1)
        for _ in range(level):
            probs = 0.5 * (np.concatenate([probs, [0.0]]) + np.concatenate([[0.0], probs]))
        return probs

    def all_probabilities(self) -> tuple:
        out = [np.ones(1)]
        for _ in range(self.steps):
            p = out[-1]
            out.append(0.5 * (np.concatenate([p, [0.0]]) + np.concatenate([[0.0], p])))
        return tuple(out)


def build_lattice(grid: TimeGrid) -> Lattice:
    return Lattice(grid)


@dataclass(frozen=True)
class LatticeProcess:
    """Per-node values with an interpretation tag (``state`` or ``increment``).

    Increment processes live on levels ``0..N-1``: the entry at ``(i, k)`` is
    the increment over ``[t_i, t_{i+1}]`` seen from that node.
    """

    levels: tuple
    kind: str = "state"

    def __post_init__(self):
        if self.kind not in ("state", "increment"):
            raise InvalidArgument(f"unknown process kind {self.kind!r}")

    def __getitem__(self, level: int) -> np.ndarray:
        return self.levels[level]

    def __len__(self) -> int:
        return len(self.levels)

    def at(self, level: int, j: int) -> float:
        return float(self.levels[level][(j + level) // 2])

    def flat(self) -> np.ndarray:
        return np.concatenate(self.levels) if self.levels else np.empty(0)

    def sup(self) -> float:
        flat = self.flat()
        return float(np.max(np.abs(flat))) if flat.size else 0.0

    def min(self) -> float:
        return float(np.min(self.flat()))

    def __sub__(self, other: "LatticeProcess") -> "LatticeProcess":
        return LatticeProcess(tuple(a - b for a, b in zip(self.levels, other.levels)), self.kind)


def sup_gap(a: LatticeProcess, b: LatticeProcess) -> float:
    """Sup-norm distance between two processes on the same lattice."""
    return max(float(np.max(np.abs(x - y))) for x, y in zip(a.levels, b.levels))


class Forcing:
    """Deterministic continuous piecewise-linear finite-variation forcing ``V``.

    Stored through its Jordan decomposition ``V = V_plus - V_minus`` with both
    parts nondecreasing and vanishing at ``t = 0``.
    """

    def __init__(self, times: Sequence[float], values: Sequence[float]):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape or times.size < 2:
            raise InvalidArgument("forcing needs matching 1-d knot arrays with at least two knots")
        if np.any(np.diff(times) <= 0):
            raise InvalidArgument("forcing knot times must be strictly increasing")
        self.times = times
        self.values = values
        dv = np.diff(values)
        self._plus = np.concatenate([[0.0], np.cumsum(np.maximum(dv, 0.0))])
        self._minus = np.concatenate([[0.0], np.cumsum(np.maximum(-dv, 0.0))])

    @classmethod
    def zero(cls, horizon: float = 1.0) -> "Forcing":
        return cls([0.0, horizon], [0.0, 0.0])

    @classmethod
    def linear(cls, slope: float, horizon: float = 1.0) -> "Forcing":
        return cls([0.0, horizon], [0.0, slope * horizon])

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    def plus(self, t):
        return np.interp(t, self.times, self._plus)

    def minus(self, t):
        return np.interp(t, self.times, self._minus)

    def total_variation(self, t0: float, t1: float) -> float:
        return float(self.plus(t1) - self.plus(t0) + self.minus(t1) - self.minus(t0))

    def negated(self) -> "Forcing":
        return Forcing(self.times, -self.values)


def _constant_barrier(value: float) -> BarrierFn:
    def barrier(t, b):
        return np.full(np.shape(b), float(value))
    return barrier


@dataclass(frozen=True)
class ProblemData:
    """One problem instance: terminal ``xi(b)``, forcing ``V``, barriers ``L <= U``, exponent ``p``.

    ``lower``/``upper`` set to ``None`` mean ``-inf``/``+inf``. Plain numbers are
    accepted for constant barriers and terminal values.
    """

    terminal: Callable[[np.ndarray], np.ndarray]
    forcing: Optional[Forcing] = None
    lower: Optional[BarrierFn] = None
    upper: Optional[BarrierFn] = None
    exponent: float = 2.0

    def __post_init__(self):
        if self.exponent <= 1:
            raise InvalidArgument(f"exponent p must exceed 1, got {self.exponent}")
        if np.isscalar(self.terminal):
            value = float(self.terminal)
            object.__setattr__(self, "terminal", lambda b: np.full(np.shape(b), value))
        for name in ("lower", "upper"):
            fn = getattr(self, name)
            if fn is not None and np.isscalar(fn):
                object.__setattr__(self, name, _constant_barrier(fn))

    def replace(self, **changes) -> "ProblemData":
        kwargs = dict(terminal=self.terminal, forcing=self.forcing, lower=self.lower,
                      upper=self.upper, exponent=self.exponent)
        kwargs.update(changes)
        return ProblemData(**kwargs)


@dataclass(frozen=True)
class EvaluatedData:
    """Problem data sampled on a lattice; missing barriers are stored as +-inf."""

    lattice: Lattice
    xi: np.ndarray
    dv_plus: np.ndarray
    dv_minus: np.ndarray
    lower: LatticeProcess
    upper: LatticeProcess
    exponent: float

    @property
    def dv(self) -> np.ndarray:
        return self.dv_plus - self.dv_minus

    @property
    def has_lower(self) -> bool:
        return any(np.isfinite(level).any() for level in self.lower.levels)

    @property
    def has_upper(self) -> bool:
        return any(np.isfinite(level).any() for level in self.upper.levels)

    def without_lower(self) -> "EvaluatedData":
        levels = tuple(np.full_like(x, -np.inf) for x in self.lower.levels)
        return _replace_data(self, lower=LatticeProcess(levels))

    def without_upper(self) -> "EvaluatedData":
        levels = tuple(np.full_like(x, np.inf) for x in self.upper.levels)
        return _replace_data(self, upper=LatticeProcess(levels))


def _replace_data(data: EvaluatedData, **changes) -> EvaluatedData:
    kwargs = dict(lattice=data.lattice, xi=data.xi, dv_plus=data.dv_plus, dv_minus=data.dv_minus,
                  lower=data.lower, upper=data.upper, exponent=data.exponent)
    kwargs.update(changes)
    return EvaluatedData(**kwargs)


def _sample_barrier(fn, lattice, sentinel):
    levels = []
    for i in range(lattice.steps + 1):
        b = lattice.values(i)
        if fn is None:
            levels.append(np.full(b.shape, sentinel))
        else:
            vals = np.broadcast_to(np.asarray(fn(lattice.time(i), b), dtype=float), b.shape)
            levels.append(np.array(vals))
    return LatticeProcess(tuple(levels))


def evaluate_data(problem: ProblemData, lattice: Lattice) -> EvaluatedData:
    """Sample ``xi``, the forcing increments and the barriers on the lattice.

    Raises
    ------
    InfeasibleProblem
        If ``L > U`` at some node or ``xi`` lies outside ``[L_T, U_T]``.
    """
    N = lattice.steps
    xi = np.array(np.broadcast_to(
        np.asarray(problem.terminal(lattice.values(N)), dtype=float), (N + 1,)))
    forcing = problem.forcing or Forcing.zero(lattice.grid.horizon)
    knots = lattice.grid.knots
    dv_plus = np.diff(forcing.plus(knots))
    dv_minus = np.diff(forcing.minus(knots))

    lower = _sample_barrier(problem.lower, lattice, -np.inf)
    upper = _sample_barrier(problem.upper, lattice, np.inf)
    for i, (lo, up) in enumerate(zip(lower.levels, upper.levels)):
        bad = np.nonzero(lo > up)[0]
        if bad.size:
            k = int(bad[0])
            raise InfeasibleProblem(
                f"barriers out of order at level {i}, node j={2 * k - i}: L={lo[k]} > U={up[k]}",
                witness={"level": i, "j": 2 * k - i, "L": float(lo[k]), "U": float(up[k])})
    outside = np.nonzero((xi < lower[N]) | (xi > upper[N]))[0]
    if outside.size:
        k = int(outside[0])
        raise InfeasibleProblem(
            f"terminal value {xi[k]} at node j={2 * k - N} outside [{lower[N][k]}, {upper[N][k]}]",
            witness={"level": N, "j": 2 * k - N, "xi": float(xi[k])})
    return EvaluatedData(lattice, xi, dv_plus, dv_minus, lower, upper, float(problem.exponent))


# -- path functionals ------------------------------------------------------

def path_sample(steps: int, max_paths: int = 4096, seed: int = 0):
    """Node indices ``k`` along lattice paths, shape ``(paths, steps + 1)``.

    All ``2**steps`` paths are enumerated when that fits in ``max_paths``;
    otherwise a seeded sample of equally likely paths is drawn.
    """
    if 2 ** steps <= max_paths:
        codes = np.arange(2 ** steps)
        ups = (codes[:, None] >> np.arange(steps)) & 1
    else:
        rng = np.random.default_rng(seed)
        ups = rng.integers(0, 2, size=(max_paths, steps))
    k = np.concatenate([np.zeros((ups.shape[0], 1), dtype=int), np.cumsum(ups, axis=1)], axis=1)
    return k


def along_paths(process: LatticeProcess, paths: np.ndarray) -> np.ndarray:
    """Values of ``process`` along each path, shape ``(paths, len(process))``."""
    cols = [process.levels[i][paths[:, i]] for i in range(len(process.levels))]
    return np.stack(cols, axis=1) if cols else np.empty((paths.shape[0], 0))
