"""Executable checks of comparison, uniqueness and the Skorokhod conditions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InputsNotOrdered, InvalidArgument, UniquenessViolation
from .generators import GeneratorSpec
from .lattice import build_lattice, build_time_grid, sup_gap
from .oracle import SolutionQuadruple, as_data, solve_dp
from .penalization import KINDS, PenaltyScheme, solve_penalized, solve_schedule


def _worst(diff_levels):
    """``(max defect, level, j)`` over per-level arrays of ``lhs - rhs``."""
    best = (-np.inf, -1, 0)
    for i, d in enumerate(diff_levels):
        if d.size == 0:
            continue
        k = int(np.argmax(d))
        if d[k] > best[0]:
            best = (float(d[k]), i, 2 * k - i)
    return best


@dataclass
class ComparisonVerdict:
    """Result of comparing ``sol1`` (smaller inputs) with ``sol2``.

    ``*_defect`` is the largest violation of the ordering (``<= 0`` when it
    holds exactly); ``*_witness`` is ``(level, j)``. The increment orderings are
    only tested when both barriers coincide; otherwise they are ``None``.
    """

    y_ordered: bool
    y_defect: float
    y_witness: tuple
    dK_ordered: Optional[bool]
    dK_defect: Optional[float]
    dA_ordered: Optional[bool]
    dA_defect: Optional[float]
    inputs: dict
    tol: float

    @property
    def ordered(self) -> bool:
        return self.y_ordered and self.dK_ordered is not False and self.dA_ordered is not False


def _relation(a_levels, b_levels, tol):
    # matching infinite sentinels subtract to nan and count as equal
    with np.errstate(invalid="ignore"):
        diff = _worst([np.nan_to_num(a - b, nan=0.0, posinf=np.inf, neginf=-np.inf)
                       for a, b in zip(a_levels, b_levels)])
    same = all(np.array_equal(a, b) for a, b in zip(a_levels, b_levels))
    if same:
        return "equal", diff
    return ("ordered" if diff[0] <= tol else "reversed"), diff


def _generator_relation(sol1, sol2, samples, seed, tol):
    """Spot-sample ``g1 <= g2`` at lattice nodes with ``y``/``z`` drawn around both solutions."""
    lat = sol1.lattice
    rng = np.random.default_rng(seed)
    ys = np.concatenate([sol1.Y.flat(), sol2.Y.flat()])
    zs = np.concatenate([sol1.Z.flat(), sol2.Z.flat()]) if lat.steps else np.zeros(1)
    ylo, yhi = ys.min() - 1.0, ys.max() + 1.0
    zlo, zhi = zs.min() - 1.0, zs.max() + 1.0
    level = rng.integers(0, lat.steps, samples) if lat.steps else np.zeros(samples, int)
    k = rng.integers(0, level + 1)
    t = lat.grid.knots[level]
    b = (2 * k - level) * lat.sqrt_dt
    y = rng.uniform(ylo, yhi, samples)
    z = rng.uniform(zlo, zhi, samples)
    d = sol1.generator(t, b, y, z) - sol2.generator(t, b, y, z)
    idx = int(np.argmax(d))
    witness = {"t": float(t[idx]), "b": float(b[idx]), "y": float(y[idx]), "z": float(z[idx]),
               "defect": float(d[idx])}
    if sol1.generator is sol2.generator:
        return "equal", witness
    return ("ordered" if d[idx] <= tol else "reversed"), witness


def comparison_harness(sol1: SolutionQuadruple, sol2: SolutionQuadruple, tol: float = 1e-9,
                       spot_samples: int = 2000, seed: int = 0) -> ComparisonVerdict:
    """Verify ``Y1 <= Y2`` and, with equal barriers, ``dK1 >= dK2`` and ``dA1 <= dA2`` per step.

    The inputs are checked first: ``xi``, forcing increments and barriers at
    every node, and the generators at ``spot_samples`` seeded points.

    Raises
    ------
    InputsNotOrdered
        When some input of ``sol1`` exceeds that of ``sol2`` by more than ``tol``.
    """
    d1, d2 = sol1.data, sol2.data
    if d1.lattice.steps != d2.lattice.steps or d1.lattice.grid.horizon != d2.lattice.grid.horizon:
        raise InvalidArgument("comparison needs both solutions on the same lattice")
    inputs = {}
    inputs["xi"] = _relation([d1.xi], [d2.xi], tol)[0]
    inputs["dV"] = _relation([d1.dv], [d2.dv], tol)[0]
    inputs["L"] = _relation(d1.lower.levels, d2.lower.levels, tol)[0]
    inputs["U"] = _relation(d1.upper.levels, d2.upper.levels, tol)[0]
    inputs["g"], g_witness = _generator_relation(sol1, sol2, spot_samples, seed, tol)
    reversed_ = [k for k, v in inputs.items() if v == "reversed"]
    if reversed_:
        raise InputsNotOrdered(f"inputs not ordered: {', '.join(reversed_)}",
                               {"inputs": inputs, "g_witness": g_witness})

    y_def, li, lj = _worst([a - b for a, b in zip(sol1.Y.levels, sol2.Y.levels)])
    dK_ok = dK_def = dA_ok = dA_def = None
    if inputs["L"] == "equal" and inputs["U"] == "equal":
        dK_def = _worst([b - a for a, b in zip(sol1.K_inc.levels, sol2.K_inc.levels)])[0]
        dA_def = _worst([a - b for a, b in zip(sol1.A_inc.levels, sol2.A_inc.levels)])[0]
        dK_ok, dA_ok = dK_def <= tol, dA_def <= tol
    return ComparisonVerdict(y_def <= tol, y_def, (li, lj), dK_ok, dK_def, dA_ok, dA_def, inputs, tol)


@dataclass
class UniquenessReport:
    max_gap: float
    gaps: dict
    N: int
    n_max: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_gap <= self.tol


def uniqueness_probe(problem, lattice, generator: GeneratorSpec, tol: float = 1e-2,
                     n_max: float = 2.0 ** 14, strict: bool = True) -> UniquenessReport:
    """Largest sup-norm gap between the oracle and the three penalized solutions at ``n_max``.

    Raises
    ------
    UniquenessViolation
        With ``strict``, when the gap exceeds ``tol``; the witness records ``N`` and ``n_max``.
    """
    data = as_data(problem, lattice)
    routes = {"oracle": solve_dp(data, None, generator).Y}
    for kind in KINDS:
        routes[kind] = solve_penalized(data, None, generator, PenaltyScheme(kind, n_max)).Y
    names = list(routes)
    gaps = {(a, b): sup_gap(routes[a], routes[b])
            for i, a in enumerate(names) for b in names[i + 1:]}
    report = UniquenessReport(max(gaps.values()), gaps, data.lattice.steps, float(n_max), tol)
    if strict and not report.passed:
        raise UniquenessViolation(
            f"solutions differ by {report.max_gap:.3g} > {tol:g} (N={report.N}, n_max={n_max:g})",
            {"N": report.N, "n_max": float(n_max),
             "gaps": {f"{a}|{b}": v for (a, b), v in gaps.items()}})
    return report


def skorokhod_report(sol: SolutionQuadruple, data=None) -> tuple:
    """``(r_K, r_A, r_S)``: lattice averages of ``sum |Y-L| dK``, ``sum |U-Y| dA`` and ``sum min(dK, dA)``.

    ``data`` defaults to the data the solution was computed from.
    """
    if data is not None and data is not sol.data:
        sol = SolutionQuadruple(sol.Y, sol.Z, sol.K_hard, sol.A_hard, sol.K_pen, sol.A_pen,
                                data, sol.generator, sol.n, sol.scheme)
    return sol.residuals


@dataclass
class StudyTable:
    """Sup-norm gaps between penalized and oracle ``Y``; ``gaps[a, b]`` is for ``N_schedule[a]``, ``n_schedule[b]``."""

    N_schedule: np.ndarray
    n_schedule: np.ndarray
    gaps: np.ndarray
    kind: str

    def rows(self):
        for a, N in enumerate(self.N_schedule):
            for b, n in enumerate(self.n_schedule):
                yield int(N), float(n), float(self.gaps[a, b])


def convergence_study(problem, generator: GeneratorSpec, N_schedule, n_schedule,
                      horizon: float = 1.0, kind: str = "penalize_both") -> StudyTable:
    """Cross-tabulate the penalized-vs-oracle gap over lattice sizes and penalty strengths."""
    N_schedule = np.atleast_1d(np.asarray(N_schedule, dtype=int))
    n_schedule = np.atleast_1d(np.asarray(n_schedule, dtype=float))
    if N_schedule.size == 0 or n_schedule.size == 0:
        raise InvalidArgument("convergence study needs nonempty schedules")
    gaps = np.zeros((N_schedule.size, n_schedule.size))
    for a, N in enumerate(N_schedule):
        lat = build_lattice(build_time_grid(horizon, int(N)))
        data = as_data(problem, lat)
        ref = solve_dp(data, None, generator).Y
        for b, sol in enumerate(solve_schedule(data, generator, kind, n_schedule)):
            gaps[a, b] = sup_gap(sol.Y, ref)
    return StudyTable(N_schedule, n_schedule, gaps, kind)
