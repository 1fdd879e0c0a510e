"""Penalized approximations of the doubly reflected equation.

Three schemes replace one or both reflections by a penalty term inside the
generator:

``penalize_lower_reflect_upper``
    ``g + n (y - L)^-`` with a hard reflection at ``U``; ``Y`` increases in ``n``.
``penalize_upper_reflect_lower``
    ``g - n (y - U)^+`` with a hard reflection at ``L``; ``Y`` decreases in ``n``.
``penalize_both``
    both penalty terms and no reflection; sandwiched between the other two.

The penalty terms are piecewise linear and decreasing in ``y``, so they are
solved inside the implicit node equation and any ``n`` is stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np

from .errors import InvalidArgument, MonotonicityViolation, SandwichViolation, LimitDisagreement
from .generators import GeneratorSpec
from .lattice import Lattice, sup_gap
from .oracle import SolutionQuadruple, as_data, backward, quadruples_from_backward, solve_dp

KINDS = ("penalize_lower_reflect_upper", "penalize_upper_reflect_lower", "penalize_both")
MONO_SLACK = 1e-10
STAT_KEYS = ("sup_Y", "Z_square", "K_T", "A_T", "g_integral")


def default_schedule(top: int = 14) -> np.ndarray:
    return 2.0 ** np.arange(top + 1)


@dataclass(frozen=True)
class PenaltyScheme:
    kind: str
    n: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown penalty scheme {self.kind!r}; expected one of {KINDS}")
        if not np.all(np.asarray(self.n) >= 0):
            raise InvalidArgument("penalty strength n must be nonnegative")

    def backward_kwargs(self, n=None) -> dict:
        n = self.n if n is None else n
        if self.kind == KINDS[0]:
            return dict(pen_lower=n, reflect_lower=False, reflect_upper=True)
        if self.kind == KINDS[1]:
            return dict(pen_upper=n, reflect_lower=True, reflect_upper=False)
        return dict(pen_lower=n, pen_upper=n, reflect_lower=False, reflect_upper=False)


def solve_schedule(data, generator, kind, ns, root="unique") -> list:
    scheme = PenaltyScheme(kind)
    raw = backward(data, generator, root=root, **scheme.backward_kwargs(np.asarray(ns, dtype=float)))
    return quadruples_from_backward(raw, data, generator, ns=ns, scheme=kind)


def solve_penalized(problem, lattice: Optional[Lattice], generator: GeneratorSpec,
                    scheme: PenaltyScheme, root: str = "unique") -> SolutionQuadruple:
    """Solve one penalized equation on the lattice.

    The penalized barrier is dropped from the projection step; the other one
    (if any) is still enforced by hard reflection. Penalty increments
    ``n (Y - L)^- dt`` and ``n (Y - U)^+ dt`` are stored in ``K_pen``/``A_pen``.
    """
    data = as_data(problem, lattice)
    return solve_schedule(data, generator, scheme.kind, [scheme.n], root)[0]


def _first_violation(lower_seq, upper_seq, slack=MONO_SLACK):
    """First ``(index, level, k, defect)`` with ``lower_seq[m] > upper_seq[m] + slack``, else None."""
    for m, (a, b) in enumerate(zip(lower_seq, upper_seq)):
        for i, (x, y) in enumerate(zip(a.levels, b.levels)):
            d = x - y
            k = int(np.argmax(d))
            if d[k] > slack:
                return m, i, k, float(d[k])
    return None


def _witness(kind, claim, ns, hit):
    m, i, k, defect = hit
    return {"scheme": kind, "claim": claim, "n_pair": (float(ns[m]), float(ns[m + 1])),
            "level": i, "j": 2 * k - i, "defect": defect}


def monotonicity_checks(kind: str, sols: list, slack: float = MONO_SLACK) -> list:
    """Witness dicts for every failed scheme-specific monotonicity claim."""
    if kind == KINDS[2] or len(sols) < 2:
        return []
    ns = [s.n for s in sols]
    lo, hi = sols[:-1], sols[1:]
    if kind == KINDS[0]:
        claims = {"Y nondecreasing in n": ([s.Y for s in lo], [s.Y for s in hi]),
                  "dA nondecreasing in n": ([s.A_hard for s in lo], [s.A_hard for s in hi])}
    else:
        claims = {"Y nonincreasing in n": ([s.Y for s in hi], [s.Y for s in lo]),
                  "dK nondecreasing in n": ([s.K_hard for s in lo], [s.K_hard for s in hi])}
    out = []
    for claim, (a, b) in claims.items():
        hit = _first_violation(a, b, slack)
        if hit is not None:
            out.append(_witness(kind, claim, ns, hit))
    return out


@dataclass
class PenalizationReport:
    """Outcome of a penalty schedule.

    ``gaps[m]`` is the sup-norm distance between the ``Y`` of schedule entries
    ``m`` and ``m + 1``. ``bound_stats`` maps each statistic of
    :meth:`SolutionQuadruple.path_statistics` to its values along the schedule.
    """

    kind: str
    schedule: np.ndarray
    solutions: list = field(repr=False)
    gaps: np.ndarray
    bound_stats: dict
    converged: bool
    violations: list
    tol: float

    @property
    def final(self) -> SolutionQuadruple:
        return self.solutions[-1]

    @property
    def bounds_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.bound_stats.values())

    def bounds_stable_from(self, rel: float = 0.05) -> int:
        """Smallest schedule index after which every statistic stays within ``rel`` of its final value."""
        start = 0
        for values in self.bound_stats.values():
            values = np.asarray(values)
            scale = max(abs(values[-1]), 1e-12)
            bad = np.nonzero(np.abs(values - values[-1]) > rel * scale)[0]
            if bad.size:
                start = max(start, int(bad[-1]) + 1)
        return start


def _check_schedule(schedule) -> np.ndarray:
    schedule = np.asarray(default_schedule() if schedule is None else schedule, dtype=float)
    if schedule.ndim != 1 or schedule.size < 2:
        raise InvalidArgument("penalty schedule needs at least two entries")
    if np.any(np.diff(schedule) <= 0) or schedule[0] < 0:
        raise InvalidArgument("penalty schedule must be nonnegative and strictly increasing")
    return schedule


def run_penalization(problem, lattice: Optional[Lattice], generator: GeneratorSpec, kind: str,
                     schedule=None, tol: float = 1e-4, strict: bool = True,
                     early_stop: bool = True, stats: bool = True,
                     root: str = "unique") -> PenalizationReport:
    """Solve a penalty schedule and check the scheme's monotonicity in ``n``.

    Every ``n`` of the schedule is solved in one vectorized backward pass. The
    report is cut at the first consecutive gap below ``tol`` when
    ``early_stop`` is set; ``converged`` is false if no gap reaches ``tol``.

    Raises
    ------
    MonotonicityViolation
        With ``strict``, on the first monotonicity failure beyond ``1e-10``.
    """
    PenaltyScheme(kind)
    schedule = _check_schedule(schedule)
    data = as_data(problem, lattice)
    sols = solve_schedule(data, generator, kind, schedule, root)
    gaps = np.array([sup_gap(a.Y, b.Y) for a, b in zip(sols[:-1], sols[1:])])
    below = np.nonzero(gaps < tol)[0]
    converged = below.size > 0
    if early_stop and converged:
        keep = int(below[0]) + 2
        sols, schedule, gaps = sols[:keep], schedule[:keep], gaps[:keep - 1]
    violations = monotonicity_checks(kind, sols)
    if strict and violations:
        w = violations[0]
        raise MonotonicityViolation(f"{kind}: {w['claim']} fails at level {w['level']}, "
                                    f"node j={w['j']} (defect {w['defect']:.3g})", w)
    bound_stats = {}
    if stats:
        per_n = [s.path_statistics() for s in sols]
        bound_stats = {key: np.array([d[key] for d in per_n]) for key in STAT_KEYS}
    return PenalizationReport(kind, schedule, sols, gaps, bound_stats, converged, violations, tol)


# -- three-scheme agreement ---------------------------------------------------

# claims on increments: (name, smaller side, larger side, involves a hard reflection)
DOMINATIONS = (
    ("dK(upper-penalized) <= dK(both)", 1, "K", 2, "K", True),
    ("dK(both) <= dK(lower-penalized)", 2, "K", 0, "K", False),
    ("dA(lower-penalized) <= dA(both)", 0, "A", 2, "A", True),
    ("dA(both) <= dA(upper-penalized)", 2, "A", 1, "A", False),
)


@dataclass
class AgreementReport:
    """Per-``n`` sandwich and increment-domination checks plus limit agreement.

    ``sandwich_violations`` and ``domination_violations`` map each claim to a
    list of witnesses (one per offending ``n``); ``limit_gaps`` holds the
    pairwise sup-norm gaps of the three final ``Y``.
    """

    schedule: np.ndarray
    runs: dict = field(repr=False)
    sandwich_violations: dict
    domination_violations: dict
    limit_gaps: dict
    tol: float

    @property
    def max_gap(self) -> float:
        return max(self.limit_gaps.values())

    @property
    def sandwich_ok(self) -> bool:
        return not any(self.sandwich_violations.values())

    def dominations_ok(self, include_hard: bool = True) -> bool:
        hard = {name for name, *_, h in DOMINATIONS if h}
        return not any(v for k, v in self.domination_violations.items()
                       if include_hard or k not in hard)

    @property
    def limits_agree(self) -> bool:
        return self.max_gap <= self.tol


def _inc(sol, which):
    return sol.K_inc if which == "K" else sol.A_inc


def three_scheme_agreement(problem, lattice: Optional[Lattice], generator: GeneratorSpec,
                           tol: float = 1e-2, schedule=None, strict: bool = True,
                           check_hard_dominations: bool = False,
                           slack: float = MONO_SLACK) -> AgreementReport:
    """Run the three schemes on one schedule and compare them node by node.

    Checked per ``n``: the ``Y`` sandwich (lower-penalized <= both-penalized <=
    upper-penalized) and the per-step increment dominations in
    :data:`DOMINATIONS`. The two dominations that compare a hard reflection
    with a penalty increment are always recorded but only raise when
    ``check_hard_dominations`` is set: a hard reflection absorbs the whole
    overshoot in one step while the penalty spreads it, so they can fail.

    Raises
    ------
    SandwichViolation
        With ``strict``, on a sandwich or (enforced) domination failure.
    LimitDisagreement
        With ``strict``, if the final ``Y`` differ by more than ``tol``.
    """
    data = as_data(problem, lattice)
    if not (data.has_lower and data.has_upper):
        raise InvalidArgument("three-scheme agreement needs both barriers")
    schedule = _check_schedule(schedule)
    runs = {kind: run_penalization(data, None, generator, kind, schedule, strict=strict,
                                   early_stop=False, stats=False)
            for kind in KINDS}
    sols = [runs[k].solutions for k in KINDS]
    sandwich = {"Y(lower-penalized) <= Y(both)": [], "Y(both) <= Y(upper-penalized)": []}
    dominations = {name: [] for name, *_ in DOMINATIONS}
    for m, n in enumerate(schedule):
        low, both, up = sols[0][m], sols[2][m], sols[1][m]
        for claim, (a, b) in zip(sandwich, ((low.Y, both.Y), (both.Y, up.Y))):
            hit = _first_violation([a], [b], slack)
            if hit is not None:
                sandwich[claim].append({"n": float(n), "level": hit[1], "j": 2 * hit[2] - hit[1],
                                        "defect": hit[3]})
        for name, si, wi, li, wl, _ in DOMINATIONS:
            hit = _first_violation([_inc(sols[si][m], wi)], [_inc(sols[li][m], wl)], slack)
            if hit is not None:
                dominations[name].append({"n": float(n), "level": hit[1],
                                          "j": 2 * hit[2] - hit[1], "defect": hit[3]})
    finals = {k: runs[k].final.Y for k in KINDS}
    gaps = {(a, b): sup_gap(finals[a], finals[b]) for a, b in combinations(KINDS, 2)}
    report = AgreementReport(schedule, runs, sandwich, dominations, gaps, tol)
    if strict:
        for claim, hits in sandwich.items():
            if hits:
                raise SandwichViolation(f"{claim} fails at n={hits[0]['n']:g}", hits[0])
        hard = {name for name, *_, h in DOMINATIONS if h}
        for name, hits in dominations.items():
            if hits and (check_hard_dominations or name not in hard):
                raise SandwichViolation(f"{name} fails at n={hits[0]['n']:g}", hits[0])
        if not report.limits_agree:
            raise LimitDisagreement(f"penalization limits differ by {report.max_gap:.3g} > {tol:g}",
                                    {"gaps": {f"{a}|{b}": v for (a, b), v in gaps.items()}})
    return report


def oracle_gap(report_or_solution, problem, lattice, generator) -> float:
    """Sup-norm gap between a penalized ``Y`` and the projected oracle on the same lattice."""
    sol = getattr(report_or_solution, "final", report_or_solution)
    return sup_gap(sol.Y, solve_dp(problem, lattice, generator).Y)
