"""Named test problems and seeded random instance families."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .generators import GeneratorSpec, add_generators, builtin
from .lattice import Forcing, ProblemData


def clamp_problem(lower=None):
    """``g = 2``, ``xi = 0``, ``U = 1``: ``Y_t = min(1, 2 (1 - t))`` in the limit.

    ``lower`` adds a constant lower barrier that never binds (for two-barrier runs).
    """
    return ProblemData(0.0, lower=lower, upper=1.0), builtin("clamp_drive(2)")


def lower_clamp_problem():
    """``g = -2``, ``xi = 0``, ``L = -1``: ``Y_t = max(-1, -2 (1 - t))`` in the limit."""
    return ProblemData(0.0, lower=-1.0), builtin("clamp_drive(-2)")


def interior_problem():
    """``g = 0``, ``xi = 0``, barriers ``-1 <= Y <= 1``: the solution is identically zero."""
    return ProblemData(0.0, lower=-1.0, upper=1.0), builtin("zero")


def martingale_problem():
    """``g = 0``, ``xi = b``, no barriers: ``Y`` is the Brownian value itself."""
    return ProblemData(lambda b: np.asarray(b, dtype=float)), builtin("zero")


NAMED = {"clamp": clamp_problem, "lower_clamp": lower_clamp_problem,
         "interior": interior_problem, "martingale": martingale_problem}


@dataclass(frozen=True)
class InstanceParams:
    level: float
    curvature: float
    scale: float
    gap: float
    xi_slope: float
    xi_shift: float
    v_slope: float
    generator: str


def _barriers(p: InstanceParams):
    def lower(t, b):
        return p.level - p.curvature * np.cosh(p.scale * np.asarray(b, dtype=float)) + 0.0 * t

    def upper(t, b):
        return lower(t, b) + p.gap
    return lower, upper


def _terminal(p: InstanceParams, lower, upper, horizon):
    def xi(b):
        raw = p.xi_shift + p.xi_slope * np.sin(np.asarray(b, dtype=float))
        return np.clip(raw, lower(horizon, b), upper(horizon, b))
    return xi


def _draw_params(rng) -> InstanceParams:
    kind = rng.choice(["zero", "constant", "linear", "linear", "osgood_example"])
    if kind == "constant":
        name = f"constant({rng.uniform(-2, 2):.6f})"
    elif kind == "linear":
        name = f"linear({rng.uniform(-1, 1):.6f},{rng.uniform(-1, 1):.6f})"
    else:
        name = str(kind)
    return InstanceParams(level=rng.uniform(-0.5, 0.0), curvature=rng.uniform(0.0, 0.3),
                          scale=rng.uniform(0.1, 0.3), gap=rng.uniform(0.1, 1.0),
                          xi_slope=rng.uniform(-1.0, 1.0), xi_shift=rng.uniform(-0.5, 0.5),
                          v_slope=rng.uniform(-1.0, 1.0), generator=name)


def instance_from_params(p: InstanceParams, horizon: float = 1.0, exponent: float = 2.0):
    lower, upper = _barriers(p)
    problem = ProblemData(_terminal(p, lower, upper, horizon), Forcing.linear(p.v_slope, horizon),
                          lower, upper, exponent)
    return problem, builtin(p.generator)


def random_instance(seed: int, horizon: float = 1.0):
    """Seeded feasible two-barrier instance ``(ProblemData, GeneratorSpec, InstanceParams)``.

    Barriers are ``L = a - c cosh(s b)`` and ``U = L + gap`` with ``gap >= 0.1``;
    ``xi`` is clipped into ``[L_T, U_T]``; the generator is a scaled catalog entry.
    """
    p = _draw_params(np.random.default_rng([seed, 1]))
    problem, g = instance_from_params(p, horizon)
    return problem, g, p


def random_ordered_pair(seed: int, equal_barriers: bool, horizon: float = 1.0):
    """Two instances whose inputs are ordered: ``xi``, ``dV``, ``L``, ``U`` and ``g`` of the first are ``<=``.

    Returns ``((problem1, g1), (problem2, g2))``. With ``equal_barriers`` both
    share the same barrier functions.
    """
    rng = np.random.default_rng([seed, 2])
    p = _draw_params(rng)
    problem1, g1 = instance_from_params(p, horizon)
    shift_l = 0.0 if equal_barriers else rng.uniform(0.0, 0.3)
    shift_u = 0.0 if equal_barriers else rng.uniform(0.0, 0.3)
    dxi, dv, dg = rng.uniform(0.0, 0.5, 3)
    if equal_barriers:
        lower2, upper2 = problem1.lower, problem1.upper
    else:
        lower2 = lambda t, b: problem1.lower(t, b) + shift_l  # noqa: E731
        upper2 = lambda t, b: problem1.upper(t, b) + shift_u  # noqa: E731
    xi1 = problem1.terminal

    def xi2(b):
        return np.clip(xi1(b) + dxi, lower2(horizon, b), upper2(horizon, b))

    problem2 = ProblemData(xi2, Forcing.linear(p.v_slope + dv, horizon), lower2, upper2,
                           problem1.exponent)
    g2 = add_generators(g1, builtin("constant", dg)) if dg > 0 else g1
    return (problem1, g1), (problem2, g2)


def shifted(g: GeneratorSpec, c: float) -> GeneratorSpec:
    """``g + c``."""
    return add_generators(g, builtin("constant", c))
