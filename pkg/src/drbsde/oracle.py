"""Backward dynamic programming for reflected BSDEs on the binomial lattice.

At each node the scheme takes one implicit Euler step in ``y`` (explicit in
``z``, which is the exact two-point slope of the children) and then projects
onto ``[L, U]``, charging the whole overshoot to ``K`` (below ``L``) or to
``A`` (above ``U``). Missing barriers skip their branch, so the same routine
covers the non-reflected, lower-, upper- and doubly reflected equations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Union

import numpy as np

from .errors import GeneratorGrowthViolation, InvalidArgument, StepTooCoarse
from .generators import GeneratorSpec
from .lattice import (EvaluatedData, Lattice, LatticeProcess, ProblemData, along_paths,
                      evaluate_data, path_sample)

ROOT_TOL = 1e-12
MAX_DOUBLINGS = 64
SCAN_POINTS = 64
ROOT_POLICIES = ("unique", "minimal", "maximal")


def solve_implicit(G, cont, dv, dt, a_norm, root="unique", tol=ROOT_TOL):
    """Elementwise root of ``y = cont + dt * G(y) + dv``.

    ``G`` maps an array of candidate ``y`` shaped like ``cont``, possibly with
    one extra leading scan axis, to generator values.
    ``root="unique"`` requires ``dt * a_norm < 1``, under which
    ``y - dt * G(y)`` is strictly increasing. ``"minimal"``/``"maximal"`` drop
    that requirement and return the smallest/largest root found by scanning the
    bracket before bisecting.
    """
    if root not in ROOT_POLICIES:
        raise InvalidArgument(f"unknown root policy {root!r}")
    if root == "unique" and dt * a_norm >= 1.0:
        raise StepTooCoarse(f"dt * a_norm = {dt * a_norm:g} >= 1; refine the grid")
    cont = np.asarray(cont, dtype=float)
    dv = np.broadcast_to(np.asarray(dv, dtype=float), cont.shape)
    base = cont + dv

    def F(y):
        return y - dt * G(y) - base

    g0 = G(cont)
    predictor = base + dt * g0
    f_pred = F(predictor)
    exact = f_pred == 0.0
    result = np.where(exact, predictor, 0.0)

    width = np.abs(dv) + dt * (np.abs(g0) + a_norm * (1.0 + np.abs(cont)))
    width = np.where(np.isfinite(width), np.maximum(width, tol), 1.0)
    wl, wh = width.copy(), width.copy()
    lo, hi = cont - wl, cont + wh
    flo, fhi = F(lo), F(hi)
    for _ in range(MAX_DOUBLINGS):
        bad_lo, bad_hi = ~(flo <= 0), ~(fhi >= 0)
        if not (bad_lo.any() or bad_hi.any()):
            break
        wl = np.where(bad_lo, 2 * wl, wl)
        wh = np.where(bad_hi, 2 * wh, wh)
        lo = np.where(bad_lo, cont - wl, lo)
        hi = np.where(bad_hi, cont + wh, hi)
        flo = np.where(bad_lo, F(lo), flo)
        fhi = np.where(bad_hi, F(hi), fhi)
    else:
        if (~(flo <= 0) | ~(fhi >= 0)).any():
            raise GeneratorGrowthViolation(
                f"no sign change of the implicit equation after {MAX_DOUBLINGS} bracket doublings")

    if root != "unique":
        frac = np.linspace(0.0, 1.0, SCAN_POINTS + 1).reshape((-1,) + (1,) * lo.ndim)
        ys = lo + (hi - lo) * frac
        fs = F(ys)
        fs[0], fs[-1] = flo, fhi

        def pick(idx):
            return np.take_along_axis(ys, idx[None], 0)[0]

        if root == "minimal":
            k = np.argmax(fs >= 0, axis=0)
            lo_new, hi_new = pick(np.maximum(k - 1, 0)), pick(k)
            hit = k == 0
        else:
            k = SCAN_POINTS - np.argmax((fs <= 0)[::-1], axis=0)
            lo_new, hi_new = pick(k), pick(np.minimum(k + 1, SCAN_POINTS))
            hit = k == SCAN_POINTS
        # the scan supersedes the predictor shortcut: that root need not be extremal
        exact = hit
        result = np.where(hit, np.where(root == "minimal", lo, hi), 0.0)
        lo, hi = lo_new, hi_new
        flo, fhi = F(lo), F(hi)

    exact = exact | (flo == 0) | (fhi == 0)
    result = np.where(~exact & (flo == 0), lo, result)
    result = np.where(~exact & (fhi == 0), hi, result)
    width = float(np.max(hi - lo)) if hi.size else 0.0
    iters = min(int(np.ceil(np.log2(width / tol))), 200) if width > tol else 0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        neg = F(mid) < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    return np.where(exact, result, 0.5 * (lo + hi))


def implicit_node_solve(cont: float, z: float, t: float, b: float, generator: GeneratorSpec,
                        dt: float, dv: float, root: str = "unique") -> float:
    """Scalar form of :func:`solve_implicit`: the ``y`` with ``y = cont + dt g(t, b, y, z) + dv``."""
    G = lambda y: generator(t, b, y, z)  # noqa: E731
    return float(solve_implicit(G, np.float64(cont), dv, dt, generator.a_norm, root))


@dataclass
class SolutionQuadruple:
    """Lattice solution ``(Y, Z, K, A)`` plus provenance.

    ``K_inc``/``A_inc`` are the total per-step increments; ``K_hard``/``A_hard``
    come from projections onto the barriers and ``K_pen``/``A_pen`` from
    penalty terms ``n (Y - L)^- dt`` / ``n (Y - U)^+ dt``.
    """

    Y: LatticeProcess
    Z: LatticeProcess
    K_hard: LatticeProcess
    A_hard: LatticeProcess
    K_pen: LatticeProcess
    A_pen: LatticeProcess
    data: EvaluatedData = field(repr=False)
    generator: GeneratorSpec = field(repr=False)
    n: float = 0.0
    scheme: Optional[str] = None

    @cached_property
    def K_inc(self) -> LatticeProcess:
        return LatticeProcess(tuple(a + b for a, b in zip(self.K_hard.levels, self.K_pen.levels)),
                              "increment")

    @cached_property
    def A_inc(self) -> LatticeProcess:
        return LatticeProcess(tuple(a + b for a, b in zip(self.A_hard.levels, self.A_pen.levels)),
                              "increment")

    @property
    def lattice(self) -> Lattice:
        return self.data.lattice

    @cached_property
    def _probs(self):
        return self.lattice.all_probabilities()

    def _average(self, terms) -> float:
        return float(sum(np.dot(p, x) for p, x in zip(self._probs, terms)))

    @cached_property
    def residuals(self) -> tuple:
        """``(r_K, r_A, r_S)``: lattice averages of ``sum |Y-L| dK``, ``sum |U-Y| dA``, ``sum min(dK, dA)``."""
        Y, L, U = self.Y.levels, self.data.lower.levels, self.data.upper.levels
        dK, dA = self.K_inc.levels, self.A_inc.levels
        with np.errstate(invalid="ignore"):
            rK = [np.where(k > 0, np.abs(y - l) * k, 0.0) for y, l, k in zip(Y, L, dK)]
            rA = [np.where(a > 0, np.abs(u - y) * a, 0.0) for y, u, a in zip(Y, U, dA)]
        rS = [np.minimum(k, a) for k, a in zip(dK, dA)]
        return self._average(rK), self._average(rA), self._average(rS)

    @property
    def r_K(self) -> float:
        return self.residuals[0]

    @property
    def r_A(self) -> float:
        return self.residuals[1]

    @property
    def r_S(self) -> float:
        return self.residuals[2]

    @cached_property
    def barrier_violation(self) -> tuple:
        """Lattice averages of ``sum (Y-L)^- dt`` and ``sum (Y-U)^+ dt`` over levels ``0..N-1``."""
        dt = self.lattice.dt
        Y = self.Y.levels[:-1]
        low = [np.where(np.isfinite(l), np.maximum(l - y, 0.0), 0.0) * dt
               for y, l in zip(Y, self.data.lower.levels)]
        up = [np.where(np.isfinite(u), np.maximum(y - u, 0.0), 0.0) * dt
              for y, u in zip(Y, self.data.upper.levels)]
        return self._average(low), self._average(up)

    def generator_values(self) -> LatticeProcess:
        """``g(t_i, b, Y, Z)`` on levels ``0..N-1`` (without penalty terms)."""
        lat = self.lattice
        levels = tuple(np.asarray(self.generator(lat.time(i), lat.values(i), self.Y[i], self.Z[i]),
                                  dtype=float)
                       for i in range(lat.steps))
        return LatticeProcess(levels, "increment")

    def path_statistics(self, p: Optional[float] = None, max_paths: int = 4096, seed: int = 0) -> dict:
        """Lattice averages of the quantities bounded in the a-priori estimates.

        Keys: ``sup_Y`` (``E sup|Y|^p``), ``Z_square`` (``E (sum |Z|^2 dt)^(p/2)``),
        ``K_T``, ``A_T`` (``E K_T^p``, ``E A_T^p``) and ``g_integral``
        (``E (sum |g(Y, Z)| dt)^p``). Averages run over all paths when ``2**N``
        does not exceed ``max_paths`` and over a seeded path sample otherwise.
        """
        p = self.data.exponent if p is None else p
        lat = self.lattice
        paths = path_sample(lat.steps, max_paths, seed)
        dt = lat.dt
        Y = along_paths(self.Y, paths)
        Z = along_paths(self.Z, paths[:, :-1])
        K = along_paths(self.K_inc, paths[:, :-1]).sum(axis=1)
        A = along_paths(self.A_inc, paths[:, :-1]).sum(axis=1)
        G = along_paths(self.generator_values(), paths[:, :-1])
        return {
            "sup_Y": float(np.mean(np.max(np.abs(Y), axis=1) ** p)),
            "Z_square": float(np.mean((np.sum(Z ** 2, axis=1) * dt) ** (p / 2))),
            "K_T": float(np.mean(K ** p)),
            "A_T": float(np.mean(A ** p)),
            "g_integral": float(np.mean((np.sum(np.abs(G), axis=1) * dt) ** p)),
        }

    def norms(self, p: Optional[float] = None) -> dict:
        """Sup-norms and lattice ``L^p`` norms of ``Y``, ``Z``, ``K_T``, ``A_T``."""
        p = self.data.exponent if p is None else p
        stats = self.path_statistics(p)
        return {
            "sup_Y": self.Y.sup(), "sup_Z": self.Z.sup(),
            "Lp_Y": stats["sup_Y"] ** (1 / p), "Lp_Z": stats["Z_square"] ** (1 / p),
            "Lp_K_T": stats["K_T"] ** (1 / p), "Lp_A_T": stats["A_T"] ** (1 / p),
        }


def backward(data: EvaluatedData, generator: GeneratorSpec, *, pen_lower=0.0, pen_upper=0.0,
             reflect_lower: bool = True, reflect_upper: bool = True, root: str = "unique",
             batch: int = 1):
    """Run the projected implicit scheme, optionally for a batch of penalty strengths.

    ``pen_lower``/``pen_upper`` may be arrays of equal length ``S``; the result
    then carries a leading batch axis of size ``S`` on every level array. A
    generator evaluating ``S`` family members at once (values shaped ``(S, P)``)
    is run by passing ``batch=S``.

    Returns a dict of per-level lists ``Y, Z, K_hard, A_hard, K_pen, A_pen``.
    """
    if not generator.is_continuous:
        raise InvalidArgument(
            f"{generator.name} is not continuous in y; regularize it (infconv_regularize) first")
    pen_lower = np.atleast_1d(np.asarray(pen_lower, dtype=float))
    pen_upper = np.atleast_1d(np.asarray(pen_upper, dtype=float))
    S = max(pen_lower.size, pen_upper.size, int(batch))
    pen_lower = np.broadcast_to(pen_lower, (S,))[:, None]
    pen_upper = np.broadcast_to(pen_upper, (S,))[:, None]
    penalized = bool(np.any(pen_lower > 0) or np.any(pen_upper > 0))

    lat = data.lattice
    N, dt, sq = lat.steps, lat.dt, lat.sqrt_dt
    dv = data.dv
    Y = [None] * (N + 1)
    Z, KH, AH, KP, AP = ([None] * N for _ in range(5))
    Y[N] = np.broadcast_to(data.xi, (S, N + 1)).copy()
    for i in range(N - 1, -1, -1):
        up, down = Y[i + 1][:, 1:], Y[i + 1][:, :-1]
        cont = 0.5 * (up + down)
        z = (up - down) / (2.0 * sq)
        # node arrays are (1, P) and batch arrays (S, 1); a scan axis may be prepended
        t, b = lat.time(i), lat.values(i)[None, :]
        L, U = data.lower[i][None, :], data.upper[i][None, :]

        def G(y, z=z, t=t, b=b, L=L, U=U):
            val = generator(t, b, y, z)
            if penalized:
                val = val + pen_lower * np.maximum(L - y, 0.0) - pen_upper * np.maximum(y - U, 0.0)
            return val

        y_free = solve_implicit(G, cont, dv[i], dt, generator.a_norm, root)
        y = y_free
        dA = np.zeros_like(y)
        dK = np.zeros_like(y)
        if reflect_upper:
            above = y_free > U
            dA = np.where(above, y_free - U, 0.0)
            y = np.where(above, U, y)
        if reflect_lower:
            below = (y_free < L) & ~(dA > 0)
            dK = np.where(below, L - y_free, 0.0)
            y = np.where(below, L, y)
        Y[i], Z[i], KH[i], AH[i] = y, z, dK, dA
        if penalized:
            KP[i] = pen_lower * np.maximum(L - y, 0.0) * dt
            AP[i] = pen_upper * np.maximum(y - U, 0.0) * dt
        else:
            KP[i] = np.zeros_like(y)
            AP[i] = np.zeros_like(y)
    return {"Y": Y, "Z": Z, "K_hard": KH, "A_hard": AH, "K_pen": KP, "A_pen": AP, "size": S}


def quadruples_from_backward(raw: dict, data: EvaluatedData, generator: GeneratorSpec,
                             ns=None, scheme=None) -> list:
    ns = np.zeros(raw["size"]) if ns is None else np.broadcast_to(np.asarray(ns, float), (raw["size"],))
    out = []
    for s in range(raw["size"]):
        def proc(key, kind):
            return LatticeProcess(tuple(np.ascontiguousarray(level[s]) for level in raw[key]), kind)
        out.append(SolutionQuadruple(
            Y=proc("Y", "state"), Z=proc("Z", "state"),
            K_hard=proc("K_hard", "increment"), A_hard=proc("A_hard", "increment"),
            K_pen=proc("K_pen", "increment"), A_pen=proc("A_pen", "increment"),
            data=data, generator=generator, n=float(ns[s]), scheme=scheme))
    return out


def as_data(problem: Union[ProblemData, EvaluatedData], lattice: Optional[Lattice]) -> EvaluatedData:
    if isinstance(problem, EvaluatedData):
        if lattice is not None and lattice.grid.steps != problem.lattice.grid.steps:
            raise InvalidArgument("evaluated data belongs to a different lattice")
        return problem
    if lattice is None:
        raise InvalidArgument("a lattice is required to evaluate problem data")
    return evaluate_data(problem, lattice)


def solve_dp(problem: Union[ProblemData, EvaluatedData], lattice: Optional[Lattice],
             generator: GeneratorSpec, root: str = "unique") -> SolutionQuadruple:
    """Exact backward induction for the (doubly) reflected equation on ``lattice``.

    ``root`` selects the implicit-step root when the step is not a contraction
    (see :func:`solve_implicit`); ``"minimal"`` tracks minimal solutions.
    """
    data = as_data(problem, lattice)
    raw = backward(data, generator, root=root)
    return quadruples_from_backward(raw, data, generator, scheme="oracle")[0]
