"""Sampling falsifiers for generator assumptions and the barrier-band statistic.

Each check draws seeded tuples from a box, evaluates the defect of one
inequality (positive means the inequality fails) and keeps the worst tuple.
A check can refute an assumption but never prove it.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .generators import GeneratorSpec
from .lattice import Lattice, along_paths, evaluate_data, path_sample, ProblemData, LatticeProcess

DEFECT_TOL = 1e-9
JUMP_TOL = 1e-3
JUMP_EPS = 1e-12
SHARD = 20_000


@dataclass(frozen=True)
class SamplingBox:
    t: tuple = (0.0, 1.0)
    b: tuple = (-2.0, 2.0)
    y: tuple = (-1.0, 1.0)
    z: tuple = (-1.0, 1.0)

    def draw(self, rng, size):
        u = lambda r: rng.uniform(r[0], r[1], size)  # noqa: E731
        return {"t": u(self.t), "b": u(self.b), "y1": u(self.y), "y2": u(self.y),
                "z1": u(self.z), "z2": u(self.z)}


def _abs_growth(gr, t, b, y, z):
    return gr.f_at(t, b) + gr.mu * np.abs(y) + gr.lam * np.abs(z)


def _defect_functions(g: GeneratorSpec) -> dict:
    """Map assumption name -> ``defect(t, b, y1, y2, z1, z2)`` for the metadata ``g`` supplies."""
    out = {}
    if g.rho is not None:
        out["H1"] = lambda t, b, y1, y2, z1, z2: (
            (g(t, b, y1, z1) - g(t, b, y2, z1)) * np.sign(y1 - y2) - g.rho(np.abs(y1 - y2)))
    if g.monotone_mu is not None:
        mu = g.monotone_mu
        out["H1s"] = lambda t, b, y1, y2, z1, z2: (
            (g(t, b, y1, z1) - g(t, b, y2, z1)) * np.sign(y1 - y2) - mu * np.abs(y1 - y2))
    if g.phi is not None:
        out["H2(ii)"] = lambda t, b, y1, y2, z1, z2: (
            np.abs(g(t, b, y1, z1) - g(t, b, y1, z2)) - g.phi(np.abs(z1 - z2)))
    if g.lipschitz_z is not None:
        lam = g.lipschitz_z
        out["H2s(ii)"] = lambda t, b, y1, y2, z1, z2: (
            np.abs(g(t, b, y1, z1) - g(t, b, y1, z2)) - lam * np.abs(z1 - z2))
    if g.z_growth is not None:
        gr = g.z_growth
        out["H2'(ii)"] = lambda t, b, y1, y2, z1, z2: (
            np.abs(g(t, b, y1, z1) - g(t, b, y1, 0.0)) - _abs_growth(gr, t, b, y1, z1))
    if g.y_growth is not None:
        gr = g.y_growth
        out["H3s"] = lambda t, b, y1, y2, z1, z2: (
            np.abs(g(t, b, y1, 0.0)) - _abs_growth(gr, t, b, y1, 0.0))
    if g.sign_growth is not None:
        gr = g.sign_growth
        out["AA"] = lambda t, b, y1, y2, z1, z2: (
            g(t, b, y1, z1) * np.sign(y1) - _abs_growth(gr, t, b, y1, z1))
    if g.linear_growth is not None:
        gr = g.linear_growth
        out["A2"] = lambda t, b, y1, y2, z1, z2: (
            np.abs(g(t, b, y1, z1)) - _abs_growth(gr, t, b, y1, z1))

    # continuity defects: a jump larger than JUMP_TOL across a 2 * JUMP_EPS window
    e = JUMP_EPS
    out["continuity in z"] = lambda t, b, y1, y2, z1, z2: (
        np.abs(g(t, b, y1, z1 + e) - g(t, b, y1, z1 - e)) - JUMP_TOL)
    if g.regularity == "continuous":
        out["continuity in y"] = lambda t, b, y1, y2, z1, z2: (
            np.abs(g(t, b, y1 + e, z1) - g(t, b, y1 - e, z1)) - JUMP_TOL)
    elif g.regularity == "left_limit_lsc":
        out["A1a"] = lambda t, b, y1, y2, z1, z2: np.maximum(
            np.abs(g(t, b, y1 - e, z1) - g(t, b, y1, z1)),
            g(t, b, y1, z1) - g(t, b, y1 + e, z1)) - JUMP_TOL
    else:
        out["A1b"] = lambda t, b, y1, y2, z1, z2: np.maximum(
            np.abs(g(t, b, y1 + e, z1) - g(t, b, y1, z1)),
            g(t, b, y1 - e, z1) - g(t, b, y1, z1)) - JUMP_TOL
    return out


@dataclass
class Verdict:
    name: str
    samples: int
    worst_defect: float
    witness: Optional[dict]

    @property
    def violated(self) -> bool:
        return self.worst_defect > DEFECT_TOL

    @property
    def label(self) -> str:
        return "violated" if self.violated else "no_violation_found"


@dataclass
class AssumptionReport:
    generator: str
    seed: int
    verdicts: dict
    _defects: dict = field(repr=False, default_factory=dict)

    def __getitem__(self, name) -> Verdict:
        return self.verdicts[name]

    @property
    def violated(self) -> list:
        return [k for k, v in self.verdicts.items() if v.violated]

    def reevaluate(self, name: str) -> float:
        """Recompute the defect at the stored witness of ``name``."""
        w = self.verdicts[name].witness
        args = [np.float64(w[k]) for k in ("t", "b", "y1", "y2", "z1", "z2")]
        return float(self._defects[name](*args))


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("DRBSDE_THREADS", "1")))
    except ValueError:
        return 1


def check_assumptions(g: GeneratorSpec, box: Optional[SamplingBox] = None, samples: int = 100_000,
                      seed: int = 0, include_breakpoints: bool = True) -> AssumptionReport:
    """Monte-Carlo falsification of every assumption ``g``'s metadata can state.

    Samples are split into shards with independent substreams spawned from
    ``seed``; shards may run on ``DRBSDE_THREADS`` worker threads and are merged
    in shard order, so the report does not depend on the thread count. When
    ``include_breakpoints`` is set, the declared breakpoints of ``y`` and
    ``z`` are added as extra sample points so that jumps there are probed.
    """
    box = box or SamplingBox()
    defects = _defect_functions(g)
    n_shards = max(1, -(-samples // SHARD))
    seqs = np.random.SeedSequence(seed).spawn(n_shards)
    sizes = [SHARD] * (n_shards - 1) + [samples - SHARD * (n_shards - 1)]

    def shard(idx):
        rng = np.random.default_rng(seqs[idx])
        pts = box.draw(rng, sizes[idx])
        if idx == 0 and include_breakpoints:
            for key, bps in (("y1", g.breakpoints_y), ("z1", g.breakpoints_z)):
                for j, bp in enumerate(bps[: sizes[idx]]):
                    pts[key][j] = bp
        res = {}
        for name, fn in defects.items():
            with np.errstate(all="ignore"):
                d = np.asarray(fn(pts["t"], pts["b"], pts["y1"], pts["y2"], pts["z1"], pts["z2"]))
            d = np.where(np.isnan(d), np.inf, d)
            k = int(np.argmax(d))
            res[name] = (float(d[k]), {key: float(v[k]) for key, v in pts.items()})
        return res

    with ThreadPoolExecutor(max_workers=min(_threads(), n_shards)) as pool:
        results = list(pool.map(shard, range(n_shards)))
    verdicts = {}
    for name in defects:
        best, wit = -np.inf, None
        for res in results:
            d, w = res[name]
            if d > best:
                best, wit = d, w
        verdicts[name] = Verdict(name, samples, best, wit if best > DEFECT_TOL else None)
    return AssumptionReport(g.name, seed, verdicts, defects)


# -- barrier band and the integrability statistic ------------------------------

def _exact_mean(values: np.ndarray, axis: int) -> np.ndarray:
    """Mean along ``axis`` that returns constant rows unchanged (no summation round-off)."""
    first = np.take(values, [0], axis=axis)
    const = np.all(values == first, axis=axis)
    return np.where(const, np.squeeze(first, axis=axis), np.mean(values, axis=axis))


def integral_statistic(values: LatticeProcess, lattice: Lattice, p: float,
                       max_paths: int = 4096, seed: int = 0) -> float:
    """Lattice average of ``(sum_i |v(t_i)| dt)^p`` over paths, ``v`` given on levels ``0..N-1``.

    The time sum is ``T`` times the mean over steps, so constant integrands
    give ``(|c| T)^p`` without round-off.
    """
    paths = path_sample(lattice.steps, max_paths, seed)
    vals = np.abs(along_paths(values, paths[:, :lattice.steps]))
    per_path = (lattice.grid.horizon * _exact_mean(vals, axis=1)) ** p
    return float(_exact_mean(per_path, axis=0))


@dataclass
class MokobodzkiVerdict:
    passed: bool
    statistic: float
    band_violations: int
    witness: Optional[dict]


def mokobodzki_check(problem: ProblemData, lattice: Lattice, g: GeneratorSpec,
                     X_candidate: Callable, p: Optional[float] = None) -> MokobodzkiVerdict:
    """Check that ``X`` lies between the barriers and that ``g(t, X, 0)`` is integrable.

    Fails with the first offending node when ``L <= X <= U`` breaks anywhere;
    otherwise passes iff the statistic of :func:`integral_statistic` is finite.
    """
    data = evaluate_data(problem, lattice)
    p = data.exponent if p is None else p
    X = []
    count, witness = 0, None
    for i in range(lattice.steps + 1):
        b = lattice.values(i)
        x = np.broadcast_to(np.asarray(X_candidate(lattice.time(i), b), dtype=float), b.shape)
        X.append(np.array(x))
        bad = np.nonzero((x < data.lower[i]) | (x > data.upper[i]))[0]
        count += bad.size
        if bad.size and witness is None:
            k = int(bad[0])
            witness = {"level": i, "j": 2 * k - i, "X": float(x[k]),
                       "L": float(data.lower[i][k]), "U": float(data.upper[i][k])}
    gx = LatticeProcess(tuple(np.asarray(g(lattice.time(i), lattice.values(i), X[i], 0.0), dtype=float)
                              for i in range(lattice.steps)), "increment")
    stat = integral_statistic(gx, lattice, p)
    return MokobodzkiVerdict(count == 0 and bool(np.isfinite(stat)), stat, count, witness)


def necessity_statistic(solution, p: Optional[float] = None) -> float:
    """The same statistic along a solution: lattice average of ``(sum |g(t, Y, 0)| dt)^p``."""
    lat = solution.lattice
    p = solution.data.exponent if p is None else p
    g = solution.generator
    vals = LatticeProcess(tuple(np.asarray(g(lat.time(i), lat.values(i), solution.Y[i], 0.0), dtype=float)
                                for i in range(lat.steps)), "increment")
    return integral_statistic(vals, lat, p)
