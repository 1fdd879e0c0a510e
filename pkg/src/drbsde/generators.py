"""Generators ``g(t, b, y, z)`` with regularity metadata, a builtin catalog and
the inf-convolution regularization used to approximate discontinuous generators.

Every generator callable is vectorized: ``t`` may be a scalar or an array and
``b, y, z`` broadcast against each other.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import InsufficientMetadata, InvalidArgument

REGULARITY_TAGS = ("continuous", "left_limit_lsc", "right_limit_usc")
INNER_TOL = 1e-8


@dataclass(frozen=True)
class Growth:
    """Constants of a bound ``f(t, b) + mu |y| + lam |z|``; ``f`` may be a callable of ``(t, b)``."""

    f: object = 0.0
    mu: float = 0.0
    lam: float = 0.0

    def f_at(self, t, b) -> np.ndarray:
        if callable(self.f):
            return np.asarray(self.f(t, b), dtype=float)
        return np.full(np.broadcast(np.asarray(t), np.asarray(b)).shape, float(self.f))


@dataclass(frozen=True)
class GeneratorSpec:
    """A generator together with the metadata its assumptions are stated in.

    Attributes
    ----------
    func : callable
        ``func(t, b, y, z)``; randomness enters through the Brownian value ``b``.
    rho : callable, optional
        One-sided modulus in ``y``: ``(g(y1) - g(y2)) sgn(y1 - y2) <= rho(|y1 - y2|)``.
    phi : callable, optional
        Modulus of uniform continuity in ``z``.
    z_growth : Growth, optional
        ``|g(y, z) - g(y, 0)| <= f + mu |y| + lam |z|``.
    linear_growth : Growth, optional
        ``|g(y, z)| <= f + mu |y| + lam |z|``.
    y_growth : Growth, optional
        ``|g(y, 0)| <= f + mu |y|`` (``lam`` ignored).
    sign_growth : Growth, optional
        ``g(y, z) sgn(y) <= f + mu |y| + lam |z|``.
    a_norm : float
        Linear bound ``rho(x) <= a_norm (x + 1)``; the implicit step needs ``dt * a_norm < 1``.
    breakpoints_y, breakpoints_z : tuple
        Known kinks or jumps, used as extra candidates by the inf-convolution.
    """

    func: Callable
    name: str = "custom"
    rho: Optional[Callable] = None
    phi: Optional[Callable] = None
    z_growth: Optional[Growth] = None
    linear_growth: Optional[Growth] = None
    y_growth: Optional[Growth] = None
    sign_growth: Optional[Growth] = None
    monotone_mu: Optional[float] = None
    lipschitz_z: Optional[float] = None
    a_norm: float = 0.0
    regularity: str = "continuous"
    decomposition: Optional[Tuple["GeneratorSpec", "GeneratorSpec"]] = None
    breakpoints_y: tuple = ()
    breakpoints_z: tuple = ()
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.regularity not in REGULARITY_TAGS:
            raise InvalidArgument(f"unknown regularity tag {self.regularity!r}")
        if self.a_norm < 0:
            raise InvalidArgument("a_norm must be nonnegative")

    def __call__(self, t, b, y, z) -> np.ndarray:
        out = np.asarray(self.func(t, b, y, z), dtype=float)
        shape = np.broadcast(np.asarray(b), np.asarray(y), np.asarray(z)).shape
        if out.shape != shape:
            out = np.broadcast_to(out, np.broadcast_shapes(out.shape, shape))
        return out

    @property
    def is_continuous(self) -> bool:
        return self.regularity == "continuous"


# -- catalog -----------------------------------------------------------------

def _zero(t, b, y, z):
    return np.zeros(np.broadcast(np.asarray(b), np.asarray(y), np.asarray(z)).shape)


def _constant(c):
    def g(t, b, y, z):
        return np.full(np.broadcast(np.asarray(b), np.asarray(y), np.asarray(z)).shape, float(c))
    return g


def osgood_modulus(delta: float = math.exp(-1.0)) -> Callable:
    """``h(x) = x |ln x|`` on ``(0, delta]``, extended linearly with slope ``h'(delta-)`` beyond."""
    if not 0 < delta < 1:
        raise InvalidArgument("delta must lie in (0, 1)")
    h_delta = -delta * math.log(delta)
    slope = -math.log(delta) - 1.0

    def h(x):
        x = np.asarray(x, dtype=float)
        safe = np.where((x > 0) & (x <= delta), x, 1.0)
        small = -safe * np.log(safe)
        out = np.where(x > delta, slope * (x - delta) + h_delta, small)
        return np.where(x > 0, out, 0.0)
    return h


def _osgood_example(delta):
    h = osgood_modulus(delta)

    def g(t, b, y, z):
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        az = np.abs(z)
        time_term = np.where(t > 0, np.power(np.where(t > 0, t, 1.0), -0.25), 0.0)
        with np.errstate(over="ignore"):
            growth = np.exp(np.abs(b) * y)
        # min(e^{-y}, 1) written without overflow for very negative y
        return h(np.abs(y)) - growth + np.exp(-np.maximum(y, 0.0)) * az * np.sin(az) + time_term
    return g


def _discontinuous_example(t, b, y, z):
    y = np.asarray(y, dtype=float)
    ay = np.abs(y)
    jump = np.where(y <= 0, np.cbrt(ay), np.cos(y))
    return jump + np.sqrt(ay * np.abs(z)) + np.abs(b)


def _step(t, b, y, z):
    y = np.asarray(y, dtype=float)
    out = np.where(y > 0, 1.0, 0.0)
    return np.broadcast_to(out, np.broadcast(np.asarray(b), y, np.asarray(z)).shape)


def add_generators(g1: GeneratorSpec, g2: GeneratorSpec, name: Optional[str] = None) -> GeneratorSpec:
    """``g1 + g2`` remembering the split, as needed by :func:`infconv_regularize`."""

    def g(t, b, y, z):
        return g1(t, b, y, z) + g2(t, b, y, z)

    regularity = g1.regularity if g1.regularity != "continuous" else g2.regularity
    if "continuous" not in (g1.regularity, g2.regularity) and g1.regularity != g2.regularity:
        raise InvalidArgument("cannot add a left- and a right-continuous generator")
    return GeneratorSpec(
        func=g, name=name or f"{g1.name}+{g2.name}",
        a_norm=g1.a_norm + g2.a_norm, regularity=regularity, decomposition=(g1, g2),
        breakpoints_y=tuple(sorted(set(g1.breakpoints_y) | set(g2.breakpoints_y))),
        breakpoints_z=tuple(sorted(set(g1.breakpoints_z) | set(g2.breakpoints_z))))


def _parse_call(name: str):
    m = re.fullmatch(r"\s*([a-z_]+)\s*(?:\((.*)\))?\s*", name)
    if not m:
        raise InvalidArgument(f"cannot parse generator name {name!r}")
    args = [float(a) for a in m.group(2).split(",")] if m.group(2) and m.group(2).strip() else []
    return m.group(1), args


CATALOG = ("zero", "constant", "linear", "clamp_drive", "osgood_example",
           "discontinuous_example", "osgood_discontinuous_sum", "step")


def builtin(name: str, *args, **params) -> GeneratorSpec:
    """Look up a catalog generator.

    ``name`` may carry its arguments inline (``"linear(0.5, 1)"``) or they may be
    passed positionally / by keyword.

    ==========================  ==============================================
    ``zero``                    ``g = 0``
    ``constant(c)``             ``g = c``
    ``clamp_drive(c)``          ``g = c`` (the drive used by the clamp problems)
    ``linear(a, b)``            ``g = a y + b z``
    ``osgood_example``          Osgood-type, non-Lipschitz in ``y``; ``delta`` keyword
    ``discontinuous_example``   jumps upward at ``y = 0``, left-continuous
    ``osgood_discontinuous_sum``  sum of the two above, decomposition recorded
    ``step(mu)``                ``g = 1_{y > 0}`` with growth constant ``mu``
    ==========================  ==============================================
    """
    base, inline = _parse_call(name)
    args = list(inline) + list(args)

    def arg(i, key, default=None):
        if key in params:
            return float(params[key])
        if i < len(args):
            return float(args[i])
        if default is None:
            raise InvalidArgument(f"generator {base!r} needs parameter {key!r}")
        return default

    zero_mod = lambda x: np.zeros_like(np.asarray(x, dtype=float))  # noqa: E731
    if base == "zero":
        return GeneratorSpec(_zero, name="zero", rho=zero_mod, phi=zero_mod,
                             z_growth=Growth(), linear_growth=Growth(), y_growth=Growth(),
                             sign_growth=Growth(), monotone_mu=0.0, lipschitz_z=0.0)
    if base in ("constant", "clamp_drive"):
        c = arg(0, "c")
        return GeneratorSpec(_constant(c), name=f"{base}({c:g})", rho=zero_mod, phi=zero_mod,
                             z_growth=Growth(), linear_growth=Growth(abs(c)),
                             y_growth=Growth(abs(c)), sign_growth=Growth(abs(c)),
                             monotone_mu=0.0, lipschitz_z=0.0, params={"c": c})
    if base == "linear":
        a, bz = arg(0, "a"), arg(1, "b")
        return GeneratorSpec(
            lambda t, b, y, z: a * np.asarray(y, dtype=float) + bz * np.asarray(z, dtype=float),
            name=f"linear({a:g},{bz:g})",
            rho=lambda x: max(a, 0.0) * np.asarray(x, dtype=float),
            phi=lambda x: abs(bz) * np.asarray(x, dtype=float),
            z_growth=Growth(0.0, 0.0, abs(bz)), linear_growth=Growth(0.0, abs(a), abs(bz)),
            y_growth=Growth(0.0, abs(a)), sign_growth=Growth(0.0, max(a, 0.0), abs(bz)),
            monotone_mu=a, lipschitz_z=abs(bz), a_norm=max(a, 0.0, abs(bz)),
            params={"a": a, "b": bz})
    if base == "osgood_example":
        delta = arg(0, "delta", math.exp(-1.0))
        return GeneratorSpec(
            _osgood_example(delta), name="osgood_example", rho=osgood_modulus(delta),
            z_growth=Growth(0.0, 0.0, 1.0), a_norm=1.0,
            breakpoints_y=(0.0,), breakpoints_z=(0.0,), params={"delta": delta})
    if base == "discontinuous_example":
        return GeneratorSpec(
            _discontinuous_example, name="discontinuous_example",
            linear_growth=Growth(lambda t, b: np.abs(b) + 2.0, 2.0, 1.0),
            regularity="left_limit_lsc", breakpoints_y=(0.0,), breakpoints_z=(0.0,))
    if base == "osgood_discontinuous_sum":
        delta = arg(0, "delta", math.exp(-1.0))
        return add_generators(builtin("osgood_example", delta=delta),
                              builtin("discontinuous_example"),
                              name="osgood_discontinuous_sum")
    if base == "step":
        mu = arg(0, "mu", 0.0)
        return GeneratorSpec(_step, name=f"step({mu:g})", linear_growth=Growth(1.0, mu, 0.0),
                             regularity="left_limit_lsc", breakpoints_y=(0.0,),
                             params={"mu": mu})
    raise InvalidArgument(f"unknown generator {base!r}; catalog: {', '.join(CATALOG)}")


def negated(g: GeneratorSpec) -> GeneratorSpec:
    """``gbar(t, b, y, z) = -g(t, b, -y, -z)``, the generator of the mirrored equation."""

    def gbar(t, b, y, z):
        return -g(t, b, -np.asarray(y, dtype=float), -np.asarray(z, dtype=float))

    flip = {"continuous": "continuous", "left_limit_lsc": "right_limit_usc",
            "right_limit_usc": "left_limit_lsc"}
    return GeneratorSpec(gbar, name=f"neg({g.name})", rho=g.rho, phi=g.phi, z_growth=g.z_growth,
                         linear_growth=g.linear_growth, y_growth=g.y_growth,
                         monotone_mu=g.monotone_mu, lipschitz_z=g.lipschitz_z,
                         a_norm=g.a_norm, regularity=flip[g.regularity],
                         breakpoints_y=tuple(-x for x in g.breakpoints_y),
                         breakpoints_z=tuple(-x for x in g.breakpoints_z))


# -- inf-convolution ----------------------------------------------------------

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden(objective, lo, hi, best_x, best_f, tol=INNER_TOL):
    """Vectorized golden-section search on ``[lo, hi]`` keeping the best value seen."""
    width = float(np.max(hi - lo)) if lo.size else 0.0
    if width <= tol:
        return best_x, best_f
    iters = int(math.ceil(math.log(width / tol) / math.log(1.0 / _INVPHI)))
    a, b = lo.copy(), hi.copy()
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = objective(c), objective(d)
    for x, fx in ((c, fc), (d, fd)):
        better = fx < best_f
        best_x = np.where(better, x, best_x)
        best_f = np.where(better, fx, best_f)
    for _ in range(iters):
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new = np.where(left, b - _INVPHI * (b - a), a + _INVPHI * (b - a))
        fnew = objective(new)
        c, d, fc, fd = (np.where(left, new, d), np.where(left, c, new),
                        np.where(left, fnew, fd), np.where(left, fc, fnew))
        better = fnew < best_f
        best_x = np.where(better, new, best_x)
        best_f = np.where(better, fnew, best_f)
    return best_x, best_f


def _flatten(*arrays):
    arrays = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in arrays))
    return (arrays[0].shape,) + tuple(a.ravel() for a in arrays)


def _candidates(center, radius, half, extra):
    offsets = np.linspace(-1.0, 1.0, 2 * half + 1)
    cols = [center[:, None] + radius[:, None] * offsets[None, :]]
    if extra:
        cols.append(np.broadcast_to(np.asarray(extra, dtype=float), (center.size, len(extra))))
    return np.concatenate(cols, axis=1)


class InfConvolutionZ:
    """``inf_u [g1(t, y, u) + (n + 2 lam) |u - z|]`` for ``g1`` with ``(H2')(ii)`` constants.

    ``n`` may be an array broadcasting against the evaluation points, which
    evaluates several members of the family in one call.
    """

    def __init__(self, g1: GeneratorSpec, n, half: int = 32):
        if g1.z_growth is None:
            raise InsufficientMetadata(f"{g1.name}: z_growth constants needed for inf-convolution in z")
        self.g1, self.n, self.half = g1, np.asarray(n, dtype=float), half
        self.growth = g1.z_growth
        if np.any(self.n + self.growth.lam <= 0):
            raise InsufficientMetadata("confinement radius undefined for n + lam = 0")

    def radius(self, t, b, y, z, n):
        gr = self.growth
        return (2.0 * gr.f_at(t, b) + 2.0 * gr.mu * np.abs(y) + 2.0 * gr.lam * np.abs(z)) / (n + gr.lam)

    def __call__(self, t, b, y, z):
        shape, y, t, b, z, n = _flatten(y, t, b, z, self.n)
        g1 = self.g1
        c = n + 2.0 * self.growth.lam
        R = self.radius(t, b, y, z, n)
        U = _candidates(z, R, self.half, g1.breakpoints_z)
        F = g1(t[:, None], b[:, None], y[:, None], U) + c[:, None] * np.abs(U - z[:, None])
        idx = np.argmin(F, axis=1)
        rows = np.arange(F.shape[0])
        best_u, best_f = U[rows, idx], F[rows, idx]
        h = R / self.half

        def obj(u):
            return g1(t, b, y, u) + c * np.abs(u - z)

        _, best_f = _golden(obj, best_u - h, best_u + h, best_u, best_f)
        return best_f.reshape(shape)


class InfConvolutionYZ:
    """``inf_{u,v} [g2(t, u, v) + (n + 2 mu) |u - y| + (n + 2 lam) |v - z|]`` for ``g2`` with linear growth."""

    def __init__(self, g2: GeneratorSpec, n, half: int = 12):
        if g2.linear_growth is None:
            raise InsufficientMetadata(f"{g2.name}: linear_growth constants needed for inf-convolution")
        self.g2, self.n, self.half = g2, np.asarray(n, dtype=float), half
        self.growth = g2.linear_growth
        if np.any(self.n + self.growth.mu <= 0) or np.any(self.n + self.growth.lam <= 0):
            raise InsufficientMetadata("confinement radius undefined for n = 0 and zero growth constant")
        self.cu = self.n + 2.0 * self.growth.mu
        self.cv = self.n + 2.0 * self.growth.lam

    def radii(self, t, b, y, z, n):
        gr = self.growth
        s = 2.0 * gr.f_at(t, b) + 2.0 * gr.mu * np.abs(y) + 2.0 * gr.lam * np.abs(z)
        return s / (n + gr.mu), s / (n + gr.lam)

    def __call__(self, t, b, y, z):
        shape, y, t, b, z, n = _flatten(y, t, b, z, self.n)
        g2, gr = self.g2, self.growth
        cu, cv = n + 2.0 * gr.mu, n + 2.0 * gr.lam
        Ru, Rv = self.radii(t, b, y, z, n)
        U = _candidates(y, Ru, self.half, g2.breakpoints_y)
        V = _candidates(z, Rv, self.half, g2.breakpoints_z)
        F = (g2(t[:, None, None], b[:, None, None], U[:, :, None], V[:, None, :])
             + (cu[:, None] * np.abs(U - y[:, None]))[:, :, None]
             + (cv[:, None] * np.abs(V - z[:, None]))[:, None, :])
        P, Ku, Kv = F.shape
        flat = np.argmin(F.reshape(P, -1), axis=1)
        rows = np.arange(P)
        iu, iv = flat // Kv, flat % Kv
        bu, bv = U[rows, iu], V[rows, iv]
        best = F[rows, iu, iv]
        hu, hv = Ru / self.half, Rv / self.half

        def obj_u(u):
            return g2(t, b, u, bv) + cu * np.abs(u - y) + cv * np.abs(bv - z)

        bu, best = _golden(obj_u, bu - hu, bu + hu, bu, best)

        def obj_v(v):
            return g2(t, b, bu, v) + cu * np.abs(bu - y) + cv * np.abs(v - z)

        bv, best = _golden(obj_v, bv - hv, bv + hv, bv, best)
        return best.reshape(shape)


def _split(g: GeneratorSpec):
    if g.decomposition is not None:
        return g.decomposition
    if g.z_growth is not None and g.is_continuous:
        return g, None
    if g.linear_growth is not None:
        return None, g
    raise InsufficientMetadata(
        f"{g.name}: inf-convolution needs a decomposition or z_growth / linear_growth constants")


def infconv_regularize(g: GeneratorSpec, n: float) -> GeneratorSpec:
    """Lipschitz regularization ``g_n = g1_n + g2_n`` of ``g = g1 + g2``.

    ``n`` may be an array (for instance of shape ``(S, 1)``); the result then
    evaluates ``S`` members of the family at once, broadcasting ``n`` against
    the evaluation points, and its metadata are those of the largest ``n``.

    ``g1_n`` inf-convolves ``g1`` in ``z`` with slope ``n + 2 lam``; ``g2_n``
    inf-convolves ``g2`` jointly in ``(y, z)`` with slopes ``n + 2 mu~`` and
    ``n + 2 lam~``. Infima are searched over boxes outside of which the
    penalty provably dominates the growth bound, on a grid that also contains
    ``(y, z)`` and declared breakpoints, followed by golden-section refinement
    to ``1e-8``. A generator without a decomposition is treated as ``g1`` if it
    carries ``z_growth`` constants and is continuous, otherwise as ``g2``.
    """
    n_arr = np.asarray(n, dtype=float)
    if np.any(n_arr <= 0):
        raise InvalidArgument("regularization index n must be positive")
    n_max = float(np.max(n_arr))
    g1, g2 = _split(g)
    parts = []
    rho1 = None
    a_norm = 0.0
    lip = 0.0
    if g1 is not None:
        parts.append(InfConvolutionZ(g1, n))
        rho1 = g1.rho
        a_norm += g1.a_norm
        lip += n_max + 2.0 * g1.z_growth.lam
    if g2 is not None:
        conv2 = InfConvolutionYZ(g2, n)
        parts.append(conv2)
        a_norm += n_max + 2.0 * conv2.growth.mu
        lip += n_max + 2.0 * conv2.growth.lam

    def gn(t, b, y, z):
        out = parts[0](t, b, y, z)
        for part in parts[1:]:
            out = out + part(t, b, y, z)
        return out

    slope_y = n_max + 2.0 * conv2.growth.mu if g2 is not None else 0.0

    def rho(x):
        x = np.asarray(x, dtype=float)
        base = rho1(x) if rho1 is not None else np.zeros_like(x)
        return base + slope_y * x

    rho_ok = g1 is None or rho1 is not None
    label = f"{n_max:g}" if n_arr.ndim == 0 else f"[{float(np.min(n_arr)):g}..{n_max:g}]"
    return GeneratorSpec(gn, name=f"infconv[{g.name}, n={label}]", rho=rho if rho_ok else None,
                         lipschitz_z=lip, a_norm=a_norm, regularity="continuous",
                         params={"n": n_arr if n_arr.ndim else float(n_arr),
                                 "parts": tuple(type(p).__name__ for p in parts)})


class GeneratorFamily:
    """``n -> GeneratorSpec``; ``batched`` families also accept an array of ``n`` of shape ``(S, 1)``."""

    def __init__(self, make: Callable, name: str = "family", batched: bool = False):
        self.make, self.name, self.batched = make, name, batched

    def __call__(self, n) -> GeneratorSpec:
        return self.make(n)


def infconv_family(g: GeneratorSpec) -> GeneratorFamily:
    """``n -> infconv_regularize(g, n)``, the increasing family approaching ``g`` from below."""
    return GeneratorFamily(lambda n: infconv_regularize(g, n), name=f"infconv[{g.name}]", batched=True)
