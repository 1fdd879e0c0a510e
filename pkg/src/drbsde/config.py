"""Experiment configuration files.

A configuration is an INI file with the sections ``[problem]``,
``[generator]``, ``[run]`` and ``[output]`` (plus ``[problem2]`` /
``[generator2]`` for paired comparisons and ``[check]`` for sampling boxes).
Barrier and terminal values are closed-form expressions in ``t`` and ``b``
built from numbers, ``+``, ``-``, ``*``, ``min``, ``max``, ``abs``, ``exp``
and ``cosh``; ``none`` drops a barrier.

Example::

    [problem]
    horizon = 1
    steps = 50
    terminal = 0
    lower = -1
    upper = min(1, 0.5 + b * b)

    [generator]
    name = linear(0.5, 1)

    [run]
    mode = solve
"""

from __future__ import annotations

import ast
import configparser
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DRBSDEError
from .generators import GeneratorSpec, add_generators, builtin
from .lattice import Forcing, ProblemData

MODES = ("solve", "penalize", "agree", "compare", "study", "check", "mokobodzki", "monotone")

_FUNCS = {"min": np.minimum, "max": np.maximum, "abs": np.abs, "exp": np.exp, "cosh": np.cosh}
_ARITY = {"min": 2, "max": 2, "abs": 1, "exp": 1, "cosh": 1}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply}


def _compile(node, key):
    if isinstance(node, ast.Expression):
        return _compile(node.body, key)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        value = float(node.value)
        return lambda env: value
    if isinstance(node, ast.Name) and node.id in ("t", "b"):
        name = node.id
        return lambda env: env[name]
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile(node.operand, key)
        sign = -1.0 if isinstance(node.op, ast.USub) else 1.0
        return lambda env: sign * inner(env)
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        left, right = _compile(node.left, key), _compile(node.right, key)
        return lambda env: op(left(env), right(env))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS \
            and not node.keywords:
        fname = node.func.id
        if len(node.args) != _ARITY[fname]:
            raise ConfigError(f"{key}: {fname} takes {_ARITY[fname]} argument(s)", key)
        fn = _FUNCS[fname]
        args = [_compile(a, key) for a in node.args]
        return lambda env: fn(*(a(env) for a in args))
    raise ConfigError(f"{key}: unsupported expression element {ast.dump(node)[:60]}", key)


def parse_expression(text: str, key: str = "expression"):
    """Compile ``text`` into ``f(t, b)``; returns ``None`` for ``none``.

    ``inf``/``-inf`` are also accepted as constant barriers.
    """
    text = text.strip()
    low = text.lower()
    if low == "none":
        return None
    if low in ("inf", "+inf", "-inf"):
        value = float(low)
        return lambda t, b: np.full(np.shape(b), value)
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r} ({exc.msg})", key) from None
    fn = _compile(tree, key)

    def evaluate(t, b):
        b = np.asarray(b, dtype=float)
        return np.broadcast_to(np.asarray(fn({"t": float(t), "b": b}), dtype=float), b.shape)
    return evaluate


def _floats(text: str, key: str) -> list:
    try:
        return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{key}: expected a comma-separated list of numbers, got {text!r}", key) from None


def parse_schedule(text: str, key: str) -> np.ndarray:
    """``1, 2, 4`` or ``pow2:a:b`` (``2**a .. 2**b``)."""
    text = text.strip()
    if text.startswith("pow2:"):
        try:
            a, b = (int(x) for x in text[5:].split(":"))
        except ValueError:
            raise ConfigError(f"{key}: expected pow2:<first>:<last>, got {text!r}", key) from None
        return 2.0 ** np.arange(a, b + 1)
    return np.asarray(_floats(text, key))


@dataclass
class ExperimentConfig:
    mode: str
    horizon: float
    steps: int
    problem: ProblemData
    generator: GeneratorSpec
    seed: int = 0
    run: dict = field(default_factory=dict)
    output_dir: str = "out"
    write_csv: bool = True
    write_plot: bool = True
    problem2: Optional[ProblemData] = None
    generator2: Optional[GeneratorSpec] = None
    box: Optional[dict] = None
    generator_parts: Optional[tuple] = None


def _get(section, key, default=None, required=False):
    if key in section:
        return section[key]
    if required:
        raise ConfigError(f"missing key {section.name}.{key}", f"{section.name}.{key}")
    return default


def _number(section, key, default=None, cast=float, required=False):
    raw = _get(section, key, default, required)
    if raw is None:
        return None
    try:
        return cast(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{section.name}.{key}: expected a number, got {raw!r}",
                          f"{section.name}.{key}") from None


def _problem(section, horizon) -> ProblemData:
    name = section.name
    terminal = parse_expression(_get(section, "terminal", "0"), f"{name}.terminal")
    if terminal is None:
        raise ConfigError(f"{name}.terminal cannot be none", f"{name}.terminal")
    lower = parse_expression(_get(section, "lower", "none"), f"{name}.lower")
    upper = parse_expression(_get(section, "upper", "none"), f"{name}.upper")
    times = _floats(_get(section, "forcing_times", f"0, {horizon!r}"), f"{name}.forcing_times")
    values = _floats(_get(section, "forcing_values", "0, 0"), f"{name}.forcing_values")
    try:
        forcing = Forcing(times, values)
    except DRBSDEError as exc:
        raise ConfigError(f"{name}.forcing_times/forcing_values: {exc}", f"{name}.forcing_values") from None
    exponent = _number(section, "exponent", 2.0)
    if exponent <= 1:
        raise ConfigError(f"{name}.exponent must exceed 1", f"{name}.exponent")
    return ProblemData(lambda b: terminal(horizon, b), forcing, lower, upper, exponent)


def _generator(section):
    name = section.name
    parts = _get(section, "decomposition")
    try:
        if parts:
            names = [p.strip() for p in parts.split("+")]
            if len(names) != 2:
                raise ConfigError(f"{name}.decomposition must read 'first + second'",
                                  f"{name}.decomposition")
            g1, g2 = builtin(names[0]), builtin(names[1])
            return add_generators(g1, g2), (names[0], names[1])
        return builtin(_get(section, "name", required=True)), None
    except ConfigError:
        raise
    except DRBSDEError as exc:
        raise ConfigError(f"{name}.name: {exc}", f"{name}.name") from None


def _merged(parser, base, override):
    """Section ``override`` layered on ``base`` (keys missing in the override are inherited)."""
    merged = configparser.ConfigParser()
    merged.read_dict({override: {**dict(parser[base]), **dict(parser[override])}})
    return merged[override]


def load_config(path: str, mode: Optional[str] = None, seed: Optional[int] = None) -> ExperimentConfig:
    """Parse and validate a configuration file.

    Raises
    ------
    ConfigError
        Naming the offending ``section.key``.
    """
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}", "config") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}", "config") from None
    for sec in ("problem", "generator"):
        if not parser.has_section(sec):
            raise ConfigError(f"missing section [{sec}]", sec)
    for sec in ("run", "output", "check"):
        if not parser.has_section(sec):
            parser.add_section(sec)
    run = parser["run"]
    cfg_mode = _get(run, "mode")
    if mode and cfg_mode and cfg_mode != mode:
        raise ConfigError(f"run.mode = {cfg_mode} conflicts with command {mode}", "run.mode")
    mode = mode or cfg_mode
    if mode not in MODES:
        raise ConfigError(f"run.mode must be one of {', '.join(MODES)}, got {mode!r}", "run.mode")

    prob = parser["problem"]
    horizon = _number(prob, "horizon", required=True)
    steps = _number(prob, "steps", required=True, cast=int)
    if horizon is None or horizon <= 0:
        raise ConfigError("problem.horizon must be positive", "problem.horizon")
    if steps < 1:
        raise ConfigError("problem.steps must be a positive integer", "problem.steps")
    problem = _problem(prob, horizon)
    generator, parts = _generator(parser["generator"])

    problem2 = generator2 = None
    if mode == "compare":
        p2 = _merged(parser, "problem", "problem2") if parser.has_section("problem2") else prob
        g2 = _merged(parser, "generator", "generator2") if parser.has_section("generator2") \
            else parser["generator"]
        if not (parser.has_section("problem2") or parser.has_section("generator2")):
            raise ConfigError("compare mode needs a [problem2] or [generator2] section", "problem2")
        problem2 = _problem(p2, horizon)
        generator2, _ = _generator(g2)

    box = {}
    for key in ("t", "b", "y", "z"):
        if key in parser["check"]:
            vals = _floats(parser["check"][key], f"check.{key}")
            if len(vals) != 2 or vals[0] > vals[1]:
                raise ConfigError(f"check.{key} must be 'low, high'", f"check.{key}")
            box[key] = tuple(vals)

    out = parser["output"]
    try:
        write_csv = out.getboolean("csv", True)
        write_plot = out.getboolean("plot", True)
    except ValueError as exc:
        raise ConfigError(f"output: {exc}", "output.csv") from None
    seed_value = seed if seed is not None else _number(run, "seed", 0, cast=int)
    if seed_value < 0:
        raise ConfigError("run.seed must be nonnegative", "run.seed")
    return ExperimentConfig(mode=mode, horizon=horizon, steps=steps, problem=problem,
                            generator=generator, seed=int(seed_value), run=dict(run),
                            output_dir=_get(out, "directory", "out"), write_csv=write_csv,
                            write_plot=write_plot, problem2=problem2, generator2=generator2,
                            box=box or None, generator_parts=parts)


def run_option(cfg: ExperimentConfig, key: str, default, kind=float):
    """Typed access to ``[run]`` options with a key-naming diagnostic."""
    raw = cfg.run.get(key)
    if raw is None:
        return default
    full = f"run.{key}"
    if kind == "schedule":
        return parse_schedule(raw, full)
    if kind == "expression":
        return parse_expression(raw, full)
    if kind == str:
        return raw.strip()
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{full}: cannot read {raw!r}", full) from None
