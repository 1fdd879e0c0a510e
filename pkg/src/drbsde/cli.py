"""Command-line front end.

Usage::

    drbsde MODE --config FILE [--out DIR] [--seed N]

Exit status: 0 success, 2 a verdict failed, 3 invalid or infeasible
configuration (or an I/O error), 4 a schedule ended without converging.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from typing import Iterable, Optional

import numpy as np

from .assumptions import SamplingBox, check_assumptions, mokobodzki_check, necessity_statistic
from .config import MODES, ExperimentConfig, load_config, run_option
from .errors import (ConfigError, DRBSDEError, GeneratorGrowthViolation, InfeasibleProblem,
                     InputsNotOrdered, InvalidArgument, StepTooCoarse, VerdictViolation)
from .generators import GeneratorFamily, infconv_family
from .lattice import build_lattice, build_time_grid, evaluate_data
from .oracle import solve_dp
from .penalization import KINDS, run_penalization, three_scheme_agreement
from .sequences import solve_monotone_sequence
from .verification import comparison_harness, convergence_study

EXIT_OK, EXIT_VERDICT, EXIT_CONFIG, EXIT_NO_CONVERGENCE = 0, 2, 3, 4
CSV_COLUMNS = ("mode", "seed", "N", "n", "t_index", "node_j", "Y", "Z", "dK", "dA",
               "r_K", "r_A", "r_S", "gap")


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def solution_rows(sol, mode: str, seed: int, n: float, gap: float) -> list:
    """One row per lattice node; ``Z``, ``dK``, ``dA`` are ``nan`` on the terminal level."""
    lat = sol.lattice
    N = lat.steps
    rK, rA, rS = sol.residuals
    rows = []
    for i in range(N + 1):
        js = lat.node_indices(i)
        for k, j in enumerate(js):
            if i < N:
                z, dk, da = sol.Z[i][k], sol.K_inc[i][k], sol.A_inc[i][k]
            else:
                z = dk = da = float("nan")
            rows.append((mode, seed, N, float(n), i, int(j), sol.Y[i][k], z, dk, da, rK, rA, rS, gap))
    return rows


def emit_csv(rows: Iterable, path: str) -> None:
    """Write ``results.csv``: fixed header, rows sorted by ``n``, ``t_index``, ``node_j``.

    The sort is stable, so rows sharing those keys keep their input order.
    """
    rows = sorted(rows, key=lambda r: (r[3], r[4], r[5]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def spine(sol) -> np.ndarray:
    """``(t, Y)`` along ``b = 0``: node ``j = 0`` on even levels, mean of ``j = -1, 1`` on odd ones."""
    lat = sol.lattice
    out = []
    for i in range(lat.steps + 1):
        y = sol.Y[i]
        mid = i // 2
        val = y[mid] if i % 2 == 0 else 0.5 * (y[mid] + y[mid + 1])
        out.append((lat.time(i), val))
    return np.array(out)


def _write_table(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for row in rows:
            fh.write(" ".join(_fmt(x) for x in row) + "\n")


class Outcome:
    def __init__(self, summary: str, rows=None, status: int = EXIT_OK, spine_of=None, gap_table=None,
                 extra_tables=None):
        self.summary, self.rows, self.status = summary, rows or [], status
        self.spine_of, self.gap_table = spine_of, gap_table
        self.extra_tables = extra_tables or {}


def _lattice(cfg: ExperimentConfig):
    return build_lattice(build_time_grid(cfg.horizon, cfg.steps))


def _mode_solve(cfg, lat):
    sol = solve_dp(cfg.problem, lat, cfg.generator)
    rK, rA, rS = sol.residuals
    return Outcome(f"mode=solve N={cfg.steps} Y0={sol.Y[0][0]:.10g} r_K={rK:g} r_A={rA:g} r_S={rS:g}",
                   solution_rows(sol, "solve", cfg.seed, 0.0, float("nan")), spine_of=sol)


def _mode_penalize(cfg, lat):
    kind = run_option(cfg, "kind", "penalize_both", str)
    schedule = run_option(cfg, "schedule", None, "schedule")
    tol = run_option(cfg, "tol", 1e-4)
    rep = run_penalization(cfg.problem, lat, cfg.generator, kind, schedule, tol, strict=False)
    rows = []
    for m, sol in enumerate(rep.solutions):
        gap = rep.gaps[m - 1] if m else float("nan")
        rows += solution_rows(sol, f"penalize:{kind}", cfg.seed, sol.n, gap)
    status = EXIT_OK
    text = (f"mode=penalize kind={kind} N={cfg.steps} n_final={rep.schedule[-1]:g} "
            f"last_gap={rep.gaps[-1]:.3g} converged={rep.converged} "
            f"monotonicity_violations={len(rep.violations)}")
    if rep.violations:
        w = rep.violations[0]
        text += f" first_violation=({w['claim']}, level {w['level']}, j {w['j']}, defect {w['defect']:.3g})"
        status = EXIT_VERDICT
    elif not rep.converged:
        status = EXIT_NO_CONVERGENCE
    gaps = [(n, g) for n, g in zip(rep.schedule[1:], rep.gaps)]
    return Outcome(text, rows, status, spine_of=rep.final, gap_table=gaps)


def _mode_agree(cfg, lat):
    schedule = run_option(cfg, "schedule", None, "schedule")
    tol = run_option(cfg, "tol", 1e-2)
    rep = three_scheme_agreement(cfg.problem, lat, cfg.generator, tol, schedule, strict=False)
    rows, table = [], []
    for m, n in enumerate(rep.schedule):
        sols = [rep.runs[k].solutions[m] for k in KINDS]
        spread = max(float(np.max(np.abs(a - b))) for x in sols for y in sols
                     for a, b in zip(x.Y.levels, y.Y.levels))
        table.append((n, spread))
        for kind, sol in zip(KINDS, sols):
            rows += solution_rows(sol, f"agree:{kind}", cfg.seed, n, spread)
    sandwich = sum(len(v) for v in rep.sandwich_violations.values())
    counts = {k: len(v) for k, v in rep.domination_violations.items()}
    enforced = not rep.dominations_ok(include_hard=False)
    text = (f"mode=agree N={cfg.steps} max_pairwise_limit_gap={rep.max_gap:.6g} tol={tol:g} "
            f"sandwich_violations={sandwich} "
            + " ".join(f"[{k}]={v}" for k, v in counts.items()))
    status = EXIT_VERDICT if (sandwich or enforced or not rep.limits_agree) else EXIT_OK
    return Outcome(text, rows, status, spine_of=rep.runs[KINDS[2]].final, gap_table=table)


def _mode_compare(cfg, lat):
    s1 = solve_dp(cfg.problem, lat, cfg.generator)
    s2 = solve_dp(cfg.problem2, lat, cfg.generator2)
    tol = run_option(cfg, "tol", 1e-9)
    v = comparison_harness(s1, s2, tol, seed=cfg.seed)
    rows = solution_rows(s1, "compare:1", cfg.seed, 0.0, v.y_defect)
    rows += solution_rows(s2, "compare:2", cfg.seed, 0.0, v.y_defect)
    text = (f"mode=compare y_ordered={v.y_ordered} y_defect={v.y_defect:.3g} "
            f"dK_ordered={v.dK_ordered} dA_ordered={v.dA_ordered} inputs={v.inputs}")
    return Outcome(text, rows, EXIT_OK if v.ordered else EXIT_VERDICT, spine_of=s1)


def _mode_study(cfg, lat):
    N_schedule = run_option(cfg, "N_schedule", np.array([cfg.steps]), "schedule")
    n_schedule = run_option(cfg, "schedule", 2.0 ** np.arange(4, 15), "schedule")
    kind = run_option(cfg, "kind", "penalize_both", str)
    table = convergence_study(cfg.problem, cfg.generator, N_schedule.astype(int), n_schedule,
                              cfg.horizon, kind)
    rows = [(f"study:{kind}", cfg.seed, N, n, 0, 0, float("nan"), float("nan"), float("nan"),
             float("nan"), float("nan"), float("nan"), float("nan"), gap)
            for N, n, gap in table.rows()]
    text = f"mode=study kind={kind} max_gap={float(np.max(table.gaps)):.6g} cells={table.gaps.size}"
    return Outcome(text, rows, gap_table=[(N, n, g) for N, n, g in table.rows()])


def _mode_check(cfg, lat):
    samples = run_option(cfg, "samples", 100_000, int)
    box = SamplingBox(**cfg.box) if cfg.box else SamplingBox(t=(0.0, cfg.horizon))
    rep = check_assumptions(cfg.generator, box, samples, cfg.seed)
    table = [(name, v.label, v.worst_defect) for name, v in rep.verdicts.items()]
    text = f"mode=check generator={cfg.generator.name} samples={samples} violated={rep.violated or 'none'}"
    return Outcome(text, [], extra_tables={"assumptions.dat": (("assumption", "verdict", "worst_defect"),
                                                                table)})


def _mode_mokobodzki(cfg, lat):
    X = run_option(cfg, "candidate", None, "expression")
    if X is None:
        raise ConfigError("mokobodzki mode needs run.candidate (an expression in t, b)", "run.candidate")
    verdict = mokobodzki_check(cfg.problem, lat, cfg.generator, X)
    sol = solve_dp(cfg.problem, lat, cfg.generator)
    nec = necessity_statistic(sol)
    text = (f"mode=mokobodzki passed={verdict.passed} statistic={verdict.statistic:.10g} "
            f"band_violations={verdict.band_violations} along_solution={nec:.10g}")
    if verdict.witness:
        text += f" witness={verdict.witness}"
    return Outcome(text, solution_rows(sol, "mokobodzki", cfg.seed, 0.0, float("nan")),
                   EXIT_OK if verdict.passed else EXIT_VERDICT, spine_of=sol)


def _mode_monotone(cfg, lat):
    direction = run_option(cfg, "direction", "up", str)
    schedule = run_option(cfg, "schedule", 2.0 ** np.arange(11), "schedule")
    tol = run_option(cfg, "tol", 1e-4)
    regularize = cfg.run.get("regularize", "true").strip().lower() in ("1", "true", "yes", "on")
    family = infconv_family(cfg.generator) if regularize else \
        GeneratorFamily(lambda n: cfg.generator, cfg.generator.name)
    rep = solve_monotone_sequence(cfg.problem, lat, family, direction, schedule, tol, strict=False)
    rows = []
    for m, sol in enumerate(rep.solutions):
        rows += solution_rows(sol, f"monotone:{direction}", cfg.seed, sol.n,
                              rep.gaps[m - 1] if m else float("nan"))
    rK, rA, rS = rep.limit.residuals
    text = (f"mode=monotone direction={direction} n_final={rep.schedule[-1]:g} converged={rep.converged} "
            f"violations={len(rep.violations)} limit_r_K={rK:g} limit_r_A={rA:g} limit_r_S={rS:g}")
    status = EXIT_VERDICT if rep.violations else (EXIT_OK if rep.converged else EXIT_NO_CONVERGENCE)
    return Outcome(text, rows, status, spine_of=rep.limit,
                   gap_table=list(zip(rep.schedule[1:], rep.gaps)))


HANDLERS = {"solve": _mode_solve, "penalize": _mode_penalize, "agree": _mode_agree,
            "compare": _mode_compare, "study": _mode_study, "check": _mode_check,
            "mokobodzki": _mode_mokobodzki, "monotone": _mode_monotone}


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> int:
    out_dir = out_dir or cfg.output_dir
    lat = _lattice(cfg)
    # feasibility is checked before any solve
    evaluate_data(cfg.problem, lat)
    if cfg.problem2 is not None:
        evaluate_data(cfg.problem2, lat)
    outcome = HANDLERS[cfg.mode](cfg, lat)
    os.makedirs(out_dir, exist_ok=True)
    if cfg.write_csv:
        emit_csv(outcome.rows, os.path.join(out_dir, "results.csv"))
    if cfg.write_plot:
        if outcome.spine_of is not None:
            _write_table(os.path.join(out_dir, "spine.dat"), ("t", "Y"), spine(outcome.spine_of))
        if outcome.gap_table:
            header = ("N", "n", "gap") if len(outcome.gap_table[0]) == 3 else ("n", "gap")
            _write_table(os.path.join(out_dir, "gaps.dat"), header, outcome.gap_table)
    for name, (header, table) in outcome.extra_tables.items():
        _write_table(os.path.join(out_dir, name), header, table)
    print(outcome.summary)
    if outcome.status == EXIT_VERDICT:
        print(f"verdict violated in mode {cfg.mode}; see summary", file=sys.stderr)
    elif outcome.status == EXIT_NO_CONVERGENCE:
        print(f"no convergence within the schedule in mode {cfg.mode}", file=sys.stderr)
    return outcome.status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drbsde", description="Reflected BSDE lattice laboratory")
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", required=True, help="INI experiment configuration")
    parser.add_argument("--out", help="output directory (overrides output.directory)")
    parser.add_argument("--seed", type=int, help="seed (overrides run.seed)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.mode, args.seed)
        return run_experiment(cfg, args.out)
    except ConfigError as exc:
        print(f"config error [{exc.key}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleProblem as exc:
        print(f"infeasible problem: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputsNotOrdered as exc:
        print(f"invalid comparison setup: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VerdictViolation as exc:
        print(f"verdict violated: {exc} witness={exc.witness}", file=sys.stderr)
        return EXIT_VERDICT
    except (InvalidArgument, StepTooCoarse, GeneratorGrowthViolation) as exc:
        print(f"invalid run: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DRBSDEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
