import csv
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from drbsde import ConfigError
from drbsde.cli import CSV_COLUMNS, main
from drbsde.config import load_config, parse_expression, parse_schedule

CONFIGS = Path(__file__).parent / "configs"


def write(tmp_path, text, name="c.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run(mode, config, out, *extra):
    return main([mode, "--config", str(config), "--out", str(out), *extra])


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- expressions --------------------------------------------------------------

@pytest.mark.parametrize("text, t, b, expected", [
    ("1", 0.0, 0.0, 1.0),
    ("-b + 2 * t", 0.5, 3.0, -2.0),
    ("min(1, 0.5 + b * b)", 0.0, 0.5, 0.75),
    ("max(-1, -2 * (1 - t))", 0.25, 0.0, -1.0),
    ("abs(b) - exp(0) + cosh(0)", 0.0, -2.0, 2.0),
    ("+t", 0.3, 0.0, 0.3),
])
def test_expression_values(text, t, b, expected):
    fn = parse_expression(text)
    assert float(fn(t, np.array([b]))[0]) == pytest.approx(expected)


def test_expression_broadcasts_constants():
    fn = parse_expression("2")
    assert fn(0.0, np.zeros(4)).shape == (4,)


def test_none_and_infinite_barriers():
    assert parse_expression("none") is None
    assert np.all(parse_expression("-inf")(0.0, np.zeros(3)) == -np.inf)


@pytest.mark.parametrize("text", ["__import__('os')", "b ** 2", "b / 2", "sin(b)", "x + 1",
                                  "min(1)", "t.real", "[1]", "1 if b else 2", "'a'", "True"])
def test_expression_grammar_rejects(text):
    with pytest.raises(ConfigError):
        parse_expression(text, "problem.upper")


def test_schedules():
    np.testing.assert_array_equal(parse_schedule("pow2:0:3", "k"), [1, 2, 4, 8])
    np.testing.assert_array_equal(parse_schedule("1, 3,9", "k"), [1, 3, 9])
    with pytest.raises(ConfigError):
        parse_schedule("pow2:a", "run.schedule")


# -- config loading -----------------------------------------------------------

def test_load_golden_config():
    cfg = load_config(str(CONFIGS / "interior_solve.ini"))
    assert cfg.mode == "solve" and cfg.steps == 20 and cfg.seed == 7
    assert cfg.generator.name == "zero"


def test_seed_override_and_mode_conflict(tmp_path):
    cfg = load_config(str(CONFIGS / "interior_solve.ini"), "solve", seed=11)
    assert cfg.seed == 11
    with pytest.raises(ConfigError) as info:
        load_config(str(CONFIGS / "interior_solve.ini"), "agree")
    assert info.value.key == "run.mode"


@pytest.mark.parametrize("body, key", [
    ("[problem]\nhorizon = 1\nsteps = ten\n[generator]\nname = zero\n", "problem.steps"),
    ("[problem]\nsteps = 4\n[generator]\nname = zero\n", "problem.horizon"),
    ("[problem]\nhorizon = 1\nsteps = 4\n[generator]\nname = cubic\n", "generator.name"),
    ("[problem]\nhorizon = 1\nsteps = 4\n[generator]\nname = zero\n[run]\nmode = fly\n", "run.mode"),
    ("[problem]\nhorizon = 1\nsteps = 4\nupper = b ** 2\n[generator]\nname = zero\n", "problem.upper"),
    ("[problem]\nhorizon = 1\nsteps = 4\nexponent = 1\n[generator]\nname = zero\n", "problem.exponent"),
    ("[problem]\nhorizon = 1\nsteps = 4\n", "generator"),
    ("[problem]\nhorizon = 1\nsteps = 4\n[generator]\ndecomposition = zero\n", "generator.decomposition"),
    ("[problem]\nhorizon = 1\nsteps = 4\nforcing_times = 0, 1\nforcing_values = 1\n"
     "[generator]\nname = zero\n", "problem.forcing_values"),
])
def test_config_errors_name_the_key(tmp_path, body, key):
    with pytest.raises(ConfigError) as info:
        load_config(write(tmp_path, body), "solve")
    assert info.value.key == key


def test_decomposition_builds_sum():
    cfg = load_config(str(CONFIGS / "infconv_monotone.ini"))
    assert cfg.generator.decomposition is not None
    assert cfg.generator_parts == ("osgood_example", "discontinuous_example")


# -- exit codes on the golden corpus -------------------------------------------

GOLDEN = [
    ("solve", "interior_solve.ini", 0),
    ("agree", "clamp_agree.ini", 0),
    ("penalize", "clamp_penalize.ini", 0),
    ("compare", "compare_shift.ini", 0),
    ("study", "clamp_study.ini", 0),
    ("check", "osgood_check.ini", 0),
    ("mokobodzki", "constant_mokobodzki.ini", 0),
    ("monotone", "infconv_monotone.ini", 0),
    ("mokobodzki", "mokobodzki_outside.ini", 2),
    ("solve", "crossed_barriers.ini", 3),
    ("compare", "compare_reversed.ini", 3),
    ("solve", "bad_key.ini", 3),
]


@pytest.mark.parametrize("mode, name, status", GOLDEN)
def test_golden_exit_status(tmp_path, capsys, mode, name, status):
    assert run(mode, CONFIGS / name, tmp_path) == status
    out, err = capsys.readouterr()
    if status == 0:
        assert out.startswith(f"mode={mode}")
    else:
        assert err


def test_crossed_barriers_message(tmp_path, capsys):
    run("solve", CONFIGS / "crossed_barriers.ini", tmp_path)
    assert "barriers" in capsys.readouterr().err


def test_unconverged_penalty_exits_4(tmp_path):
    body = (CONFIGS / "clamp_penalize.ini").read_text().replace("tol = 0.001", "tol = 1e-9")
    assert run("penalize", write(tmp_path, body), tmp_path / "o") == 4


def test_agree_summary_reports_gap(tmp_path, capsys):
    run("agree", CONFIGS / "clamp_agree.ini", tmp_path)
    summary = capsys.readouterr().out
    gap = float(summary.split("max_pairwise_limit_gap=")[1].split()[0])
    assert gap <= 1e-2


def test_unwritable_output_exits_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run("solve", CONFIGS / "interior_solve.ini", blocker / "sub") == 3


def test_missing_config_exits_3(tmp_path):
    assert run("solve", tmp_path / "nope.ini", tmp_path) == 3


# -- results.csv ----------------------------------------------------------------

def test_header_and_interior_spine(tmp_path):
    run("solve", CONFIGS / "interior_solve.ini", tmp_path)
    text = (tmp_path / "results.csv").read_text()
    assert text.splitlines()[0] == "mode,seed,N,n,t_index,node_j,Y,Z,dK,dA,r_K,r_A,r_S,gap"
    assert tuple(text.splitlines()[0].split(",")) == CSV_COLUMNS
    rows = read_rows(tmp_path / "results.csv")[1:]
    assert all(float(r[6]) == 0.0 for r in rows)
    spine = np.loadtxt(tmp_path / "spine.dat")
    assert spine.shape == (21, 2) and np.all(spine[:, 1] == 0)


def test_row_count_single_step(tmp_path):
    body = (CONFIGS / "interior_solve.ini").read_text().replace("steps = 20", "steps = 1")
    run("solve", write(tmp_path, body), tmp_path)
    rows = read_rows(tmp_path / "results.csv")[1:]
    # one root node and two terminal nodes
    assert len(rows) == 3
    assert [r[4] for r in rows] == ["0", "1", "1"]
    assert rows[1][7] == "nan" and rows[1][8] == "nan"


def test_rows_double_with_two_n_values(tmp_path):
    body = (CONFIGS / "clamp_penalize.ini").read_text()
    one = body.replace("schedule = pow2:0:14", "schedule = 1, 2").replace("tol = 0.001", "tol = 1e-12")
    run("penalize", write(tmp_path, one), tmp_path / "a")
    rows = read_rows(tmp_path / "a" / "results.csv")[1:]
    per_n = 51 * 52 // 2
    assert len(rows) == 2 * per_n
    three = one.replace("schedule = 1, 2", "schedule = 1, 2, 4")
    run("penalize", write(tmp_path, three, "d.ini"), tmp_path / "b")
    assert len(read_rows(tmp_path / "b" / "results.csv")) - 1 == 3 * per_n


def test_row_order_and_precision(tmp_path):
    run("agree", CONFIGS / "clamp_agree.ini", tmp_path)
    rows = read_rows(tmp_path / "results.csv")[1:]
    keys = [(float(r[3]), int(r[4]), int(r[5])) for r in rows]
    assert keys == sorted(keys)
    y = next(r[6] for r in rows if r[6] not in ("0", "1", "nan"))
    assert float(y) == float("%.17g" % float(y))
    assert {r[0] for r in rows} == {f"agree:{k}" for k in
                                    ("penalize_lower_reflect_upper", "penalize_upper_reflect_lower",
                                     "penalize_both")}


@pytest.mark.parametrize("mode, name", [m[:2] for m in GOLDEN if m[2] == 0])
def test_byte_identical_reruns(tmp_path, mode, name):
    run(mode, CONFIGS / name, tmp_path / "a")
    run(mode, CONFIGS / name, tmp_path / "b")
    for f in os.listdir(tmp_path / "a"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_thread_count_does_not_change_output(tmp_path, monkeypatch):
    monkeypatch.setenv("DRBSDE_THREADS", "1")
    run("check", CONFIGS / "osgood_check.ini", tmp_path / "a")
    monkeypatch.setenv("DRBSDE_THREADS", "4")
    run("check", CONFIGS / "osgood_check.ini", tmp_path / "b")
    assert (tmp_path / "a" / "assumptions.dat").read_bytes() == \
        (tmp_path / "b" / "assumptions.dat").read_bytes()


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "drbsde.cli", "solve", "--config",
                           str(CONFIGS / "crossed_barriers.ini"), "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 3 and "barriers" in proc.stderr
