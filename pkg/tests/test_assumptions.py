import numpy as np
import pytest

from drbsde import (GeneratorSpec, Growth, ProblemData, SamplingBox, builtin, check_assumptions,
                    mokobodzki_check, necessity_statistic, solve_dp)
from drbsde.assumptions import DEFECT_TOL, integral_statistic
from drbsde.instances import clamp_problem, random_instance
from drbsde.lattice import build_lattice, build_time_grid


def lattice(N, T=1.0):
    return build_lattice(build_time_grid(T, N))


def test_zero_generator_passes_everything():
    rep = check_assumptions(builtin("zero"), samples=5000, seed=1)
    assert rep.violated == []
    assert all(v.label == "no_violation_found" for v in rep.verdicts.values())
    assert {"H1", "H1s", "H2(ii)", "H2s(ii)", "H2'(ii)", "H3s", "AA", "A2"} <= set(rep.verdicts)


def test_quadratic_fails_linear_growth_with_witness():
    g = GeneratorSpec(lambda t, b, y, z: np.asarray(y, float) ** 2, name="square",
                      y_growth=Growth(0.0, 1.0))
    rep = check_assumptions(g, SamplingBox(y=(-10.0, 10.0)), samples=20_000, seed=5)
    v = rep["H3s"]
    assert v.violated and v.label == "violated"
    assert abs(v.witness["y1"]) > 1.0
    # the witness reproduces its defect y^2 - |y|
    y = v.witness["y1"]
    assert rep.reevaluate("H3s") == pytest.approx(y * y - abs(y))
    assert rep.reevaluate("H3s") > DEFECT_TOL


def test_osgood_example_satisfies_its_modulus():
    rep = check_assumptions(builtin("osgood_example"), samples=100_000, seed=0)
    assert not rep["H1"].violated
    assert not rep["H2'(ii)"].violated


def test_osgood_example_fails_osgood_bound_for_large_z():
    # the z sin z term grows in y through e^{-y} once sin |z| < 0
    rep = check_assumptions(builtin("osgood_example"), SamplingBox(z=(-6.0, 6.0)), samples=50_000)
    assert rep["H1"].violated
    assert abs(rep["H1"].witness["z1"]) > np.pi


def test_discontinuous_example_left_continuity():
    rep = check_assumptions(builtin("discontinuous_example"), samples=20_000, seed=2)
    assert not rep["A1a"].violated
    assert not rep["A2"].violated
    # the jump at y = 0 is probed through the declared breakpoint
    assert "continuity in y" not in rep.verdicts


def test_step_with_wrong_side_is_caught():
    right = GeneratorSpec(lambda t, b, y, z: np.where(np.asarray(y) >= 0, 1.0, 0.0) + 0 * np.asarray(z),
                          name="right step", regularity="left_limit_lsc", breakpoints_y=(0.0,))
    rep = check_assumptions(right, samples=1000, seed=0)
    assert rep["A1a"].violated


def test_report_independent_of_thread_count(monkeypatch):
    g = builtin("osgood_discontinuous_sum")
    monkeypatch.setenv("DRBSDE_THREADS", "1")
    one = check_assumptions(g, samples=45_000, seed=9)
    monkeypatch.setenv("DRBSDE_THREADS", "3")
    three = check_assumptions(g, samples=45_000, seed=9)
    for name in one.verdicts:
        assert one[name].worst_defect == three[name].worst_defect


def test_mokobodzki_band_pass_and_fail():
    lat = lattice(10)
    ok = mokobodzki_check(ProblemData(0.0, lower=-1.0, upper=1.0), lat, builtin("constant(3)"),
                          lambda t, b: 0.0)
    assert ok.passed and ok.statistic == 9.0
    bad = mokobodzki_check(ProblemData(0.5, lower=0.5), lat, builtin("zero"), lambda t, b: 0.0)
    assert not bad.passed and bad.band_violations == sum(i + 1 for i in range(11))
    assert bad.witness["level"] == 0


def test_necessity_statistic_exact_for_constant_generator():
    problem, g = clamp_problem()
    for N in (7, 50, 200):
        sol = solve_dp(problem, lattice(N), g)
        assert necessity_statistic(sol) == (2.0 * 1.0) ** 2
    # horizon and exponent enter as (|c| T)^p
    sol = solve_dp(ProblemData(0.0, upper=1.0, exponent=3.0), lattice(30, 2.0), builtin("constant(-1.5)"))
    assert necessity_statistic(sol) == (1.5 * 2.0) ** 3


@pytest.mark.parametrize("seed", range(6))
def test_necessity_statistic_finite(seed):
    problem, g, _ = random_instance(seed)
    assert np.isfinite(necessity_statistic(solve_dp(problem, lattice(30), g)))


def test_integral_statistic_samples_long_lattices():
    from drbsde.lattice import LatticeProcess
    lat = lattice(40)
    proc = LatticeProcess(tuple(lat.values(i) for i in range(40)), "increment")
    a = integral_statistic(proc, lat, 2.0, seed=1)
    b = integral_statistic(proc, lat, 2.0, seed=1)
    assert a == b and 0 < a < 10
