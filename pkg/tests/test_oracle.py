import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drbsde import (Forcing, GeneratorSpec, InvalidArgument, ProblemData, StepTooCoarse, builtin,
                    implicit_node_solve, solve_dp)
from drbsde.errors import GeneratorGrowthViolation
from drbsde.generators import negated
from drbsde.instances import clamp_problem, lower_clamp_problem, random_instance
from drbsde.lattice import build_lattice, build_time_grid, evaluate_data, sup_gap
from drbsde.oracle import solve_implicit


def lattice(N, T=1.0):
    return build_lattice(build_time_grid(T, N))


# -- implicit node step -------------------------------------------------------

def test_identity_step():
    assert implicit_node_solve(3.0, 0.0, 0.0, 0.0, builtin("zero"), 0.1, 0.0) == 3.0


def test_linear_decay_step():
    y = implicit_node_solve(1.0, 0.0, 0.0, 0.0, builtin("linear(-1, 0)"), 0.1, 0.0)
    assert y == pytest.approx(1 / 1.1, abs=1e-12)


def test_constant_step_with_forcing():
    assert implicit_node_solve(0.0, 0.0, 0.0, 0.0, builtin("constant(2)"), 0.25, 0.5) == pytest.approx(1.0)


def test_step_too_coarse():
    with pytest.raises(StepTooCoarse):
        implicit_node_solve(0.0, 0.0, 0.0, 0.0, builtin("linear(4, 0)"), 0.25, 0.0)


def test_bracket_failure_reports_growth_violation():
    # y - dt * g(y) has no sign change: g grows faster than any bracket can chase
    g = GeneratorSpec(lambda t, b, y, z: np.exp(np.abs(y)) * 1e300, name="explosive")
    with pytest.raises(GeneratorGrowthViolation), np.errstate(all="ignore"):
        implicit_node_solve(0.0, 0.0, 0.0, 0.0, g, 0.1, 0.0)


@settings(max_examples=60, deadline=None)
@given(cont=st.floats(-5, 5), a=st.floats(-3, 0.9), c=st.floats(-3, 3), dv=st.floats(-1, 1))
def test_implicit_step_solves_affine_equation(cont, a, c, dv):
    dt = 0.5
    g = GeneratorSpec(lambda t, b, y, z: a * np.asarray(y) + c, name="affine", a_norm=max(a, 0.0))
    y = implicit_node_solve(cont, 0.0, 0.0, 0.0, g, dt, dv)
    assert y == pytest.approx((cont + dt * c + dv) / (1 - dt * a), abs=1e-10)


def test_minimal_and_maximal_roots():
    # with dt = 0.5 and g = 3y - y^3 the step equation reads y (y^2 - 1) / 2 = 0
    G = lambda y: 3 * y - y ** 3  # noqa: E731
    cont = np.array([0.0, 0.0])
    lo = solve_implicit(G, cont, 0.0, 0.5, 10.0, root="minimal")
    hi = solve_implicit(G, cont, 0.0, 0.5, 10.0, root="maximal")
    np.testing.assert_allclose(lo, -1.0, atol=1e-10)
    np.testing.assert_allclose(hi, 1.0, atol=1e-10)


def test_unknown_root_policy():
    with pytest.raises(InvalidArgument):
        solve_implicit(lambda y: y, np.zeros(1), 0.0, 0.1, 0.0, root="middle")


# -- backward induction -------------------------------------------------------

def test_interior_problem_is_zero():
    sol = solve_dp(ProblemData(0.0, lower=-1.0, upper=1.0), lattice(4), builtin("zero"))
    for proc in (sol.Y, sol.Z, sol.K_inc, sol.A_inc):
        assert all(np.all(level == 0.0) for level in proc.levels)


def test_martingale_problem():
    lat = lattice(6)
    sol = solve_dp(ProblemData(lambda b: np.asarray(b, float)), lat, builtin("zero"))
    for i in range(lat.steps + 1):
        np.testing.assert_allclose(sol.Y[i], lat.values(i), atol=1e-13)
    np.testing.assert_allclose(sol.Z.flat(), 1.0, atol=1e-12)
    assert sol.K_inc.sup() == 0.0 and sol.A_inc.sup() == 0.0


def _clamp_error(problem, g, N, exact):
    lat = lattice(N)
    sol = solve_dp(problem, lat, g)
    err = max(np.max(np.abs(sol.Y[i] - exact(lat.time(i)))) for i in range(N + 1))
    return sol, err


def test_upper_clamp_matches_projected_ode():
    problem, g = clamp_problem()
    sol, err = _clamp_error(problem, g, 200, lambda t: min(1.0, 2 * (1 - t)))
    assert err <= 2e-2
    assert sol.K_inc.sup() == 0.0


def test_lower_clamp_matches_projected_ode():
    problem, g = lower_clamp_problem()
    sol, err = _clamp_error(problem, g, 200, lambda t: max(-1.0, -2 * (1 - t)))
    assert err <= 2e-2
    assert sol.A_inc.sup() == 0.0
    lat = sol.lattice
    active = [lat.time(i) for i in range(lat.steps) if sol.K_inc[i].max() > 0]
    assert active and min(active) == 0.0 and max(active) <= 0.5


def test_equal_barriers_pin_the_solution():
    lat = lattice(10)
    sol = solve_dp(ProblemData(0.3, lower=0.3, upper=0.3), lat, builtin("constant(1)"))
    assert all(np.all(level == 0.3) for level in sol.Y.levels)
    # positive drive overshoots upward, so only the upper reflection acts
    assert sol.K_inc.sup() == 0.0 and sol.A_inc.min() > 0
    assert sol.residuals == (0.0, 0.0, 0.0)


def test_discontinuous_generator_rejected():
    with pytest.raises(InvalidArgument, match="regularize"):
        solve_dp(ProblemData(0.0), lattice(3), builtin("step"))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_oracle_skorokhod_exact(seed):
    problem, g, _ = random_instance(seed)
    sol = solve_dp(problem, lattice(20), g)
    d = sol.data
    assert sol.residuals == (0.0, 0.0, 0.0)
    for i in range(d.lattice.steps + 1):
        assert np.all(d.lower[i] <= sol.Y[i]) and np.all(sol.Y[i] <= d.upper[i])
    for i in range(d.lattice.steps):
        assert np.all(sol.K_inc[i] >= 0) and np.all(sol.A_inc[i] >= 0)
        # complementarity holds exactly at every node, not just on average
        assert np.all(sol.K_inc[i] * (sol.Y[i] - d.lower[i]) == 0)
        assert np.all(sol.A_inc[i] * (d.upper[i] - sol.Y[i]) == 0)
        assert np.all(np.minimum(sol.K_inc[i], sol.A_inc[i]) == 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 0.5))
def test_oracle_monotone_in_terminal(seed, shift):
    problem, g, p = random_instance(seed)
    lat = lattice(15)
    d = evaluate_data(problem, lat)
    hi_xi = lambda b: np.minimum(problem.terminal(b) + shift, problem.upper(1.0, b))  # noqa: E731
    y1 = solve_dp(problem, lat, g).Y
    y2 = solve_dp(problem.replace(terminal=hi_xi), lat, g).Y
    assert min(np.min(b - a) for a, b in zip(y1.levels, y2.levels)) >= -1e-12
    assert d.lattice is lat


def test_upper_removal_matches_one_barrier_solve():
    problem, g, _ = random_instance(3)
    lat = lattice(20)
    one = solve_dp(problem.replace(upper=None), lat, g)
    stripped = solve_dp(evaluate_data(problem, lat).without_upper(), None, g)
    assert sup_gap(one.Y, stripped.Y) == 0.0
    assert sup_gap(one.K_inc, stripped.K_inc) == 0.0


@pytest.mark.parametrize("seed", [0, 1, 2, 5])
def test_mirror_symmetry(seed):
    problem, g, _ = random_instance(seed)
    lat = lattice(20)
    low_only = problem.replace(upper=None)
    mirrored = ProblemData(lambda b: -problem.terminal(b), problem.forcing.negated(),
                           lower=None, upper=lambda t, b: -problem.lower(t, b))
    s1 = solve_dp(low_only, lat, g)
    s2 = solve_dp(mirrored, lat, negated(g))
    for a, b in zip(s1.Y.levels, s2.Y.levels):
        np.testing.assert_allclose(a, -b, atol=1e-10)
    for a, b in zip(s1.Z.levels, s2.Z.levels):
        np.testing.assert_allclose(a, -b, atol=1e-8)
    for a, b in zip(s1.K_inc.levels, s2.A_inc.levels):
        np.testing.assert_allclose(a, b, atol=1e-10)


def test_norms_and_path_statistics():
    problem, g = clamp_problem()
    sol = solve_dp(problem, lattice(12), g)
    stats = sol.path_statistics()
    assert stats["sup_Y"] == pytest.approx(1.0)
    assert stats["K_T"] == 0.0 and stats["A_T"] > 0
    # g = 2 on [0, 1]
    assert stats["g_integral"] == pytest.approx(4.0)
    assert set(sol.norms()) >= {"sup_Y"}


def test_forcing_shifts_solution():
    lat = lattice(8)
    sol = solve_dp(ProblemData(0.0, forcing=Forcing.linear(1.0)), lat, builtin("zero"))
    for i in range(lat.steps + 1):
        np.testing.assert_allclose(sol.Y[i], 1.0 - lat.time(i), atol=1e-12)
