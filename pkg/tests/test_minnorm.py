import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from conewton.cone import ConeSpec, contains
from conewton.minnorm import (BRUTE_FORCE_LIMIT, Infeasible, LinearInclusion, brute_force_min_norm,
                              kkt_residual, random_instance, robinson_check, solve_min_norm,
                              t_inverse_norm_at)

EXAMPLES = {
    "interior": (np.eye(2), [-1.0, -1.0], ["nonpos", "nonpos"], [0.0, 0.0]),
    "one_active": (np.eye(2), [1.0, -1.0], ["nonpos", "nonpos"], [-1.0, 0.0]),
    "ineq2_step": ([[0.8, 1.4], [1.0, 1.0], [-1.0, 0.0]], [-3.35, 0.1, -0.4],
                   ["nonpos", "zero", "nonpos"], [-0.05, -0.05]),
}


def inclusion(A, g, tags):
    return LinearInclusion(np.asarray(A, dtype=float), np.asarray(g, dtype=float), ConeSpec(tags))


@pytest.mark.parametrize("name", EXAMPLES)
@pytest.mark.parametrize("solver", [solve_min_norm, brute_force_min_norm], ids=["qp", "brute"])
def test_examples(name, solver):
    A, g, tags, d = EXAMPLES[name]
    sol = solver(inclusion(A, g, tags))
    assert_allclose(sol.d, d, atol=1e-12)
    assert sol.norm == pytest.approx(np.linalg.norm(d), abs=1e-12)


def test_ineq2_step_active_set_and_norm():
    sol = solve_min_norm(inclusion(*EXAMPLES["ineq2_step"][:3]))
    assert sol.active_set == (1,)
    assert sol.norm == pytest.approx(0.0707107, abs=1e-7)
    assert sol.kkt_residual <= 1e-12


@pytest.mark.parametrize("solver", [solve_min_norm, brute_force_min_norm], ids=["qp", "brute"])
def test_infeasible_zero_row(solver):
    with pytest.raises(Infeasible) as exc:
        solver(inclusion([[0.0]], [1.0], ["zero"]))
    if solver is solve_min_norm:
        assert exc.value.violation > 1e-8


def test_multiplier_signs():
    # NONPOS rows written as (Ad+g)_i <= 0 carry nonnegative multipliers
    sol = solve_min_norm(inclusion(np.eye(2), [1.0, -1.0], ["nonpos", "nonpos"]))
    assert sol.multipliers[0] >= 0
    sol = solve_min_norm(inclusion(np.eye(2), [-1.0, 1.0], ["nonneg", "nonneg"]))
    assert sol.multipliers[0] <= 0
    assert_allclose(sol.d, [1.0, 0.0])


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        inclusion(np.eye(2), [1.0, 2.0, 3.0], ["zero", "zero", "zero"])
    with pytest.raises(ValueError):
        inclusion(np.eye(2), [1.0, 2.0], ["zero"])


def test_brute_force_size_limit():
    m = BRUTE_FORCE_LIMIT + 1
    with pytest.raises(ValueError):
        brute_force_min_norm(inclusion(np.ones((m, 1)), np.zeros(m), ["nonpos"] * m))


def test_t_inverse_examples():
    assert t_inverse_norm_at([[3.0]], [-0.25], ConeSpec(["zero"])) == pytest.approx(1 / 12)
    assert t_inverse_norm_at([[1.0]], [1.0], ConeSpec(["nonpos"])) == 0.0
    assert t_inverse_norm_at([[1.0]], [-1.0], ConeSpec(["nonpos"])) == pytest.approx(1.0)
    assert t_inverse_norm_at([[0.0]], [1.0], ConeSpec(["zero"])) == math.inf


def test_robinson_truth_table():
    for m in (1, 3):
        for tags in (["zero"] * m, ["nonpos"] * m, ["free"] * m):
            assert robinson_check(np.eye(m), ConeSpec(tags))
    assert not robinson_check([[0.0]], ConeSpec(["zero"]))
    assert not robinson_check([[1.0, 0.0], [0.0, 0.0]], ConeSpec(["zero", "nonpos"]))


def test_random_instances_against_brute_force():
    rng = np.random.default_rng(1)
    n_feasible = n_infeasible = 0
    for _ in range(300):
        inc = random_instance(rng)
        try:
            ref = brute_force_min_norm(inc)
        except Infeasible:
            with pytest.raises(Infeasible):
                solve_min_norm(inc)
            n_infeasible += 1
            continue
        sol = solve_min_norm(inc)
        n_feasible += 1
        assert abs(sol.norm - ref.norm) <= 1e-7
        assert np.max(np.abs(sol.d - ref.d)) <= 1e-6
        assert sol.kkt_residual <= 1e-8
        y = inc.A @ sol.d + inc.g
        assert contains(inc.cone, y, 1e-9 * max(1.0, np.max(np.abs(y))))
    assert n_feasible > 100 and n_infeasible > 0


def test_solution_is_optimal_against_perturbations():
    # no feasible point near d is shorter
    rng = np.random.default_rng(9)
    for _ in range(50):
        inc = random_instance(rng)
        try:
            sol = solve_min_norm(inc)
        except Infeasible:
            continue
        for _ in range(50):
            p = sol.d + 1e-3 * rng.standard_normal(sol.d.shape)
            if contains(inc.cone, inc.A @ p + inc.g):
                assert np.linalg.norm(p) >= sol.norm - 1e-12


def test_kkt_residual_detects_wrong_point():
    inc = inclusion(np.eye(2), [1.0, -1.0], ["nonpos", "nonpos"])
    good = solve_min_norm(inc)
    assert kkt_residual(inc, np.array([-2.0, 0.0]), good.multipliers) > 1e-3


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 100.0))
@settings(max_examples=100, deadline=None)
def test_inner_norm_positive_homogeneity(seed, s):
    rng = np.random.default_rng(seed)
    inc = random_instance(rng)
    w = rng.standard_normal(inc.cone.m)
    base = t_inverse_norm_at(inc.A, w, inc.cone)
    scaled = t_inverse_norm_at(inc.A, s * w, inc.cone)
    if math.isinf(base):
        assert math.isinf(scaled)
    else:
        assert scaled == pytest.approx(s * base, rel=1e-9, abs=1e-9)
