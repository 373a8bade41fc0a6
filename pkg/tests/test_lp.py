import random
from fractions import Fraction

import numpy as np
import pytest
from scipy.optimize import linprog

from artifact.games import Game, HintSpec, build_states, eval_strategy_exact, greedy_strategy, honest_strategy, opt_value
from artifact.lp import (
    InfeasibleSolution,
    build_lp,
    check_dual_feasible,
    check_primal_feasible,
    dual_lhs,
    export_lp,
    lp_for,
    lp_text,
    objective,
    parse_lp,
    random_feasible_dual,
    random_feasible_primal,
    random_strategy,
    same_instance,
    simplex_max,
    solution_to_strategy,
    solve_primal,
    strategy_to_solution,
    trivial_dual,
)

F = Fraction


def test_single_round_instance():
    inst = lp_for(Game(1))
    assert inst.size == 2
    assert inst.b == [F(1, 2), F(1, 2)]
    assert inst.rows == [{}, {}]
    res = solve_primal(inst)
    assert res.primal.objective == res.dual.objective == F(1, 4)


def test_zero_gain_game_has_zero_optimum():
    inst = lp_for(Game(2, F(1, 5), HintSpec.constant()))
    assert all(c == 0 for c in inst.c)
    assert solve_primal(inst).primal.objective == 0


@pytest.mark.parametrize("game", [Game(2), Game(3, F(1, 5)), Game(3, F(0), HintSpec.hypergeometric(2))], ids=str)
def test_simplex_matches_the_dynamic_programme(game):
    table = build_states(game)
    inst = build_lp(table)
    res = solve_primal(inst)
    assert res.primal.objective == opt_value(table).value
    assert check_primal_feasible(inst, res.primal.values) is None
    dual = check_dual_feasible(inst, res.dual, res.primal.objective)
    assert dual.feasible and dual.objective == res.primal.objective


def test_strategies_map_to_feasible_points():
    table = build_states(Game(3, F(-1, 3)))
    inst = build_lp(table)
    for strat in (honest_strategy(table.game), greedy_strategy(table), random_strategy(table, random.Random(4))):
        sol = strategy_to_solution(inst, strat)
        assert check_primal_feasible(inst, sol.values) is None
        assert sol.objective == eval_strategy_exact(table, strat).bias
        back = solution_to_strategy(inst, sol)
        assert strategy_to_solution(inst, back).values == sol.values


def test_boundary_points():
    inst = lp_for(Game(2, F(1, 5)))
    zero = [F(0)] * inst.size
    assert check_primal_feasible(inst, zero) is None and objective(inst, zero) == 0
    assert check_primal_feasible(inst, list(inst.b)) is not None
    over = list(zero)
    over[0] = inst.b[0] + F(1, 10**9)
    with pytest.raises(InfeasibleSolution) as err:
        solution_to_strategy(inst, over)
    assert err.value.index == 0


def test_trivial_dual_is_feasible_with_final_states():
    inst = build_lp(build_states(Game(3, F(1, 5))), include_final=True)
    for big in (F(1), F(7, 2)):
        assert check_dual_feasible(inst, trivial_dual(inst, big)).feasible
    with pytest.raises(ValueError):
        trivial_dual(inst, F(1, 2))


def test_infeasible_dual_is_detected():
    inst = lp_for(Game(2))
    check = check_dual_feasible(inst, [F(0)] * inst.size)
    assert not check.feasible and inst.c[check.violated] > 0
    negative = [F(1)] * inst.size
    negative[1] = F(-1)
    assert check_dual_feasible(inst, negative).violated == 1


def test_weak_duality_on_random_points():
    inst = lp_for(Game(3, F(1, 5)))
    best = solve_primal(inst).primal.objective
    rng = random.Random(11)
    for _ in range(10):
        y = random_feasible_dual(inst, rng)
        assert all(l >= c for l, c in zip(dual_lhs(inst, y), inst.c))
        assert check_dual_feasible(inst, y, best).objective >= best
        a = random_feasible_primal(inst, rng)
        assert check_primal_feasible(inst, a) is None and objective(inst, a) <= best


def _linprog_max(A, b, c):
    out = linprog(-np.array(c, dtype=float), A_ub=np.array(A, dtype=float), b_ub=np.array(b, dtype=float),
                  bounds=[(0, None)] * len(c), method="highs")
    assert out.status == 0
    return -out.fun


def test_textbook_lp():
    A = [[F(1), F(0)], [F(0), F(2)], [F(3), F(2)]]
    b = [F(4), F(12), F(18)]
    c = [F(3), F(5)]
    x, y, value, _, _ = simplex_max(A, b, c)
    assert x == [2, 6] and value == 36
    assert sum(yi * bi for yi, bi in zip(y, b)) == 36
    assert float(value) == pytest.approx(_linprog_max(A, b, c))


def test_cycling_prone_lp_terminates():
    # degenerate at the origin; the largest-coefficient rule cycles here, Bland's rule does not
    A = [
        [F(1, 4), F(-60), F(-1, 25), F(9)],
        [F(1, 2), F(-90), F(-1, 50), F(3)],
        [F(0), F(0), F(1), F(0)],
    ]
    b = [F(0), F(0), F(1)]
    c = [F(3, 4), F(-150), F(1, 50), F(-6)]
    x, y, value, _, pivots = simplex_max(A, b, c)
    assert value == F(1, 20) and x == [F(1, 25), 0, 1, 0]
    assert pivots < 20
    assert float(value) == pytest.approx(_linprog_max(A, b, c))


def test_game_lp_against_linprog():
    inst = lp_for(Game(3, F(1, 5), HintSpec.vector(2)))
    n = inst.size
    A = [[F(0)] * n for _ in range(n)]
    for v, row in enumerate(inst.rows):
        A[v][v] = F(1)
        for u, p in row.items():
            A[v][u] = p
    assert float(solve_primal(inst).primal.objective) == pytest.approx(_linprog_max(A, inst.b, inst.c), abs=1e-9)


def test_lp_text_round_trip(tmp_path):
    inst = lp_for(Game(2, F(1, 3), HintSpec.hypergeometric(-2)))
    text = lp_text(inst)
    assert text.splitlines()[2] == "Maximize" and text.rstrip().endswith("End")
    assert same_instance(inst, parse_lp(text))
    path = export_lp(inst, tmp_path / "game.lp")
    assert same_instance(inst, parse_lp(path.read_text()))
    tampered = parse_lp(text)
    tampered["b"][0] += 1
    assert not same_instance(inst, tampered)


def test_float_games_are_rejected():
    with pytest.raises(ValueError):
        lp_for(Game(2, 0.2))
    with pytest.raises(ValueError):
        solve_primal(lp_for(Game(1)), mode="float")
