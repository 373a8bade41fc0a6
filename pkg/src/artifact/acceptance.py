"""Reusable acceptance checks, one function per criterion.

Each check returns a :class:`CriterionResult`; :func:`run_all` runs them in
order.  The ``scale`` arguments exist so the command-line ``verify --quick``
can run a reduced version; the defaults are the full acceptance sizes.
"""

from __future__ import annotations

import json
import math
import random
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import brute
from .adversary import SingleShotAdversary, estimate_bias, game_derived_attacker, vanilla_protocol
from .engine import INNER, ProtocolConfig, run_outer
from .games import Game, HintSpec, build_states, eval_strategy_exact, greedy_strategy, opt_value
from .leakage import (
    all_information_leakage,
    binomial_process,
    custom_process,
    generic_diff_bound_check,
    hypergeometric_leakage,
    hypergeometric_process,
    joint,
    ratio,
    table_leakage,
    vector_leakage,
    weight_sufficiency,
)
from .lp import (
    build_lp,
    check_dual_feasible,
    check_primal_feasible,
    objective,
    random_feasible_dual,
    random_feasible_primal,
    random_strategy,
    solution_to_strategy,
    solve_primal,
    strategy_to_solution,
)
from .numerics import binom_tail, sbias
from .oracles import sample_recoveries

GOLDEN_DIR = Path(__file__).with_name("golden")


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] criterion {self.number:2d} {self.title}: {self.detail} ({self.seconds:.1f}s)"


def _timed(number: int, title: str, fn, *args, **kw) -> CriterionResult:
    start = time.perf_counter()
    passed, detail = fn(*args, **kw)
    return CriterionResult(number, title, bool(passed), detail, time.perf_counter() - start)


def load_golden(name: str) -> dict:
    return json.loads((GOLDEN_DIR / name).read_text())


# ---------------------------------------------------------------------------
# Shared game set
# ---------------------------------------------------------------------------

SMALL_STATE_LIMIT = 200


def small_games(limit: int = SMALL_STATE_LIMIT) -> list[Game]:
    """All-information games with m ≤ 3 and hypergeometric-hint games with m ≤ 5, at most ``limit`` states."""
    candidates = []
    for m in (1, 2, 3):
        for eps in (Fraction(0), Fraction(1, 5), Fraction(-1, 3)):
            candidates.append(Game(m, eps, HintSpec.all_info()))
    for m in (1, 2, 3, 4, 5):
        for p in (0, 2, -2):
            for eps in (Fraction(0), Fraction(1, 5)):
                candidates.append(Game(m, eps, HintSpec.hypergeometric(p)))
    return [g for g in candidates if len(build_states(g)) <= limit]


# ---------------------------------------------------------------------------
# 1. Honest correctness
# ---------------------------------------------------------------------------


def check_honest(n: int = 100_000, m: int = 13, t: int = 3, budget: float = 120.0, seed: int = 2024, jobs: int = 1):
    start = time.perf_counter()
    # estimate_bias raises if any run ends with disagreeing outputs
    report = estimate_bias(ProtocolConfig(m, t), None, n=n, seed=seed, jobs=jobs)
    elapsed = time.perf_counter() - start
    ok = abs(report.mean - 0.5) <= 0.005 and elapsed <= budget
    return ok, f"n={n} mean={report.mean:.5f} agreement=all elapsed={elapsed:.1f}s budget={budget:.0f}s"


# ---------------------------------------------------------------------------
# 2. sbias inversion
# ---------------------------------------------------------------------------


def check_sbias(max_n: int = 99, tol: float = 1e-10):
    worst = 0.0
    where = None
    for n in range(1, max_n + 1, 2):
        for k in range(1, 100):
            delta = k / 100
            err = abs(float(binom_tail(n, sbias(n, delta), 0)) - delta)
            if err > worst:
                worst, where = err, (n, delta)
    return worst <= tol, f"max error {worst:.2e} at (n, δ)={where}"


# ---------------------------------------------------------------------------
# 3. Recovery expectation
# ---------------------------------------------------------------------------


def check_recovery(n: int = 100_000, ms=(5, 13), sizes=(1, 2, 3), seed: int = 7):
    worst = 0.0
    strata = 0
    for m in ms:
        for k in sizes:
            for j in range(1, 10):
                delta = j / 10
                rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(m, k, j)))
                out, _ = sample_recoveries(m, 3, k, delta, n, rng)
                mean = float(out.mean())
                sigma = math.sqrt(delta * (1 - delta) / n)
                worst = max(worst, abs(mean - delta) / sigma)
                strata += 1
    return worst <= 3, f"{strata} strata, n={n} each, worst |mean-δ| = {worst:.2f}σ"


# ---------------------------------------------------------------------------
# 4. DP against brute force
# ---------------------------------------------------------------------------


def check_dp_brute(games=None, enumeration_limit: int = brute.ENUMERATION_LIMIT):
    games = small_games() if games is None else games
    failures = []
    enumerated = 0
    for g in games:
        table = build_states(g)
        opt = opt_value(table).value
        # upper route: best rule over full histories dominates every stateless rule
        upper = brute.history_value(g)
        # lower route: the greedy stateless rule, scored by the brute-force evaluator
        greedy = greedy_strategy(table)
        lower = brute.stateless_value(g, frozenset(k for k, p in greedy.probs.items() if p == 1))
        ok = upper == opt == lower
        positive = sum(1 for _, gain in brute.stateless_states(g) if gain > 0)
        if positive <= enumeration_limit:
            enumerated += 1
            ok = ok and brute.enumerate_stateless(g, enumeration_limit).best == opt
        if not ok:
            failures.append((g.m, str(g.eps), g.hint.kind, g.hint.param))
    detail = f"{len(games)} games, {enumerated} enumerated over all 2^k rules, mismatches={failures}"
    return not failures and bool(games), detail


# ---------------------------------------------------------------------------
# 5-7. Linear program
# ---------------------------------------------------------------------------


def check_lp_dp(games=None):
    games = small_games() if games is None else games
    failures = []
    for g in games:
        table = build_states(g)
        if solve_primal(build_lp(table)).primal.objective != opt_value(table).value:
            failures.append((g.m, str(g.eps), g.hint.kind, g.hint.param))
    base = solve_primal(build_lp(build_states(Game(1, Fraction(0), HintSpec.all_info())))).primal.objective
    ok = not failures and base == Fraction(1, 4)
    return ok, f"{len(games)} games, mismatches={failures}, m=1 all-info LP = {base}"


def check_duality(games=None, pairs: int = 100, seed: int = 11):
    games = small_games() if games is None else games
    bad = []
    for g in games:
        inst = build_lp(build_states(g))
        res = solve_primal(inst)
        chk = check_dual_feasible(inst, res.dual, res.primal.objective)
        if not chk.feasible or chk.objective != res.primal.objective:
            bad.append(("certificate", g.m, g.hint.kind, g.hint.param, str(g.eps)))
    rng = random.Random(seed)
    weak = 0
    for k in range(pairs):
        g = games[k % len(games)]
        table = build_states(g)
        inst = build_lp(table)
        strat = random_strategy(table, rng)
        primal = strategy_to_solution(inst, strat).objective
        y = random_feasible_dual(inst, rng)
        chk = check_dual_feasible(inst, y)
        if chk.feasible and primal <= chk.objective:
            weak += 1
        else:
            bad.append(("weak", k))
    return not bad, f"{len(games)} certificates checked, weak duality {weak}/{pairs}, failures={bad[:5]}"


def check_round_trips(games=None, trials: int = 100, seed: int = 13):
    games = small_games() if games is None else games
    rng = random.Random(seed)
    forward = backward = 0
    for k in range(trials):
        g = games[k % len(games)]
        table = build_states(g)
        inst = build_lp(table)
        a = random_feasible_primal(inst, rng)
        strat = solution_to_strategy(inst, a)
        if eval_strategy_exact(table, strat).bias == objective(inst, a):
            forward += 1
        sol = strategy_to_solution(inst, random_strategy(table, rng))
        if check_primal_feasible(inst, sol.values) is None:
            backward += 1
    ok = forward == trials and backward == trials
    return ok, f"primal→strategy {forward}/{trials} exact, strategy→primal {backward}/{trials} feasible"


# ---------------------------------------------------------------------------
# 8. Leakage
# ---------------------------------------------------------------------------


def random_leak_instance(rng: random.Random):
    """A small random process and a random leakage table."""
    size = rng.randint(2, 5)
    weights = [rng.randint(1, 6) for _ in range(size)]
    total = sum(weights)
    proc = custom_process((a, Fraction(w, total), Fraction(rng.randint(0, 6), 6)) for a, w in enumerate(weights))
    hints = rng.randint(2, 4)
    table = {}
    for a in range(size):
        ws = [rng.randint(0, 5) for _ in range(hints)]
        if not any(ws):
            ws[0] = 1
        s = sum(ws)
        table[a] = [(h, Fraction(w, s)) for h, w in enumerate(ws) if w]
    return proc, table_leakage(table)


def exhaustive_leak_instances() -> list:
    """Three fully enumerated ``(process, leakage, good set)`` triples."""
    out = []
    proc = binomial_process(3, 1, 0, Fraction(1, 5))
    good = [a for a in proc.elements if abs(a) <= 5]
    out.append(("binomial m=3 i=1 + hypergeometric leak", proc, hypergeometric_leakage(3, 1, 0, 2), good))
    proc = binomial_process(2, 1, 0, Fraction(-1, 3))
    out.append(("binomial m=2 i=1 + all-information leak", proc, all_information_leakage(), proc.elements[1:]))
    proc = hypergeometric_process(6, 2, Fraction(1, 2))
    good = [a for a in proc.elements if 0 < a < 1]
    out.append(("hypergeometric n=6 β=2 + vector leak k=1", proc, vector_leakage(6, 1), good))
    return out


def check_leakage(instances: int = 100, seed: int = 17):
    rng = random.Random(seed)
    agree = 0
    for _ in range(instances):
        proc, leak = random_leak_instance(rng)
        j = joint(proc, leak)
        h = rng.choice(sorted(j.hints))
        support = [a for a, _ in j.by_hint[h]]
        good = set(rng.sample(proc.elements, rng.randint(1, len(proc.elements)))) | {rng.choice(support)}
        points = [a for a in good if any(x == a for x in support)]
        r = [ratio(proc, leak, h, good, a, j) for a in points]
        if all(x.by_posterior == x.by_likelihood for x in r):
            agree += 1
    bounds = []
    for name, proc, leak, good in exhaustive_leak_instances():
        j = joint(proc, leak)
        bounds.append(all(generic_diff_bound_check(proc, leak, h, good).holds for h in j.hints))
    suff = [
        weight_sufficiency(hypergeometric_process(6, 2, Fraction(1, 2)), 6, 1),
        weight_sufficiency(binomial_process(2, 1, 0, Fraction(1, 5)), 3, 2),
        weight_sufficiency(binomial_process(3, 2, 1, Fraction(0)), 5, 2),
    ]
    ok = agree == instances and all(bounds) and all(suff)
    return ok, f"ratio forms agree {agree}/{instances}, bound holds {sum(bounds)}/3, weight sufficiency {sum(suff)}/3"


# ---------------------------------------------------------------------------
# 9. No-gain abort sites
# ---------------------------------------------------------------------------

COALITIONS = ((1,), (2,), (3,), (1, 2), (1, 3), (2, 3))


def check_no_gain(m: int = 3, t: int = 3, seeds: int = 3):
    cfg = ProtocolConfig(m, t, mode="exact", analysis=True)
    checked = 0
    nonzero = []
    for corrupted in COALITIONS:
        for step, rounds in (("2", (0,)), ("3a", range(1, m + 1)), ("3c", range(1, m + 1))):
            for r in rounds:
                for seed in range(seeds):
                    adv = SingleShotAdversary(corrupted, INNER, step, r, depth=0)
                    tr = run_outer(cfg, adv, seed)
                    for g in tr.gains:
                        if g["protocol"] != INNER or g["step"] != step:
                            continue
                        checked += 1
                        if not isinstance(g["gain"], Fraction) or g["gain"] != 0:
                            nonzero.append((corrupted, step, r, seed, g["gain"]))
    return checked > 0 and not nonzero, f"{checked} aborts checked, non-zero gains={nonzero[:3]}"


# ---------------------------------------------------------------------------
# 10. Defended protocol against the re-toss baseline
# ---------------------------------------------------------------------------


def check_defended_vs_vanilla(n: int = 4000, m: int = 13, t: int = 3, seed: int = 31, jobs: int = 1):
    golden = Fraction(load_golden("vanilla_m13.json")["bias"])
    vanilla = vanilla_protocol(m).bias if m == 13 else None
    if m == 13 and vanilla != golden:
        return False, f"vanilla DP {vanilla} disagrees with the stored value {golden}"
    target = golden if m == 13 else vanilla_protocol(m).bias
    rep = estimate_bias(ProtocolConfig(m, t), game_derived_attacker(t=t, seed=seed), n=n, seed=seed, jobs=jobs)
    sigma = rep.stderr  # the baseline is exact, so it adds no variance
    gap = float(target) - rep.bias
    ok = gap > 3 * sigma
    return ok, f"attacker bias {rep.bias:.4f} ± {sigma:.4f} (n={n}) vs re-toss optimum {float(target):.4f}; gap {gap / sigma:.1f}σ"


# ---------------------------------------------------------------------------


def _plan(quick: bool, jobs: int) -> dict:
    """``number -> (title, check, args, kwargs)``; games are built lazily and only once."""
    games = []

    def lite():
        if not games:
            games.extend(g for g in small_games() if not quick or g.m <= 2)
        return games

    return {
        1: ("honest correctness", check_honest, lambda: (), {"n": 10_000 if quick else 100_000, "jobs": jobs}),
        2: ("sbias inversion", check_sbias, lambda: (), {}),
        3: ("recovery expectation", check_recovery, lambda: (), {"n": 10_000 if quick else 100_000}),
        4: ("DP vs brute force", check_dp_brute, lambda: (lite(),), {}),
        5: ("LP equals DP", check_lp_dp, lambda: (lite(),), {}),
        6: ("duality", check_duality, lambda: (lite(),), {"pairs": 20 if quick else 100}),
        7: ("strategy/LP round trips", check_round_trips, lambda: (lite(),), {"trials": 20 if quick else 100}),
        8: ("leakage", check_leakage, lambda: (), {"instances": 20 if quick else 100}),
        9: ("no-gain abort sites", check_no_gain, lambda: (), {"seeds": 1 if quick else 3}),
        10: ("defended beats vanilla", check_defended_vs_vanilla, lambda: (),
             {"n": 2000 if quick else 4000, "jobs": jobs}),
    }


CRITERIA = tuple(range(1, 11))


def run_criterion(number: int, quick: bool = False, jobs: int = 1, plan: dict | None = None) -> CriterionResult:
    title, fn, args, kw = (plan or _plan(quick, jobs))[number]
    return _timed(number, title, fn, *args(), **kw)


def run_all(quick: bool = False, jobs: int = 1) -> list[CriterionResult]:
    plan = _plan(quick, jobs)
    return [run_criterion(k, plan=plan) for k in CRITERIA]
