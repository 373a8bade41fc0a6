"""The stopping game as a linear program, solved exactly.

Primal: one variable ``a_v ≥ 0`` per with-hint state (the probability of
stopping at ``v``), maximise ``Σ a_v·gain(v)`` subject to

    a_v + Σ_{u<v} a_u·p_{v|u} ≤ p_v        for every state v.

Dual: ``y_u ≥ 0``, minimise ``Σ y_u·p_u`` subject to

    y_u + Σ_{v>u} y_v·p_{v|u} ≥ gain(u)    for every state u.

The solver is a dense-row rational tableau simplex with Bland's rule.  Because
``p_v ≥ 0`` the all-slack basis is feasible, so no phase one is needed.
"""

from __future__ import annotations

import math
import random as _random
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .games import GameTable, StrategyTable, eval_strategy_exact, build_states, Game


class InfeasibleSolution(ValueError):
    def __init__(self, index: int, message: str):
        super().__init__(message)
        self.index = index


@dataclass
class LPInstance:
    """``max c·x`` s.t. ``A x ≤ b``, ``x ≥ 0`` with ``A`` unit lower triangular.

    ``rows[v]`` maps earlier variable indices ``u`` to ``p_{v|u}``.
    """

    names: list
    keys: list
    c: list
    b: list
    rows: list
    table: GameTable | None = None
    direction: int = 1

    @property
    def size(self) -> int:
        return len(self.names)

    def column(self, u: int) -> dict:
        """Entries of column ``u`` below the diagonal: ``{v: p_{v|u}}``."""
        return {v: row[u] for v, row in enumerate(self.rows) if u in row}


@dataclass
class PrimalSolution:
    values: list
    objective: Fraction


@dataclass
class DualSolution:
    values: list
    objective: Fraction


@dataclass
class SimplexResult:
    primal: PrimalSolution
    dual: DualSolution
    pivots: int
    basis: list


@dataclass
class DualCheck:
    feasible: bool
    violated: int | None
    objective: Fraction
    slack: list = field(default_factory=list)


def build_lp(table: GameTable, *, include_final: bool = False, direction: int = 1) -> LPInstance:
    """Primal/dual data over the states of ``table`` (finals only on request; they never pay)."""
    if not table.game.exact:
        raise ValueError("the LP is built over exact rationals only")
    states = [s for s in table.states if include_final or not s.final]
    pos = {s.key: k for k, s in enumerate(states)}
    rows = [dict() for _ in states]
    for u, s in enumerate(states):
        if s.final:
            continue
        for key, pr in table.transition(s).items():
            v = pos.get(key)
            if v is not None and pr:
                rows[v][u] = pr
    c = [direction * s.gain for s in states]
    b = [s.p for s in states]
    return LPInstance([s.name for s in states], [s.key for s in states], c, b, rows, table, direction)


# ---------------------------------------------------------------------------
# Exact simplex
# ---------------------------------------------------------------------------


def _dense(inst: LPInstance) -> list[list[Fraction]]:
    n = inst.size
    out = []
    for v in range(n):
        row = [Fraction(0)] * n
        for u, val in inst.rows[v].items():
            row[u] = Fraction(val)
        row[v] += 1
        out.append(row)
    return out


def simplex_max(A: list[list[Fraction]], b: list[Fraction], c: list[Fraction], max_pivots: int = 100_000):
    """Solve ``max c·x, A x ≤ b, x ≥ 0`` for ``b ≥ 0`` exactly.

    Returns ``(x, y, objective, basis, pivots)`` where ``y`` is an optimal dual
    read from the slack columns.  Bland's rule: the entering column is the
    lowest-index one with positive reduced cost; ties in the ratio test go to
    the lowest-index basic variable.
    """
    m = len(A)
    n = len(c)
    if any(x < 0 for x in b):
        raise ValueError("the slack basis needs b ≥ 0")
    width = n + m
    rows = []
    for i in range(m):
        r = [Fraction(v) for v in A[i]] + [Fraction(0)] * m
        r[n + i] = Fraction(1)
        rows.append(r)
    rhs = [Fraction(v) for v in b]
    basis = [n + i for i in range(m)]
    cost = [Fraction(v) for v in c] + [Fraction(0)] * m
    reduced = list(cost)  # c_j - z_j
    value = Fraction(0)
    pivots = 0
    while True:
        enter = next((j for j in range(width) if reduced[j] > 0), None)
        if enter is None:
            break
        best = None
        leave = None
        for i in range(m):
            a = rows[i][enter]
            if a > 0:
                ratio = rhs[i] / a
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best = ratio
                    leave = i
        if leave is None:
            raise ArithmeticError("unbounded linear program")
        piv = rows[leave][enter]
        prow = rows[leave]
        nz = [(j, prow[j] / piv) for j in range(width) if prow[j]]
        prow = [Fraction(0)] * width
        for j, v in nz:
            prow[j] = v
        rows[leave] = prow
        rhs[leave] = rhs[leave] / piv
        for i in range(m):
            if i == leave:
                continue
            f = rows[i][enter]
            if f:
                r = rows[i]
                for j, v in nz:
                    r[j] -= f * v
                rhs[i] -= f * rhs[leave]
        f = reduced[enter]
        for j, v in nz:
            reduced[j] -= f * v
        value += f * rhs[leave]
        basis[leave] = enter
        pivots += 1
        if pivots > max_pivots:
            raise ArithmeticError("pivot limit reached")
    x = [Fraction(0)] * n
    for i, j in enumerate(basis):
        if j < n:
            x[j] = rhs[i]
    y = [-reduced[n + i] for i in range(m)]
    return x, y, value, basis, pivots


def solve_primal(inst: LPInstance, mode: str = "exact") -> SimplexResult:
    """Optimal primal and dual of ``inst`` by the exact simplex."""
    if mode != "exact":
        raise ValueError("only the exact solver is offered")
    x, y, value, basis, pivots = simplex_max(_dense(inst), inst.b, inst.c)
    primal = PrimalSolution(x, sum((ci * xi for ci, xi in zip(inst.c, x)), Fraction(0)))
    dual = DualSolution(y, sum((yi * bi for yi, bi in zip(y, inst.b)), Fraction(0)))
    if primal.objective != value:
        raise ArithmeticError("tableau objective disagrees with c·x")
    return SimplexResult(primal, dual, pivots, basis)


# ---------------------------------------------------------------------------
# Feasibility, translations
# ---------------------------------------------------------------------------


def primal_slack(inst: LPInstance, a: list) -> list:
    """``p_v - a_v - Σ_{u<v} a_u·p_{v|u}`` for every ``v``."""
    return [inst.b[v] - a[v] - sum((a[u] * p for u, p in inst.rows[v].items()), Fraction(0)) for v in range(inst.size)]


def check_primal_feasible(inst: LPInstance, a: list) -> int | None:
    """Index of the first violated constraint, or ``None``."""
    for v, x in enumerate(a):
        if x < 0:
            return v
    for v, s in enumerate(primal_slack(inst, a)):
        if s < 0:
            return v
    return None


def objective(inst: LPInstance, a: list) -> Fraction:
    return sum((ci * ai for ci, ai in zip(inst.c, a)), Fraction(0))


def strategy_to_solution(inst: LPInstance, strategy: StrategyTable) -> PrimalSolution:
    """``a_v = Pr[the strategy stops at v]``, by the exact forward pass."""
    ev = eval_strategy_exact(inst.table, strategy, inst.direction)
    a = [Fraction(ev.marginals.get(k, 0)) for k in inst.keys]
    return PrimalSolution(a, objective(inst, a))


def solution_to_strategy(inst: LPInstance, sol: PrimalSolution | list) -> StrategyTable:
    """Conditional stopping probabilities ``a_v / (p_v − Σ_{u<v} a_u·p_{v|u})`` (0 on empty denominators)."""
    a = sol.values if isinstance(sol, PrimalSolution) else sol
    probs = {}
    for v in range(inst.size):
        if a[v] < 0:
            raise InfeasibleSolution(v, f"negative mass at {inst.names[v]}")
        room = inst.b[v] - sum((a[u] * p for u, p in inst.rows[v].items()), Fraction(0))
        if a[v] > room:
            raise InfeasibleSolution(v, f"constraint {inst.names[v]} violated by {a[v] - room}")
        if a[v] and room:
            probs[inst.keys[v]] = a[v] / room
    return StrategyTable(inst.table.game, probs)


def dual_lhs(inst: LPInstance, y: list) -> list:
    """``y_u + Σ_{v>u} y_v·p_{v|u}`` for every ``u``."""
    out = [Fraction(v) for v in y]
    for v, row in enumerate(inst.rows):
        if y[v]:
            for u, p in row.items():
                out[u] += y[v] * p
    return out


def check_dual_feasible(inst: LPInstance, y: DualSolution | list, primal_optimum: Fraction | None = None) -> DualCheck:
    """Exact check of every dual constraint; a feasible ``y`` must bound the primal optimum.

    When ``primal_optimum`` is not supplied it is computed by the simplex.
    """
    ys = y.values if isinstance(y, DualSolution) else list(y)
    obj = sum((a * b for a, b in zip(ys, inst.b)), Fraction(0))
    for u, val in enumerate(ys):
        if val < 0:
            return DualCheck(False, u, obj)
    lhs = dual_lhs(inst, ys)
    slack = [l - c for l, c in zip(lhs, inst.c)]
    for u, s in enumerate(slack):
        if s < 0:
            return DualCheck(False, u, obj, slack)
    best = solve_primal(inst).primal.objective if primal_optimum is None else primal_optimum
    if obj < best:
        raise ArithmeticError(f"feasible dual objective {obj} below the primal optimum {best}")
    return DualCheck(True, None, obj, slack)


def trivial_dual(inst: LPInstance, big: Fraction = Fraction(1)) -> list:
    """``big ≥ 1`` on final states with non-negative offset and ``max(gain, 0)`` elsewhere.

    Feasible whenever the instance includes its final states: the final mass
    below any ``u`` already covers ``v_u``.
    """
    if big < 1:
        raise ValueError("the final-state value must be at least 1")
    y = []
    for key, c in zip(inst.keys, inst.c):
        i, b, h = key
        if inst.table is not None and i == inst.table.game.m + 1:
            y.append(Fraction(big) if b >= 0 else Fraction(0))
        else:
            y.append(max(Fraction(c), Fraction(0)))
    return y


def random_feasible_dual(inst: LPInstance, rng: _random.Random, spread: int = 4) -> list:
    """A dual point built backwards: the least feasible value plus a random non-negative extra."""
    n = inst.size
    y = [Fraction(0)] * n
    cols = [inst.column(u) for u in range(n)]
    for u in range(n - 1, -1, -1):
        later = sum((y[v] * p for v, p in cols[u].items()), Fraction(0))
        y[u] = max(inst.c[u] - later, Fraction(0)) + Fraction(rng.randrange(spread + 1), spread)
    return y


def random_feasible_primal(inst: LPInstance, rng: _random.Random, grain: int = 6) -> list:
    """A primal point built forwards: a random fraction of the room left at each state."""
    a = [Fraction(0)] * inst.size
    for v in range(inst.size):
        room = inst.b[v] - sum((a[u] * p for u, p in inst.rows[v].items()), Fraction(0))
        a[v] = room * Fraction(rng.randrange(grain + 1), grain)
    return a


def random_strategy(table: GameTable, rng: _random.Random, grain: int = 4) -> StrategyTable:
    probs = {}
    for s in table.nonfinal:
        k = rng.randrange(grain + 1)
        if k:
            probs[s.key] = Fraction(k, grain)
    return StrategyTable(table.game, probs)


# ---------------------------------------------------------------------------
# LP text format
# ---------------------------------------------------------------------------


def _lcm_den(values) -> int:
    out = 1
    for v in values:
        out = math.lcm(out, Fraction(v).denominator)
    return out


def _terms(pairs) -> str:
    parts = []
    for coef, name in pairs:
        if coef == 0:
            continue
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        parts.append(f"{sign} {mag} {name}")
    if not parts:
        return "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def lp_text(inst: LPInstance, title: str = "stopping game") -> str:
    """The instance in CPLEX LP text; each row is scaled to integer coefficients.

    The scale factors are recorded in comments so :func:`parse_lp` can undo them.
    """
    lines = [f"\\ {title}"]
    oscale = _lcm_den(inst.c)
    lines.append(f"\\ objective_scale {oscale}")
    lines.append("Maximize")
    lines.append(" obj: " + _terms((int(c * oscale), n) for c, n in zip(inst.c, inst.names)))
    lines.append("Subject To")
    for v in range(inst.size):
        coeffs = [(Fraction(1), v)] + sorted(((Fraction(p), u) for u, p in inst.rows[v].items()), key=lambda t: t[1])
        scale = _lcm_den([c for c, _ in coeffs] + [inst.b[v]])
        lines.append(f"\\ row_scale c{v} {scale}")
        body = _terms((int(c * scale), inst.names[u]) for c, u in sorted(coeffs, key=lambda t: t[1]))
        lines.append(f" c{v}: {body} <= {int(inst.b[v] * scale)}")
    lines.append("Bounds")
    for n in inst.names:
        lines.append(f" {n} >= 0")
    lines.append("End")
    return "\n".join(lines) + "\n"


def export_lp(inst: LPInstance, path, title: str = "stopping game") -> Path:
    path = Path(path)
    path.write_text(lp_text(inst, title))
    return path


_TERM = re.compile(r"([+-]?)\s*(\d+)\s+([A-Za-z_][A-Za-z0-9_]*)")


def parse_lp(text: str) -> dict:
    """Read back what :func:`lp_text` writes: ``{"names", "c", "rows", "b"}`` with exact rationals."""
    oscale = 1
    scales = {}
    names = []
    c = {}
    rows = []
    b = []
    section = None
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("\\"):
            parts = line[1:].split()
            if parts[:1] == ["objective_scale"]:
                oscale = int(parts[1])
            elif parts[:1] == ["row_scale"]:
                scales[parts[1]] = int(parts[2])
            continue
        if line in ("Maximize", "Subject To", "Bounds", "End"):
            section = line
            continue
        if not line:
            continue
        if section == "Maximize":
            _, body = line.split(":", 1)
            for sgn, coef, name in _TERM.findall(body):
                c[name] = Fraction(int(coef) * (-1 if sgn == "-" else 1), oscale)
        elif section == "Subject To":
            label, body = line.split(":", 1)
            lhs, rhs = body.split("<=")
            scale = scales.get(label.strip(), 1)
            row = {}
            for sgn, coef, name in _TERM.findall(lhs):
                row[name] = Fraction(int(coef) * (-1 if sgn == "-" else 1), scale)
            rows.append(row)
            b.append(Fraction(int(rhs.strip()), scale))
        elif section == "Bounds":
            names.append(line.split()[0])
    return {"names": names, "c": [c.get(n, Fraction(0)) for n in names], "rows": rows, "b": b}


def same_instance(inst: LPInstance, parsed: dict) -> bool:
    """True when a parsed LP text describes exactly ``inst``."""
    if parsed["names"] != inst.names or parsed["c"] != inst.c or parsed["b"] != inst.b:
        return False
    for v, row in enumerate(parsed["rows"]):
        want = {inst.names[u]: Fraction(p) for u, p in inst.rows[v].items()}
        want[inst.names[v]] = want.get(inst.names[v], Fraction(0)) + 1
        if {k: x for k, x in row.items() if x} != {k: x for k, x in want.items() if x}:
            return False
    return True


def lp_for(game: Game, **kw) -> LPInstance:
    return build_lp(build_states(game), **kw)
