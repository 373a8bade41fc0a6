"""``fairflip``: command-line entry point.

Subcommands ``simulate``, ``attack``, ``game``, ``lp`` and ``verify``.  Options
come from three layers: built-in defaults, an optional INI file (``--config``;
keys in a ``[fairflip]`` section and in a section named after the subcommand)
and command-line flags, later layers winning.  Output files are named after a
hash of the resolved configuration, contain no timestamps, and are identical
for identical configurations.  Every run appends one line to ``ledger.jsonl``
in the output directory.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import acceptance
from .adversary import (
    ConfigurationError,
    RandomAbortAdversary,
    SingleShotAdversary,
    estimate_bias,
    game_derived_attacker,
    trial_seed,
    vanilla_protocol,
)
from .engine import INNER, ProtocolConfig, run_outer
from .games import (
    HINT_KINDS,
    VECTOR,
    Game,
    HintSpec,
    build_states,
    eval_strategy_exact,
    eval_strategy_mc,
    greedy_strategy,
    opt_value,
    opt_value_float,
)
from .lp import build_lp, check_dual_feasible, lp_text, parse_lp, same_instance, solve_primal
from .numerics import weight_schedule

log = logging.getLogger("fairflip")

OUTPUT_ENV = "FAIRFLIP_OUTPUT_DIR"
DEFAULT_OUTPUT = "fairflip-output"
ADVERSARIES = ("honest", "random-abort", "single-shot", "game-derived")
SUBCOMMANDS = ("simulate", "attack", "game", "lp", "verify")
UNHASHED = ("output_dir", "jobs")


class SchemaError(ValueError):
    """A configuration value failed validation; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    subcommand: str
    m: int = 13
    t: int = 3
    adversary: str = "honest"
    corrupted: tuple = ()
    rate: float = 0.01
    step: str = "3b"
    round: int | None = None
    n: int = 1000
    seed: int = 0
    mode: str = "float"
    jobs: int = 1
    transcripts: int = 1
    ms: tuple = ()
    ts: tuple = ()
    adversaries: tuple = ()
    hint: str = "all_info"
    param: int | None = None
    eps: str = "0"
    mc: int = 0
    include_final: bool = False
    quick: bool = False
    output_dir: str = ""

    def validate(self) -> "RunConfig":
        def need(cond, name, msg):
            if not cond:
                raise SchemaError(name, msg)

        need(self.subcommand in SUBCOMMANDS, "subcommand", f"must be one of {SUBCOMMANDS}")
        need(self.m >= 1, "m", "must be at least 1")
        need(self.t >= 2, "t", "must be at least 2")
        need(self.n >= 1, "n", "must be at least 1")
        need(self.jobs >= 1, "jobs", "must be at least 1")
        need(self.transcripts >= 0, "transcripts", "must be non-negative")
        need(self.mode in ("float", "exact"), "mode", "must be 'float' or 'exact'")
        need(0 <= self.rate <= 1, "rate", "must lie in [0, 1]")
        need(self.mc >= 0, "mc", "must be non-negative")
        for name in (self.adversary, *self.adversaries):
            need(name in ADVERSARIES, "adversary", f"{name!r} is not one of {ADVERSARIES}")
        need(all(m >= 1 for m in self.ms), "ms", "every m must be at least 1")
        need(all(t >= 2 for t in self.ts), "ts", "every t must be at least 2")
        need(self.hint in HINT_KINDS, "hint", f"must be one of {tuple(k.replace('_', '-') for k in HINT_KINDS)}")
        need(all(1 <= p <= self.t for p in self.corrupted), "corrupted", f"parties must lie in 1..{self.t}")
        try:
            parse_eps(self.eps)
        except (ValueError, ZeroDivisionError) as exc:
            raise SchemaError("eps", str(exc)) from None
        if self.subcommand in ("game", "lp"):
            try:
                make_game(self)
            except ValueError as exc:
                raise SchemaError("param" if self.param is not None else "hint", str(exc)) from None
        return self

    def hashed(self) -> dict:
        """Fields that can change results; the job count and output location cannot."""
        return {k: _plain(v) for k, v in asdict(self).items() if k not in UNHASHED}

    @property
    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.hashed(), sort_keys=True).encode()).hexdigest()


def _plain(v):
    return list(v) if isinstance(v, tuple) else v


def _ints(text: str) -> tuple:
    text = text.strip()
    return tuple(int(x) for x in text.replace(",", " ").split()) if text else ()


def _names(text: str) -> tuple:
    return tuple(x for x in text.replace(",", " ").split() if x)


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text: str):
    return None if str(text).strip().lower() in ("", "none") else int(text)


def _hint(text: str) -> str:
    return text.strip().replace("-", "_")


# key -> converter from text; keys absent here are not configurable
CONVERTERS = {
    "m": int, "t": int, "adversary": str.strip, "corrupted": _ints, "rate": float, "step": str.strip,
    "round": _opt_int, "n": int, "seed": int, "mode": str.strip, "jobs": int, "transcripts": int,
    "ms": _ints, "ts": _ints, "adversaries": _names, "hint": _hint, "param": _opt_int, "eps": str.strip,
    "mc": int, "include_final": _bool, "quick": _bool, "output_dir": str.strip,
}


def parse_eps(text: str) -> Fraction:
    eps = Fraction(text)
    if abs(eps) > 1:
        raise ValueError(f"bias {text} outside [-1, 1]")
    return eps


def read_config_file(path: str, subcommand: str) -> dict:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise SchemaError("config", f"cannot read {path}")
    values = {}
    for section in ("fairflip", subcommand):
        if parser.has_section(section):
            for key, raw in parser.items(section):
                key = key.replace("-", "_")
                if key not in CONVERTERS:
                    raise SchemaError(key, f"unknown key in [{section}] of {path}")
                try:
                    values[key] = CONVERTERS[key](raw)
                except ValueError as exc:
                    raise SchemaError(key, str(exc)) from None
    return values


# games and LPs default to exact arithmetic on the smallest instance
SUBCOMMAND_DEFAULTS = {"game": {"mode": "exact", "m": 1}, "lp": {"mode": "exact", "m": 1}}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Built-in defaults, then subcommand defaults, then the config file, then flags."""
    values = dict(SUBCOMMAND_DEFAULTS.get(args.subcommand, {}))
    if args.config:
        values.update(read_config_file(args.config, args.subcommand))
    for key in CONVERTERS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if not values.get("output_dir"):
        values["output_dir"] = os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT)
    return RunConfig(args.subcommand, **values).validate()


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def make_adversary(name: str, cfg: RunConfig, t: int | None = None):
    t = cfg.t if t is None else t
    corrupted = cfg.corrupted or tuple(range(1, t))
    if name == "honest":
        return None
    if name == "random-abort":
        return RandomAbortAdversary(corrupted, cfg.rate, seed=cfg.seed)
    if name == "single-shot":
        return SingleShotAdversary(corrupted, INNER, cfg.step, cfg.round, depth=0, seed=cfg.seed)
    if name == "game-derived":
        return game_derived_attacker(t=t, corrupted=corrupted, seed=cfg.seed)
    raise SchemaError("adversary", f"unknown adversary {name!r}")


def make_game(cfg: RunConfig) -> Game:
    eps = parse_eps(cfg.eps)
    if cfg.mode == "float":
        eps = float(eps)
    return Game(cfg.m, eps, HintSpec(cfg.hint, cfg.param))


def _warn_schedule(m: int) -> None:
    if m % 12 == 1:
        return
    total = weight_schedule(m).total
    if total % 2:
        log.warning("m=%d is not 1 mod 12 (ms[1]=%d is odd, so the noise step has no ties)", m, total)
    else:
        log.warning("m=%d is not 1 mod 12 and ms[1]=%d is even: ties in the noise step count as non-positive, "
                    "which pulls the protocol towards 0", m, total)


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


class Outputs:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.root = Path(cfg.output_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def path(self, suffix: str) -> Path:
        return self.root / f"{self.cfg.subcommand}-{self.cfg.digest[:12]}{suffix}"

    def write(self, suffix: str, text: str) -> Path:
        p = self.path(suffix)
        p.write_text(text)
        self.files.append(str(p))
        return p

    def csv(self, suffix: str, rows: list[dict]) -> Path:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return self.write(suffix, buf.getvalue())

    def ledger(self, result: dict) -> None:
        line = {"config_hash": self.cfg.digest, "subcommand": self.cfg.subcommand, "config": self.cfg.hashed(),
                "result": result, "files": self.files}
        with open(self.root / "ledger.jsonl", "a") as fh:
            fh.write(json.dumps(line, sort_keys=True) + "\n")


def _summary_row(name: str, m: int, t: int, rep) -> dict:
    half = 1.96 * rep.stderr
    return {"adversary": name, "m": m, "t": t, "n": rep.n, "mean": f"{rep.mean:.6f}", "bias": f"{rep.bias:.6f}",
            "stderr": f"{rep.stderr:.6f}", "ci_low": f"{rep.mean - half:.6f}", "ci_high": f"{rep.mean + half:.6f}"}


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def simulate(cfg: RunConfig, out: Outputs) -> dict:
    """Run the protocol ``n`` times under one adversary; write transcripts and a summary row."""
    _warn_schedule(cfg.m)
    pcfg = ProtocolConfig(cfg.m, cfg.t, mode=cfg.mode)
    adv = make_adversary(cfg.adversary, cfg)
    rep = estimate_bias(pcfg, adv, n=cfg.n, seed=cfg.seed, jobs=cfg.jobs)
    if cfg.transcripts:
        rcfg = ProtocolConfig(cfg.m, cfg.t, mode=cfg.mode, record=True)
        lines = []
        for k in range(min(cfg.transcripts, cfg.n)):
            tr = run_outer(rcfg, adv.spawn(k) if adv else None, trial_seed(cfg.seed, k))
            lines.append(tr.to_jsonl())
        out.write(".jsonl", "".join(lines))
    row = _summary_row(cfg.adversary, cfg.m, cfg.t, rep)
    out.csv(".csv", [row])
    print(f"mean {rep.mean:.6f}  bias {rep.bias:.6f} ± {rep.stderr:.6f}  (n={rep.n})")
    return row


def attack(cfg: RunConfig, out: Outputs) -> dict:
    """Bias table over adversaries × m × t, with the exact re-toss baseline for reference."""
    rows = []
    for m in cfg.ms or (cfg.m,):
        _warn_schedule(m)
        baseline = vanilla_protocol(m, exact=False).bias
        for t in cfg.ts or (cfg.t,):
            for name in cfg.adversaries or (cfg.adversary,):
                try:
                    adv = make_adversary(name, cfg, t)
                except ConfigurationError as exc:
                    raise SchemaError("adversary", f"{name} at t={t}: {exc}") from None
                rep = estimate_bias(ProtocolConfig(m, t, mode=cfg.mode), adv, n=cfg.n, seed=cfg.seed, jobs=cfg.jobs)
                row = _summary_row(name, m, t, rep)
                row["retoss_optimum"] = f"{baseline:.6f}"
                rows.append(row)
                print(f"{name:>13} m={m:<3} t={t}  bias {rep.bias:.4f} ± {rep.stderr:.4f}  (re-toss optimum {baseline:.4f})")
    out.csv(".csv", rows)
    return {"rows": len(rows)}


def game(cfg: RunConfig, out: Outputs) -> dict:
    """Optimal value and greedy table of one game; optional Monte Carlo cross-check."""
    g = make_game(cfg)
    if g.exact:
        table = build_states(g)
        res = opt_value(table)
        strat = greedy_strategy(table, res)
        value = res.value
        check = eval_strategy_exact(table, strat).bias
        print(f"opt_value {value}")
        print(f"greedy exact evaluation {check}  ({'equal' if check == value else 'DIFFERENT'})")
        out.write(".strategy.json", strat.to_json() + "\n")
        result = {"opt_value": str(value), "greedy_value": str(check), "states": len(table)}
    else:
        # the vectorised DP covers hints whose law depends on the offset alone
        fast = g.hint.depends_on_sum_only and g.hint.kind != VECTOR
        value = opt_value_float(g).value if fast else opt_value(build_states(g)).value
        strat = None
        print(f"opt_value {value:.12g}")
        result = {"opt_value": repr(float(value))}
    if cfg.mc:
        rng = np.random.default_rng(trial_seed(cfg.seed, 0))
        if strat is None:
            raise SchemaError("mc", "the Monte Carlo cross-check needs an exact game (--mode exact)")
        mean, se = eval_strategy_mc(g, strat, cfg.mc, rng)
        z = abs(mean - float(value)) / se if se else math.inf
        print(f"Monte Carlo {mean:.6f} ± {se:.6f}  ({z:.2f}σ from opt)")
        result.update(mc_mean=mean, mc_stderr=se)
    return result


def lp(cfg: RunConfig, out: Outputs) -> dict:
    """Solve the stopping LP exactly, check the dual certificate and export LP text."""
    g = make_game(cfg)
    if not g.exact:
        raise SchemaError("mode", "the LP is solved over exact rationals; use --mode exact")
    table = build_states(g)
    inst = build_lp(table, include_final=cfg.include_final)
    res = solve_primal(inst)
    chk = check_dual_feasible(inst, res.dual, res.primal.objective)
    opt = opt_value(table).value
    text = lp_text(inst, f"stopping game m={g.m} hint={g.hint.kind} eps={g.eps}")
    out.write(".lp", text)
    round_trip = same_instance(inst, parse_lp(text))
    print(f"primal objective {res.primal.objective}")
    print(f"dual objective   {res.dual.objective}")
    print(f"dual feasible {chk.feasible}; strong duality {res.primal.objective == res.dual.objective}; "
          f"equals opt_value {res.primal.objective == opt}; LP text round trip {round_trip}")
    ok = chk.feasible and res.primal.objective == res.dual.objective == opt and round_trip
    if not ok:
        raise SystemExit(1)
    return {"primal": str(res.primal.objective), "dual": str(res.dual.objective), "pivots": res.pivots}


def verify(cfg: RunConfig, out: Outputs) -> dict:
    """Run every acceptance check; exit status is nonzero if any fails."""
    results = acceptance.run_all(quick=cfg.quick, jobs=cfg.jobs)
    for r in results:
        print(r.line())
    failed = [r.number for r in results if not r.passed]
    out.write(".txt", "".join(r.line().rsplit(" (", 1)[0] + "\n" for r in results))
    summary = {"passed": len(results) - len(failed), "failed": failed}
    if failed:
        out.ledger(summary)
        raise SystemExit(1)
    return summary


HANDLERS = {"simulate": simulate, "attack": attack, "game": game, "lp": lp, "verify": verify}


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file; keys in [fairflip] and [<subcommand>]")
    common.add_argument("--output-dir", dest="output_dir", help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
    common.add_argument("--m", type=int, help="number of rounds")
    common.add_argument("--t", type=int, help="number of parties")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--mode", choices=("float", "exact"), help="numeric mode")
    common.add_argument("--jobs", type=int, help="worker processes for trials")
    common.add_argument("-v", "--verbose", action="store_true")

    runs = argparse.ArgumentParser(add_help=False)
    runs.add_argument("--adversary", choices=ADVERSARIES)
    runs.add_argument("--corrupted", type=_ints, help="comma-separated parties (default 1..t-1)")
    runs.add_argument("--rate", type=float, help="abort rate of random-abort")
    runs.add_argument("--step", help="inner-protocol step for single-shot (e.g. 2, 3a, 3b, 3c)")
    runs.add_argument("--round", type=int, help="round for single-shot (default: first match)")
    runs.add_argument("--n", type=int, help="number of trials")

    games = argparse.ArgumentParser(add_help=False)
    games.add_argument("--hint", type=_hint, help="all-info, vector, hypergeometric, defense-bits, constant, coin-sign")
    games.add_argument("--param", type=int, help="hint parameter (vector length, bank weight, bit count)")
    games.add_argument("--eps", help="coin bias as a fraction, e.g. 1/5")

    parser = argparse.ArgumentParser(prog="fairflip", description="Fair coin flipping against fail-stop adversaries.")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    p = sub.add_parser("simulate", parents=[common, runs], help="run the protocol under one adversary")
    p.add_argument("--transcripts", type=int, help="number of JSONL transcripts to write (default 1)")
    p = sub.add_parser("attack", parents=[common, runs], help="bias table over an adversary grid")
    p.add_argument("--ms", type=_ints, help="comma-separated round counts")
    p.add_argument("--ts", type=_ints, help="comma-separated party counts")
    p.add_argument("--adversaries", type=_names, help="comma-separated adversary names")
    p = sub.add_parser("game", parents=[common, games], help="solve an online binomial game")
    p.add_argument("--mc", type=int, help="Monte Carlo plays for a cross-check")
    p = sub.add_parser("lp", parents=[common, games], help="solve the stopping LP exactly")
    p.add_argument("--include-final", dest="include_final", action="store_const", const=True)
    p = sub.add_parser("verify", parents=[common], help="run the acceptance suite")
    p.add_argument("--quick", action="store_const", const=True, help="reduced sample sizes")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        out = Outputs(cfg)
        result = HANDLERS[cfg.subcommand](cfg, out)
    except SchemaError as exc:
        parser.exit(2, f"fairflip: configuration error: {exc}\n")
    except ConfigurationError as exc:
        parser.exit(2, f"fairflip: configuration error: {exc}\n")
    out.ledger(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
