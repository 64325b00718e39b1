"""Experiment harness: deterministic config-driven sweeps with CSV/JSON output.

Configs are flat ``key = value`` files ('#' starts a comment). Unknown keys are
errors, so a typo cannot silently poison a sweep. Every output row echoes the
seed it was produced from and a hash of the effective config, and rows are
written in a canonical sorted order, so re-running a config reproduces the
output byte for byte regardless of --jobs.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from multiprocessing import get_context
from typing import Callable, Sequence

import numpy as np

from .anchored import anchored_qre
from .games import exploitability, kl_divergence, uniform_policy
from .mcts import (
    MctsAgent,
    PriorAgent,
    SearchConfig,
    play_one,
    run_search,
    summarize_scores,
    visits_to_policy,
)
from .solvers import SolverSpec, anchor_log_range, fmt9, run_selfplay
from .toy_games import (
    make_blotto,
    make_matching_pennies,
    make_random_zero_sum,
    make_rps,
    make_tree_game,
    minimax_action,
    minimax_values,
)


class ConfigError(ValueError):
    """Malformed, unknown, or inconsistent experiment configuration."""


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

def _parse_int(v):
    return int(v)


def _parse_float(v):
    return float(v)


def _parse_str(v):
    return str(v)


def _parse_floats(v):
    return tuple(float(x) for x in str(v).split(","))


def _parse_ints(v):
    return tuple(int(x) for x in str(v).split(","))


def _parse_strs(v):
    return tuple(x.strip() for x in str(v).split(","))


_REQUIRED = object()

# key -> (parser, default); _REQUIRED means the key must be present
_SCHEMAS = {
    "blotto-sweep": {
        "coins": (_parse_int, 10),
        "fields": (_parse_int, 3),
        "lambdas": (_parse_floats, (0.01, 0.1, 1.0, 10.0)),
        "iterations": (_parse_int, 10_000),
        "seeds": (_parse_ints, (1, 2, 3)),
        "eta": (_parse_str, "constant"),
        "mode": (_parse_str, "sampled"),
    },
    "verify-bounds": {
        "num_games": (_parse_int, 20),
        "num_actions": (_parse_int, 10),
        "game_seed": (_parse_int, 1000),
        "lambdas": (_parse_floats, (0.03, 0.1, 0.3, 1.0)),
        "iterations": (_parse_int, 100_000),
        "seeds": (_parse_ints, (1, 2, 3)),
        "eta": (_parse_str, "constant"),
        "mode": (_parse_str, "exact"),
    },
    "qre-check": {
        "games": (_parse_strs, ("rps", "pennies")),
        "lambdas": (_parse_floats, (0.3, 1.0)),
        "anchor": (_parse_str, "uniform"),
        "iterations": (_parse_int, 100_000),
        "seeds": (_parse_ints, (1,)),
        "eta": (_parse_str, "constant"),
        "mode": (_parse_str, "exact"),
        "damping": (_parse_float, 0.5),
        "qre_max_iters": (_parse_int, 100_000),
    },
    "mcts-eval": {
        "branching": (_parse_int, 3),
        "depth": (_parse_int, 4),
        "num_trees": (_parse_int, 200),
        "tree_seed": (_parse_int, 5000),
        "search_iterations": (_parse_int, 50),
        "c_pucts": (_parse_floats, (1e-6, 0.5, 1.0, 2.0, 5.0, 10.0, 1e4)),
        "match_games": (_parse_int, 1000),
        "temperature": (_parse_float, 1.0),
        "concentration": (_parse_float, 2.0),
        "anchor_noise": (_parse_float, 0.5),
        "value_noise": (_parse_float, 0.2),
        "seeds": (_parse_ints, (7,)),
    },
}


def parse_config(text: str, experiment: str) -> dict:
    """Parse and validate a flat key-value config for one experiment kind."""
    if experiment not in _SCHEMAS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    schema = _SCHEMAS[experiment]
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "experiment":
            if value != experiment:
                raise ConfigError(f"config is for experiment {value!r}, not {experiment!r}")
            continue
        if key not in schema:
            raise ConfigError(f"line {lineno}: unknown key {key!r} for {experiment}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    cfg = {"experiment": experiment}
    for key, (parser, default) in schema.items():
        if key in raw:
            try:
                cfg[key] = parser(raw[key])
            except ValueError as exc:
                raise ConfigError(f"key {key!r}: {exc}") from exc
        elif default is _REQUIRED:
            raise ConfigError(f"missing required key {key!r}")
        else:
            cfg[key] = default
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: dict) -> None:
    seeds = cfg["seeds"]
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be distinct")
    if "lambdas" in cfg and any(lam <= 0 for lam in cfg["lambdas"]):
        raise ConfigError("lambdas must be positive (lambda = 0 is the Hedge baseline)")
    if "mode" in cfg and cfg["mode"] not in ("exact", "sampled"):
        raise ConfigError(f"mode must be 'exact' or 'sampled', got {cfg['mode']!r}")
    if cfg["experiment"] in ("verify-bounds", "qre-check") and cfg.get("mode") != "exact":
        raise ConfigError(f"{cfg['experiment']} requires mode = exact")
    if "eta" in cfg:
        eta = cfg["eta"]
        if eta not in ("constant", "adaptive"):
            try:
                float(eta)
            except ValueError:
                raise ConfigError(
                    f"eta must be 'constant', 'adaptive', or a number, got {eta!r}"
                ) from None
    if cfg["experiment"] == "qre-check":
        for g in cfg["games"]:
            if g not in ("rps", "pennies"):
                raise ConfigError(f"unknown game {g!r} (expected rps or pennies)")
        if cfg["anchor"] not in ("uniform", "tilted"):
            raise ConfigError("anchor must be 'uniform' or 'tilted'")


def _canon_value(v) -> str:
    if isinstance(v, tuple):
        return ",".join(_canon_value(x) for x in v)
    if isinstance(v, float):
        return fmt9(v)
    return str(v)


def config_hash(cfg: dict) -> str:
    text = "\n".join(f"{k}={_canon_value(cfg[k])}" for k in sorted(cfg))
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def load_config(path: str, experiment: str) -> dict:
    with open(path) as fh:
        return parse_config(fh.read(), experiment)


# ---------------------------------------------------------------------------
# Shared pieces
# ---------------------------------------------------------------------------

def _solver_eta(cfg_eta: str):
    """Map the config eta field to SolverSpec kwargs."""
    if cfg_eta == "adaptive":
        return {"eta_mode": "adaptive"}
    if cfg_eta == "constant":
        return {}
    return {"eta": float(cfg_eta)}


def _pmap(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with get_context("spawn").Pool(processes=jobs) as pool:
        return pool.map(fn, items)


def write_rows(path: str, header: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _flag(b) -> str:
    return "true" if b else "false"


# ---------------------------------------------------------------------------
# blotto-sweep
# ---------------------------------------------------------------------------

BLOTTO_COLUMNS = (
    "algorithm", "lambda", "seed", "T",
    "kl_to_anchor", "exploitability", "regret", "config_hash",
)


def _blotto_cell(args):
    cfg, algorithm, lam, seed = args
    game = make_blotto(cfg["coins"], cfg["fields"])
    eta_kwargs = _solver_eta(cfg["eta"])
    if algorithm == "pikl":
        spec = SolverSpec(kind="pikl", lam=lam, **eta_kwargs)
    elif algorithm == "hedge":
        spec = SolverSpec(kind="hedge", **eta_kwargs)
    else:
        spec = SolverSpec(kind="rm")
    result = run_selfplay(game, [spec, spec], cfg["iterations"], mode=cfg["mode"], seed=seed)
    final = [d for d in result.diagnostics if d.t == cfg["iterations"]]
    return {
        "algorithm": algorithm,
        "lambda": lam,
        "seed": seed,
        "kl_to_anchor": max(d.kl_avg for d in final),
        "exploitability": exploitability(game, result.avg_profile).max_gap,
        "regret": max(d.regret for d in final),
    }


def run_blotto_sweep(cfg: dict, jobs: int = 1) -> list[dict]:
    """Anchor-distance/exploitability tradeoff on Blotto across the lambda grid,
    with unregularized Hedge and Regret Matching baselines (lambda column 0)."""
    cells = [(cfg, "hedge", 0.0, s) for s in cfg["seeds"]]
    cells += [(cfg, "rm", 0.0, s) for s in cfg["seeds"]]
    cells += [(cfg, "pikl", lam, s) for lam in cfg["lambdas"] for s in cfg["seeds"]]
    results = _pmap(_blotto_cell, cells, jobs)
    return sorted(results, key=lambda r: (r["algorithm"], r["lambda"], r["seed"]))


def blotto_rows(cfg: dict, results: list[dict]) -> list[list[str]]:
    h = config_hash(cfg)
    return [
        [
            r["algorithm"], fmt9(r["lambda"]), str(r["seed"]), str(cfg["iterations"]),
            fmt9(r["kl_to_anchor"]), fmt9(r["exploitability"]), fmt9(r["regret"]), h,
        ]
        for r in results
    ]


# ---------------------------------------------------------------------------
# verify-bounds
# ---------------------------------------------------------------------------

BOUNDS_COLUMNS = (
    "game_seed", "seed", "lambda", "T", "player", "eta", "eta_condition_held",
    "regret", "regret_raw", "kl_avg", "kl_bound", "kl_bound_pass",
    "exploitability", "expl_bound", "nash_bound_pass", "config_hash",
)


def _bounds_cell(args):
    cfg, game_seed, lam, seed = args
    n = cfg["num_actions"]
    game = make_random_zero_sum(n, game_seed)
    eta_kwargs = _solver_eta(cfg["eta"])
    spec = SolverSpec(kind="pikl", lam=lam, **eta_kwargs)
    t_max = cfg["iterations"]
    result = run_selfplay(game, [spec, spec], t_max, mode="exact", seed=seed)
    final = {d.player: d for d in result.diagnostics if d.t == t_max}
    beta = anchor_log_range(uniform_policy(n))
    d_range = game.reward_range(0)
    expl = exploitability(game, result.avg_profile).max_gap
    expl_bound = lam * beta + 5.0 * d_range / math.sqrt(t_max)
    rows = []
    for player in (0, 1):
        diag = final[player]
        kl_bound = (diag.regret / t_max + d_range) / lam
        eta = diag.eta
        rows.append(
            {
                "game_seed": game_seed,
                "seed": seed,
                "lambda": lam,
                "player": player,
                "eta": eta,
                "eta_condition_held": eta <= 1.0 / (lam * beta + 2.0 * d_range) + 1e-12,
                "regret": diag.regret,
                "regret_raw": diag.regret_raw,
                "kl_avg": diag.kl_avg,
                "kl_bound": kl_bound,
                "kl_bound_pass": diag.kl_avg <= kl_bound + 1e-9,
                "exploitability": expl,
                "expl_bound": expl_bound,
                "nash_bound_pass": expl <= expl_bound + 1e-9,
            }
        )
    return rows


def run_verify_bounds(cfg: dict, jobs: int = 1) -> list[dict]:
    """Measure anchor-distance and Nash-gap bounds on a random zero-sum corpus.

    Per (game, lambda, seed, player): the measured KL(avg || anchor) against its
    bound (regret/T + D)/lambda, and the profile's max Nash gap against
    lambda*beta + 5*D/sqrt(T) (a finite-T allowance around the limit statement).
    """
    cells = [
        (cfg, cfg["game_seed"] + g, lam, s)
        for g in range(cfg["num_games"])
        for lam in cfg["lambdas"]
        for s in cfg["seeds"]
    ]
    nested = _pmap(_bounds_cell, cells, jobs)
    rows = [r for cell in nested for r in cell]
    return sorted(rows, key=lambda r: (r["game_seed"], r["lambda"], r["seed"], r["player"]))


def bounds_rows(cfg: dict, results: list[dict]) -> list[list[str]]:
    h = config_hash(cfg)
    return [
        [
            str(r["game_seed"]), str(r["seed"]), fmt9(r["lambda"]), str(cfg["iterations"]),
            str(r["player"]), fmt9(r["eta"]), _flag(r["eta_condition_held"]),
            fmt9(r["regret"]), fmt9(r["regret_raw"]), fmt9(r["kl_avg"]), fmt9(r["kl_bound"]),
            _flag(r["kl_bound_pass"]), fmt9(r["exploitability"]), fmt9(r["expl_bound"]),
            _flag(r["nash_bound_pass"]), h,
        ]
        for r in results
    ]


def bounds_report_json(cfg: dict, results: list[dict]) -> str:
    rows = []
    for r in results:
        row = dict(r)
        for key, value in row.items():
            if isinstance(value, float):
                row[key] = float(fmt9(value))
            elif isinstance(value, (bool, np.bool_)):
                row[key] = bool(value)
        rows.append(row)
    doc = {
        "config_hash": config_hash(cfg),
        "iterations": cfg["iterations"],
        "rows": rows,
        "summary": {
            "cells": len(rows),
            "kl_bound_failures": sum(not r["kl_bound_pass"] for r in results),
            "nash_bound_failures": sum(not r["nash_bound_pass"] for r in results),
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# qre-check
# ---------------------------------------------------------------------------

QRE_COLUMNS = (
    "game", "lambda", "seed", "T", "linf_gap_p0", "linf_gap_p1",
    "qre_residual", "qre_converged", "config_hash",
)


def _qre_game(name):
    return make_rps() if name == "rps" else make_matching_pennies()


def _qre_anchors(cfg, game):
    if cfg["anchor"] == "uniform":
        return [uniform_policy(n) for n in game.action_counts]
    # tilted: player 0 geometric weights (0.9, 0.1 for two actions), others uniform
    n0 = game.action_counts[0]
    w = 9.0 ** -np.arange(n0)
    anchors = [w / w.sum()]
    anchors += [uniform_policy(n) for n in game.action_counts[1:]]
    return anchors


def _qre_cell(args):
    cfg, name, lam, seed = args
    game = _qre_game(name)
    anchors = _qre_anchors(cfg, game)
    qre = anchored_qre(
        game, anchors, lam, max_iters=cfg["qre_max_iters"], damping=cfg["damping"]
    )
    row = {
        "game": name,
        "lambda": lam,
        "seed": seed,
        "qre_residual": qre.residual,
        "qre_converged": bool(qre.converged),
        "linf_gap_p0": None,
        "linf_gap_p1": None,
    }
    if not qre.converged:
        return row
    eta_kwargs = _solver_eta(cfg["eta"])
    specs = [
        SolverSpec(kind="pikl", lam=lam, anchor=anchors[i], **eta_kwargs)
        for i in range(game.num_players)
    ]
    result = run_selfplay(game, specs, cfg["iterations"], mode="exact", seed=seed)
    for i in range(game.num_players):
        gap = float(np.abs(result.avg_profile[i] - qre.profile[i]).max())
        row[f"linf_gap_p{i}"] = gap
    return row


def run_qre_check(cfg: dict, jobs: int = 1) -> list[dict]:
    """Compare piKL exact self-play averages to the anchored fixed-point oracle."""
    cells = [
        (cfg, name, lam, s)
        for name in cfg["games"]
        for lam in cfg["lambdas"]
        for s in cfg["seeds"]
    ]
    results = _pmap(_qre_cell, cells, jobs)
    return sorted(results, key=lambda r: (r["game"], r["lambda"], r["seed"]))


def qre_rows(cfg: dict, results: list[dict]) -> list[list[str]]:
    h = config_hash(cfg)
    out = []
    for r in results:
        gap0 = "" if r["linf_gap_p0"] is None else fmt9(r["linf_gap_p0"])
        gap1 = "" if r["linf_gap_p1"] is None else fmt9(r["linf_gap_p1"])
        out.append(
            [
                r["game"], fmt9(r["lambda"]), str(r["seed"]), str(cfg["iterations"]),
                gap0, gap1, fmt9(r["qre_residual"]), _flag(r["qre_converged"]), h,
            ]
        )
    return out


# ---------------------------------------------------------------------------
# mcts-eval
# ---------------------------------------------------------------------------

MCTS_COLUMNS = (
    "c_puct", "top1_agreement_with_anchor_argmax", "top1_agreement_with_minimax",
    "winrate_vs_prior", "stderr", "seed", "config_hash",
)


def _mcts_cell(args):
    cfg, c_puct, seed = args
    num_trees = cfg["num_trees"]
    forests = [
        make_tree_game(
            cfg["branching"], cfg["depth"], cfg["tree_seed"] + i,
            concentration=cfg["concentration"], anchor_noise=cfg["anchor_noise"],
            value_noise=cfg["value_noise"],
        )
        for i in range(num_trees)
    ]
    search = SearchConfig(
        iterations=cfg["search_iterations"], c_puct=c_puct,
        temperature=cfg["temperature"], seed=seed,
    )
    anchor_hits = 0
    minimax_hits = 0
    for game, anchor, model in forests:
        root = run_search(game, model, search)
        move = int(np.argmax(visits_to_policy(root, 0.0)))
        v0 = minimax_values(game)
        anchor_hits += move == int(np.argmax(anchor.policy(0)))
        minimax_hits += move == minimax_action(game, v0, 0)
    rng = np.random.default_rng([seed, int(round(c_puct * 1e7))])
    scores = np.empty(cfg["match_games"])
    for g in range(cfg["match_games"]):
        game, anchor, model = forests[g % num_trees]
        mcts_agent = MctsAgent(model, search)
        prior_agent = PriorAgent(model)
        mcts_is_p0 = (g // num_trees + g) % 2 == 0
        agents = (mcts_agent, prior_agent) if mcts_is_p0 else (prior_agent, mcts_agent)
        r0 = play_one(game, agents, cfg["temperature"], rng)
        r = r0 if mcts_is_p0 else -r0
        scores[g] = 1.0 if r > 0 else (0.5 if r == 0 else 0.0)
    match = summarize_scores(scores)
    return {
        "c_puct": c_puct,
        "seed": seed,
        "top1_agreement_with_anchor_argmax": anchor_hits / num_trees,
        "top1_agreement_with_minimax": minimax_hits / num_trees,
        "winrate_vs_prior": match.winrate,
        "stderr": match.stderr,
    }


def run_mcts_eval(cfg: dict, jobs: int = 1) -> list[dict]:
    """Prediction-vs-strength sweep over c_puct on a pool of synthetic trees:
    top-1 agreement of the searched move with the anchor argmax and with the
    exact minimax move, plus head-to-head winrate against prior sampling."""
    cells = [(cfg, c, s) for c in cfg["c_pucts"] for s in cfg["seeds"]]
    results = _pmap(_mcts_cell, cells, jobs)
    return sorted(results, key=lambda r: (r["seed"], r["c_puct"]))


def mcts_rows(cfg: dict, results: list[dict]) -> list[list[str]]:
    h = config_hash(cfg)
    return [
        [
            fmt9(r["c_puct"]), fmt9(r["top1_agreement_with_anchor_argmax"]),
            fmt9(r["top1_agreement_with_minimax"]), fmt9(r["winrate_vs_prior"]),
            fmt9(r["stderr"]), str(r["seed"]), h,
        ]
        for r in results
    ]


# ---------------------------------------------------------------------------
# Command entry points (shared by the CLI and the tests)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CommandOutcome:
    rows: list
    hard_failures: int  # KL-bound rows that failed (nonzero process exit)


def run_command(experiment: str, config_path: str, out_path: str, jobs: int = 1,
                as_json: bool = False) -> CommandOutcome:
    cfg = load_config(config_path, experiment)
    if experiment == "blotto-sweep":
        results = run_blotto_sweep(cfg, jobs)
        write_rows(out_path, BLOTTO_COLUMNS, blotto_rows(cfg, results))
        return CommandOutcome(rows=results, hard_failures=0)
    if experiment == "verify-bounds":
        results = run_verify_bounds(cfg, jobs)
        if as_json:
            with open(out_path, "w", newline="") as fh:
                fh.write(bounds_report_json(cfg, results) + "\n")
        else:
            write_rows(out_path, BOUNDS_COLUMNS, bounds_rows(cfg, results))
        failures = sum(not r["kl_bound_pass"] for r in results)
        return CommandOutcome(rows=results, hard_failures=failures)
    if experiment == "qre-check":
        results = run_qre_check(cfg, jobs)
        write_rows(out_path, QRE_COLUMNS, qre_rows(cfg, results))
        return CommandOutcome(rows=results, hard_failures=0)
    if experiment == "mcts-eval":
        results = run_mcts_eval(cfg, jobs)
        write_rows(out_path, MCTS_COLUMNS, mcts_rows(cfg, results))
        return CommandOutcome(rows=results, hard_failures=0)
    raise ConfigError(f"unknown experiment {experiment!r}")
