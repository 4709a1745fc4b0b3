"""Subcommand implementations and artifact writing."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping

from .. import __version__
from ..clans import ClanLimits, clan_tail_estimates, perfect_samples
from ..connectivity import Box, SpaceTimePoint, estimate_G, is_regular
from ..environment import DisorderSpec, check_hypotheses, sample_diagnostics, sample_environment
from ..lattice import box
from ..models import make_model
from ..multiscale import (ScaledSequence, empirical_good_probability, event_A_check, feasible_parameters,
                          initial_scale_probe)
from ..stats import log_tail_fit
from .config import config_hash

OUT_ENV = "CLANSIM_OUT"
DEFAULT_OUT = "clansim-out"


def fmt(v) -> str:
    """Text form of one CSV cell; floats carry 17 significant digits."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, (tuple, list)):
        return " ".join(fmt(x) for x in v)
    return str(v)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _fit_dict(fit) -> dict:
    return {"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2, "points": fit.n}


class Result:
    """Tabular data plus a JSON summary produced by one subcommand."""

    def __init__(self, columns: list[str], rows: list[list], summary: dict):
        self.columns = columns
        self.rows = rows
        self.summary = summary


def build(cfg: Mapping):
    mcfg = dict(cfg["model"])
    if mcfg.get("capacity") == "inf":
        mcfg["capacity"] = math.inf
    model = make_model(mcfg)
    spec = DisorderSpec.from_dict(cfg["disorder"])
    core = box(cfg["region"]["center"], cfg["region"]["radius"])
    return model, spec, core


def _environment(cfg):
    model, spec, core = build(cfg)
    return sample_environment(model, spec, core, cfg["seed"], 0), core


def run_sample(cfg) -> Result:
    env, core = _environment(cfg)
    p = cfg["params"]
    draws = perfect_samples(env, cfg["replicas"], core, ClanLimits(max_cylinders=p["max_cylinders"]),
                            cfg["seed"], workers=cfg["workers"])
    rows, status, seen = [], {}, {}
    for r, s in enumerate(draws):
        status[s.status] = status.get(s.status, 0) + 1
        if s.configuration is None:
            continue
        for a in sorted(s.configuration):
            i = env.animal_id(a)
            seen[i] = a
            rows.append([r, i, s.configuration[a]])
    animals = [{"id": i, "support": [list(x) for x in a.support], "kind": a.kind} for i, a in sorted(seen.items())]
    n_closed = status.get("closed", 0)
    summary = {"status_counts": status, "samples": len(draws),
               "mean_animals": (sum(r[2] for r in rows) / n_closed) if n_closed else None,
               "animals": animals}
    return Result(["replica", "animal_id", "multiplicity"], rows, summary)


def tail_table(env, x, thresholds: Mapping, replicas: int, seed: int, q: float,
               limits: ClanLimits | None = None, workers: int = 1) -> Result:
    """Empirical clan tails at ``x`` with log-linear fits against L and ln^q(1+T)."""
    table = clan_tail_estimates(env, x, thresholds, replicas, seed, limits, workers)
    rows = []
    for T, e in table.tl_rows:
        rows.append(["TL", T, math.log1p(T) ** q, e.n, e.value, e.ci_low, e.ci_high])
    for L, e in table.sd_rows:
        rows.append(["SD", L, L, e.n, e.value, e.ci_low, e.ci_high])
    summary = {
        "site": list(table.site), "q": q, "status_counts": table.status_counts,
        "sd_fit": _fit_dict(table.sd_fit()), "tl_fit": _fit_dict(table.tl_fit(q)),
        "mean_ss": None if table.mean_ss is None else
        {"estimate": table.mean_ss.value, "ci": [table.mean_ss.ci_low, table.mean_ss.ci_high]},
    }
    return Result(["statistic", "threshold", "abscissa", "closed", "estimate", "ci_low", "ci_high"], rows, summary)


def run_clan_stats(cfg) -> Result:
    env, _ = _environment(cfg)
    p = cfg["params"]
    q = p["q"]
    if q is None:
        q = feasible_parameters(cfg["model"]["d"]).q
    return tail_table(env, tuple(p["x"]), {"T": p["T"], "L": p["L"]}, cfg["replicas"], cfg["seed"], q,
                      ClanLimits(max_cylinders=p["max_cylinders"]), cfg["workers"])


def run_connectivity(cfg) -> Result:
    env, _ = _environment(cfg)
    p = cfg["params"]
    X = SpaceTimePoint(p["x"], p["t_x"])
    bx = None
    if p["box"] is not None:
        bx = Box(X, p["box"]["L"], p["box"]["T"], env.model.geometry().delta)
    rows = []
    for y in p["targets"]:
        Y = SpaceTimePoint(y, p["t_y"])
        e = estimate_G(env, X, Y, bx, cfg["replicas"], cfg["seed"], cfg["workers"])
        rows.append([X.x, Y.x, X.t, Y.t, None if bx is None else bx.L, None if bx is None else bx.T,
                     cfg["replicas"], e.value, e.ci_low, e.ci_high, cfg["seed"]])
    positive = [(max(abs(a - b) for a, b in zip(r[0], r[1])), r[7]) for r in rows]
    fit = log_tail_fit([d for d, _ in positive], [g for _, g in positive])
    summary = {"distance_fit": _fit_dict(fit), "box": p["box"]}
    return Result(["x", "y", "t_X", "t_Y", "L", "T", "replicas", "estimate", "ci_low", "ci_high", "seed"],
                  rows, summary)


def run_regularity(cfg) -> Result:
    env, _ = _environment(cfg)
    p = cfg["params"]
    d = cfg["model"]["d"]
    sites = p["sites"] or [cfg["region"]["center"]]
    verdicts = [is_regular(env, tuple(s), p["m"], p["L"], p["T"], cfg["replicas"], p["confidence"],
                           cfg["seed"], p["delta"], cfg["workers"]) for s in sites]
    rows = [[v.site, v.m, v.L, v.T, v.delta, cfg["replicas"], v.estimate.value, v.estimate.ci_low,
             v.estimate.ci_high, v.threshold, v.verdict] for v in verdicts]
    R = p["R"] if p["R"] is not None else feasible_parameters(d).R
    ok, centers = event_A_check(verdicts, R)
    counts = {k: sum(v.verdict == k for v in verdicts) for k in ("regular", "singular", "inconclusive")}
    summary = {"counts": counts, "R": R, "event_A": ok, "centers": [list(c) for c in centers],
               "vertical_integral": "exact union-of-intervals measure per replica"}
    return Result(["site", "m", "L", "T", "delta", "replicas", "estimate", "ci_low", "ci_high", "threshold",
                   "verdict"], rows, summary)


def run_multiscale(cfg) -> Result:
    model, spec, _ = build(cfg)
    p = cfg["params"]
    d = cfg["model"]["d"]
    P = feasible_parameters(d, p["a"], p["m0"], p["m_inf"], p["L0"])
    columns = ["scale", "L_k", "log10_T", "estimate", "ci_low", "ci_high", "target"]
    if not getattr(P, "feasible", True):
        return Result(columns, [], P.to_dict())
    seq = ScaledSequence(p["L0"], P.alpha, P.nu)
    rows, refused = [], []
    for k in range(p["n_scales"]):
        Lk = seq.scale(k)
        log10_L = float(seq.ctx.log10(Lk))
        target = 1.0 - float(seq.ctx.power(Lk, -P.p))
        est = [None, None, None]
        if k in p["simulate"]:
            if k >= 2:
                refused.append({"scale": k, "log10_T": seq.log10_height(k),
                                "message": "box height is astronomically large; not simulated"})
            else:
                g = empirical_good_probability(model, spec, p["m"], float(Lk), seq.T_fn(), P.p,
                                               p["env_replicas"], cfg["replicas"], cfg["seed"],
                                               workers=cfg["workers"])
                est = [g.estimate.value, g.estimate.ci_low, g.estimate.ci_high]
        rows.append([k, float(Lk) if log10_L < 300 else math.inf, seq.log10_height(k), *est, target])
    decrement = [float(seq.ctx.power(seq.scale(k), -P.theta0)) for k in range(p["n_scales"])]
    summary = {
        "feasible": True, "parameters": P.to_dict(),
        "mass_decrement": {"recursion": "m[k+1] >= m[k] - a0 * L[k]**(-theta0)", "a0": "free symbol",
                           "theta0": P.theta0, "coefficient_of_a0": decrement},
        "refused": refused,
    }
    return Result(columns, rows, summary)


def run_disorder_check(cfg) -> Result:
    model, spec, core = build(cfg)
    p = cfg["params"]
    report = check_hypotheses(model, spec, p["epsilon"], core, cfg["replicas"], cfg["seed"], p["a"],
                              workers=cfg["workers"])
    diags = sample_diagnostics(model, spec, core, cfg["replicas"], cfg["seed"], workers=cfg["workers"])
    rows = [[i, *dg.as_row()] for i, dg in enumerate(diags)]
    if p["rho"] is not None:
        ok, est = initial_scale_probe(model, spec, p["rho"], p["epsilon_rho"], core, cfg["replicas"],
                                      cfg["seed"], cfg["workers"])
        report["initial_scale"] = {"rho": p["rho"], "epsilon_rho": p["epsilon_rho"], "pass": ok,
                                   "estimate": est.value, "ci": [est.ci_low, est.ci_high]}
    return Result(["replica", "upsilon", "psi", "xi", "u1", "u2"], rows, report)


COMMANDS = {
    "sample": run_sample,
    "clan-stats": run_clan_stats,
    "connectivity": run_connectivity,
    "regularity": run_regularity,
    "multiscale": run_multiscale,
    "disorder-check": run_disorder_check,
}


def output_dir(cfg: Mapping) -> Path:
    return Path(cfg.get("out") or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def write_artifacts(cfg: Mapping, result: Result, elapsed: float) -> dict[str, Path]:
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    cmd = cfg["command"]
    digest = config_hash(cfg)
    meta = {"config_hash": digest, "seed": cfg["seed"], "version": __version__}

    buf = io.StringIO()
    buf.write(f"# clansim {__version__} command={cmd} config_hash={digest} seed={cfg['seed']}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(result.columns)
    for row in result.rows:
        w.writerow([fmt(v) for v in row])
    paths = {"csv": out / f"{cmd}.csv", "json": out / f"{cmd}.json",
             "config": out / f"{cmd}.config.json", "meta": out / f"{cmd}.meta.json"}
    paths["csv"].write_text(buf.getvalue())
    summary = {"metadata": meta, "command": cmd, "summary": _jsonable(result.summary)}
    paths["json"].write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    echo = {k: v for k, v in cfg.items() if k not in ("out", "workers")}
    paths["config"].write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n")
    run_meta = {**meta, "created": datetime.now(timezone.utc).isoformat(), "workers": cfg["workers"],
                "elapsed_seconds": elapsed}
    paths["meta"].write_text(json.dumps(run_meta, indent=2, sort_keys=True) + "\n")
    return paths


def run(cfg: Mapping) -> dict[str, Path]:
    """Execute a resolved configuration and write its artifacts."""
    start = time.perf_counter()
    result = COMMANDS[cfg["command"]](cfg)
    return write_artifacts(cfg, result, time.perf_counter() - start)
