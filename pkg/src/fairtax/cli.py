"""Command-line harness: single ranking runs, tax-rate sweeps, continuity
reports, synthetic instance generation and metric recomputation.

Exit codes: 0 success, 1 numerical failure (non-convergence), 2 input
error. All randomness is seeded through flags, so identical flags produce
byte-identical output files.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import io as fio
from .core import (
    ConvergenceError,
    FairtaxError,
    RankingConfig,
    RankingLists,
    RankingProbabilities,
    ScoreMatrix,
    TradeoffPoint,
    ValidationError,
    check_ctr_range,
    compute_utilities,
    expected_utilities,
)
from .metrics import ecn, ecpm, gini, pot, pot_bound
from .policies import greedy_popularity_tax
from .sampling import sample_lists
from .transport import SinkhornState, project_with_state, transport_cost
from .waterfill import build_problem, solve

DEFAULT_T_GRID = "0,0.25,0.5,1,2,4,8"


@dataclass(frozen=True)
class PipelineResult:
    """Artifacts of one end-to-end run plus per-stage wall-clock seconds."""

    exposure: object
    probs: RankingProbabilities
    state: SinkhornState
    lists: RankingLists
    timings: dict


def run_pipeline(scores: ScoreMatrix, config: RankingConfig) -> PipelineResult:
    """Allocate exposure, project onto probabilities, sample lists."""
    if config.mode == "ctr":
        check_ctr_range(scores)
    timings = {}
    t0 = time.perf_counter()
    problem = build_problem(scores, config)
    timings["build"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    exposure = solve(problem)
    timings["solve"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    probs, state = project_with_state(scores, exposure, config)
    timings["project"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    lists = sample_lists(probs, config.seed, scores)
    timings["sample"] = time.perf_counter() - t0
    return PipelineResult(exposure=exposure, probs=probs, state=state,
                          lists=lists, timings=timings)


def synth_scores(num_users: int, num_items: int, distribution: str = "uniform",
                 seed: int = 0) -> ScoreMatrix:
    """Generate a ctr-mode score matrix for tests and demos.

    powerlaw draws item base popularity proportional to 1/rank with
    multiplicative user noise in [0.5, 1.5], clamped to [0, 1]; the head
    items therefore hold most of the score mass (long-tail shape).
    """
    if num_users < 1 or num_items < 1:
        raise ValidationError("num_users and num_items must be >= 1")
    rng = np.random.default_rng(seed)
    if distribution == "uniform":
        w = rng.random((num_users, num_items))
    elif distribution == "powerlaw":
        base = 1.0 / (1.0 + np.arange(num_items))
        noise = rng.uniform(0.5, 1.5, size=(num_users, num_items))
        w = np.clip(base[None, :] * noise, 0.0, 1.0)
    else:
        raise ValidationError(f"unknown distribution {distribution!r}")
    return ScoreMatrix(w=w, gamma=np.ones(num_items))


def _expected_metrics(scores: ScoreMatrix, config: RankingConfig,
                      probs: RankingProbabilities) -> dict:
    v = expected_utilities(scores, probs, config.mode)
    out = {
        "ecn": ecn(v, scores.num_users),
        "gini": gini(v, scores.gamma),
        "accuracy": transport_cost(probs, scores),
    }
    if scores.bids is not None:
        out["ecpm"] = ecpm(v, scores.bids, scores.num_users)
    return out


def _realized_metrics(scores: ScoreMatrix, config: RankingConfig,
                      lists: RankingLists) -> dict:
    v = compute_utilities(scores, lists, config.mode)
    v_ctr = compute_utilities(scores, lists, "ctr")
    out = {
        "ecn": ecn(v, scores.num_users),
        "gini": gini(v, scores.gamma),
        "accuracy": float((scores.gamma * v_ctr.v).sum()),
    }
    if scores.bids is not None:
        out["ecpm"] = ecpm(v, scores.bids, scores.num_users)
    return out


def _compute_point(payload: dict) -> dict:
    """One sweep/continuity evaluation; module-level so it pickles."""
    scores = ScoreMatrix(w=payload["w"], gamma=payload["gamma"], bids=payload["bids"])
    config = RankingConfig(k=payload["k"], tax_rate=payload["t"],
                           lambda_ot=payload["lambda_ot"], seed=payload["seed"],
                           mode=payload["mode"])
    result = run_pipeline(scores, config)
    point = _expected_metrics(scores, config, result.probs)
    point["t"] = payload["t"]
    if payload.get("realized_pot"):
        v_ctr = compute_utilities(scores, result.lists, "ctr")
        point["accuracy"] = float((scores.gamma * v_ctr.v).sum())
    return point


def _baseline_point(payload: dict) -> dict:
    """Greedy additive-tax baseline evaluated on its realized lists."""
    scores = ScoreMatrix(w=payload["w"], gamma=payload["gamma"], bids=payload["bids"])
    lists = greedy_popularity_tax(scores, payload["t"], payload["k"],
                                  mode=payload["mode"])
    v = compute_utilities(scores, lists, payload["mode"])
    return {"t": payload["t"], "ecn": ecn(v, scores.num_users),
            "gini": gini(v, scores.gamma)}


def _map_jobs(fn, payloads, jobs):
    if jobs is None:
        jobs = os.cpu_count() or 1
    jobs = max(1, min(int(jobs), len(payloads)))
    if jobs == 1:
        return [fn(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, payloads))


def _base_payload(scores: ScoreMatrix, config: RankingConfig, **extra) -> dict:
    payload = {"w": np.asarray(scores.w), "gamma": np.asarray(scores.gamma),
               "bids": None if scores.bids is None else np.asarray(scores.bids),
               "k": config.k, "lambda_ot": config.lambda_ot,
               "seed": config.seed, "mode": config.mode}
    payload.update(extra)
    return payload


def sweep_points(scores: ScoreMatrix, config: RankingConfig, t_grid,
                 jobs=None, realized_pot: bool = False):
    """Evaluate the pipeline across the tax-rate grid.

    Returns (points, pot_bounds). POT is measured against a t = 0 run
    (reused from the grid when present) on expected utilities, or on
    realized lists when realized_pot is set.
    """
    ts = [float(t) for t in t_grid]
    if not ts:
        raise ValidationError("t grid must be nonempty")
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValidationError("t grid must be strictly ascending")
    work = list(ts)
    if 0.0 not in work:
        work.append(0.0)
    base = _base_payload(scores, config, realized_pot=realized_pot)
    results = _map_jobs(_compute_point, [dict(base, t=t) for t in work], jobs)
    acc0 = results[work.index(0.0)]["accuracy"]
    points = [
        TradeoffPoint(tax_rate=r["t"], ecn=r["ecn"], ecpm=r.get("ecpm"),
                      gini=r["gini"], pot=pot(acc0, r["accuracy"]))
        for r in results[:len(ts)]
    ]
    bounds = [pot_bound(scores.num_users, t) for t in ts]
    return points, bounds


def parse_t_grid(text: str) -> list[float]:
    """Parse "a,b,c" or "start:stop:count" (inclusive linspace) grids."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValidationError(f"grid syntax is start:stop:count, got {text!r}")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ValidationError("grid count must be >= 1")
        grid = [start] if count == 1 else np.linspace(start, stop, count).tolist()
    else:
        grid = [float(tok) for tok in text.split(",") if tok.strip()]
    if not grid:
        raise ValidationError("t grid must be nonempty")
    if any(not np.isfinite(t) or t < 0 for t in grid):
        raise ValidationError("t grid values must be finite and >= 0")
    return grid


def _load_scores_from_args(args) -> ScoreMatrix:
    scores = fio.load_scores(args.scores, format=args.format, mode=args.mode)
    if getattr(args, "bids", None):
        mapping = fio.read_mapping(args.scores) if args.format == "triplet" else None
        item_ids = None if mapping is None else mapping["items"]
        bids = fio.load_bids(args.bids, scores.num_items, item_ids)
        override = 1.0 if getattr(args, "gamma_one", False) else None
        scores = fio.attach_bids(scores, bids, gamma_override=override)
    return scores


def _config_from_args(args, tax_rate=None) -> RankingConfig:
    return RankingConfig(
        k=args.k,
        tax_rate=args.tax_rate if tax_rate is None else tax_rate,
        lambda_ot=args.lambda_ot, seed=args.seed, mode=args.mode)


def cmd_rank(args) -> int:
    scores = _load_scores_from_args(args)
    config = _config_from_args(args)
    result = run_pipeline(scores, config)
    os.makedirs(args.out, exist_ok=True)
    fio.save_lists(result.lists, os.path.join(args.out, "lists.csv"))
    fio.save_probs(result.probs, os.path.join(args.out, "probs.csv"))
    summary = {
        "config": {"k": config.k, "tax_rate": config.tax_rate,
                   "lambda_ot": config.lambda_ot, "seed": config.seed,
                   "mode": config.mode},
        "expected": _expected_metrics(scores, config, result.probs),
        "realized": _realized_metrics(scores, config, result.lists),
        "sinkhorn": {"iterations": result.state.iterations_run,
                     "marginal_error": result.state.marginal_error,
                     "log_domain": result.state.log_domain,
                     "clamped_mass": result.state.clamped_mass},
        "timings_s": result.timings,
    }
    with open(os.path.join(args.out, "metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote lists.csv, probs.csv, metrics.json to {args.out} "
          f"(expected eCN={summary['expected']['ecn']:.6g}, "
          f"Gini={summary['expected']['gini']:.6g})")
    return 0


def cmd_sweep(args) -> int:
    scores = _load_scores_from_args(args)
    config = _config_from_args(args, tax_rate=0.0)
    grid = parse_t_grid(args.t_grid)
    points, bounds = sweep_points(scores, config, grid, jobs=args.jobs,
                                  realized_pot=args.realized_pot)
    fio.save_tradeoff_points(points, args.out, pot_bounds=bounds)
    print(f"wrote {len(points)} trade-off points to {args.out}")
    return 0


def cmd_continuity(args) -> int:
    scores = _load_scores_from_args(args)
    config = _config_from_args(args, tax_rate=0.0)
    centers = parse_t_grid(args.t_grid)
    delta = float(args.delta)
    if not np.isfinite(delta) or delta < 0:
        raise ValidationError(f"delta must be finite and >= 0, got {delta}")
    eval_ts = sorted({*centers, *(t + delta for t in centers)})
    base = _base_payload(scores, config)
    smooth = _map_jobs(_compute_point, [dict(base, t=t) for t in eval_ts], args.jobs)
    jumpy = _map_jobs(_baseline_point, [dict(base, t=t) for t in eval_ts], args.jobs)
    smooth_by_t = {r["t"]: r for r in smooth}
    jumpy_by_t = {r["t"]: r for r in jumpy}

    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([
            "t", "taxed_ecn", "taxed_gini", "taxed_ecn_jump", "taxed_gini_jump",
            "baseline_ecn", "baseline_gini", "baseline_ecn_jump",
            "baseline_gini_jump"])
        for t in centers:
            s0, s1 = smooth_by_t[t], smooth_by_t[t + delta]
            b0, b1 = jumpy_by_t[t], jumpy_by_t[t + delta]
            row = [t, s0["ecn"], s0["gini"],
                   abs(s1["ecn"] - s0["ecn"]), abs(s1["gini"] - s0["gini"]),
                   b0["ecn"], b0["gini"],
                   abs(b1["ecn"] - b0["ecn"]), abs(b1["gini"] - b0["gini"])]
            writer.writerow([format(x, ".12g") for x in row])
    print(f"wrote continuity report ({len(centers)} grid points) to {args.out}")
    return 0


def cmd_synth(args) -> int:
    scores = synth_scores(args.num_users, args.num_items,
                          distribution=args.distribution, seed=args.seed)
    fio.save_scores(scores, args.out)
    print(f"wrote {args.num_users}x{args.num_items} {args.distribution} "
          f"scores to {args.out}")
    return 0


def cmd_metrics(args) -> int:
    scores = _load_scores_from_args(args)
    lists = fio.load_lists(args.lists)
    config = RankingConfig(k=lists.k, tax_rate=0.0, seed=0, mode=args.mode)
    summary = _realized_metrics(scores, config, lists)
    text = json.dumps(summary, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(f"wrote metrics to {args.out}")
    else:
        print(text)
    return 0


def _add_input_flags(sub, with_ranking=True):
    sub.add_argument("--scores", required=True, help="score matrix CSV")
    sub.add_argument("--format", choices=("dense", "triplet"), default="dense",
                     help="score file layout (default dense)")
    sub.add_argument("--bids", default=None, help="optional item_id,bid CSV")
    sub.add_argument("--gamma-one", action="store_true",
                     help="force gamma=1 instead of log(bid) when bids are given")
    sub.add_argument("--mode", choices=("exposure", "ctr"), default="ctr")
    if with_ranking:
        sub.add_argument("--k", type=int, default=10, help="list size K")
        sub.add_argument("--lambda-ot", type=float, default=1.0,
                         help="entropy regularizer coefficient")
        sub.add_argument("--seed", type=int, default=0)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairtax",
        description="Fair re-ranking: taxed exposure allocation, Sinkhorn "
                    "projection, exact-marginal sampling and trade-off reports.")
    subs = parser.add_subparsers(dest="command", required=True)

    rank = subs.add_parser("rank", help="run the pipeline once")
    _add_input_flags(rank)
    rank.add_argument("--tax-rate", type=float, default=1.0)
    rank.add_argument("--out", required=True, help="output directory")
    rank.set_defaults(func=cmd_rank)

    sweep = subs.add_parser("sweep", help="trade-off table over a tax-rate grid")
    _add_input_flags(sweep)
    sweep.add_argument("--t-grid", default=DEFAULT_T_GRID,
                       help='comma list or "start:stop:count" (default %(default)s)')
    sweep.add_argument("--realized-pot", action="store_true",
                       help="measure POT on sampled lists instead of expectations")
    sweep.add_argument("--jobs", type=int, default=None,
                       help="parallel workers (default: available parallelism)")
    sweep.add_argument("--out", required=True, help="output CSV")
    sweep.set_defaults(func=cmd_sweep)

    cont = subs.add_parser("continuity",
                           help="metric jumps of the pipeline vs the greedy tax baseline")
    _add_input_flags(cont)
    cont.add_argument("--t-grid", default=DEFAULT_T_GRID,
                      help='comma list or "start:stop:count" of grid centers')
    cont.add_argument("--delta", type=float, default=1e-3,
                      help="tax-rate perturbation for jump measurement")
    cont.add_argument("--jobs", type=int, default=None)
    cont.add_argument("--out", required=True, help="output CSV")
    cont.set_defaults(func=cmd_continuity)

    synth = subs.add_parser("synth", help="generate a synthetic score matrix")
    synth.add_argument("--num-users", type=int, required=True)
    synth.add_argument("--num-items", type=int, required=True)
    synth.add_argument("--distribution", choices=("uniform", "powerlaw"),
                       default="uniform")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True, help="output CSV")
    synth.set_defaults(func=cmd_synth)

    met = subs.add_parser("metrics", help="recompute metrics from saved lists")
    _add_input_flags(met, with_ranking=False)
    met.add_argument("--lists", required=True, help="lists CSV from a rank run")
    met.add_argument("--out", default=None, help="optional output JSON")
    met.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FairtaxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
