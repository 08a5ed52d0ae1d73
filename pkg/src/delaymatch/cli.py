"""Command-line interface.

Subcommands:

    validate           check an instance bundle (metric + optional requests)
    embed              sample one embedded tree and print its statistics
    run                run an experiment batch, emit report text / JSON / CSV
    verify-app         Monte-Carlo checks of the alternating digestion laws
    verify-identities  exact cost-accounting identities on sampled runs
    gen                write instance bundles (random, two-point, gamma)
    report             recompute the summary of a trials CSV

Exit codes: 0 success, 1 user error (bad input or usage), 2 invariant
violation (a bug in the library, not in the input).  Reports are
deterministic byte for byte given the configuration; wall-clock timing goes
to stderr only.

Instance bundles are JSON objects holding either "points" + "dist" or
"coords", plus an optional "requests" array of {"point", "t"} rows.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .altpoisson import load_coloring, verify_digestion
from .core import make_requests, total_cost
from .diagnostics import track_potentials, verify_cost_identities
from .embedding import Hsbt, sample_hsbt, tree_metric
from .errors import InstanceLoadError, InvariantViolation, UserError
from .experiment import ExperimentConfig, run_experiment
from .instances import (
    GammaConfig,
    gen_adversarial_gamma,
    gen_random,
    gen_two_point,
)
from .metric import MetricSpace, stats, validate as validate_metric
from .offline import optimal_mpmd
from .stiltwalker import Engine, TimerMode

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    """Argparse that reports usage problems as user errors (exit code 1)."""

    def error(self, message):
        self.print_help(sys.stderr)
        raise UserError(message)


# ---------------------------------------------------------------------------
# bundle I/O
# ---------------------------------------------------------------------------

def load_bundle(path: str):
    """Instance bundle -> (space, requests or None)."""
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InstanceLoadError(f"cannot read instance {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise InstanceLoadError("instance file must hold a JSON object")
    if "dist" in obj:
        pts = obj.get("points") or [f"p{i}" for i in range(len(obj["dist"]))]
        space = validate_metric(pts, obj["dist"])
    elif "coords" in obj:
        from .metric import from_coords

        space = from_coords(obj["coords"], obj.get("points"))
    else:
        raise InstanceLoadError("instance needs either 'dist' or 'coords'")
    requests = None
    if "requests" in obj:
        try:
            arrivals = [(row["point"], float(row["t"])) for row in obj["requests"]]
        except (TypeError, KeyError) as exc:
            raise InstanceLoadError(f"bad request row: {exc}") from exc
        requests = make_requests(space, arrivals, require_even=False)
    return space, requests


def _write_atomic(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def save_bundle(space: MetricSpace, requests, path: str) -> None:
    obj = {"points": list(space.points), "dist": space.dist.tolist()}
    if requests is not None:
        obj["requests"] = [
            {"point": r.point, "t": r.t} for r in sorted(requests, key=lambda r: r.id)
        ]
    _write_atomic(path, json.dumps(obj, indent=1) + "\n")


def _out_dir(args) -> str | None:
    out = getattr(args, "out", None) or os.environ.get("DELAYMATCH_OUT")
    if out:
        os.makedirs(out, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_validate(args) -> int:
    space, requests = load_bundle(args.instance)
    st = stats(space)
    print(f"points {space.n}")
    print(f"d_min {st.d_min!r}")
    print(f"d_max {st.d_max!r}")
    print(f"aspect_ratio {st.aspect_ratio!r}")
    print(f"requests {len(requests) if requests is not None else 0}")
    print("ok")
    return 0


def _cmd_embed(args) -> int:
    space, _ = load_bundle(args.instance)
    rng = np.random.default_rng(args.seed)
    tree = sample_hsbt(space, rng)
    stretches = []
    for i, a in enumerate(space.points):
        for b in space.points[i + 1:]:
            d = space.distance(a, b)
            stretches.append(tree.point_distance(a, b) / d)
    print(f"vertices {len(tree)}")
    print(f"height {tree.height}")
    print(f"alpha {tree.alpha!r}")
    print(f"max_stretch {max(stretches)!r}")
    print(f"mean_stretch {float(np.mean(stretches))!r}")
    if args.out:
        out = _out_dir(args)
        tree.to_json(os.path.join(out, "tree.json"))
        print(f"wrote {os.path.join(out, 'tree.json')}")
    return 0


def _require_requests(requests) -> tuple:
    if not requests:
        raise UserError("this command needs an instance bundle with requests")
    return requests


def _cmd_run(args) -> int:
    t0 = time.perf_counter()
    space, requests = load_bundle(args.instance)
    requests = _require_requests(requests)
    fixed_tree = Hsbt.from_json(args.fixed_tree) if args.fixed_tree else None
    config = ExperimentConfig(
        space=space,
        requests=requests,
        trials=args.trials,
        master_seed=args.seed,
        mode=TimerMode(args.mode),
        flush=args.flush,
        penalty=args.penalty,
        fixed_tree=fixed_tree,
    )
    report = run_experiment(config)
    sys.stdout.write(report.to_text())
    out = _out_dir(args)
    if out:
        _write_atomic(
            os.path.join(out, "report.json"),
            json.dumps(report.to_dict(), indent=1) + "\n",
        )
        import io

        buf = io.StringIO()
        report.to_csv(buf)
        _write_atomic(os.path.join(out, "trials.csv"), buf.getvalue())
    print(f"runtime {time.perf_counter() - t0:.3f}s", file=sys.stderr)
    return 0


def _cmd_verify_app(args) -> int:
    coloring = load_coloring(args.coloring)
    rng = np.random.default_rng(args.seed)
    report = verify_digestion(coloring, args.lam, args.trials, rng)
    for key, value in report.to_dict().items():
        print(f"{key} {value!r}" if isinstance(value, float) else f"{key} {value}")
    if report.count_bound_violations > 0:
        raise InvariantViolation(
            f"{report.count_bound_violations} realizations broke the "
            "discontinuity count bound"
        )
    if not report.dominance_ok:
        raise InvariantViolation("alternation count dominance check failed")
    return 0


def _cmd_verify_identities(args) -> int:
    space, requests = load_bundle(args.instance)
    requests = _require_requests(requests)
    worst: dict[str, float] = {}
    for trial in range(args.trials):
        rng = np.random.default_rng(np.random.SeedSequence((args.seed, trial)))
        tree = sample_hsbt(space, rng)
        engine_seed = int(rng.integers(2**62))
        run = Engine(
            tree, requests, mode=TimerMode(args.mode), seed=engine_seed
        ).run(flush=True)
        space_t = tree_metric(tree)
        online_cost = total_cost(space_t, requests, run.schedule)
        offline = optimal_mpmd(space_t, requests)
        ledger = track_potentials(tree, run.trace, offline.schedule)
        rep = verify_cost_identities(tree, ledger, online_cost, offline.cost)
        d = rep.to_dict()
        for key in ("residual_space", "residual_time"):
            worst[key] = max(worst.get(key, 0.0), d[key])
        for key in ("time_bound_margin", "space_bound_margin"):
            worst[key] = min(worst.get(key, float("inf")), d[key])
    print(f"trials {args.trials}")
    for key in (
        "residual_space",
        "residual_time",
        "time_bound_margin",
        "space_bound_margin",
    ):
        print(f"worst_{key} {worst[key]!r}")
    print("ok")
    return 0


def _cmd_gen(args) -> int:
    out = _out_dir(args)
    if not out:
        raise UserError("gen needs --out (or the DELAYMATCH_OUT variable)")
    if args.generator == "random":
        rng = np.random.default_rng(args.seed)
        space, requests = gen_random(
            args.kind, args.points, args.requests, args.horizon, rng
        )
        save_bundle(space, requests, os.path.join(out, "instance.json"))
    elif args.generator == "two-point":
        space, requests = gen_two_point(args.delta, args.pattern, args.spacing)
        save_bundle(space, requests, os.path.join(out, "instance.json"))
    else:  # gamma
        cfg = GammaConfig(n=args.n, epsilon=args.epsilon, max_depth=args.max_depth)
        inst = gen_adversarial_gamma(cfg)
        save_bundle(inst.space, inst.requests, os.path.join(out, "instance.json"))
        inst.tree.to_json(os.path.join(out, "tree.json"))
        meta = {
            "n": inst.n,
            "epsilon": inst.epsilon,
            "jitter": inst.jitter,
            "end_actives": list(inst.end_actives),
            "applications": [
                {
                    "vertex": a.vertex,
                    "depth": a.depth,
                    "start_effective": a.start_effective,
                    "expiry": a.expiry,
                    "mid_time": a.mid_time,
                    "post_time": a.post_time,
                    "sites": list(a.sites),
                    "expiry_feet": list(a.expiry_feet),
                    "cancel_sites": list(a.cancel_sites),
                }
                for a in inst.applications
            ],
        }
        _write_atomic(
            os.path.join(out, "gamma.json"), json.dumps(meta, indent=1) + "\n"
        )
    print(f"wrote {out}")
    return 0


def _cmd_report(args) -> int:
    import csv as _csv

    try:
        with open(args.csv) as fh:
            rows = list(_csv.DictReader(fh))
    except OSError as exc:
        raise InstanceLoadError(f"cannot read {args.csv}: {exc}") from exc
    if not rows:
        raise UserError("empty trials file")
    try:
        ratios = [float(r["ratio"]) for r in rows]
        totals = [float(r["total"]) for r in rows]
        opt_total = float(rows[0]["opt_total"])
    except (KeyError, ValueError) as exc:
        raise InstanceLoadError(f"bad trials file: {exc}") from exc
    mean = float(np.mean(ratios))
    if len(ratios) > 1:
        ci = 1.96 * float(np.std(ratios, ddof=1)) / float(np.sqrt(len(ratios)))
    else:
        ci = 0.0
    print(f"trials {len(rows)}")
    print(f"opt_total {opt_total!r}")
    print(f"ratio_mean {mean!r}")
    print(f"ratio_ci95 {ci!r}")
    print(f"residual {float(np.mean(totals)) - mean * opt_total!r}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _build_parser() -> _Parser:
    p = _Parser(prog="delaymatch", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("validate", help="check an instance bundle")
    v.add_argument("--instance", required=True)
    v.set_defaults(fn=_cmd_validate)

    e = sub.add_parser("embed", help="sample one embedded tree")
    e.add_argument("--instance", required=True)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out")
    e.set_defaults(fn=_cmd_embed)

    r = sub.add_parser("run", help="run an experiment batch")
    r.add_argument("--instance", required=True)
    r.add_argument("--trials", type=int, default=1)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument(
        "--mode", choices=["exponential", "deterministic"], default="exponential"
    )
    r.add_argument("--flush", dest="flush", action="store_true", default=True)
    r.add_argument("--no-flush", dest="flush", action="store_false")
    r.add_argument("--penalty", type=float, default=None)
    r.add_argument("--fixed-tree", default=None, help="tree JSON to reuse each trial")
    r.add_argument("--out")
    r.set_defaults(fn=_cmd_run)

    va = sub.add_parser("verify-app", help="check the digestion laws")
    va.add_argument("--coloring", required=True)
    va.add_argument("--lambda", dest="lam", type=float, default=1.0)
    va.add_argument("--trials", type=int, default=10000)
    va.add_argument("--seed", type=int, default=0)
    va.set_defaults(fn=_cmd_verify_app)

    vi = sub.add_parser("verify-identities", help="check the cost accounting")
    vi.add_argument("--instance", required=True)
    vi.add_argument("--trials", type=int, default=1)
    vi.add_argument("--seed", type=int, default=0)
    vi.add_argument(
        "--mode", choices=["exponential", "deterministic"], default="exponential"
    )
    vi.set_defaults(fn=_cmd_verify_identities)

    g = sub.add_parser("gen", help="write instance bundles")
    gsub = g.add_subparsers(dest="generator", required=True, parser_class=_Parser)
    gr = gsub.add_parser("random")
    gr.add_argument("--kind", choices=["line", "square", "uniform"], default="line")
    gr.add_argument("--points", type=int, default=8)
    gr.add_argument("--requests", type=int, default=12)
    gr.add_argument("--horizon", type=float, default=10.0)
    gr.add_argument("--seed", type=int, default=0)
    gr.add_argument("--out")
    gr.set_defaults(fn=_cmd_gen)
    gt = gsub.add_parser("two-point")
    gt.add_argument("--delta", type=float, default=1.0)
    gt.add_argument("--pattern", default="pair_at_0")
    gt.add_argument("--spacing", type=float, default=1.0)
    gt.add_argument("--out")
    gt.set_defaults(fn=_cmd_gen)
    gg = gsub.add_parser("gamma")
    gg.add_argument("--n", type=int, required=True)
    gg.add_argument("--epsilon", type=float, default=None)
    gg.add_argument("--max-depth", type=int, default=None)
    gg.add_argument("--out")
    gg.set_defaults(fn=_cmd_gen)

    rp = sub.add_parser("report", help="summarize a trials CSV")
    rp.add_argument("--csv", required=True)
    rp.set_defaults(fn=_cmd_report)
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
