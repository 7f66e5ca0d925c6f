"""Command-line front end.

Dimensions and index sets are 1-based on the command line and in printed
output; the JSON file formats are 0-based on the outer offspring index as
documented in the README. Every file artifact gets a sibling
<artifact>.manifest.json recording the command, input hashes, seed, thread
count, version, and wall-clock duration. Artifacts themselves are
byte-identical across thread counts for a fixed seed; manifests are not part
of that guarantee (they record timing).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time

import numpy as np

from . import __version__, backend, simulate, verify
from .errors import ClusterTailError, ConfigFormatError
from .geometry import rare_set_from_json, solve_ja
from .measures import delta_bar, estimate_ci, enumerate_types
from .model import (
    alpha_of,
    config_from_json,
    laws_from_dict,
    rate_lambda,
    validate,
)


def _json_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(out_path, args, started, config_path=None, set_path=None):
    manifest = {
        "command": " ".join(sys.argv) if sys.argv else "clustertail",
        "config_path": config_path,
        "config_sha256": _sha256(config_path) if config_path else None,
        "set_path": set_path,
        "set_sha256": _sha256(set_path) if set_path else None,
        "master_seed": getattr(args, "seed", None),
        "threads": backend.get_threads(),
        "tool_version": __version__,
        "duration_s": round(time.monotonic() - started, 3),
    }
    with open(str(out_path) + ".manifest.json", "w", encoding="utf-8") as fh:
        fh.write(_json_dumps(manifest))


def _emit(text, args, started, config_path=None, set_path=None):
    out = getattr(args, "out", None)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
        _write_manifest(out, args, started, config_path, set_path)
    else:
        sys.stdout.write(text)


def _parse_samples(text):
    try:
        val = int(float(text))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"bad sample count {text!r}") from e
    if val < 1:
        raise argparse.ArgumentTypeError("sample count must be positive")
    return val


def _parse_intlist(text):
    try:
        return [int(float(tok)) for tok in text.split(",") if tok]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from e


def _parse_set(text, d):
    try:
        idx = sorted({int(tok) for tok in text.split(",") if tok})
    except ValueError as e:
        raise ConfigFormatError(f"bad index set {text!r}") from e
    if not idx or idx[0] < 1 or idx[-1] > d:
        raise ConfigFormatError(f"index set {text!r} out of range 1..{d}")
    return frozenset(i - 1 for i in idx)


def _load_config(args):
    cfg = config_from_json(args.config)
    if getattr(args, "threads", None):
        backend.set_threads(args.threads)
    return cfg


def _add_common(p, samples_default="1e5"):
    p.add_argument("--seed", type=int, default=0, help="64-bit master seed")
    p.add_argument("--threads", type=int, default=0, help="worker threads (default: all)")
    p.add_argument("--samples", type=_parse_samples, default=_parse_samples(samples_default))
    p.add_argument("--out", help="write the artifact here (plus a .manifest.json)")


# ---------------------------------------------------------------- subcommands
def cmd_validate(args):
    started = time.monotonic()
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigFormatError(f"cannot read model config {args.config}: {e}") from e
    laws = laws_from_dict(obj)
    report = validate(laws)
    _emit(_json_dumps(report.to_dict()), args, started, config_path=args.config)
    return 0 if report.passed else 2


def cmd_mean(args):
    started = time.monotonic()
    cfg = _load_config(args)
    payload = {
        "d": cfg.d,
        "mean_matrix": [[float(x) for x in row] for row in cfg.mean_matrix],
        "sbar_columns": [[float(x) for x in cfg.sbar[:, j]] for j in range(cfg.d)],
        "alpha_star": list(cfg.alpha_star),
        "l_star": [l + 1 for l in cfg.l_star],
        "spectral_radius": cfg.report.spectral_radius,
    }
    _emit(_json_dumps(payload), args, started, config_path=args.config)
    return 0


def cmd_rate(args):
    started = time.monotonic()
    cfg = _load_config(args)
    jset = _parse_set(args.set, cfg.d)
    n_list = args.n
    if not n_list:
        raise ConfigFormatError("--n needs at least one value")
    alpha = alpha_of(cfg, jset)
    lines = ["n,lambda,alpha"]
    for n in n_list:
        lines.append(f"{n},{rate_lambda(cfg, jset, n)!r},{alpha!r}")
    _emit("\n".join(lines) + "\n", args, started, config_path=args.config)
    return 0


def cmd_ja(args):
    started = time.monotonic()
    cfg = _load_config(args)
    A = rare_set_from_json(args.setfile)
    sol = solve_ja(A, cfg)
    payload = {
        "jset": sorted(i + 1 for i in sol.jset),
        "alpha": sol.alpha,
        "bounded_away": sol.bounded_away,
        "distance": sol.distance,
        "witness": {
            "weights": [float(w) for w in sol.witness.weights],
            "point": [float(x) for x in sol.witness.point],
        },
    }
    _emit(_json_dumps(payload), args, started, args.config, args.setfile)
    return 0


def cmd_simulate(args):
    started = time.monotonic()
    cfg = _load_config(args)
    root = args.root - 1
    if not (0 <= root < cfg.d):
        raise ConfigFormatError(f"--root out of range 1..{cfg.d}")
    if args.decomp:
        from .rng import StreamKey

        records = []
        for idx in range(args.samples):
            dec = simulate.sample_decomposition(
                cfg, root, args.n, StreamKey(args.seed, idx), delta=args.delta
            )
            records.append(
                {
                    "sample_index": idx,
                    "depth": dec.depth,
                    "tau": [[int(x) for x in row] for row in dec.tau],
                    "reconstructed": [int(x) for x in dec.reconstructed],
                    "rows": [sorted(i + 1 for i in r) for r in dec.rows],
                }
            )
        _emit(_json_dumps({"n": args.n, "delta": args.delta, "samples": records}),
              args, started, config_path=args.config)
        return 0
    totals, censored = simulate.collect_totals(cfg, root, args.samples, args.seed)
    lines = ["root,sample_index," + "censored," + ",".join(f"S_{i+1}" for i in range(cfg.d))]
    for idx in range(args.samples):
        lines.append(
            f"{args.root},{idx},{int(censored[idx])},"
            + ",".join(str(int(v)) for v in totals[idx])
        )
    _emit("\n".join(lines) + "\n", args, started, config_path=args.config)
    return 0


def cmd_prob(args):
    started = time.monotonic()
    cfg = _load_config(args)
    A = rare_set_from_json(args.setfile)
    if len(args.n) < 3:
        raise ConfigFormatError("--n needs at least 3 increasing values")
    result = verify.sweep_probability(
        cfg, args.root - 1, A, args.n, args.samples, master_seed=args.seed
    )
    csv_text = verify.sweep_csv(result)
    _emit(csv_text, args, started, args.config, args.setfile)
    if args.plot:
        with open(args.plot, "w", encoding="utf-8") as fh:
            fh.write(verify.sweep_svg(result))
        _write_manifest(args.plot, args, started, args.config, args.setfile)
    if args.out:
        sys.stdout.write(_json_dumps(result.to_dict()))
    return 0


def cmd_measure(args):
    started = time.monotonic()
    cfg = _load_config(args)
    A = rare_set_from_json(args.setfile)
    jset = _parse_set(args.set, cfg.d)
    delta = args.delta if args.delta != "auto" else "auto"
    types = enumerate_types(jset, cfg.d)
    eps_bar = delta_bar(A, jset, cfg)
    if delta == "auto":
        dlt = 0.5 * eps_bar if eps_bar > 0 else 0.0
    else:
        dlt = float(delta)
    per_type = []
    for tag, jtype in enumerate(types):
        if dlt == 0.0:
            from .measures import MeasureEstimate

            est = MeasureEstimate(0.0, 0.0, args.samples, 0.0)
        else:
            est = estimate_ci(
                jtype, A, cfg, delta=dlt, n_samples=args.samples,
                master_seed=args.seed, type_tag=tag,
            )
        per_type.append((jtype, est))
    totals = []
    for i in range(cfg.d):
        val = 0.0
        var = 0.0
        for jtype, est in per_type:
            coef = float(cfg.sbar[cfg.l_star[jtype.first], i])
            val += coef * est.value
            var += (coef * est.std_error) ** 2
        totals.append({"root": i + 1, "value": val, "se": float(np.sqrt(var))})
    payload = {
        "jset": sorted(i + 1 for i in jset),
        "per_type": [
            {
                "rows": [sorted(i + 1 for i in r) for r in jtype.rows],
                "estimate": est.value,
                "se": est.std_error,
            }
            for jtype, est in per_type
        ],
        "total_i": totals,
        "delta_used": dlt,
        "eps_bar": eps_bar,
        "samples": args.samples,
    }
    _emit(_json_dumps(payload), args, started, args.config, args.setfile)
    return 0


def cmd_verify(args):
    started = time.monotonic()
    cfg = _load_config(args)
    suites = (
        ["identities", "concentration", "types", "slopes", "counterexample"]
        if args.suite == "all"
        else [args.suite]
    )
    need_set = {"types", "slopes"} & set(suites)
    A = None
    if need_set:
        if not args.setfile:
            raise ConfigFormatError(f"suites {sorted(need_set)} need a set file")
        A = rare_set_from_json(args.setfile)
    payload = {}
    if "identities" in suites:
        payload["identities"] = verify.check_identities(
            cfg, samples=args.samples, master_seed=args.seed
        ).to_dict()
    if "concentration" in suites:
        payload["concentration"] = verify.check_concentration(
            cfg, 0, reps=max(args.samples // 50, 200), master_seed=args.seed
        ).to_dict()
    if "types" in suites:
        payload["types"] = verify.check_type_frequencies(
            cfg, args.root - 1, A, args.n[0] if args.n else 16, args.samples,
            delta=float(args.delta) if args.delta != "auto" else simulate.DEFAULT_DELTA,
            master_seed=args.seed,
        ).to_dict()
    if "slopes" in suites:
        n_list = args.n if args.n else [8, 16, 32, 64]
        payload["slopes"] = verify.sweep_probability(
            cfg, args.root - 1, A, n_list, args.samples, master_seed=args.seed
        ).to_dict()
    if "counterexample" in suites:
        result = verify.counterexample_experiment(
            cfg, args.radius, args.n if args.n else [3, 4, 6, 8], args.samples,
            master_seed=args.seed,
        )
        payload["counterexample"] = result.to_dict()
        payload["counterexample"]["slower_than_cone_prediction"] = (
            verify.slope_shallower_than_cone(result)
        )
    _emit(_json_dumps(payload), args, started, args.config, args.setfile)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="clustertail",
        description="Cluster-size tail analysis for heavy-tailed multi-type "
        "branching processes (dimensions are 1-based here; files are 0-based).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check model assumptions")
    p.add_argument("config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate, seed=0)

    p = sub.add_parser("mean", help="mean matrix, expected clusters, tail indices")
    p.add_argument("config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_mean, seed=0, threads=0)

    p = sub.add_parser("rate", help="rate-function table for an index set")
    p.add_argument("config")
    p.add_argument("--set", required=True, help="e.g. 1,2 (1-based)")
    p.add_argument("--n", type=_parse_intlist, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_rate, seed=0, threads=0)

    p = sub.add_parser("ja", help="optimal cone index set for a rare-event set")
    p.add_argument("config")
    p.add_argument("setfile")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ja, seed=0, threads=0)

    p = sub.add_parser("simulate", help="raw cluster samples (CSV) or decompositions")
    p.add_argument("config")
    p.add_argument("--root", type=int, default=1)
    p.add_argument("--decomp", action="store_true", help="dump decompositions as JSON")
    p.add_argument("--n", type=int, default=16, help="decomposition scale n")
    p.add_argument("--delta", type=float, default=simulate.DEFAULT_DELTA)
    _add_common(p, "1e4")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("prob", help="rare-event probability sweep with slope fit")
    p.add_argument("config")
    p.add_argument("setfile")
    p.add_argument("--root", type=int, default=1)
    p.add_argument("--n", type=_parse_intlist, required=True)
    p.add_argument("--plot", help="write a log-log SVG here")
    _add_common(p, "1e6")
    p.set_defaults(func=cmd_prob)

    p = sub.add_parser("measure", help="Monte-Carlo limiting-measure estimates")
    p.add_argument("config")
    p.add_argument("setfile")
    p.add_argument("--set", required=True)
    p.add_argument("--delta", default="auto")
    _add_common(p, "1e6")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("verify", help="verification suites")
    p.add_argument("config")
    p.add_argument("setfile", nargs="?")
    p.add_argument(
        "--suite",
        choices=["identities", "concentration", "types", "slopes", "counterexample", "all"],
        default="identities",
    )
    p.add_argument("--root", type=int, default=1)
    p.add_argument("--n", type=_parse_intlist, default=None)
    p.add_argument("--delta", default="auto")
    p.add_argument("--radius", type=float, default=1.0, help="tube radius")
    _add_common(p, "1e6")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ClusterTailError as e:
        sys.stderr.write(f"error: {e}\n")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
