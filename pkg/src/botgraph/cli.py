"""Command-line entry point: ``botgraph <subcommand> [options]``.

Errors are reported as one JSON object on stderr with exit status 1.
"""
import argparse
import json
import logging
import sys

from . import pipeline as P

COMMANDS = {
    "synth": P.cmd_synth,
    "walk": P.cmd_walk,
    "embed-n2v": P.cmd_embed_n2v,
    "embed-a2v": P.cmd_embed_a2v,
    "features": P.cmd_features,
    "train-eval": P.cmd_train_eval,
    "grid": P.cmd_grid,
    "run-all": P.cmd_run_all,
    "impute-compare": P.compare_imputation,
    "mapping-compare": P.compare_mappings,
}

# flag dest -> config key
_OVERRIDES = {
    "seed": "pipeline.seed", "threads": "pipeline.threads", "out_dir": "pipeline.out_dir",
    "edges": "data.edges", "profiles": "data.profiles", "labels": "data.labels",
    "track": "pipeline.track", "mode": "pipeline.mode", "impute": "pipeline.impute",
    "mapping": "pipeline.mapping", "l2_lambda": "classify.l2_lambda",
    "test_fraction": "classify.test_fraction",
    "p": "walk.p", "q": "walk.q", "walk_length": "walk.walk_length",
    "walks_per_node": "walk.walks_per_node", "walk_mode": "walk.mode",
    "dims": "embed.dims", "context_size": "embed.context_size", "epochs": "embed.epochs",
    "total_samples": "embed.total_samples",
    "p_grid": "grid.p_grid", "q_grid": "grid.q_grid",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--config", help="INI file with [data] [pipeline] [walk] [embed] [classify] [grid] [synth]")
    g.add_argument("--seed", type=int)
    g.add_argument("--threads", type=int, help="cap on worker threads")
    g.add_argument("--out-dir", dest="out_dir")
    g.add_argument("-v", "--verbose", action="store_true")
    s = common.add_argument_group("stage options (override the config file)")
    s.add_argument("--edges")
    s.add_argument("--profiles")
    s.add_argument("--labels")
    s.add_argument("--track", choices=P.TRACKS)
    s.add_argument("--mode", choices=P.MODES)
    s.add_argument("--impute", help="median | mean | constant:<value>")
    s.add_argument("--mapping", choices=("relu", "sigmoid", "fourier"))
    s.add_argument("--l2-lambda", dest="l2_lambda", type=float)
    s.add_argument("--test-fraction", dest="test_fraction", type=float)
    s.add_argument("--p", type=float)
    s.add_argument("--q", type=float)
    s.add_argument("--walk-length", dest="walk_length", type=int)
    s.add_argument("--walks-per-node", dest="walks_per_node", type=int)
    s.add_argument("--walk-mode", dest="walk_mode", choices=("on-the-fly", "precomputed"))
    s.add_argument("--dims", type=int)
    s.add_argument("--context-size", dest="context_size", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--total-samples", dest="total_samples", type=int)
    s.add_argument("--p-grid", dest="p_grid", help="comma-separated values")
    s.add_argument("--q-grid", dest="q_grid", help="comma-separated values")

    parser = argparse.ArgumentParser(prog="botgraph", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _result_json(command, result):
    if isinstance(result, P.EvalReport):
        return json.loads(result.to_json())
    if isinstance(result, P.GridResult):
        p, q, auc = result.best()
        return {"table": result.format_text(), "best": {"p": p, "q": q, "roc_auc": auc}}
    if isinstance(result, dict):
        return {k: (json.loads(v.to_json()) if isinstance(v, P.EvalReport) else v) for k, v in result.items()}
    return {"artifact": result}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {key: getattr(args, dest) for dest, key in _OVERRIDES.items()}
    try:
        cfg = P.load_config(args.config, overrides)
        result = COMMANDS[args.command](cfg)
    except Exception as exc:  # reported, not raised: the CLI contract is a JSON error
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        if getattr(exc, "lineno", None) is not None:
            err["line"] = exc.lineno
        print(json.dumps(err), file=sys.stderr)
        return 1
    print(json.dumps(_result_json(args.command, result), indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
