"""Command-line surface for the whole pipeline.

Subcommands: synth, train, eval, cv, identify, render, grasp, serve.
Exit codes: 0 success, 1 validation error, 2 runtime/convergence error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import dataset, synth
from .errors import (
    DegenerateCloud,
    NonFiniteLoss,
    PlacementFailure,
    RefgameError,
    UnknownEnvironment,
    UnknownSymbol,
)
from .grasp import grasp_pose, parse_cloud_text
from .model import ModelParams, posterior
from .raster import write_pgm, write_ppm
from .service import create_app, identify
from .training import FitConfig, IdentificationTask

_VALIDATION_ERRORS = (
    ValueError,
    KeyError,
    FileNotFoundError,
    IsADirectoryError,
    UnknownSymbol,
    UnknownEnvironment,
    DegenerateCloud,
)


class _Parser(argparse.ArgumentParser):
    """argparse exits with code 2 on usage errors; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _info(args, message):
    if not args.quiet:
        print(message, file=sys.stderr)


def _emit(args, payload: dict, text: str):
    if args.json:
        print(json.dumps(payload, indent=1))
    else:
        print(text)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=7, help="random seed")
    common.add_argument("--quiet", action="store_true", help="suppress progress messages")
    common.add_argument("--json", action="store_true", help="machine-readable output")

    parser = _Parser(prog="refgame", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--out", required=True, help="output corpus.json path")
    p.add_argument("--envs", default="5,5,5,5,2", help="per-category environment counts")
    p.add_argument("--replicas", type=int, default=10, help="identifications per description")
    p.add_argument("--descriptions", type=int, default=5, help="descriptions per object")
    p.add_argument("--rasters", default=None, help="also write PPM/PGM scene pairs here")

    p = sub.add_parser("train", parents=[common], help="fit model parameters on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="output model.json path")
    p.add_argument("--method", choices=("bfgs", "newton"), default="bfgs")
    p.add_argument("--ridge", type=float, default=1e-6)
    p.add_argument("--tol", type=float, default=1e-6, help="gradient infinity-norm tolerance")
    p.add_argument("--max-iters", type=int, default=500)

    p = sub.add_parser("eval", parents=[common], help="evaluate a model on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--filter", default=None, help="restrict tasks: env=ID or cat=ID")

    p = sub.add_parser("cv", parents=[common], help="leave-one-group-out cross-validation")
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", choices=("env", "cat"), default="env")
    p.add_argument("--method", choices=("bfgs", "newton"), default="bfgs")
    p.add_argument("--ridge", type=float, default=1e-6)
    p.add_argument("--tol", type=float, default=1e-6)

    p = sub.add_parser("identify", parents=[common], help="interactive identification console")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--env", required=True, help="environment id")

    p = sub.add_parser("render", parents=[common], help="render a scene, optionally shaded by posterior")
    p.add_argument("--corpus", required=True)
    p.add_argument("--env", required=True)
    p.add_argument("--desc", default=None, help="description tokens, e.g. 'green left'")
    p.add_argument("--model", default=None, help="model used to shade by posterior")
    p.add_argument("--out", required=True, help="output scene.ppm path")
    p.add_argument("--size", type=int, default=256, help="image width and height")

    p = sub.add_parser("grasp", parents=[common], help="grasp pose for a point cloud")
    p.add_argument("--points", required=True, help="text file of x y z lines")

    p = sub.add_parser("serve", parents=[common], help="serve the HTTP API and console")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--static", default="frontend/dist", help="built console directory")

    return parser


def cmd_synth(args) -> int:
    counts = tuple(int(v) for v in args.envs.split(","))
    spec = synth.CorpusSpec(
        env_counts=counts,
        descriptions_per_object=args.descriptions,
        replicas=args.replicas,
        seed=args.seed,
    )
    corpus = synth.generate_corpus(spec)
    dataset.save_corpus(corpus, args.out)
    if args.rasters:
        import os

        os.makedirs(args.rasters, exist_ok=True)
        for env in corpus.environments:
            image, mask = synth.rasterize_environment(env)
            write_ppm(os.path.join(args.rasters, f"{env.id}.ppm"), image)
            write_pgm(os.path.join(args.rasters, f"{env.id}.pgm"), mask)
    _info(args, f"wrote {len(corpus.environments)} environments, {len(corpus.tasks)} tasks")
    if args.json:
        print(
            json.dumps(
                {"out": args.out, "environments": len(corpus.environments), "tasks": len(corpus.tasks)}
            )
        )
    return 0


def cmd_train(args) -> int:
    corpus = dataset.load_corpus(args.corpus)
    config = FitConfig(method=args.method, grad_tol=args.tol, max_iters=args.max_iters, ridge=args.ridge)
    from .training import fit

    params, report = fit(corpus.tasks, corpus.env_map, config)
    if not report.converged:
        print(
            f"fit did not converge: {report.iterations} iterations, "
            f"gradient norm {report.grad_norm:.3e}",
            file=sys.stderr,
        )
        return 2
    dataset.save_model(params, args.out, ridge=args.ridge, report=report)
    _info(
        args,
        f"converged in {report.iterations} iterations, loss {report.loss:.6f}, "
        f"gradient norm {report.grad_norm:.2e}",
    )
    if args.json:
        print(
            json.dumps(
                {
                    "out": args.out,
                    "method": report.method,
                    "iterations": report.iterations,
                    "loss": report.loss,
                    "grad_norm": report.grad_norm,
                    "converged": report.converged,
                }
            )
        )
    return 0


def _parse_filter(expr: str | None):
    if expr is None:
        return None, None
    kind, _, value = expr.partition("=")
    if kind not in ("env", "cat") or not value:
        raise ValueError(f"bad filter {expr!r}, expected env=ID or cat=ID")
    return kind, value


def cmd_eval(args) -> int:
    corpus = dataset.load_corpus(args.corpus)
    params = dataset.load_model(args.model)
    kind, value = _parse_filter(args.filter)
    if kind == "env":
        if value not in corpus.env_map:
            raise UnknownEnvironment(value)
        task_filter = lambda t: t.env_id == value
    elif kind == "cat":
        env_ids = set(corpus.categories().get(value, []))
        if not env_ids:
            raise ValueError(f"unknown category {value!r}")
        task_filter = lambda t: t.env_id in env_ids
    else:
        task_filter = None
    metrics = dataset.evaluate(params, corpus, task_filter)
    label = args.filter or "all"
    _emit(
        args,
        {"filter": label, "metrics": dataset.metrics_to_dict(metrics)},
        dataset.format_metrics_table([(label, metrics)]),
    )
    return 0


def cmd_cv(args) -> int:
    corpus = dataset.load_corpus(args.corpus)
    config = FitConfig(method=args.method, grad_tol=args.tol, ridge=args.ridge)
    report = dataset.cross_validate(corpus, config, mode=args.mode)
    rows = [(fold.group, fold.metrics) for fold in report.folds]
    rows.append(("avg", report.aggregate))
    payload = {
        "mode": report.mode,
        "folds": [
            {"group": f.group, "metrics": dataset.metrics_to_dict(f.metrics)} for f in report.folds
        ],
        "aggregate": dataset.metrics_to_dict(report.aggregate),
    }
    _emit(args, payload, dataset.format_metrics_table(rows))
    return 0


def _oracle_summary(corpus, env, desc_symbols: frozenset, object_id: str) -> str:
    """How stored identifications treated this object under this description."""
    matching = [
        t
        for t in corpus.tasks
        if t.env_id == env.id and t.desc.symbols == desc_symbols
    ]
    if object_id not in set(env.object_ids()):
        return f"no object {object_id!r} in {env.id}"
    if not matching:
        return "no stored identifications for this description"
    hits = sum(1 for t in matching if object_id in t.selected)
    mass = float(np.mean([t.target[env.index_of(object_id)] for t in matching]))
    return (
        f"{object_id}: selected in {hits}/{len(matching)} identifications, "
        f"mean target mass {mass:.3f}"
    )


def cmd_identify(args) -> int:
    corpus = dataset.load_corpus(args.corpus)
    params = dataset.load_model(args.model)
    env = corpus.env_map.get(args.env)
    if env is None:
        raise UnknownEnvironment(args.env)
    _info(args, f"{env.id} ({env.category}): {len(env.objects)} objects. "
                "Type description tokens, '!select <obj>' for oracle truth, Ctrl-D to quit.")
    current: frozenset = frozenset()
    for line in sys.stdin:
        line = line.strip()
        if line.startswith("!select"):
            parts = line.split()
            if len(parts) != 2:
                print("usage: !select <object-id>")
                continue
            print(_oracle_summary(corpus, env, current, parts[1]))
            continue
        tokens = line.split()
        try:
            result = identify(params, env, tokens)
        except UnknownSymbol as exc:
            print(f"unknown symbol: {exc.token}")
            continue
        current = frozenset(params.lexicon.lookup(t).index for t in tokens)
        if args.json:
            print(json.dumps(result))
        else:
            for rank, entry in enumerate(result["posterior"], start=1):
                bar = "#" * int(round(40 * entry["prob"]))
                print(f"{rank:>2}. {entry['object_id']:<6} {entry['prob']:>8.4f} {bar}")
            print(f"    entropy {result['entropy']:.3f} nats")
    return 0


def cmd_render(args) -> int:
    corpus = dataset.load_corpus(args.corpus)
    env = corpus.env_map.get(args.env)
    if env is None:
        raise UnknownEnvironment(args.env)
    brightness = None
    if args.desc is not None:
        if args.model is None:
            raise ValueError("--desc requires --model to compute the posterior")
        params = dataset.load_model(args.model)
        from .lexicon import parse_description

        desc = parse_description(args.desc.split(), params.lexicon)
        probs = posterior(desc, env, params).probs
        brightness = 0.15 + 0.85 * probs / probs.max()
    image, _ = synth.rasterize_environment(env, args.size, args.size, brightness=brightness)
    write_ppm(args.out, image)
    _info(args, f"wrote {args.out}")
    if args.json:
        print(json.dumps({"out": args.out, "env": env.id}))
    return 0


def cmd_grasp(args) -> int:
    with open(args.points, "r", encoding="utf-8") as fh:
        cloud = parse_cloud_text(fh.read())
    position, plan = grasp_pose(cloud)
    payload = {
        "position": list(position),
        "direction": list(plan.direction),
        "width": plan.width,
    }
    _emit(
        args,
        payload,
        f"position  {position[0]:.6f} {position[1]:.6f} {position[2]:.6f}\n"
        f"direction {plan.direction[0]:.6f} {plan.direction[1]:.6f}\n"
        f"width     {plan.width:.6f}",
    )
    return 0


def cmd_serve(args) -> int:
    import os

    import uvicorn

    corpus = dataset.load_corpus(args.corpus)
    params = dataset.load_model(args.model)
    app = create_app(params, corpus, static_dir=os.path.abspath(args.static))
    _info(args, f"serving on http://{args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning" if args.quiet else "info")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "cv": cmd_cv,
    "identify": cmd_identify,
    "render": cmd_render,
    "grasp": cmd_grasp,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (NonFiniteLoss, PlacementFailure) as exc:
        print(f"refgame {args.command}: {exc}", file=sys.stderr)
        return 2
    except _VALIDATION_ERRORS as exc:
        print(f"refgame {args.command}: {exc}", file=sys.stderr)
        return 1
    except RefgameError as exc:
        print(f"refgame {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
