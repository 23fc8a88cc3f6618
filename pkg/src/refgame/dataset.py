"""Corpus files, the model file, evaluation metrics, and cross-validation.

A corpus is one JSON document holding environments (with raw features,
so evaluation never touches images) and identification tasks. Task
targets are not stored; they are rebuilt from the selected sets on load
so the fixed-mass rule has a single source of truth.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DanglingEnvRef,
    DuplicateId,
    EmptySelection,
    SchemaError,
    TooFewGroups,
    UnknownEnvironment,
)
from .features import RawFeatures
from .lexicon import Description, Lexicon, Symbol, default_lexicon, render_description
from .model import Environment, EnvObject, ModelParams, Posterior, SceneBlock, posterior
from .training import FitConfig, FitReport, IdentificationTask, fit, target_distribution

FEATURE_CHANNELS = ("x_pos", "y_pos", "width", "height", "size", "hue", "light")
CORPUS_FORMAT = 1
MODEL_FORMAT = 1
FEATURE_CONFIG_VERSION = 1


@dataclass
class Corpus:
    environments: list[Environment]
    tasks: list[IdentificationTask]

    def __post_init__(self):
        ids = [e.id for e in self.environments]
        dupes = {i for i in ids if ids.count(i) > 1}
        if dupes:
            raise DuplicateId(f"duplicate environment ids: {sorted(dupes)}")
        self.env_map = {e.id: e for e in self.environments}
        for task in self.tasks:
            if task.env_id not in self.env_map:
                raise DanglingEnvRef(f"task references missing environment {task.env_id!r}")

    def categories(self) -> dict:
        """Map category -> env ids, in first-seen order."""
        cats: dict[str, list[str]] = {}
        for env in self.environments:
            cats.setdefault(env.category, []).append(env.id)
        return cats


@dataclass
class EvalMetrics:
    """Posterior quality over a set of tasks.

    t_lklh is the mean posterior mass landing on each task's selected
    set; kl is the mean KL(p || q) in nats; qtp is the mean inner
    product of posterior and target, reported for comparison.
    """

    t_lklh: float
    kl: float
    qtp: float
    n_tasks: int


def _require(cond: bool, where: str, msg: str):
    if not cond:
        raise SchemaError(f"{where}: {msg}")


def corpus_to_dict(corpus: Corpus, lexicon: Lexicon | None = None) -> dict:
    lexicon = lexicon or default_lexicon()
    envs = []
    for env in corpus.environments:
        entry = {
            "id": env.id,
            "category": env.category,
            "objects": [
                {
                    "id": obj.id,
                    "features": {ch: obj.features.channel(ch) for ch in FEATURE_CHANNELS},
                    "achromatic": obj.features.achromatic,
                }
                for obj in env.objects
            ],
        }
        if env.scene is not None:
            entry["scene"] = [
                {
                    "object_id": b.object_id,
                    "x": b.x,
                    "y": b.y,
                    "w": b.w,
                    "h": b.h,
                    "color": list(b.color),
                }
                for b in env.scene
            ]
        envs.append(entry)
    tasks = [
        {
            "env_id": t.env_id,
            "symbols": render_description(t.desc, lexicon),
            "selected": sorted(t.selected),
        }
        for t in corpus.tasks
    ]
    return {"format": CORPUS_FORMAT, "environments": envs, "tasks": tasks}


def corpus_from_dict(doc: dict, lexicon: Lexicon | None = None, where: str = "corpus") -> Corpus:
    lexicon = lexicon or default_lexicon()
    _require(isinstance(doc, dict), where, "document must be an object")
    _require(doc.get("format") == CORPUS_FORMAT, where, f"unsupported format {doc.get('format')!r}")
    _require(isinstance(doc.get("environments"), list), where, "missing 'environments' list")
    _require(isinstance(doc.get("tasks"), list), where, "missing 'tasks' list")

    environments = []
    for i, entry in enumerate(doc["environments"]):
        loc = f"{where}: environments[{i}]"
        _require(isinstance(entry.get("id"), str), loc, "missing string field 'id'")
        _require(isinstance(entry.get("category"), str), loc, "missing string field 'category'")
        objects = []
        _require(isinstance(entry.get("objects"), list) and entry["objects"], loc, "needs objects")
        for j, obj in enumerate(entry["objects"]):
            oloc = f"{loc}.objects[{j}]"
            _require(isinstance(obj.get("id"), str), oloc, "missing string field 'id'")
            feats = obj.get("features")
            _require(isinstance(feats, dict), oloc, "missing 'features' object")
            missing = [ch for ch in FEATURE_CHANNELS if ch not in feats]
            _require(not missing, oloc, f"missing feature channels {missing}")
            try:
                raw = RawFeatures(
                    **{ch: float(feats[ch]) for ch in FEATURE_CHANNELS},
                    achromatic=bool(obj.get("achromatic", False)),
                )
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"{oloc}: bad feature value ({exc})") from exc
            objects.append(EnvObject(obj["id"], raw))
        scene = None
        if "scene" in entry:
            scene = []
            for j, blk in enumerate(entry["scene"]):
                bloc = f"{loc}.scene[{j}]"
                try:
                    scene.append(
                        SceneBlock(
                            object_id=blk["object_id"],
                            x=float(blk["x"]),
                            y=float(blk["y"]),
                            w=float(blk["w"]),
                            h=float(blk["h"]),
                            color=tuple(int(c) for c in blk["color"]),
                        )
                    )
                except (KeyError, TypeError, ValueError) as exc:
                    raise SchemaError(f"{bloc}: bad scene block ({exc})") from exc
            scene = tuple(scene)
        try:
            environments.append(
                Environment(entry["id"], entry["category"], tuple(objects), scene)
            )
        except ValueError as exc:
            raise DuplicateId(f"{loc}: {exc}") from exc

    env_map = {}
    for env in environments:
        if env.id in env_map:
            raise DuplicateId(f"{where}: duplicate environment id {env.id!r}")
        env_map[env.id] = env

    tasks = []
    for i, entry in enumerate(doc["tasks"]):
        loc = f"{where}: tasks[{i}]"
        env_id = entry.get("env_id")
        _require(isinstance(env_id, str), loc, "missing string field 'env_id'")
        if env_id not in env_map:
            raise DanglingEnvRef(f"{loc}: unknown environment {env_id!r}")
        env = env_map[env_id]
        _require(isinstance(entry.get("symbols"), list), loc, "missing 'symbols' list")
        desc = Description(frozenset(lexicon.lookup(tok).index for tok in entry["symbols"]))
        selected = entry.get("selected")
        _require(isinstance(selected, list) and selected, loc, "needs a nonempty 'selected' list")
        known = set(env.object_ids())
        stray = [s for s in selected if s not in known]
        _require(not stray, loc, f"selected ids not in environment: {stray}")
        sel = frozenset(selected)
        tasks.append(IdentificationTask(env_id, desc, sel, target_distribution(sel, env)))

    return Corpus(environments, tasks)


def save_corpus(corpus: Corpus, path: str | os.PathLike) -> None:
    doc = corpus_to_dict(corpus)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_corpus(path: str | os.PathLike) -> Corpus:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return corpus_from_dict(doc, where=str(path))


def save_model(
    params: ModelParams,
    path: str | os.PathLike,
    ridge: float = 0.0,
    report: FitReport | None = None,
) -> None:
    """Write the model file; beta round-trips bit-exactly through JSON."""
    lex = params.lexicon
    doc = {
        "format": MODEL_FORMAT,
        "feature_config": FEATURE_CONFIG_VERSION,
        "lexicon": [{"name": s.name, "channels": list(s.channels)} for s in lex.symbols],
        "layout": [
            {"symbol": s.name, "offset": lex.offset(s), "dim": s.dim} for s in lex.symbols
        ],
        "ridge": ridge,
        "beta": [float(v) for v in params.flat],
        "fit": None
        if report is None
        else {
            "method": report.method,
            "iterations": report.iterations,
            "loss": report.loss,
            "grad_norm": report.grad_norm,
            "converged": report.converged,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path: str | os.PathLike) -> ModelParams:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    where = str(path)
    _require(doc.get("format") == MODEL_FORMAT, where, f"unsupported format {doc.get('format')!r}")
    _require(
        doc.get("feature_config") == FEATURE_CONFIG_VERSION,
        where,
        f"unsupported feature config {doc.get('feature_config')!r}",
    )
    _require(isinstance(doc.get("lexicon"), list), where, "missing 'lexicon' list")
    try:
        symbols = tuple(
            Symbol(entry["name"], i, tuple(entry["channels"]))
            for i, entry in enumerate(doc["lexicon"])
        )
        lexicon = Lexicon(symbols)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: bad lexicon ({exc})") from exc
    beta = doc.get("beta")
    _require(isinstance(beta, list), where, "missing 'beta' array")
    return ModelParams(lexicon, np.asarray(beta, dtype=np.float64))


def _task_stats(params: ModelParams, corpus: Corpus, tasks: Sequence[IdentificationTask]):
    """Per-task (selected mass, KL, q.p); posteriors are cached per (env, desc)."""
    cache: dict[tuple, Posterior] = {}
    rows = []
    for task in tasks:
        env = corpus.env_map.get(task.env_id)
        if env is None:
            raise UnknownEnvironment(task.env_id)
        key = (task.env_id, task.desc.symbols)
        post = cache.get(key)
        if post is None:
            post = posterior(task.desc, env, params)
            cache[key] = post
        q = post.probs
        p = task.target
        sel = np.array([obj.id in task.selected for obj in env.objects])
        nz = p > 0
        kl = float((p[nz] * (np.log(p[nz]) - np.log(q[nz]))).sum())
        rows.append((float(q[sel].sum()), kl, float(q @ p)))
    return rows


def evaluate(
    params: ModelParams,
    corpus: Corpus,
    task_filter: Callable[[IdentificationTask], bool] | None = None,
) -> EvalMetrics:
    """Mean selected-set posterior mass and mean KL over the chosen tasks."""
    tasks = corpus.tasks if task_filter is None else [t for t in corpus.tasks if task_filter(t)]
    if not tasks:
        raise EmptySelection("task filter matched no tasks")
    rows = _task_stats(params, corpus, tasks)
    arr = np.asarray(rows)
    return EvalMetrics(
        t_lklh=float(arr[:, 0].mean()),
        kl=float(arr[:, 1].mean()),
        qtp=float(arr[:, 2].mean()),
        n_tasks=len(tasks),
    )


def _grouped_folds(corpus: Corpus, mode: str):
    """(group id, train tasks, test tasks) triples, ordered by group id."""
    if mode == "env":
        groups = sorted(e.id for e in corpus.environments)
        key = lambda t: t.env_id
    elif mode == "cat":
        groups = sorted({e.category for e in corpus.environments})
        by_env = {e.id: e.category for e in corpus.environments}
        key = lambda t: by_env[t.env_id]
    else:
        raise ValueError(f"unknown split mode {mode!r}")
    if len(groups) < 2:
        raise TooFewGroups(f"need at least 2 groups for mode {mode!r}, have {len(groups)}")
    folds = []
    for gid in groups:
        test = [t for t in corpus.tasks if key(t) == gid]
        train = [t for t in corpus.tasks if key(t) != gid]
        folds.append((gid, train, test))
    return folds


def split_leave_one_env(corpus: Corpus) -> list[tuple[list, list]]:
    """One (train, test) pair per environment, ordered by environment id."""
    return [(train, test) for _, train, test in _grouped_folds(corpus, "env")]


def split_leave_one_category(corpus: Corpus) -> list[tuple[list, list]]:
    """One (train, test) pair per category, ordered by category id."""
    return [(train, test) for _, train, test in _grouped_folds(corpus, "cat")]


@dataclass
class CvFold:
    group: str
    metrics: EvalMetrics
    report: FitReport


@dataclass
class CvReport:
    mode: str
    folds: list[CvFold]
    aggregate: EvalMetrics


def cross_validate(corpus: Corpus, config: FitConfig | None = None, mode: str = "env") -> CvReport:
    """Leave-one-group-out cross-validation with a Table-shaped report.

    The aggregate pools every task's statistics across folds, so it is
    the mean per identification task regardless of fold sizes.
    """
    config = config or FitConfig()
    folds = []
    pooled = []
    for gid, train, test in _grouped_folds(corpus, mode):
        try:
            params, report = fit(train, corpus.env_map, config)
        except Exception as exc:
            raise type(exc)(f"fold {gid!r}: {exc}") from exc
        rows = _task_stats(params, corpus, test)
        pooled.extend(rows)
        arr = np.asarray(rows)
        metrics = EvalMetrics(
            t_lklh=float(arr[:, 0].mean()),
            kl=float(arr[:, 1].mean()),
            qtp=float(arr[:, 2].mean()),
            n_tasks=len(test),
        )
        folds.append(CvFold(gid, metrics, report))
    arr = np.asarray(pooled)
    aggregate = EvalMetrics(
        t_lklh=float(arr[:, 0].mean()),
        kl=float(arr[:, 1].mean()),
        qtp=float(arr[:, 2].mean()),
        n_tasks=len(pooled),
    )
    return CvReport(mode=mode, folds=folds, aggregate=aggregate)


def format_metrics_table(rows: list[tuple[str, EvalMetrics]]) -> str:
    """Aligned text table: one row per group plus whatever caller appends."""
    header = f"{'group':<12} {'t_lklh':>8} {'KL':>8} {'q.p':>8} {'tasks':>7}"
    lines = [header, "-" * len(header)]
    for name, m in rows:
        lines.append(
            f"{name:<12} {m.t_lklh * 100:>7.1f}% {m.kl:>8.3f} {m.qtp:>8.3f} {m.n_tasks:>7d}"
        )
    return "\n".join(lines)


def metrics_to_dict(m: EvalMetrics) -> dict:
    return {"t_lklh": m.t_lklh, "kl": m.kl, "qtp": m.qtp, "n_tasks": m.n_tasks}
