"""The discriminative identification core.

An object's score for a description is the sum of per-symbol dot products
between its encoded features and the symbol's weights, taken over the
description's symbols only. The identification posterior is the softmax
of these scores across the environment's objects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .features import EnvStats, RawFeatures, compute_env_stats, symbol_features
from .lexicon import Description, Lexicon


@dataclass(frozen=True)
class EnvObject:
    id: str
    features: RawFeatures


@dataclass(frozen=True)
class SceneBlock:
    """Axis-aligned block rectangle in unit scene coordinates (y grows downward)."""

    object_id: str
    x: float
    y: float
    w: float
    h: float
    color: tuple[int, int, int]


@dataclass(frozen=True)
class Environment:
    """Ordered candidate objects; the normalization context of the posterior."""

    id: str
    category: str
    objects: tuple[EnvObject, ...]
    scene: tuple[SceneBlock, ...] | None = None

    def __post_init__(self):
        if not self.objects:
            raise ValueError(f"environment {self.id!r} has no objects")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError(f"environment {self.id!r} has duplicate object ids")

    def __len__(self) -> int:
        return len(self.objects)

    def object_ids(self) -> list[str]:
        return [o.id for o in self.objects]

    def index_of(self, object_id: str) -> int:
        for i, o in enumerate(self.objects):
            if o.id == object_id:
                return i
        raise KeyError(object_id)


class ModelParams:
    """Per-symbol weight vectors stored as one flat array in lexicon order."""

    def __init__(self, lexicon: Lexicon, flat: np.ndarray):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (lexicon.total_dim,):
            raise DimensionMismatch(
                f"parameter vector has {flat.shape[0] if flat.ndim == 1 else flat.shape} "
                f"entries, lexicon layout needs {lexicon.total_dim}"
            )
        if not np.all(np.isfinite(flat)):
            raise ValueError("parameters must be finite")
        self.lexicon = lexicon
        self.flat = flat

    @classmethod
    def zeros(cls, lexicon: Lexicon) -> "ModelParams":
        return cls(lexicon, np.zeros(lexicon.total_dim))

    def beta(self, name: str) -> np.ndarray:
        """Weight slice of one symbol (a view into the flat vector)."""
        sym = self.lexicon.lookup(name)
        off = self.lexicon.offset(sym)
        return self.flat[off : off + sym.dim]

    def with_flat(self, flat: np.ndarray) -> "ModelParams":
        return ModelParams(self.lexicon, flat)


@dataclass(frozen=True)
class Posterior:
    """Probabilities aligned with the environment's object order."""

    probs: np.ndarray

    def ranked(self, env: Environment) -> list[tuple[str, float]]:
        """(object_id, prob) pairs sorted by descending probability, stable."""
        order = sorted(range(len(self.probs)), key=lambda i: -self.probs[i])
        return [(env.objects[i].id, float(self.probs[i])) for i in order]


def softmax(scores: np.ndarray) -> np.ndarray:
    """Overflow-safe softmax via max subtraction."""
    shifted = scores - scores.max()
    e = np.exp(shifted)
    return e / e.sum()


def score_vector(
    desc: Description,
    env: Environment,
    params: ModelParams,
    stats: EnvStats | None = None,
) -> np.ndarray:
    """Summed per-symbol scores for every object in the environment."""
    if stats is None:
        stats = compute_env_stats(env)
    lex = params.lexicon
    scores = np.zeros(len(env.objects))
    for idx in desc.sorted_indices():
        sym = lex.symbols[idx]
        b = params.beta(sym.name)
        for j, obj in enumerate(env.objects):
            scores[j] += symbol_features(sym, obj.features, stats) @ b
    return scores


def object_score(obj_index: int, desc: Description, env: Environment, params: ModelParams) -> float:
    """Score of one object: zero for the empty description."""
    if not 0 <= obj_index < len(env.objects):
        raise IndexError(f"object index {obj_index} out of range")
    return float(score_vector(desc, env, params)[obj_index])


def posterior(desc: Description, env: Environment, params: ModelParams) -> Posterior:
    """The identification distribution over the environment's objects."""
    return Posterior(softmax(score_vector(desc, env, params)))


def nll(obj_index: int, desc: Description, env: Environment, params: ModelParams) -> float:
    """Negative log posterior probability of one object."""
    if not 0 <= obj_index < len(env.objects):
        raise IndexError(f"object index {obj_index} out of range")
    scores = score_vector(desc, env, params)
    shifted = scores - scores.max()
    return float(np.log(np.exp(shifted).sum()) - shifted[obj_index])


def entropy(probs: np.ndarray) -> float:
    """Shannon entropy in nats, with 0·log 0 = 0."""
    p = np.asarray(probs, dtype=np.float64)
    nz = p > 0
    return float(-(p[nz] * np.log(p[nz])).sum())
