"""Seeded blocks-world generator and the selection oracle.

Environments come in five construction themes: color triples side by
side, same-color scenes told apart by geometry or position, two-color
scenes with many valid descriptions, scenes trading off positional
against chromatic cues, and large unstructured scenes with at least
twice the usual object count. An oracle grades how well each symbol
fits each object and stands in for human identifiers, with per-replica
grade noise mimicking inter-user variation.

Scene coordinates live in the unit square with y growing downward, so
analytic block features coincide with what raster extraction measures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Corpus
from .errors import PlacementFailure
from .features import SATURATION_FLOOR, RawFeatures, hsl_to_rgb, rgb_to_hsl
from .lexicon import Description, default_lexicon
from .model import Environment, EnvObject, SceneBlock
from .training import IdentificationTask, target_distribution

COLOR_NAMES = ("red", "green", "blue", "yellow", "white")
BASE_HUE = {"red": 0.0, "green": 1.0 / 3.0, "blue": 2.0 / 3.0, "yellow": 1.0 / 6.0}

# Membership shape constants for the oracle grades.
HUE_TOLERANCE = 0.15  # turns of hue distance at which a color grade hits zero
SAT_KNEE = 0.3  # saturation at which a color is fully credible
SELECT_THRESHOLD = 0.5
FALLBACK_BAND = 0.1

_SCENE_MARGIN = 0.02
_BLOCK_GAP = 0.012
_PLACEMENT_ATTEMPTS = 1000

BACKGROUND_RGB = (70, 70, 70)


@dataclass(frozen=True)
class BlockSpec:
    """One block: center, extents, and its realized (quantized) color."""

    name: str
    cx: float
    cy: float
    w: float
    h: float
    rgb: tuple[int, int, int]
    hue: float
    sat: float
    light: float
    achromatic: bool


@dataclass(frozen=True)
class OracleTruth:
    """Crisp per-object attributes and per-symbol membership grades.

    Grade rows follow default lexicon order; columns follow the
    environment's object order.
    """

    object_ids: tuple[str, ...]
    grades: np.ndarray
    attributes: dict


@dataclass
class CorpusSpec:
    env_counts: tuple[int, ...] = (5, 5, 5, 5, 2)
    descriptions_per_object: int = 5
    replicas: int = 10
    seed: int = 7
    noise_sigma: float = 0.05

    def __post_init__(self):
        if len(self.env_counts) != 5 or any(c < 0 for c in self.env_counts):
            raise ValueError("env_counts must give five nonnegative category sizes")
        if self.descriptions_per_object < 1 or self.replicas < 1:
            raise ValueError("descriptions_per_object and replicas must be at least 1")


def _realize_color(rng: np.random.Generator, name: str) -> tuple:
    """Sample a jittered instance of a named color and quantize it to bytes."""
    if name == "white":
        h = rng.uniform(0.0, 1.0)
        s = rng.uniform(0.01, 0.035)
        l = rng.uniform(0.86, 0.94)
    else:
        h = (BASE_HUE[name] + rng.uniform(-0.02, 0.02)) % 1.0
        s = rng.uniform(0.8, 0.95)
        l = rng.uniform(0.42, 0.58)
    rgb = hsl_to_rgb(h, s, l)
    qh, qs, ql = rgb_to_hsl(*rgb)
    achromatic = qs <= SATURATION_FLOOR
    if achromatic:
        qh = 0.0
    return rgb, qh, qs, ql, achromatic


def _overlaps(a: tuple, b: tuple) -> bool:
    """Separation test for (cx, cy, w, h) rectangles padded by the block gap."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    return (
        abs(ax - bx) < (aw + bw) / 2 + _BLOCK_GAP
        and abs(ay - by) < (ah + bh) / 2 + _BLOCK_GAP
    )


def _place_scattered(rng, sizes, x_range=(0.0, 1.0), y_range=(0.0, 1.0)):
    """Place blocks of the given sizes without overlap by rejection sampling."""
    placed = []
    for w, h in sizes:
        lo_x = max(x_range[0], _SCENE_MARGIN) + w / 2
        hi_x = min(x_range[1], 1 - _SCENE_MARGIN) - w / 2
        lo_y = max(y_range[0], _SCENE_MARGIN) + h / 2
        hi_y = min(y_range[1], 1 - _SCENE_MARGIN) - h / 2
        if lo_x >= hi_x or lo_y >= hi_y:
            raise PlacementFailure("block does not fit in its region")
        for _ in range(_PLACEMENT_ATTEMPTS):
            cx = rng.uniform(lo_x, hi_x)
            cy = rng.uniform(lo_y, hi_y)
            rect = (cx, cy, w, h)
            if not any(_overlaps(rect, p) for p in placed):
                placed.append(rect)
                break
        else:
            raise PlacementFailure(f"could not place block after {_PLACEMENT_ATTEMPTS} attempts")
    return placed


def _blocks_category1(rng) -> list[tuple]:
    """Three differently colored blocks side by side."""
    colors = [COLOR_NAMES[i] for i in rng.choice(4, size=3, replace=False)]
    y0 = rng.uniform(0.35, 0.65)
    rects = []
    for slot, name in zip((0.18, 0.50, 0.82), colors):
        w = rng.uniform(0.10, 0.18)
        h = rng.uniform(0.10, 0.18)
        cx = slot + rng.uniform(-0.05, 0.05)
        cy = y0 + rng.uniform(-0.04, 0.04)
        rects.append((name, cx, cy, w, h))
    for i in range(len(rects)):
        for j in range(i + 1, len(rects)):
            if _overlaps(rects[i][1:], rects[j][1:]):
                raise PlacementFailure("side-by-side blocks collided")
    return rects


_SHAPE_PROFILES = (
    ((0.050, 0.075), (0.16, 0.24)),  # thin
    ((0.220, 0.300), (0.06, 0.09)),  # wide
    ((0.080, 0.110), (0.24, 0.30)),  # tall
    ((0.120, 0.180), (0.05, 0.07)),  # short
    ((0.190, 0.240), (0.19, 0.24)),  # big
    ((0.055, 0.080), (0.055, 0.08)),  # small
)


def _blocks_category2(rng) -> list[tuple]:
    """Same-color blocks distinguished only by geometry and position."""
    n = int(rng.integers(4, 7))
    color = COLOR_NAMES[int(rng.integers(0, 5))]
    profiles = [_SHAPE_PROFILES[i] for i in rng.choice(len(_SHAPE_PROFILES), n, replace=False)]
    sizes = [(rng.uniform(*wr), rng.uniform(*hr)) for wr, hr in profiles]
    rects = _place_scattered(rng, sizes)
    return [(color, cx, cy, w, h) for (cx, cy, w, h) in rects]


def _color_pair(rng) -> tuple[str, str]:
    """Two distinct colors; red and white never co-occur (their encodings clash)."""
    while True:
        a, b = (COLOR_NAMES[i] for i in rng.choice(5, size=2, replace=False))
        if {a, b} != {"red", "white"}:
            return a, b


def _blocks_category3(rng) -> list[tuple]:
    """Two colors arranged so several descriptions fit each block."""
    n = int(rng.integers(4, 7))
    a, b = _color_pair(rng)
    names = [a] * (n // 2) + [b] * (n - n // 2)
    rng.shuffle(names)
    sizes = [(rng.uniform(0.07, 0.20), rng.uniform(0.07, 0.20)) for _ in range(n)]
    rects = _place_scattered(rng, sizes)
    return [(name, cx, cy, w, h) for name, (cx, cy, w, h) in zip(names, rects)]


def _blocks_category4(rng) -> list[tuple]:
    """Color groups mostly separated in space, with one block swapped across."""
    n = int(rng.integers(4, 8))
    a, b = _color_pair(rng)
    horizontal = bool(rng.integers(0, 2))
    n_a = n // 2
    names = [a] * n_a + [b] * (n - n_a)
    sides = [0] * n_a + [1] * (n - n_a)
    sides[int(rng.integers(0, n))] ^= 1  # the trade-off block
    sizes = [(rng.uniform(0.07, 0.16), rng.uniform(0.07, 0.16)) for _ in range(n)]

    placed = []
    for (w, h), side in zip(sizes, sides):
        if horizontal:
            region = ((0.0, 0.48) if side == 0 else (0.52, 1.0), (0.0, 1.0))
        else:
            region = ((0.0, 1.0), (0.0, 0.48) if side == 0 else (0.52, 1.0))
        lo_x = max(region[0][0], _SCENE_MARGIN) + w / 2
        hi_x = min(region[0][1], 1 - _SCENE_MARGIN) - w / 2
        lo_y = max(region[1][0], _SCENE_MARGIN) + h / 2
        hi_y = min(region[1][1], 1 - _SCENE_MARGIN) - h / 2
        if lo_x >= hi_x or lo_y >= hi_y:
            raise PlacementFailure("block does not fit in its region")
        for _ in range(_PLACEMENT_ATTEMPTS):
            cx = rng.uniform(lo_x, hi_x)
            cy = rng.uniform(lo_y, hi_y)
            rect = (cx, cy, w, h)
            if not any(_overlaps(rect, p) for p in placed):
                placed.append(rect)
                break
        else:
            raise PlacementFailure(f"could not place block after {_PLACEMENT_ATTEMPTS} attempts")
    return [(name, cx, cy, w, h) for name, (cx, cy, w, h) in zip(names, placed)]


def _blocks_category5(rng) -> list[tuple]:
    """Many blocks, any colors, no pattern."""
    n = int(rng.integers(12, 17))
    names = [COLOR_NAMES[int(i)] for i in rng.integers(0, 5, size=n)]
    sizes = [(rng.uniform(0.05, 0.12), rng.uniform(0.05, 0.12)) for _ in range(n)]
    rects = _place_scattered(rng, sizes)
    return [(name, cx, cy, w, h) for name, (cx, cy, w, h) in zip(names, rects)]


_CATEGORY_BUILDERS = {
    1: _blocks_category1,
    2: _blocks_category2,
    3: _blocks_category3,
    4: _blocks_category4,
    5: _blocks_category5,
}


def _minmax_grade(values: np.ndarray) -> np.ndarray:
    spread = values.max() - values.min()
    if spread < 1e-12:
        return np.full_like(values, 0.5)
    return (values - values.min()) / spread


def _circular_distance(h: np.ndarray, h0: float) -> np.ndarray:
    d = np.abs(h - h0) % 1.0
    return np.minimum(d, 1.0 - d)


def _compute_grades(blocks: list[BlockSpec]) -> tuple[np.ndarray, dict]:
    x = np.array([b.cx for b in blocks])
    y = np.array([b.cy for b in blocks])
    w = np.array([b.w for b in blocks])
    h = np.array([b.h for b in blocks])
    area = w * h
    hue = np.array([b.hue for b in blocks])
    sat = np.array([b.sat for b in blocks])
    light = np.array([b.light for b in blocks])

    sat_factor = np.clip(sat / SAT_KNEE, 0.0, 1.0)
    rows = [
        1.0 - x,  # left
        x,  # right
        1.0 - y,  # top
        y,  # bottom
        1.0 - _minmax_grade(w),  # thin
        _minmax_grade(w),  # wide
        1.0 - _minmax_grade(h),  # short
        _minmax_grade(h),  # tall
        1.0 - _minmax_grade(area),  # small
        _minmax_grade(area),  # big
    ]
    for name in ("red", "green", "blue", "yellow"):
        proximity = np.clip(1.0 - _circular_distance(hue, BASE_HUE[name]) / HUE_TOLERANCE, 0.0, 1.0)
        rows.append(proximity * sat_factor)
    rows.append(np.clip((light - 0.55) / 0.3, 0.0, 1.0) * (1.0 - sat_factor))  # white

    attributes = {
        "x": x, "y": y, "w": w, "h": h, "area": area,
        "hue": hue, "sat": sat, "light": light,
        "color": [b.name for b in blocks],
    }
    return np.vstack(rows), attributes


def generate_environment(category: int, seed, env_id: str | None = None):
    """Build one deterministic environment of the given category.

    Returns (Environment, OracleTruth). Raises PlacementFailure when the
    seed cannot satisfy the layout constraints; callers retry with the
    next seed.
    """
    if category not in _CATEGORY_BUILDERS:
        raise ValueError(f"category must be 1..5, got {category}")
    rng = np.random.default_rng(seed)
    raw_blocks = _CATEGORY_BUILDERS[category](rng)

    blocks = []
    for name, cx, cy, w, h in raw_blocks:
        rgb, qh, qs, ql, achromatic = _realize_color(rng, name)
        blocks.append(BlockSpec(name, cx, cy, w, h, rgb, qh, qs, ql, achromatic))

    env_id = env_id or f"env{category}.x"
    objects = []
    scene = []
    for k, b in enumerate(blocks):
        oid = f"o{k + 1}"
        feats = RawFeatures(
            x_pos=b.cx,
            y_pos=b.cy,
            width=b.w,
            height=b.h,
            size=b.w * b.h,
            hue=b.hue,
            light=b.light,
            achromatic=b.achromatic,
        )
        objects.append(EnvObject(oid, feats))
        scene.append(SceneBlock(oid, b.cx - b.w / 2, b.cy - b.h / 2, b.w, b.h, b.rgb))
    env = Environment(env_id, f"gamma{category}", tuple(objects), tuple(scene))

    grades, attributes = _compute_grades(blocks)
    truth = OracleTruth(tuple(o.id for o in objects), grades, attributes)
    return env, truth


def oracle_select(truth: OracleTruth, desc: Description, noise: np.ndarray | None = None) -> frozenset:
    """Objects a careful identifier would accept for this description.

    The joint grade is the minimum over the description's symbols; the
    crisp band is grades >= 0.5, falling back to the near-argmax band so
    the answer is never empty (even for contradictory descriptions). An
    empty description selects everything.
    """
    if len(desc) == 0:
        return frozenset(truth.object_ids)
    g = truth.grades[desc.sorted_indices()].min(axis=0)
    if noise is not None:
        g = np.clip(g + noise, 0.0, 1.0)
    mask = g >= SELECT_THRESHOLD
    if not mask.any():
        mask = g >= g.max() - FALLBACK_BAND
    return frozenset(oid for oid, m in zip(truth.object_ids, mask) if m)


def _describe_object(rng, truth: OracleTruth, obj_index: int, count: int) -> list[Description]:
    """Descriptions for one object, from ambiguous singles to specific triples."""
    mu = truth.grades[:, obj_index]
    candidates = np.flatnonzero(mu >= 0.6)
    if candidates.size == 0:
        candidates = np.array([int(mu.argmax())])
    weights = mu[candidates] ** 2
    weights = weights / weights.sum()
    lengths = (1, 2, 3, 2, 1)
    descs = []
    for j in range(count):
        size = min(lengths[j % len(lengths)], candidates.size)
        chosen = rng.choice(candidates, size=size, replace=False, p=weights)
        descs.append(Description(frozenset(int(i) for i in chosen)))
    return descs


def generate_corpus(spec: CorpusSpec | None = None) -> Corpus:
    """Deterministically synthesize a full corpus from a CorpusSpec.

    Identification tasks replicate the oracle's selections with seeded
    Gaussian grade noise per replica; targets follow the fixed-mass rule.
    """
    spec = spec or CorpusSpec()
    lexicon = default_lexicon()
    environments = []
    tasks = []
    for cat, count in enumerate(spec.env_counts, start=1):
        for idx in range(count):
            env = truth = None
            for attempt in range(50):
                ss = np.random.SeedSequence([spec.seed, cat, idx, attempt])
                env_ss, desc_ss, noise_ss = ss.spawn(3)
                try:
                    env, truth = generate_environment(
                        cat, env_ss, env_id=f"env{cat}.{idx + 1:02d}"
                    )
                    break
                except PlacementFailure:
                    continue
            if env is None:
                raise PlacementFailure(
                    f"category {cat} environment {idx} failed for every retry seed"
                )
            environments.append(env)

            desc_rng = np.random.default_rng(desc_ss)
            noise_rng = np.random.default_rng(noise_ss)
            n_obj = len(env.objects)
            for obj_index in range(n_obj):
                for desc in _describe_object(
                    desc_rng, truth, obj_index, spec.descriptions_per_object
                ):
                    for _ in range(spec.replicas):
                        noise = (
                            noise_rng.normal(0.0, spec.noise_sigma, size=n_obj)
                            if spec.noise_sigma > 0
                            else None
                        )
                        selected = oracle_select(truth, desc, noise)
                        tasks.append(
                            IdentificationTask(
                                env.id, desc, selected, target_distribution(selected, env)
                            )
                        )
    return Corpus(environments, tasks)


def rasterize_environment(
    env: Environment,
    width: int = 256,
    height: int = 256,
    brightness: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Paint an environment's scene into an image and label mask.

    Mask values are 1-based object ordinals in environment order. When
    `brightness` is given (one factor per object) the block colors are
    scaled by it and the background is dimmed, for posterior overlays.
    """
    if env.scene is None:
        raise ValueError(f"environment {env.id!r} carries no scene geometry")
    bg = np.array(BACKGROUND_RGB, dtype=np.float64)
    if brightness is not None:
        bg = bg * 0.4
    image = np.tile(bg.astype(np.uint8), (height, width, 1))
    mask = np.zeros((height, width), dtype=np.int64)
    for k, blk in enumerate(env.scene):
        c0 = max(0, int(np.ceil(blk.x * width - 0.5)))
        c1 = min(width, int(np.ceil((blk.x + blk.w) * width - 0.5)))
        r0 = max(0, int(np.ceil(blk.y * height - 0.5)))
        r1 = min(height, int(np.ceil((blk.y + blk.h) * height - 0.5)))
        color = np.array(blk.color, dtype=np.float64)
        if brightness is not None:
            color = color * float(brightness[k])
        image[r0:r1, c0:c1] = np.clip(np.round(color), 0, 255).astype(np.uint8)
        mask[r0:r1, c0:c1] = k + 1
    return image, mask
