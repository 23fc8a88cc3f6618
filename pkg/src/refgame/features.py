"""Per-object raw features and their per-symbol encodings.

Raw features are the seven normalized measurements taken from an object's
pixel cluster. Per-symbol feature vectors pair each raw channel with an
environment-contextual z-score so a symbol can mean both "in the left
half" and "leftmost among these"; hue is encoded as a unit phasor so
that colors wrapping at 0/1 stay linearly separable.
"""

from __future__ import annotations

import colorsys
import math
from dataclasses import dataclass

import numpy as np

from . import lexicon as lx
from .errors import EmptyImage, ObjectNotFound

# Pixels at or below this saturation carry no usable hue.
SATURATION_FLOOR = 0.05

# Lightness histogram resolution for the mode estimate.
LIGHT_BINS = 32

# Below this spread a channel is treated as constant across the environment.
STD_FLOOR = 1e-9

SCALAR_CHANNELS = (lx.X_POS, lx.Y_POS, lx.WIDTH, lx.HEIGHT, lx.SIZE, lx.LIGHT)


@dataclass(frozen=True)
class RawFeatures:
    """The seven per-object measurements, all normalized to the image.

    `achromatic` marks clusters whose pixels were all too unsaturated to
    contribute hue; their hue is fixed at 0.
    """

    x_pos: float
    y_pos: float
    width: float
    height: float
    size: float
    hue: float
    light: float
    achromatic: bool = False

    def channel(self, name: str) -> float:
        return getattr(self, name)


@dataclass(frozen=True)
class EnvStats:
    """Per-channel mean and population standard deviation over one environment."""

    mean: dict
    std: dict


def rgb_to_hsl(r: int, g: int, b: int) -> tuple[float, float, float]:
    """Convert 8-bit RGB to hexcone HSL with hue in turns.

    Achromatic inputs get hue 0 and saturation 0.
    """
    h, l, s = colorsys.rgb_to_hls(r / 255.0, g / 255.0, b / 255.0)
    return h, s, l


def hsl_to_rgb(h: float, s: float, l: float) -> tuple[int, int, int]:
    """Inverse of rgb_to_hsl, rounding to 8-bit channels."""
    r, g, b = colorsys.hls_to_rgb(h % 1.0, l, s)
    return round(r * 255), round(g * 255), round(b * 255)


def extract_cluster_features(image: np.ndarray, mask: np.ndarray, object_id: int) -> RawFeatures:
    """Measure one labeled pixel cluster of an image.

    `image` is HxWx3 uint8, `mask` is HxW with pixel value = object id and
    0 for background. Positions are means of pixel centers; width/height
    are bounding-box extents; hue is the circular mean over sufficiently
    saturated pixels; light is the mode of a 32-bin lightness histogram,
    reported as the bin center (ties resolve to the lower bin).
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("image must be HxWx3")
    if mask.shape != image.shape[:2]:
        raise ValueError("image and mask dimensions differ")
    h_px, w_px = mask.shape
    if h_px == 0 or w_px == 0:
        raise EmptyImage("image has zero pixels")

    rows, cols = np.nonzero(mask == object_id)
    if rows.size == 0:
        raise ObjectNotFound(f"object id {object_id} not present in mask")

    x_pos = float(np.mean(cols + 0.5) / w_px)
    y_pos = float(np.mean(rows + 0.5) / h_px)
    width = float((cols.max() - cols.min() + 1) / w_px)
    height = float((rows.max() - rows.min() + 1) / h_px)
    size = float(rows.size / (w_px * h_px))

    rgb = image[rows, cols].astype(np.float64) / 255.0
    hues, sats, lights = _hsl_arrays(rgb)

    chromatic = sats > SATURATION_FLOOR
    if np.any(chromatic):
        ang = 2.0 * math.pi * hues[chromatic]
        hue = math.atan2(np.sin(ang).sum(), np.cos(ang).sum()) / (2.0 * math.pi) % 1.0
        achromatic = False
    else:
        hue = 0.0
        achromatic = True

    bins = np.minimum((lights * LIGHT_BINS).astype(int), LIGHT_BINS - 1)
    mode_bin = int(np.bincount(bins, minlength=LIGHT_BINS).argmax())
    light = (mode_bin + 0.5) / LIGHT_BINS

    return RawFeatures(x_pos, y_pos, width, height, size, float(hue), light, achromatic)


def _hsl_arrays(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized hexcone HSL over an Nx3 array of unit-range RGB."""
    mx = rgb.max(axis=1)
    mn = rgb.min(axis=1)
    light = (mx + mn) / 2.0
    delta = mx - mn
    chroma = delta > 0

    denom = 1.0 - np.abs(2.0 * light - 1.0)
    sat = np.zeros_like(light)
    np.divide(delta, denom, out=sat, where=chroma & (denom > 0))

    r, g, b = rgb[:, 0], rgb[:, 1], rgb[:, 2]
    safe = np.where(chroma, delta, 1.0)
    is_r = chroma & (mx == r)
    is_g = chroma & (mx == g) & ~is_r
    is_b = chroma & ~is_r & ~is_g
    hue6 = np.zeros_like(light)
    hue6[is_r] = (((g - b) / safe) % 6.0)[is_r]
    hue6[is_g] = ((b - r) / safe + 2.0)[is_g]
    hue6[is_b] = ((r - g) / safe + 4.0)[is_b]
    hue = np.where(chroma, hue6 / 6.0 % 1.0, 0.0)
    return hue, sat, light


def compute_env_stats(env) -> EnvStats:
    """Sample mean and population std of every scalar channel over `env`'s objects.

    Hue is excluded; its phasor encoding needs no standardization.
    """
    values = {ch: [] for ch in SCALAR_CHANNELS}
    for obj in env.objects:
        for ch in SCALAR_CHANNELS:
            values[ch].append(obj.features.channel(ch))
    mean = {}
    std = {}
    for ch, vals in values.items():
        arr = np.asarray(vals, dtype=np.float64)
        mean[ch] = float(arr.mean())
        spread = float(arr.std())
        # roundoff on constant channels must read as exactly constant
        std[ch] = 0.0 if spread < STD_FLOOR else spread
    return EnvStats(mean=mean, std=std)


def symbol_features(sym: lx.Symbol, raw: RawFeatures, stats: EnvStats) -> np.ndarray:
    """Encode one object's raw features for one symbol.

    Scalar channels emit [raw, zscore] with the z-score zeroed when the
    environment spread vanishes; the hue channel emits [cos, sin] of the
    hue angle.
    """
    parts = []
    for ch in sym.channels:
        if ch == lx.HUE:
            ang = 2.0 * math.pi * raw.hue
            parts.extend((math.cos(ang), math.sin(ang)))
        else:
            value = raw.channel(ch)
            sd = stats.std[ch]
            z = 0.0 if sd < STD_FLOOR else (value - stats.mean[ch]) / sd
            parts.extend((value, z))
    return np.asarray(parts, dtype=np.float64)
