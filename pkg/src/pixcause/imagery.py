"""Image tensors, pixel masks, baselines and occlusion contexts.

A "pixel" is always a full (H, W) grid cell; channels are never split. Masks
select pixels to KEEP from the image, everything else is replaced by the
baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import ConfigurationError, CursorExhausted, IngestionError


def _frozen(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ImageTensor:
    """Float32 H x W x C array with a declared value range."""

    array: np.ndarray
    value_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        a = np.asarray(self.array, dtype=np.float32)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3 or a.shape[0] < 1 or a.shape[1] < 1 or a.shape[2] < 1:
            raise ConfigurationError(f"image must be H x W x C, got shape {a.shape}")
        lo, hi = self.value_range
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ConfigurationError(f"bad value_range {self.value_range}")
        if not np.all(np.isfinite(a)):
            raise ConfigurationError("image contains non-finite values")
        if a.size and (a.min() < lo or a.max() > hi):
            raise ConfigurationError(
                f"image values [{a.min()}, {a.max()}] outside declared range [{lo}, {hi}]"
            )
        object.__setattr__(self, "array", _frozen(a))
        object.__setattr__(self, "value_range", (float(lo), float(hi)))

    @property
    def height(self):
        return self.array.shape[0]

    @property
    def width(self):
        return self.array.shape[1]

    @property
    def channels(self):
        return self.array.shape[2]

    @property
    def n_pixels(self):
        return self.height * self.width


@dataclass(frozen=True)
class PixelMask:
    """Boolean H x W grid; True marks pixels kept from the image."""

    array: np.ndarray
    cardinality: int = field(init=False)

    def __post_init__(self):
        a = np.asarray(self.array, dtype=bool)
        if a.ndim != 2:
            raise ConfigurationError(f"mask must be H x W, got shape {a.shape}")
        object.__setattr__(self, "array", _frozen(a))
        object.__setattr__(self, "cardinality", int(a.sum()))

    @classmethod
    def empty(cls, height, width):
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def full(cls, height, width):
        return cls(np.ones((height, width), dtype=bool))

    @classmethod
    def from_flat_indices(cls, height, width, indices):
        a = np.zeros(height * width, dtype=bool)
        a[np.asarray(indices, dtype=np.int64)] = True
        return cls(a.reshape(height, width))

    def flat_indices(self):
        """Row-major indices of the selected pixels, ascending."""
        return np.flatnonzero(self.array.ravel())

    def complement(self):
        return PixelMask(~self.array)

    def union(self, other):
        return PixelMask(self.array | other.array)

    def intersection(self, other):
        return PixelMask(self.array & other.array)

    def save_png(self, path):
        """8-bit grayscale PNG, 255 inside the mask, 0 outside."""
        img = Image.fromarray(np.where(self.array, 255, 0).astype(np.uint8), mode="L")
        img.save(path, format="PNG")

    @classmethod
    def load_png(cls, path):
        try:
            img = Image.open(path)
        except OSError as e:
            raise IngestionError(f"cannot read mask {path}: {e}") from e
        a = np.asarray(img.convert("L"))
        if not np.all((a == 0) | (a == 255)):
            raise IngestionError(f"mask {path} has values other than 0 and 255")
        return cls(a == 255)


@dataclass(frozen=True)
class BaselineSpec:
    """Occlusion value: a scalar or one value per channel."""

    values: tuple[float, ...]

    def __init__(self, values=0.0):
        if np.isscalar(values):
            values = (float(values),)
        else:
            values = tuple(float(v) for v in values)
        if not values or not all(np.isfinite(v) for v in values):
            raise ConfigurationError(f"bad baseline values {values!r}")
        object.__setattr__(self, "values", values)

    def check_range(self, value_range):
        lo, hi = value_range
        for v in self.values:
            if not (lo <= v <= hi):
                raise ConfigurationError(
                    f"baseline value {v} outside image range [{lo}, {hi}]"
                )

    def materialize(self, image: ImageTensor) -> np.ndarray:
        """Full-size array of the baseline, broadcast over the image shape."""
        self.check_range(image.value_range)
        vals = self.values
        if len(vals) == 1:
            vals = vals * image.channels
        if len(vals) != image.channels:
            raise ConfigurationError(
                f"baseline has {len(self.values)} channels, image has {image.channels}"
            )
        out = np.empty_like(image.array)
        out[:] = np.asarray(vals, dtype=np.float32)
        return out


def compose(image: ImageTensor, mask: PixelMask, baseline: BaselineSpec) -> ImageTensor:
    """Image values inside the mask, baseline values outside."""
    if mask.array.shape != (image.height, image.width):
        raise ConfigurationError(
            f"mask shape {mask.array.shape} != image grid {(image.height, image.width)}"
        )
    out = np.where(mask.array[:, :, None], image.array, baseline.materialize(image))
    return ImageTensor(out, value_range=image.value_range)


class ContextCursor:
    """Walks a pixel ranking, growing a composed context one pixel per step.

    insertion mode starts from the full baseline and paints ranked pixels with
    image values; deletion mode starts from the image and paints ranked pixels
    with the baseline. Cursors are immutable: advance() returns a new cursor
    at position + 1. position counts applied pixels, so a fresh cursor is at 0.
    """

    __slots__ = ("image", "mode", "ranking", "position", "_baseline_arr", "_composed")

    def __init__(self, image, baseline, ranking, mode, _state=None):
        if mode not in ("insertion", "deletion"):
            raise ConfigurationError(f"unknown cursor mode {mode!r}")
        ranking = np.asarray(ranking, dtype=np.int64)
        if ranking.ndim != 1:
            raise ConfigurationError("ranking must be a flat index vector")
        if len(np.unique(ranking)) != ranking.size or ranking.size != image.n_pixels:
            raise ConfigurationError("ranking must be a permutation of all pixels")
        self.image = image
        self.mode = mode
        self.ranking = _frozen(ranking)
        if _state is None:
            base = baseline.materialize(image)
            start = base if mode == "insertion" else image.array.copy()
            self.position = 0
            self._baseline_arr = _frozen(base)
            self._composed = _frozen(start)
        else:
            self.position, self._baseline_arr, self._composed = _state

    @property
    def exhausted(self):
        return self.position >= self.ranking.size

    def current(self) -> ImageTensor:
        """Composed context at the current position."""
        return ImageTensor(self._composed, value_range=self.image.value_range)

    def mask(self) -> PixelMask:
        """Pixels applied so far (kept pixels for insertion, removed for deletion)."""
        h, w = self.image.height, self.image.width
        return PixelMask.from_flat_indices(h, w, self.ranking[: self.position])

    def kept_mask(self) -> PixelMask:
        """Pixels whose IMAGE value is present in current()."""
        m = self.mask()
        return m if self.mode == "insertion" else m.complement()

    def advance(self) -> "ContextCursor":
        if self.exhausted:
            raise CursorExhausted(
                f"cursor already covers all {self.ranking.size} pixels"
            )
        h, w = self.image.height, self.image.width
        p = int(self.ranking[self.position])
        r, c = divmod(p, w)
        nxt = self._composed.copy()
        src = self.image.array if self.mode == "insertion" else self._baseline_arr
        nxt[r, c, :] = src[r, c, :]
        state = (self.position + 1, self._baseline_arr, _frozen(nxt))
        cur = ContextCursor.__new__(ContextCursor)
        cur.image, cur.mode, cur.ranking = self.image, self.mode, self.ranking
        cur.position, cur._baseline_arr, cur._composed = state
        return cur


def sweep(image, baseline, ranking, mode):
    """Yield (k, context) for k = 1..n_pixels, reusing one buffer.

    The yielded array is the cursor's working buffer: copy it if it must
    outlive the iteration step.
    """
    ranking = np.asarray(ranking, dtype=np.int64)
    base = baseline.materialize(image)
    buf = base.copy() if mode == "insertion" else image.array.copy()
    src = image.array if mode == "insertion" else base
    w = image.width
    for k, p in enumerate(ranking, start=1):
        r, c = divmod(int(p), w)
        buf[r, c, :] = src[r, c, :]
        yield k, buf
