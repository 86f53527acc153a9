"""Per-pixel causal responsibility landscapes and the pixel rankings they induce.

Two strategies:

- "refine" (default): iterative random partition refinement. Each iteration
  splits the image into up to `branching` rectangles, evaluates every subset
  of parts composed over the baseline, scores pixels of parts that are
  but-for at part granularity, and recurses into parts of passing subsets
  while keeping the rest of the passing subset as context. Iterations are
  averaged, then rescaled so the best pixel scores 1.
- "exact": singleton parts with exhaustive subset evaluation (all 2^n masks),
  for grids of at most 16 pixels. Returns raw witness responsibilities
  1/(1+k) with no rescaling, so scores are directly comparable to a
  brute-force oracle.

A pixel's score in a kept-set K is 1/(1 + changed(K)), where changed(K)
counts pixels outside K whose image value differs from the baseline: those
are the context changes needed to make the pixel decisive.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .classifier import classify, classify_confidences, validate_baseline
from .errors import ConfigurationError
from .imagery import ImageTensor

EXACT_PIXEL_LIMIT = 16


@dataclass(frozen=True)
class RankingConfig:
    seed: int = 0
    iterations: int = 20
    branching: int = 4
    depth_limit: int | None = None
    refine_threshold: int = 4
    strategy: str = "refine"
    chunk_size: int = 1024

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError("iterations must be at least 1")
        if self.branching < 2:
            raise ConfigurationError("branching must be at least 2")
        if self.refine_threshold < 1:
            raise ConfigurationError("refine_threshold must be at least 1")
        if self.depth_limit is not None and self.depth_limit < 0:
            raise ConfigurationError("depth_limit must be non-negative")
        if self.strategy not in ("refine", "exact"):
            raise ConfigurationError(f"unknown strategy {self.strategy!r}")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")


@dataclass(frozen=True)
class ResponsibilityLandscape:
    scores: np.ndarray  # (H, W) in [0, 1]
    seed: int
    iterations: int
    degenerate: bool = False

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        if s.ndim != 2:
            raise ConfigurationError("landscape must be H x W")
        if not np.all(np.isfinite(s)) or s.min() < 0 or s.max() > 1:
            raise ConfigurationError("landscape scores must be finite in [0,1]")
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)


def pixel_ranking(image, spec, baseline, cfg: RankingConfig) -> ResponsibilityLandscape:
    """Responsibility landscape for the image's own classification."""
    if not validate_baseline(spec, image, baseline):
        raise ConfigurationError(
            "baseline is invalid for this image: the fully occluded image "
            "keeps the original label, so no contrastive set can exist"
        )
    label = classify(spec, image).label
    if cfg.strategy == "exact":
        scores = _exact_scores(image, spec, baseline, label, cfg.chunk_size)
        degenerate = bool(scores.max() == 0.0)
    else:
        scores, degenerate = _refine_scores(image, spec, baseline, label, cfg)
    return ResponsibilityLandscape(
        scores=scores, seed=cfg.seed, iterations=cfg.iterations, degenerate=degenerate
    )


def rank_pixels(landscape, order):
    """Flat pixel indices sorted by score; ties break row-major ascending."""
    s = landscape.scores.ravel()
    idx = np.arange(s.size)
    if order == "high_to_low":
        return np.lexsort((idx, -s))
    if order == "low_to_high":
        return np.lexsort((idx, s))
    raise ConfigurationError(f"unknown order {order!r}")


def _diff_grid(image, baseline):
    # pixels whose image value differs from the baseline in any channel
    return np.any(image.array != baseline.materialize(image), axis=2)


def _exact_scores(image, spec, baseline, label, chunk_size):
    n = image.n_pixels
    if n > EXACT_PIXEL_LIMIT:
        raise ConfigurationError(
            f"exact strategy enumerates 2^n masks; {n} pixels exceeds the "
            f"{EXACT_PIXEL_LIMIT}-pixel limit"
        )
    h, w, c = image.array.shape
    masks = np.arange(1 << n, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(bool)  # (2^n, n)

    flat_img = image.array.reshape(n, c)
    flat_base = baseline.materialize(image).reshape(n, c)
    labels = np.empty(masks.size, dtype=np.int64)
    for lo in range(0, masks.size, chunk_size):
        hi = min(lo + chunk_size, masks.size)
        keep = bits[lo:hi][:, :, None]
        batch = np.where(keep, flat_img[None], flat_base[None]).reshape(hi - lo, h, w, c)
        conf = classify_confidences(spec, batch)
        labels[lo:hi] = np.argmax(conf, axis=1)

    diff_bits = 0
    for i in np.flatnonzero(_diff_grid(image, baseline).ravel()):
        diff_bits |= 1 << int(i)
    popcount = np.zeros(masks.size, dtype=np.int16)
    for b in range(n):
        popcount[(masks & (1 << b)) != 0] += 1

    scores = np.zeros(n, dtype=np.float64)
    for p in range(n):
        bit = 1 << p
        has_p = (masks & bit) != 0
        candidates = has_p & (labels == label) & (labels[masks ^ bit] != label)
        if not candidates.any():
            continue
        changed = popcount[diff_bits & ~masks[candidates]]
        scores[p] = 1.0 / (1.0 + int(changed.min()))
    return scores.reshape(h, w)


def _split_rect(rect, rng, branching):
    """Partition a rect with random cut lines into at most `branching` parts."""
    r0, c0, r1, c1 = rect
    per_axis = max(2, int(np.sqrt(branching)))
    rows = _cuts(r0, r1, per_axis, rng)
    cols = _cuts(c0, c1, per_axis, rng)
    return [
        (ra, ca, rb, cb)
        for ra, rb in zip(rows[:-1], rows[1:])
        for ca, cb in zip(cols[:-1], cols[1:])
    ]


def _cuts(lo, hi, segments, rng):
    want = min(segments - 1, hi - lo - 1)
    if want <= 0:
        return [lo, hi]
    inner = rng.choice(np.arange(lo + 1, hi), size=want, replace=False)
    return [lo] + sorted(int(v) for v in inner) + [hi]


def _refine_scores(image, spec, baseline, label, cfg):
    h, w = image.height, image.width
    diff = _diff_grid(image, baseline)
    total = np.zeros((h, w), dtype=np.float64)
    for it in range(cfg.iterations):
        rng = np.random.default_rng((cfg.seed, it))
        total += _refine_once(image, spec, baseline, label, diff, cfg, rng)
    mean = total / cfg.iterations
    top = mean.max()
    if top == 0.0:
        return mean, True
    return mean / top, False


def _refine_once(image, spec, baseline, label, diff, cfg, rng):
    h, w = image.height, image.width
    img = image.array
    base = baseline.materialize(image)
    scores = np.zeros((h, w), dtype=np.float64)
    queue = deque([((0, 0, h, w), np.zeros((h, w), dtype=bool), 0)])
    while queue:
        rect, ctx, depth = queue.popleft()
        parts = _split_rect(rect, rng, cfg.branching)
        if len(parts) < 2:
            continue
        part_masks = []
        for r0, c0, r1, c1 in parts:
            m = np.zeros((h, w), dtype=bool)
            m[r0:r1, c0:c1] = True
            part_masks.append(m)

        m = len(parts)
        combos = np.arange(1 << m)
        kept = np.empty((combos.size, h, w), dtype=bool)
        kept[:] = ctx
        for b in range(m):
            kept[(combos & (1 << b)) != 0] |= part_masks[b]
        batch = np.where(kept[:, :, :, None], img[None], base[None])
        labels = np.argmax(classify_confidences(spec, batch), axis=1)

        # part P in combo C scores its pixels when C keeps the label and
        # dropping P from C loses it; recursion follows only such parts,
        # keeping the smallest passing surroundings as context
        changed = (diff[None] & ~kept).sum(axis=(1, 2))
        refine_ctx = {}
        for ci in np.flatnonzero(labels == label):
            combo = int(combos[ci])
            if combo == 0:
                continue
            for b in range(m):
                if not combo & (1 << b):
                    continue
                if labels[combo ^ (1 << b)] == label:
                    continue
                # only pixels that differ from the baseline carry evidence;
                # the rest of the part composes to the identical context
                cand = 1.0 / (1.0 + int(changed[ci]))
                np.maximum(scores, np.where(part_masks[b] & diff, cand, 0.0), out=scores)
                size = int(kept[ci].sum())
                prev = refine_ctx.get(b)
                if prev is None or size < prev[0]:
                    refine_ctx[b] = (size, ci)
        if cfg.depth_limit is not None and depth + 1 > cfg.depth_limit:
            continue
        for b, (_, ci) in sorted(refine_ctx.items()):
            r0, c0, r1, c1 = parts[b]
            if (r1 - r0) * (c1 - c0) <= cfg.refine_threshold:
                continue
            child_ctx = kept[ci] & ~part_masks[b]
            queue.append((parts[b], child_ctx, depth + 1))
    return scores


def save_landscape(landscape, bin_path, json_path):
    """Little-endian float32 row-major flat binary, plus a JSON header sidecar."""
    h, w = landscape.scores.shape
    with open(bin_path, "wb") as f:
        f.write(landscape.scores.astype("<f4").tobytes(order="C"))
    header = {
        "height": h,
        "width": w,
        "dtype": "<f4",
        "order": "row-major",
        "seed": landscape.seed,
        "iterations": landscape.iterations,
        "degenerate": landscape.degenerate,
    }
    with open(json_path, "w") as f:
        json.dump(header, f, indent=2, sort_keys=True)
        f.write("\n")


def load_landscape(bin_path, json_path) -> ResponsibilityLandscape:
    with open(json_path) as f:
        header = json.load(f)
    raw = np.fromfile(bin_path, dtype="<f4")
    scores = raw.reshape(header["height"], header["width"]).astype(np.float64)
    return ResponsibilityLandscape(
        scores=scores,
        seed=header["seed"],
        iterations=header["iterations"],
        degenerate=header["degenerate"],
    )


def heatmap_png(landscape, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(landscape.scores, cmap="viridis", vmin=0.0, vmax=1.0)
    fig.colorbar(im, ax=ax, label="responsibility")
    ax.set_title("pixel responsibility")
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
