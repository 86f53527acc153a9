"""Brute-force ground truth on tiny instances.

Everything here enumerates all 2^n keep-masks of an at-most-16-pixel grid and
derives minimal sufficient sets, minimal contrastive sets, and exact witness
responsibilities directly from the definitions. The greedy pipeline is
validated against these results; beyond 16 pixels the enumeration is refused
(the decision problems are intractable, which is the point of the greedy side).

The intervention alphabet is {image value, baseline value} per pixel, matching
the context construction the greedy side searches over.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .classifier import builtin_spec, classify_confidences
from .errors import ConfigurationError, IngestionError, InstanceTooLarge
from .imagery import BaselineSpec, ImageTensor, PixelMask

PIXEL_LIMIT = 16


@dataclass(frozen=True)
class TinyInstance:
    image: ImageTensor
    spec: object  # ClassifierSpec
    baseline: BaselineSpec

    def __post_init__(self):
        n = self.image.n_pixels
        if n > PIXEL_LIMIT:
            raise InstanceTooLarge(
                f"{n} pixels exceeds the {PIXEL_LIMIT}-pixel enumeration bound"
            )
        if self.image.array.shape[:2] != tuple(self.spec.input_shape[:2]):
            raise ConfigurationError("instance grid does not match classifier input")


_NAMED_GRIDS = {
    "and2": ("and2", np.ones((2, 2, 1))),
    "or2": ("or2", np.ones((2, 2, 1))),
    "p0-only": ("p0-only", np.ones((2, 2, 1))),
    "count-conf": ("count-conf", np.ones((2, 2, 1))),
    "threshold2": ("threshold:2:0,1,2", np.ones((2, 2, 1))),
}


def named_instance(name, baseline_value=0.0) -> TinyInstance:
    if name not in _NAMED_GRIDS:
        raise ConfigurationError(
            f"unknown instance {name!r}; known: {', '.join(sorted(_NAMED_GRIDS))}"
        )
    classifier_name, grid = _NAMED_GRIDS[name]
    image = ImageTensor(grid.astype(np.float32))
    return TinyInstance(
        image=image,
        spec=builtin_spec(classifier_name, input_shape=image.array.shape),
        baseline=BaselineSpec(baseline_value),
    )


def instance_from_file(path) -> TinyInstance:
    """JSON instance: {"grid": [[...]], "classifier": name, "baseline": value}."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise IngestionError(f"cannot read instance {path}: {e}") from e
    try:
        grid = np.asarray(doc["grid"], dtype=np.float32)
        classifier_name = doc["classifier"]
        baseline = BaselineSpec(doc.get("baseline", 0.0))
    except (KeyError, TypeError, ValueError) as e:
        raise IngestionError(f"bad instance file {path}: {e}") from e
    if grid.ndim == 2:
        grid = grid[:, :, None]
    image = ImageTensor(grid)
    return TinyInstance(
        image=image,
        spec=builtin_spec(classifier_name, input_shape=image.array.shape),
        baseline=baseline,
    )


class _Table:
    """Labels and confidences for every keep-mask, cardinality-ascending."""

    def __init__(self, inst):
        n = inst.image.n_pixels
        h, w, c = inst.image.array.shape
        img = inst.image.array.reshape(n, c)
        base = inst.baseline.materialize(inst.image).reshape(n, c)
        self.n = n
        self.full = (1 << n) - 1
        self.labels = np.empty(1 << n, dtype=np.int64)
        self.conf = np.empty((1 << n, inst.spec.class_count), dtype=np.float64)
        order = []
        for size in range(n + 1):
            for combo in combinations(range(n), size):
                mask = 0
                for p in combo:
                    mask |= 1 << p
                order.append((mask, combo))
        for lo in range(0, len(order), 2048):
            group = order[lo : lo + 2048]
            batch = np.empty((len(group), n, c), dtype=np.float32)
            batch[:] = base
            for i, (_, combo) in enumerate(group):
                for p in combo:
                    batch[i, p] = img[p]
            rows = classify_confidences(inst.spec, batch.reshape(-1, h, w, c))
            for i, (mask, _) in enumerate(group):
                self.conf[mask] = rows[i]
                self.labels[mask] = int(np.argmax(rows[i]))
        self.original_label = int(self.labels[self.full])
        self.original_confidence = float(self.conf[self.full, self.original_label])
        # pixels whose image value actually differs from the baseline
        diff = np.any(
            inst.image.array != inst.baseline.materialize(inst.image), axis=2
        ).ravel()
        self.diff_pixels = [int(p) for p in np.flatnonzero(diff)]


def _mask_of(pixels):
    mask = 0
    for p in pixels:
        mask |= 1 << int(p)
    return mask


def _pixels_of(mask, n):
    return [p for p in range(n) if mask & (1 << p)]


def _minimal_masks(qualifies, n):
    """Masks in `qualifies` (bool array over 2^n) with no qualifying strict subset."""
    reachable = qualifies.copy()  # reachable[m]: some subset of m qualifies
    for b in range(n):
        bit = 1 << b
        with_bit = np.flatnonzero(
            (np.arange(1 << n) & bit) != 0
        )
        reachable[with_bit] |= reachable[with_bit ^ bit]
    out = []
    for m in np.flatnonzero(qualifies):
        m = int(m)
        if not any(reachable[m ^ (1 << b)] for b in range(n) if m & (1 << b)):
            out.append(m)
    return out


def _as_masks(mask_ints, inst):
    h, w = inst.image.height, inst.image.width
    return [
        PixelMask.from_flat_indices(h, w, _pixels_of(m, inst.image.n_pixels))
        for m in sorted(mask_ints, key=lambda m: (bin(m).count("1"), m))
    ]


def build_table(inst) -> "_Table":
    """Precomputed label/confidence table shared across oracle queries."""
    return _Table(inst)


def minimal_sufficient_sets(inst, delta=0.0, table=None):
    """All subset-minimal keep-masks preserving the label at >= delta * original."""
    t = table or _Table(inst)
    threshold = t.original_confidence * delta
    qualifies = (t.labels == t.original_label) & (
        t.conf[:, t.original_label] >= threshold
    )
    return _as_masks(_minimal_masks(qualifies, t.n), inst)


def minimal_contrastive_sets(inst, table=None):
    """All subset-minimal occlusion-masks that change the label."""
    t = table or _Table(inst)
    masks = np.arange(1 << t.n)
    qualifies = t.labels[t.full ^ masks] != t.original_label
    return _as_masks(_minimal_masks(qualifies, t.n), inst)


def exact_responsibility(inst, pixel, table=None) -> float:
    """1/(1+k), k = size of the smallest witness making the pixel but-for.

    A witness W is a set of other pixels pushed to the baseline such that the
    label survives W alone but flips when the pixel joins it. Pixels already
    at the baseline value cannot contribute and are never counted.
    """
    t = table or _Table(inst)
    pixel = int(pixel)
    if not 0 <= pixel < t.n:
        raise ConfigurationError(f"pixel {pixel} outside grid of {t.n}")
    bit = 1 << pixel
    # a pixel whose flip never changes any label has no witness at all;
    # skipping the enumeration here avoids 2^n work on irrelevant pixels
    masks = np.arange(1 << t.n)
    if np.array_equal(t.labels[masks | bit], t.labels[masks & ~bit]):
        return 0.0
    candidates = [q for q in t.diff_pixels if q != pixel]
    for k in range(len(candidates) + 1):
        for witness in combinations(candidates, k):
            kept = t.full ^ _mask_of(witness)
            if t.labels[kept] == t.original_label and t.labels[kept ^ bit] != t.original_label:
                return 1.0 / (1.0 + k)
    return 0.0


def exact_responsibility_all(inst, table=None) -> np.ndarray:
    t = table or _Table(inst)
    h, w = inst.image.height, inst.image.width
    out = np.array(
        [exact_responsibility(inst, p, table=t) for p in range(inst.image.n_pixels)]
    )
    return out.reshape(h, w)


def duality_holds(inst, table=None) -> bool:
    """Every minimal contrastive set intersects every minimal sufficient set."""
    t = table or _Table(inst)
    suff = minimal_sufficient_sets(inst, delta=0.0, table=t)
    contr = minimal_contrastive_sets(inst, table=t)
    for s in suff:
        s_bits = _mask_of(s.flat_indices())
        for c in contr:
            if s_bits & _mask_of(c.flat_indices()) == 0:
                return False
    return True


def compare_with_greedy(inst, delta, cfg=None) -> dict:
    """Run the greedy pipeline on the instance and diff it against the oracle."""
    from .explain import shrink_minimal, sufficient_contrastive
    from .responsibility import RankingConfig, pixel_ranking

    if cfg is None:
        cfg = RankingConfig(strategy="exact")
    landscape = pixel_ranking(inst.image, inst.spec, inst.baseline, cfg)
    record = sufficient_contrastive(inst.image, inst.spec, inst.baseline, delta, landscape)
    shrunk = shrink_minimal(
        inst.image, inst.spec, inst.baseline, record.sufficient,
        "sufficient", delta=delta, landscape=landscape,
    )

    table = _Table(inst)
    oracle_suff = minimal_sufficient_sets(inst, delta, table=table)
    oracle_contr = minimal_contrastive_sets(inst, table=table)
    oracle_resp = exact_responsibility_all(inst, table=table)

    s_bits = _mask_of(record.sufficient.flat_indices())
    contains_minimal = any(
        _mask_of(m.flat_indices()) & ~s_bits == 0 for m in oracle_suff
    )
    min_size = min((m.cardinality for m in oracle_suff), default=0)
    resp_diff = float(np.abs(landscape.scores - oracle_resp).max())

    return {
        "instance": {
            "classifier": inst.spec.model_ref,
            "grid_shape": list(inst.image.array.shape),
            "baseline": list(inst.baseline.values),
        },
        "delta": delta,
        "original_label": record.original_label,
        "greedy": {
            "sufficient": sorted(int(p) for p in record.sufficient.flat_indices()),
            "shrunk": sorted(int(p) for p in shrunk.flat_indices()),
            "sufficient_confidence": record.sufficient_confidence,
            "contrast_label": record.contrast_label,
        },
        "oracle": {
            "minimal_sufficient": [
                sorted(int(p) for p in m.flat_indices()) for m in oracle_suff
            ],
            "minimal_contrastive": [
                sorted(int(p) for p in m.flat_indices()) for m in oracle_contr
            ],
            "responsibility": [float(v) for v in oracle_resp.ravel()],
        },
        "agreement": {
            "responsibility_max_abs_diff": resp_diff,
            "sufficient_contains_a_minimal_set": bool(contains_minimal),
            "shrunk_size_vs_oracle_min": [shrunk.cardinality, min_size],
            "shrunk_not_smaller_than_min": bool(shrunk.cardinality >= min_size),
            "duality_holds": duality_holds(inst, table=table),
        },
    }
