"""Sufficient/contrastive explanation extraction and adjustment discovery.

The scan walks the responsibility ranking high to low, maintaining two
context streams over the same prefix: K+ keeps only the first k ranked pixels
(rest at baseline) and K- occludes exactly those k pixels. The first k where
K+ classifies to the original label with confidence >= tau and K- classifies
to a different label yields s = c = the k-pixel prefix.

Adjustment pixels then grow the explanation from the low end of the ranking
until the composed image reproduces the original confidence at a fixed number
of decimal places; explanation + adjustments form the complete explanation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import classify, classify_confidences, validate_baseline
from .errors import ConfigurationError, ExplanationNotFound
from .imagery import PixelMask, compose
from .responsibility import rank_pixels

DEFAULT_PRECISION_DP = 4


@dataclass
class ExplanationRecord:
    sufficient: PixelMask
    contrastive: PixelMask
    adjustment: PixelMask
    delta: float
    tau: float
    original_label: int
    original_confidence: float
    sufficient_confidence: float
    contrast_label: int
    contrast_confidence: float
    precision_dp: int = DEFAULT_PRECISION_DP
    sufficient_valid: bool = False
    contrastive_valid: bool = False
    complete_valid: bool = False

    def complete_mask(self) -> PixelMask:
        return self.contrastive.union(self.adjustment)

    def validate(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigurationError(f"delta {self.delta} outside [0,1]")
        if abs(self.tau - self.original_confidence * self.delta) > 1e-9:
            raise ConfigurationError("tau != original_confidence * delta")
        if self.adjustment.intersection(self.sufficient).cardinality != 0:
            raise ConfigurationError("adjustment overlaps the sufficient set")
        if self.contrastive_valid and self.contrast_label == self.original_label:
            raise ConfigurationError("contrast label equals original label")


@dataclass(frozen=True)
class CheckResult:
    holds: bool
    label: int
    confidence: float


def check_sufficient(image, spec, baseline, mask, delta) -> CheckResult:
    """Does keeping only the mask preserve the label at >= delta * original?"""
    orig = classify(spec, image)
    out = classify(spec, compose(image, mask, baseline))
    conf = float(out.confidences[orig.label])
    tau = float(orig.confidences[orig.label]) * delta
    holds = out.label == orig.label and conf >= tau
    return CheckResult(holds=holds, label=out.label, confidence=conf)


def check_contrastive(image, spec, baseline, mask) -> CheckResult:
    """Does occluding the mask change the label?"""
    orig = classify(spec, image)
    out = classify(spec, compose(image, mask.complement(), baseline))
    return CheckResult(
        holds=out.label != orig.label,
        label=out.label,
        confidence=float(out.confidences[out.label]),
    )


def sufficient_contrastive(
    image, spec, baseline, delta, landscape, chunk_size=64
) -> ExplanationRecord:
    """First ranking prefix that is sufficient at tau and contrastive at once."""
    if not 0.0 <= delta <= 1.0:
        raise ConfigurationError(f"delta must be in [0,1], got {delta}")
    if not validate_baseline(spec, image, baseline):
        raise ConfigurationError(
            "baseline is invalid for this image: the fully occluded image "
            "keeps the original label"
        )
    orig = classify(spec, image)
    label = orig.label
    original_confidence = float(orig.confidences[label])
    tau = original_confidence * delta

    h, w = image.height, image.width
    n = h * w
    ranking = rank_pixels(landscape, "high_to_low")
    base = baseline.materialize(image)
    ins = base.copy()
    dele = image.array.copy()

    best = (-1, 0, 0.0)  # (#conditions, -k, confidence) for not-found reporting
    k = 0
    while k < n:
        hi = min(k + chunk_size, n)
        count = hi - k
        ins_chunk = np.empty((count, h, w, image.channels), dtype=np.float32)
        del_chunk = np.empty_like(ins_chunk)
        for j in range(count):
            p = int(ranking[k + j])
            r, c = divmod(p, w)
            ins[r, c, :] = image.array[r, c, :]
            dele[r, c, :] = base[r, c, :]
            ins_chunk[j] = ins
            del_chunk[j] = dele
        conf = classify_confidences(spec, np.concatenate([ins_chunk, del_chunk]))
        ins_conf, del_conf = conf[:count], conf[count:]
        ins_labels = np.argmax(ins_conf, axis=1)
        del_labels = np.argmax(del_conf, axis=1)
        ok = (
            (ins_labels == label)
            & (del_labels != label)
            & (ins_conf[:, label] >= tau)
        )
        for j in range(count):
            sat = int(ins_labels[j] == label) + int(del_labels[j] != label) + int(
                ins_conf[j, label] >= tau
            )
            if sat > best[0]:
                best = (sat, k + j + 1, float(ins_conf[j, label]))
        hit = np.flatnonzero(ok)
        if hit.size:
            j = int(hit[0])
            size = k + j + 1
            mask = PixelMask.from_flat_indices(h, w, ranking[:size])
            record = ExplanationRecord(
                sufficient=mask,
                contrastive=mask,
                adjustment=PixelMask.empty(h, w),
                delta=delta,
                tau=tau,
                original_label=label,
                original_confidence=original_confidence,
                sufficient_confidence=float(ins_conf[j, label]),
                contrast_label=int(del_labels[j]),
                contrast_confidence=float(del_conf[j, del_labels[j]]),
                sufficient_valid=True,
                contrastive_valid=True,
            )
            record.validate()
            return record
        k = hi

    raise ExplanationNotFound(
        f"no ranking prefix satisfied all three stopping conditions "
        f"(best: {best[0]}/3 conditions at k={best[1]})",
        best_k=best[1],
        best_confidence=best[2],
    )


def adjustment_discovery(
    image, spec, baseline, landscape, record, chunk_size=64
) -> PixelMask:
    """Grow the explanation low-ranked-first until the original confidence returns.

    Matching is at record.precision_dp decimal places, round-half-even on both
    sides. Updates record.adjustment and record.complete_valid.
    """
    if record.contrastive.cardinality == 0:
        raise ConfigurationError("adjustment discovery needs a nonempty explanation")
    h, w = image.height, image.width
    label = record.original_label
    dp = record.precision_dp
    target = round(float(record.original_confidence), dp)

    explanation = record.contrastive
    base = baseline.materialize(image)
    buf = np.where(explanation.array[:, :, None], image.array, base)

    conf0 = classify_confidences(spec, buf[None])[0]
    if round(float(conf0[label]), dp) == target:
        record.adjustment = PixelMask.empty(h, w)
        record.complete_valid = True
        return record.adjustment

    in_explanation = explanation.array.ravel()
    order = [int(p) for p in rank_pixels(landscape, "low_to_high") if not in_explanation[p]]
    added = []
    k = 0
    while k < len(order):
        hi = min(k + chunk_size, len(order))
        count = hi - k
        chunk = np.empty((count, h, w, image.channels), dtype=np.float32)
        for j in range(count):
            p = order[k + j]
            r, c = divmod(p, w)
            buf[r, c, :] = image.array[r, c, :]
            chunk[j] = buf
        conf = classify_confidences(spec, chunk)
        for j in range(count):
            if round(float(conf[j, label]), dp) == target:
                added = order[: k + j + 1]
                record.adjustment = PixelMask.from_flat_indices(h, w, added)
                record.complete_valid = True
                record.validate()
                return record.adjustment
        k = hi

    raise ExplanationNotFound(
        "confidence never matched the original even with every pixel restored; "
        "the backend is not deterministic"
    )


def shrink_minimal(image, spec, baseline, mask, predicate, delta=None, landscape=None):
    """Drop removable pixels, lowest responsibility first, until 1-minimal.

    predicate is "sufficient" (requires delta) or "contrastive". Pixels tie on
    responsibility row-major; among ties the later pixel is dropped first, so
    the kept set is the earliest by ranking. Passes repeat until a fixed point.
    """
    if predicate == "sufficient":
        if delta is None:
            raise ConfigurationError("sufficient predicate needs delta")
        check = lambda m: check_sufficient(image, spec, baseline, m, delta).holds
    elif predicate == "contrastive":
        check = lambda m: check_contrastive(image, spec, baseline, m).holds
    else:
        raise ConfigurationError(f"unknown predicate {predicate!r}")
    if not check(mask):
        raise ConfigurationError("predicate does not hold on the input mask")

    h, w = image.height, image.width
    if landscape is not None:
        order = list(rank_pixels(landscape, "high_to_low")[::-1])
    else:
        order = list(range(h * w))[::-1]

    current = mask.array.copy()
    changed = True
    while changed:
        changed = False
        for p in order:
            r, c = divmod(int(p), w)
            if not current[r, c]:
                continue
            current[r, c] = False
            if check(PixelMask(current.copy())):
                changed = True
            else:
                current[r, c] = True
    return PixelMask(current)


def record_to_json_dict(record, mask_paths=None, meta=None, timing=None):
    """JSON-ready dict: record fields, relative mask paths, metadata, timing.

    Volatile values (wall-clock) live only under "timing" so reruns can be
    compared byte-for-byte after dropping that key.
    """
    doc = {
        "masks": dict(mask_paths or {}),
        "delta": record.delta,
        "tau": record.tau,
        "original_label": record.original_label,
        "original_confidence": record.original_confidence,
        "sufficient_confidence": record.sufficient_confidence,
        "contrast_label": record.contrast_label,
        "contrast_confidence": record.contrast_confidence,
        "precision_dp": record.precision_dp,
        "sufficient_size": record.sufficient.cardinality,
        "contrastive_size": record.contrastive.cardinality,
        "adjustment_size": record.adjustment.cardinality,
        "flags": {
            "sufficient_valid": record.sufficient_valid,
            "contrastive_valid": record.contrastive_valid,
            "complete_valid": record.complete_valid,
        },
        "meta": dict(meta or {}),
        "timing": dict(timing or {}),
    }
    return doc
