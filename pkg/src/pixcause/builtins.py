"""Synthetic classifiers with closed-form semantics, for tests and oracles.

A pixel is "on" when its channel mean strictly exceeds 0.5. Families:

- ``and:<i,j,...>``        label 1 iff every listed pixel is on (2 classes)
- ``or:<i,j,...>``         label 1 iff any listed pixel is on
- ``threshold:<t>:<i,...>`` label 1 iff at least t listed pixels are on
- ``count-conf:<g>:<i,...>`` label 1 iff gate pixel g is on; the predicted
  label's confidence is 0.5 + (0.5 / (len(others)+1)) * #on(others), the
  remainder split over the two other classes (3 classes total, so the
  half-confidence point never ties argmax)
- ``shifted:<mu>:<name>``  wraps another builtin, evaluating it on x - mu

Pixel indices are row-major into whatever grid the input has. Short names:
"and2" = and:0,1; "or2" = or:0,1; "p0-only" = and:0;
"count-conf" = count-conf:0:1,2,3.

and/or/threshold emit one-hot confidences. All families are exact in float
arithmetic for binary images, so derived test values hold bit-for-bit.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError

_ALIASES = {
    "and2": "and:0,1",
    "or2": "or:0,1",
    "p0-only": "and:0",
    "count-conf": "count-conf:0:1,2,3",
}

FAMILIES = ("and", "or", "threshold", "count-conf", "shifted")


def _parse_indices(text, what):
    try:
        idx = tuple(int(t) for t in text.split(","))
    except ValueError:
        raise ConfigurationError(f"bad {what} pixel list {text!r}") from None
    if not idx or any(i < 0 for i in idx) or len(set(idx)) != len(idx):
        raise ConfigurationError(f"{what} pixel list must be distinct non-negative, got {text!r}")
    return idx


def _on(batch):
    # (N, H, W, C) -> (N, H*W) on-ness per pixel
    n = batch.shape[0]
    return batch.mean(axis=3, dtype=np.float64).reshape(n, -1) > 0.5


def _one_hot(labels, class_count=2):
    out = np.zeros((labels.shape[0], class_count), dtype=np.float64)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _check_bounds(indices, n_pixels, name):
    if max(indices) >= n_pixels:
        raise ConfigurationError(
            f"builtin {name!r} references pixel {max(indices)} but grid has {n_pixels}"
        )


class _Gate:
    """and / or / threshold over a fixed pixel set."""

    class_count = 2

    def __init__(self, name, indices, need):
        self.name = name
        self.indices = indices
        self.need = need  # number of on-pixels required

    def batch_confidences(self, batch):
        on = _on(batch)
        _check_bounds(self.indices, on.shape[1], self.name)
        labels = (on[:, self.indices].sum(axis=1) >= self.need).astype(np.int64)
        return _one_hot(labels)


class _CountConf:
    class_count = 3

    def __init__(self, name, gate, others):
        if gate in others:
            raise ConfigurationError(f"count-conf gate {gate} repeated in others")
        self.name = name
        self.gate = gate
        self.others = others
        self.step = 0.5 / (len(others) + 1)

    def batch_confidences(self, batch):
        on = _on(batch)
        _check_bounds((self.gate, *self.others), on.shape[1], self.name)
        labels = on[:, self.gate].astype(np.int64)
        count = on[:, list(self.others)].sum(axis=1) if self.others else np.zeros(len(on))
        top = 0.5 + self.step * count
        out = np.full((on.shape[0], 3), 0.0, dtype=np.float64)
        rest = (1.0 - top) / 2.0
        out[:] = rest[:, None]
        out[np.arange(on.shape[0]), labels] = top
        return out


class _Shifted:
    def __init__(self, name, mu, inner):
        self.name = name
        self.mu = mu
        self.inner = inner
        self.class_count = inner.class_count

    def batch_confidences(self, batch):
        return self.inner.batch_confidences(batch - np.float32(self.mu))


def parse_builtin(name):
    """Builtin classifier object for a family spec string."""
    full = _ALIASES.get(name, name)
    head, _, tail = full.partition(":")
    if head == "and":
        idx = _parse_indices(tail, "and")
        return _Gate(name, idx, need=len(idx))
    if head == "or":
        return _Gate(name, _parse_indices(tail, "or"), need=1)
    if head == "threshold":
        t_text, _, rest = tail.partition(":")
        try:
            t = int(t_text)
        except ValueError:
            raise ConfigurationError(f"bad threshold count {t_text!r}") from None
        idx = _parse_indices(rest, "threshold")
        if not 1 <= t <= len(idx):
            raise ConfigurationError(f"threshold {t} outside 1..{len(idx)}")
        return _Gate(name, idx, need=t)
    if head == "count-conf":
        g_text, _, rest = tail.partition(":")
        try:
            gate = int(g_text)
        except ValueError:
            raise ConfigurationError(f"bad count-conf gate {g_text!r}") from None
        others = _parse_indices(rest, "count-conf") if rest else ()
        return _CountConf(name, gate, others)
    if head == "shifted":
        mu_text, _, rest = tail.partition(":")
        try:
            mu = float(mu_text)
        except ValueError:
            raise ConfigurationError(f"bad shift value {mu_text!r}") from None
        return _Shifted(name, mu, parse_builtin(rest))
    raise ConfigurationError(
        f"unknown builtin {name!r}; families: {', '.join(FAMILIES)} "
        f"plus short names {', '.join(sorted(_ALIASES))}"
    )


def shift_of(name):
    """Total shift applied by (possibly nested) shifted: wrappers."""
    full = _ALIASES.get(name, name)
    if full.startswith("shifted:"):
        mu_text, _, rest = full[len("shifted:"):].partition(":")
        return float(mu_text) + shift_of(rest)
    return 0.0
