"""Shared fixtures: canonical tiny instances and a randomized instance pool.

The pool generator is deliberately independent of the library's internals:
it builds binary grids by hand so every instance is guaranteed to have a
label-changing baseline, which the engine requires up front.
"""
from dataclasses import dataclass

import numpy as np
import pytest

from pixcause import BaselineSpec, ClassifierSpec, ImageTensor, builtin_spec


@dataclass(frozen=True)
class Instance:
    name: str
    image: ImageTensor
    spec: ClassifierSpec
    baseline: BaselineSpec
    delta: float


def _image(values, channels=1):
    arr = np.asarray(values, dtype=np.float32)
    arr = np.repeat(arr[:, :, None], channels, axis=2)
    return ImageTensor(arr)


def make_instance(name, values, delta=0.5, channels=1):
    img = _image(values, channels)
    spec = builtin_spec(name, input_shape=(img.height, img.width, channels))
    return Instance(name, img, spec, BaselineSpec(0.0), delta)


CANONICAL = [
    make_instance("and2", [[1, 1], [0, 0]]),
    make_instance("or2", [[1, 1], [0, 0]]),
    make_instance("or2", [[1, 0], [0, 1]]),
    make_instance("p0-only", [[1, 1], [1, 1]]),
    make_instance("count-conf", [[1, 1], [1, 1]]),
    make_instance("count-conf", [[1, 0], [1, 1]]),
    make_instance("threshold:2:0,1,2", [[1, 1], [1, 0]]),
]


def random_instances(count, seed):
    """Randomized valid instances across all builtin families.

    Images are binary so that classifier outputs depend only on the on/off
    pattern, which keeps confidence arithmetic exact under value shifts.
    """
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        h = int(rng.integers(1, 5))
        w = int(rng.integers(1, 5))
        n = h * w
        if n < 2:
            continue
        channels = 3 if rng.random() < 0.2 else 1
        family = rng.choice(["and", "or", "threshold", "count-conf"])
        flat = rng.integers(0, 2, size=n)
        k = int(rng.integers(1, n + 1))
        targets = sorted(int(i) for i in rng.choice(n, size=k, replace=False))
        joined = ",".join(str(i) for i in targets)
        if family == "and":
            name = f"and:{joined}"
            flat[targets] = 1
        elif family == "or":
            name = f"or:{joined}"
            flat[targets] = 0
            lit = rng.choice(targets, size=int(rng.integers(1, k + 1)), replace=False)
            flat[lit] = 1
        elif family == "threshold":
            t = int(rng.integers(1, k + 1))
            name = f"threshold:{t}:{joined}"
            flat[targets] = 0
            on = rng.choice(targets, size=int(rng.integers(t, k + 1)), replace=False)
            flat[on] = 1
        else:
            if n < 2:
                continue
            gate = targets[0]
            others = targets[1:] or [q for q in range(n) if q != gate][:1]
            name = f"count-conf:{gate}:" + ",".join(str(q) for q in others)
            flat[gate] = 1
        delta = float(rng.choice([0.0, 0.25, 0.5, 1.0]))
        values = flat.reshape(h, w)
        out.append(make_instance(name, values, delta=delta, channels=channels))
    return out


@pytest.fixture(scope="session")
def canonical_instances():
    return list(CANONICAL)


@pytest.fixture(scope="session")
def instance_pool():
    return random_instances(220, seed=20260814)
