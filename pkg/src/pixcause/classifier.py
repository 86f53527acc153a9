"""Uniform black-box classifier with onnx_file, subprocess and builtin backends.

The engine only ever sees raw pixel space; mean/std normalization and layout
transposes happen inside the backend. Confidences are post-softmax
probabilities; argmax ties break to the lowest class index.
"""

from __future__ import annotations

import base64
import json
import shlex
import subprocess
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import builtins as builtin_models
from .errors import BackendError, ConfigurationError, ProtocolError
from .imagery import BaselineSpec, ImageTensor, PixelMask, compose


@dataclass(frozen=True)
class Preprocessing:
    mean: tuple[float, ...] = (0.0,)
    std: tuple[float, ...] = (1.0,)
    value_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if any(s == 0 for s in self.std):
            raise ConfigurationError("preprocessing std components must be nonzero")


@dataclass(frozen=True)
class ClassifierSpec:
    backend_kind: str  # onnx_file | subprocess | builtin
    model_ref: str
    input_shape: tuple[int, int, int]
    preprocessing: Preprocessing = field(default_factory=Preprocessing)
    class_count: int = 2

    def __post_init__(self):
        if self.backend_kind not in ("onnx_file", "subprocess", "builtin"):
            raise ConfigurationError(f"unknown backend kind {self.backend_kind!r}")
        if len(self.input_shape) != 3 or any(d < 1 for d in self.input_shape):
            raise ConfigurationError(f"bad input_shape {self.input_shape}")
        if self.class_count < 2:
            raise ConfigurationError("class_count must be at least 2")


@dataclass(frozen=True)
class ClassifierOutput:
    """Top label plus the full confidence vector."""

    label: int
    confidences: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.confidences, dtype=np.float64)
        c.setflags(write=False)
        object.__setattr__(self, "confidences", c)
        object.__setattr__(self, "label", int(self.label))


def _validated_output(conf_row, class_count, origin):
    c = np.asarray(conf_row, dtype=np.float64)
    if c.shape != (class_count,):
        raise ProtocolError(f"{origin}: expected {class_count} confidences, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ProtocolError(f"{origin}: non-finite confidence")
    if c.min() < -1e-7 or c.max() > 1 + 1e-7:
        raise ProtocolError(f"{origin}: confidence outside [0,1]: [{c.min()}, {c.max()}]")
    if abs(float(c.sum()) - 1.0) > 1e-5:
        raise ProtocolError(f"{origin}: confidences sum to {c.sum()}, not 1")
    return ClassifierOutput(label=int(np.argmax(c)), confidences=np.clip(c, 0.0, 1.0))


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _stack_batch(spec, images):
    if len(images) == 0:
        raise ConfigurationError("empty classification batch")
    arrs = []
    for im in images:
        a = im.array if isinstance(im, ImageTensor) else np.asarray(im, dtype=np.float32)
        if a.ndim == 2:
            a = a[:, :, None]
        if tuple(a.shape) != tuple(spec.input_shape):
            raise ConfigurationError(
                f"image shape {tuple(a.shape)} != classifier input {tuple(spec.input_shape)}"
            )
        arrs.append(a)
    return np.stack(arrs).astype(np.float32)


class BuiltinBackend:
    def __init__(self, spec):
        self.spec = spec
        self.model = builtin_models.parse_builtin(spec.model_ref)
        if self.model.class_count != spec.class_count:
            raise ConfigurationError(
                f"builtin {spec.model_ref!r} has {self.model.class_count} classes, "
                f"spec says {spec.class_count}"
            )

    def run(self, batch):
        return self.model.batch_confidences(batch)

    def close(self):
        pass


class OnnxBackend:
    """Runs an exported graph; applies softmax when the model emits logits."""

    def __init__(self, spec):
        try:
            import onnxruntime  # noqa: F401  deliberate lazy import
        except ImportError as e:
            raise BackendError(
                "onnx_file backend needs the onnxruntime package "
                "(pip install onnxruntime)"
            ) from e
        import onnxruntime as ort

        if not Path(spec.model_ref).is_file():
            raise BackendError(f"model file not found: {spec.model_ref}")
        self.spec = spec
        self.session = ort.InferenceSession(
            spec.model_ref, providers=["CPUExecutionProvider"]
        )
        self.input_name = self.session.get_inputs()[0].name
        self.applied_softmax = False

    def run(self, batch):
        pre = self.spec.preprocessing
        mean = np.asarray(pre.mean, dtype=np.float32)
        std = np.asarray(pre.std, dtype=np.float32)
        x = (batch - mean) / std
        x = np.transpose(x, (0, 3, 1, 2)).astype(np.float32)  # NHWC -> NCHW
        try:
            out = self.session.run(None, {self.input_name: x})[0]
        except Exception as e:
            raise BackendError(f"onnxruntime inference failed: {e}") from e
        out = np.asarray(out, dtype=np.float64)
        if not np.all(np.isfinite(out)):
            raise ProtocolError("onnx model produced non-finite outputs")
        sums = out.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-3) or out.min() < 0:
            out = softmax(out)
            self.applied_softmax = True
        return out

    def close(self):
        self.session = None


class SubprocessBackend:
    """Newline-delimited JSON worker over stdin/stdout.

    Request:  {"id": u64, "shape": [H,W,C], "data_b64": base64 LE float32 row-major}
    Response: {"id": u64, "label": u32, "confidences": [f...]}
    Responses may arrive out of order; they are matched by id. Batches from
    concurrent callers are serialized on a lock.
    """

    def __init__(self, spec):
        self.spec = spec
        argv = shlex.split(spec.model_ref)
        if not argv:
            raise ConfigurationError("subprocess backend needs a worker command in model_ref")
        try:
            self.proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
            )
        except OSError as e:
            raise BackendError(f"cannot start worker {argv[0]!r}: {e}") from e
        self._lock = threading.Lock()
        self._next_id = 0

    def run(self, batch):
        with self._lock:
            return self._run_locked(batch)

    def _run_locked(self, batch):
        if self.proc.poll() is not None:
            raise BackendError(f"worker exited with code {self.proc.returncode}")
        ids = []
        try:
            for arr in batch:
                rid = self._next_id
                self._next_id += 1
                ids.append(rid)
                req = {
                    "id": rid,
                    "shape": list(arr.shape),
                    "data_b64": base64.b64encode(
                        np.ascontiguousarray(arr, dtype="<f4").tobytes()
                    ).decode("ascii"),
                }
                self.proc.stdin.write(json.dumps(req) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise BackendError(f"worker pipe closed: {e}") from e

        pending = set(ids)
        rows = {}
        while pending:
            line = self.proc.stdout.readline()
            if not line:
                raise BackendError(
                    f"worker closed stdout with {len(pending)} responses pending"
                )
            try:
                msg = json.loads(line)
            except json.JSONDecodeError as e:
                raise ProtocolError(f"worker sent invalid JSON: {line!r}") from e
            rid = msg.get("id")
            if rid not in pending:
                raise ProtocolError(f"worker sent unknown or duplicate id {rid!r}")
            if "label" not in msg or "confidences" not in msg:
                raise ProtocolError(f"worker response missing fields: {sorted(msg)}")
            pending.discard(rid)
            rows[rid] = msg
        out = np.empty((len(ids), self.spec.class_count), dtype=np.float64)
        for i, rid in enumerate(ids):
            msg = rows[rid]
            conf = np.asarray(msg["confidences"], dtype=np.float64)
            probe = _validated_output(conf, self.spec.class_count, "worker")
            if int(msg["label"]) != probe.label:
                raise ProtocolError(
                    f"worker label {msg['label']} disagrees with argmax {probe.label}"
                )
            out[i] = probe.confidences
        return out

    def close(self):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
                self.proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self.proc.kill()


_BACKENDS = {"builtin": BuiltinBackend, "onnx_file": OnnxBackend, "subprocess": SubprocessBackend}
_CACHE: dict[ClassifierSpec, object] = {}
_CACHE_LOCK = threading.Lock()


def get_backend(spec: ClassifierSpec):
    with _CACHE_LOCK:
        be = _CACHE.get(spec)
        if be is None:
            be = _BACKENDS[spec.backend_kind](spec)
            _CACHE[spec] = be
        return be


def shutdown_backends():
    with _CACHE_LOCK:
        for be in _CACHE.values():
            be.close()
        _CACHE.clear()


def classify_confidences(spec, batch) -> np.ndarray:
    """Confidence matrix (N, class_count) for a stacked (N, H, W, C) array.

    Fast path for mutant sweeps: skips per-row object construction. Rows are
    validated in bulk; labels are argmax with lowest-index tie-break.
    """
    batch = np.asarray(batch, dtype=np.float32)
    if batch.ndim != 4 or tuple(batch.shape[1:]) != tuple(spec.input_shape):
        raise ConfigurationError(
            f"batch shape {batch.shape} does not match input {tuple(spec.input_shape)}"
        )
    if batch.shape[0] == 0:
        raise ConfigurationError("empty classification batch")
    conf = np.asarray(get_backend(spec).run(batch), dtype=np.float64)
    origin = f"{spec.backend_kind} backend"
    if conf.shape != (batch.shape[0], spec.class_count):
        raise ProtocolError(f"{origin}: bad output shape {conf.shape}")
    if not np.all(np.isfinite(conf)):
        raise ProtocolError(f"{origin}: non-finite confidence")
    if conf.min() < -1e-7 or conf.max() > 1 + 1e-7:
        raise ProtocolError(f"{origin}: confidence outside [0,1]")
    sums = conf.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-5):
        raise ProtocolError(f"{origin}: confidences sum outside 1 +- 1e-5")
    return np.clip(conf, 0.0, 1.0)


def classify_batch(spec, images) -> list[ClassifierOutput]:
    """Classify a nonempty sequence of images (ImageTensor or raw HWC arrays)."""
    batch = _stack_batch(spec, images)
    conf = classify_confidences(spec, batch)
    return [
        ClassifierOutput(label=int(np.argmax(conf[i])), confidences=conf[i])
        for i in range(len(batch))
    ]


def classify(spec, image) -> ClassifierOutput:
    return classify_batch(spec, [image])[0]


def validate_baseline(spec, image: ImageTensor, baseline: BaselineSpec) -> bool:
    """True iff the fully occluded image classifies differently from the image."""
    blank = compose(image, PixelMask.empty(image.height, image.width), baseline)
    orig, occluded = classify_batch(spec, [image, blank])
    return occluded.label != orig.label


def builtin_spec(name, input_shape=(2, 2, 1)) -> ClassifierSpec:
    """ClassifierSpec for a builtin, with the value range shifted as needed."""
    model = builtin_models.parse_builtin(name)
    mu = builtin_models.shift_of(name)
    return ClassifierSpec(
        backend_kind="builtin",
        model_ref=name,
        input_shape=tuple(input_shape),
        preprocessing=Preprocessing(value_range=(0.0 + mu, 1.0 + mu)),
        class_count=model.class_count,
    )


def load_onnx_spec(model_path) -> ClassifierSpec:
    """Build a spec from <model>.onnx plus its <model>.manifest.json sidecar."""
    model_path = Path(model_path)
    sidecar = model_path.with_suffix(".manifest.json")
    if not sidecar.is_file():
        raise ConfigurationError(f"missing preprocessing manifest {sidecar}")
    try:
        man = json.loads(sidecar.read_text())
        shape = tuple(int(d) for d in man["input_shape"])
        pre = Preprocessing(
            mean=tuple(float(v) for v in man["mean"]),
            std=tuple(float(v) for v in man["std"]),
            value_range=tuple(man.get("value_range", (0.0, 1.0))),
        )
        count = int(man["class_count"])
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigurationError(f"bad manifest {sidecar}: {e}") from e
    return ClassifierSpec(
        backend_kind="onnx_file",
        model_ref=str(model_path),
        input_shape=shape,
        preprocessing=pre,
        class_count=count,
    )
