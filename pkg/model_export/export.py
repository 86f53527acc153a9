#!/usr/bin/env python3
"""Export ImageNet classifiers to ONNX with a preprocessing manifest sidecar.

Covers three torchvision families (resnet50, mobilenet, swin_t). Every export
is verified on the spot: a fixed seeded-noise smoke batch goes through the
source network and the exported graph, and the run fails unless the top-1
labels match and the confidences agree within tolerance.
"""
import argparse
import json
import shutil
import subprocess
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np
import torch

MODELS = {
    "resnet50": ("resnet50", "ResNet50_Weights"),
    "mobilenet": ("mobilenet_v3_large", "MobileNet_V3_Large_Weights"),
    "swin_t": ("swin_t", "Swin_T_Weights"),
}
IMAGENET_MEAN = [0.485, 0.456, 0.406]
IMAGENET_STD = [0.229, 0.224, 0.225]
INPUT_SHAPE = [224, 224, 3]
CLASS_COUNT = 1000
SMOKE_COUNT = 8
AGREEMENT_TOL = 1e-4


class ExportError(RuntimeError):
    pass


def build_model(name, seed):
    """Instantiate the named network, preferring pretrained weights.

    When the weight files cannot be fetched the model falls back to a
    deterministic random initialization; the manifest records which one
    actually shipped via source_weights_id.
    """
    if name not in MODELS:
        raise ExportError(
            f"unknown model {name!r}; supported: {', '.join(sorted(MODELS))}"
        )
    import torchvision.models as tvm

    ctor_name, weights_enum = MODELS[name]
    ctor = getattr(tvm, ctor_name)
    weights = getattr(tvm, weights_enum).DEFAULT
    try:
        model = ctor(weights=weights)
        source = f"torchvision:{weights}"
    except Exception as e:
        print(
            f"export: pretrained weights unavailable ({type(e).__name__}); "
            f"using deterministic random init",
            file=sys.stderr,
        )
        torch.manual_seed(seed)
        model = ctor(weights=None)
        source = f"random-init-seed-{seed}"
    model.eval()
    return model, source


def export_onnx(model, path, opset):
    if opset < 13:
        raise ExportError(f"opset {opset} too old, need >= 13")
    try:
        import onnx  # noqa: F401
    except ImportError:
        # the TorchScript exporter only needs onnx at the very end, to merge
        # onnxscript-defined functions into the proto; stock torchvision
        # graphs define none, so that merge is an identity we can skip
        try:
            from torch.onnx._internal.torchscript_exporter import onnx_proto_utils
        except ImportError:
            from torch.onnx._internal import onnx_proto_utils
        onnx_proto_utils._add_onnxscript_fn = lambda model_bytes, custom_opsets: model_bytes

    example = torch.zeros(1, 3, INPUT_SHAPE[0], INPUT_SHAPE[1])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        torch.onnx.export(
            model,
            (example,),
            str(path),
            opset_version=opset,
            dynamo=False,
            input_names=["input"],
            output_names=["logits"],
            dynamic_axes={"input": {0: "batch"}, "logits": {0: "batch"}},
        )


def smoke_batch(seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(
        (SMOKE_COUNT, 3, INPUT_SHAPE[0], INPUT_SHAPE[1]), dtype=np.float32
    )


def softmax_rows(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def source_confidences(model, inputs):
    with torch.no_grad():
        logits = model(torch.from_numpy(inputs)).numpy()
    return softmax_rows(logits)


def _verify_with_node(onnx_path, inputs, expected):
    node = shutil.which("node")
    script = Path(__file__).with_name("verify_onnx.mjs")
    if node is None:
        raise ExportError(
            "verification needs the onnxruntime package or a node runtime "
            "with onnxruntime-node (npm install in this directory); neither found"
        )
    with tempfile.TemporaryDirectory() as td:
        np.save(Path(td) / "inputs.npy", inputs)
        np.save(Path(td) / "expected.npy", expected)
        proc = subprocess.run(
            [node, str(script), str(onnx_path), td],
            capture_output=True,
            text=True,
        )
    if proc.returncode != 0:
        detail = proc.stderr.strip() or proc.stdout.strip()
        raise ExportError(f"node verifier failed: {detail}")
    report = json.loads(proc.stdout.strip().splitlines()[-1])
    report["runner"] = "onnxruntime-node"
    return report


def verify_agreement(onnx_path, inputs, expected):
    """Run the smoke batch through the exported graph and report agreement."""
    try:
        import onnxruntime as ort
    except ImportError:
        return _verify_with_node(onnx_path, inputs, expected)
    sess = ort.InferenceSession(str(onnx_path), providers=["CPUExecutionProvider"])
    out = sess.run(None, {"input": inputs})[0]
    probs = softmax_rows(out)
    matched = int((probs.argmax(axis=1) == expected.argmax(axis=1)).sum())
    return {
        "labels_matched": matched,
        "count": int(expected.shape[0]),
        "max_abs_diff": float(np.abs(probs - expected).max()),
        "runner": "onnxruntime",
    }


def export_model(name, out_dir, opset=17, seed=0):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model, source = build_model(name, seed)
    onnx_path = out_dir / f"{name}.onnx"
    export_onnx(model, onnx_path, opset)

    manifest = {
        "model_name": name,
        "onnx_path": onnx_path.name,
        "input_shape": INPUT_SHAPE,
        "mean": IMAGENET_MEAN,
        "std": IMAGENET_STD,
        "class_count": CLASS_COUNT,
        "logits_or_probs": "logits",
        "opset": opset,
        "source_weights_id": source,
    }
    manifest_path = out_dir / f"{name}.manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")

    inputs = smoke_batch(seed)
    expected = source_confidences(model, inputs)
    report = verify_agreement(onnx_path, inputs, expected)
    if report["labels_matched"] != report["count"] or not (
        report["max_abs_diff"] < AGREEMENT_TOL
    ):
        raise ExportError(
            f"exported graph disagrees with source: "
            f"{report['labels_matched']}/{report['count']} top-1 matches, "
            f"max abs confidence diff {report['max_abs_diff']:.3g} "
            f"(tolerance {AGREEMENT_TOL})"
        )
    return {
        "onnx_path": onnx_path,
        "manifest_path": manifest_path,
        "manifest": manifest,
        "verification": report,
    }


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="export an ImageNet classifier to ONNX plus manifest"
    )
    parser.add_argument("--model", required=True, choices=sorted(MODELS))
    parser.add_argument("--out", required=True, type=Path)
    parser.add_argument("--opset", type=int, default=17)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    try:
        result = export_model(args.model, args.out, opset=args.opset, seed=args.seed)
    except ExportError as e:
        print(f"export: error: {e}", file=sys.stderr)
        return 1
    rep = result["verification"]
    size_kib = result["onnx_path"].stat().st_size // 1024
    print(f"wrote {result['onnx_path']} ({size_kib} KiB) and {result['manifest_path'].name}")
    print(
        f"agreement: {rep['labels_matched']}/{rep['count']} top-1 match, "
        f"max abs confidence diff {rep['max_abs_diff']:.3g} ({rep['runner']})"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
