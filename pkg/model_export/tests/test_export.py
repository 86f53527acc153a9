"""Export pipeline tests: source-vs-ONNX agreement for all three models."""
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

EXPORT_DIR = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(EXPORT_DIR))

import export  # noqa: E402

MODEL_NAMES = ["resnet50", "mobilenet", "swin_t"]


@pytest.fixture(scope="session")
def exported(tmp_path_factory):
    """Export each model once; the dict maps name -> export_model result."""
    results = {}
    for name in MODEL_NAMES:
        out = tmp_path_factory.mktemp(f"exp_{name}")
        results[name] = export.export_model(name, out)
    return results


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_agreement_gate(exported, name):
    rep = exported[name]["verification"]
    assert rep["count"] == 8
    assert rep["labels_matched"] == 8
    assert rep["max_abs_diff"] < 1e-4


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_manifest_contents(exported, name):
    man = json.loads(exported[name]["manifest_path"].read_text())
    assert man["model_name"] == name
    assert man["onnx_path"] == f"{name}.onnx"
    assert man["input_shape"] == [224, 224, 3]
    assert man["mean"] == [0.485, 0.456, 0.406]
    assert man["std"] == [0.229, 0.224, 0.225]
    assert man["class_count"] == 1000
    assert man["logits_or_probs"] == "logits"
    assert man["opset"] >= 13
    assert man["source_weights_id"]


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_manifest_feeds_classifier_spec(exported, name):
    spec = pytest.importorskip("pixcause").load_onnx_spec(exported[name]["onnx_path"])
    assert spec.backend_kind == "onnx_file"
    assert spec.input_shape == (224, 224, 3)
    assert spec.class_count == 1000
    assert spec.preprocessing.mean == (0.485, 0.456, 0.406)
    assert spec.preprocessing.std == (0.229, 0.224, 0.225)


def test_unknown_model_lists_supported_names(tmp_path):
    with pytest.raises(export.ExportError, match="mobilenet, resnet50, swin_t"):
        export.export_model("alexnet", tmp_path)


def test_old_opset_rejected(tmp_path):
    with pytest.raises(export.ExportError, match="opset"):
        export.export_model("mobilenet", tmp_path, opset=12)


def test_reexport_manifest_byte_identical(exported, tmp_path):
    again = export.export_model("mobilenet", tmp_path)
    assert (
        again["manifest_path"].read_bytes()
        == exported["mobilenet"]["manifest_path"].read_bytes()
    )


def test_verifier_detects_disagreement(exported):
    name = "mobilenet"
    inputs = export.smoke_batch(0)
    expected = export.source_confidences(export.build_model(name, 0)[0], inputs)
    tampered = expected.copy()
    tampered[:, 0] += 0.5
    tampered /= tampered.sum(axis=1, keepdims=True)
    rep = export.verify_agreement(exported[name]["onnx_path"], inputs, tampered)
    assert rep["max_abs_diff"] > 1e-4
    assert rep["labels_matched"] < rep["count"]


def test_smoke_batch_is_fixed():
    a = export.smoke_batch(0)
    b = export.smoke_batch(0)
    assert a.shape == (8, 3, 224, 224)
    assert a.dtype == np.float32
    assert np.array_equal(a, b)
    assert not np.array_equal(a, export.smoke_batch(1))


def test_cli_rejects_unknown_model(tmp_path):
    proc = subprocess.run(
        [sys.executable, str(EXPORT_DIR / "export.py"), "--model", "vgg16", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode != 0
    assert "invalid choice" in proc.stderr


def test_cli_exports_and_reports(tmp_path):
    proc = subprocess.run(
        [
            sys.executable,
            str(EXPORT_DIR / "export.py"),
            "--model",
            "mobilenet",
            "--out",
            str(tmp_path),
        ],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "agreement: 8/8 top-1 match" in proc.stdout
    assert (tmp_path / "mobilenet.onnx").is_file()
    assert (tmp_path / "mobilenet.manifest.json").is_file()
