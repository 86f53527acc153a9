"""Single-image and batch runners: artifacts, manifests, statistics, plots.

Every run directory is self-describing: record.json holds the explanation
and its metadata, the three mask PNGs and the responsibility landscape sit
next to it, and preview images show the composed explanations. Batch runs
add a manifest, a per-image stats CSV, and histogram/boxplot data with
rendered figures. Volatile values (timestamps, wall-clock) are confined to
the "timing"/"started_at"/wallclock fields so reruns compare byte-identical
elsewhere.
"""

from __future__ import annotations

import csv
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from PIL import Image

from .classifier import classify
from .errors import (
    ConfigurationError,
    ExplanationNotFound,
    IngestionError,
    PixcauseError,
)
from .explain import (
    DEFAULT_PRECISION_DP,
    adjustment_discovery,
    record_to_json_dict,
    sufficient_contrastive,
)
from .imagery import BaselineSpec, ImageTensor, compose
from .responsibility import (
    RankingConfig,
    heatmap_png,
    pixel_ranking,
    save_landscape,
)
from .taxonomy import shortest_path

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".npy")

_PLOT_LOCK = threading.Lock()

STATS_COLUMNS = [
    "image_id",
    "sufficient_size_pct",
    "contrastive_size_pct",
    "adjustment_size_pct",
    "original_label",
    "contrast_label",
    "adjustment_label",
    "contrast_distance",
    "adjustment_distance",
    "wallclock_ms",
]


@dataclass(frozen=True)
class RunConfig:
    delta: float = 1.0
    seed: int = 0
    iterations: int = 20
    branching: int = 4
    depth_limit: int | None = None
    refine_threshold: int = 4
    strategy: str = "refine"
    precision_dp: int = DEFAULT_PRECISION_DP
    baseline: BaselineSpec = field(default_factory=BaselineSpec)
    chunk_size: int = 64
    workers: int = 1

    def ranking_config(self) -> RankingConfig:
        return RankingConfig(
            seed=self.seed,
            iterations=self.iterations,
            branching=self.branching,
            depth_limit=self.depth_limit,
            refine_threshold=self.refine_threshold,
            strategy=self.strategy,
            chunk_size=max(self.chunk_size, 64),
        )


def load_image(path, spec) -> ImageTensor:
    """Decode and fit an image file to the classifier's input shape.

    .npy arrays are taken as-is (shape must already match). Raster images are
    resized so the shorter side matches, center-cropped, and scaled into the
    classifier's declared value range.
    """
    path = Path(path)
    h, w, c = spec.input_shape
    lo, hi = spec.preprocessing.value_range
    if path.suffix == ".npy":
        try:
            arr = np.load(path)
        except (OSError, ValueError) as e:
            raise IngestionError(f"cannot read array {path}: {e}") from e
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.shape != (h, w, c):
            raise IngestionError(
                f"{path}: array shape {arr.shape} does not match input {(h, w, c)}"
            )
        return ImageTensor(arr.astype(np.float32), value_range=(lo, hi))
    try:
        img = Image.open(path)
        img = img.convert("RGB" if c == 3 else "L")
    except OSError as e:
        raise IngestionError(f"cannot read image {path}: {e}") from e
    scale = max(h / img.height, w / img.width)
    resized = img.resize(
        (max(w, round(img.width * scale)), max(h, round(img.height * scale))),
        Image.BILINEAR,
    )
    left = (resized.width - w) // 2
    top = (resized.height - h) // 2
    cropped = resized.crop((left, top, left + w, top + h))
    arr = np.asarray(cropped, dtype=np.float32) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    scaled = np.clip(arr * (hi - lo) + lo, lo, hi)
    return ImageTensor(scaled, value_range=(lo, hi))


def _render_png(array, value_range, path):
    lo, hi = value_range
    scaled = np.clip((array - lo) / (hi - lo) * 255.0, 0, 255).astype(np.uint8)
    if scaled.shape[2] == 1:
        Image.fromarray(scaled[:, :, 0], mode="L").save(path, format="PNG")
    else:
        Image.fromarray(scaled[:, :, :3], mode="RGB").save(path, format="PNG")


def run_single(image_path, spec, cfg: RunConfig, out_dir) -> dict:
    """Explain one image, writing all artifacts under out_dir.

    Returns a manifest row: status ok | not_found | error, plus labels and
    set sizes when available. Never raises for per-image failures.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    row = {"image_id": Path(image_path).stem, "status": "error", "dir": out_dir.name}
    try:
        image = load_image(image_path, spec)
        landscape = pixel_ranking(image, spec, cfg.baseline, cfg.ranking_config())
        record = sufficient_contrastive(
            image, spec, cfg.baseline, cfg.delta, landscape, chunk_size=cfg.chunk_size
        )
        record.precision_dp = cfg.precision_dp
        adjustment_discovery(
            image, spec, cfg.baseline, landscape, record, chunk_size=cfg.chunk_size
        )

        adjustment_label = ""
        if record.adjustment.cardinality:
            adjustment_label = classify(
                spec, compose(image, record.adjustment, cfg.baseline)
            ).label

        wallclock_ms = int((time.perf_counter() - t0) * 1000)
        _write_artifacts(
            out_dir, image, spec, cfg, landscape, record, started, wallclock_ms
        )
        n = image.n_pixels
        row.update(
            status="ok",
            original_label=record.original_label,
            contrast_label=record.contrast_label,
            adjustment_label=adjustment_label,
            sufficient_size_pct=100.0 * record.sufficient.cardinality / n,
            contrastive_size_pct=100.0 * record.contrastive.cardinality / n,
            adjustment_size_pct=100.0 * record.adjustment.cardinality / n,
            wallclock_ms=wallclock_ms,
            record=record,
        )
    except ExplanationNotFound as e:
        row.update(
            status="not_found",
            reason=str(e),
            best_k=e.best_k,
            wallclock_ms=int((time.perf_counter() - t0) * 1000),
        )
    except PixcauseError as e:
        row.update(
            status="error",
            reason=str(e),
            wallclock_ms=int((time.perf_counter() - t0) * 1000),
        )
    return row


def _write_artifacts(out_dir, image, spec, cfg, landscape, record, started, wallclock_ms):
    record.sufficient.save_png(out_dir / "sufficient.png")
    record.contrastive.save_png(out_dir / "contrastive.png")
    record.adjustment.save_png(out_dir / "adjustment.png")
    save_landscape(
        landscape, out_dir / "responsibility.bin", out_dir / "responsibility.json"
    )
    with _PLOT_LOCK:
        heatmap_png(landscape, out_dir / "responsibility_heatmap.png")

    vr = image.value_range
    _render_png(
        compose(image, record.sufficient, cfg.baseline).array,
        vr,
        out_dir / "preview_sufficient.png",
    )
    _render_png(
        compose(image, record.contrastive.complement(), cfg.baseline).array,
        vr,
        out_dir / "preview_contrastive.png",
    )
    _render_png(
        compose(image, record.complete_mask(), cfg.baseline).array,
        vr,
        out_dir / "preview_complete.png",
    )

    doc = record_to_json_dict(
        record,
        mask_paths={
            "sufficient": "sufficient.png",
            "contrastive": "contrastive.png",
            "adjustment": "adjustment.png",
        },
        meta={
            "model_ref": spec.model_ref,
            "backend": spec.backend_kind,
            "input_shape": list(spec.input_shape),
            "delta": cfg.delta,
            "seed": cfg.seed,
            "iterations": cfg.iterations,
            "baseline": list(cfg.baseline.values),
            "precision_dp": cfg.precision_dp,
            "strategy": cfg.strategy,
            "degenerate_landscape": landscape.degenerate,
        },
        timing={"started_at": started, "wallclock_ms": wallclock_ms},
    )
    with open(out_dir / "record.json", "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def run_batch(dataset_dir, spec, cfg: RunConfig, out_dir, taxonomy=None) -> dict:
    """Explain every supported image in a directory; emit manifest and stats."""
    dataset_dir = Path(dataset_dir)
    out_dir = Path(out_dir)
    files = sorted(
        p for p in dataset_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not files:
        raise ConfigurationError(f"no supported images in {dataset_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)

    ids = set()
    jobs = []
    for p in files:
        image_id = p.stem
        k = 2
        while image_id in ids:
            image_id = f"{p.stem}_{k}"
            k += 1
        ids.add(image_id)
        jobs.append((image_id, p))

    started = datetime.now(timezone.utc).isoformat()

    def work(job):
        image_id, path = job
        row = run_single(path, spec, cfg, out_dir / image_id)
        row["image_id"] = image_id
        return row

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(work, jobs))
    else:
        rows = [work(j) for j in jobs]
    rows.sort(key=lambda r: r["image_id"])

    for row in rows:
        if row["status"] != "ok":
            continue
        row["contrast_distance"] = _distance(
            taxonomy, row["original_label"], row["contrast_label"]
        )
        row["adjustment_distance"] = _distance(
            taxonomy, row["original_label"], row["adjustment_label"]
        )

    manifest = {
        "model_ref": spec.model_ref,
        "backend": spec.backend_kind,
        "dataset_dir": str(dataset_dir),
        "delta": cfg.delta,
        "seed": cfg.seed,
        "iterations": cfg.iterations,
        "baseline": list(cfg.baseline.values),
        "precision_dp": cfg.precision_dp,
        "started_at": started,
        "images": [{k: v for k, v in r.items() if k != "record"} for r in rows],
    }
    with open(out_dir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")

    ok_rows = [r for r in rows if r["status"] == "ok"]
    _write_stats_csv(ok_rows, out_dir / "stats.csv")
    emit_plot_data(ok_rows, out_dir)
    return manifest


def _distance(taxonomy, label_a, label_b):
    if taxonomy is None or label_a == "" or label_b == "":
        return ""
    try:
        return shortest_path(taxonomy, label_a, label_b)
    except ConfigurationError:
        return ""


def _write_stats_csv(ok_rows, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(STATS_COLUMNS)
        for r in ok_rows:
            writer.writerow(
                [
                    r["image_id"],
                    f"{r['sufficient_size_pct']:.4f}",
                    f"{r['contrastive_size_pct']:.4f}",
                    f"{r['adjustment_size_pct']:.4f}",
                    r["original_label"],
                    r["contrast_label"],
                    r["adjustment_label"],
                    r.get("contrast_distance", ""),
                    r.get("adjustment_distance", ""),
                    r["wallclock_ms"],
                ]
            )


def emit_plot_data(ok_rows, out_dir, figures=True):
    """Deterministic histogram/quartile files, plus rendered figures."""
    out_dir = Path(out_dir)
    for kind in ("contrast", "adjustment"):
        distances = [
            int(r[f"{kind}_distance"])
            for r in ok_rows
            if r.get(f"{kind}_distance", "") != ""
        ]
        _write_histogram_csv(distances, out_dir / f"hist_{kind}.csv")
        if figures:
            _histogram_figure(distances, kind, out_dir / f"hist_{kind}.png")

    kinds = [
        ("sufficient", [r["sufficient_size_pct"] for r in ok_rows]),
        ("contrastive", [r["contrastive_size_pct"] for r in ok_rows]),
        ("adjustment", [r["adjustment_size_pct"] for r in ok_rows]),
    ]
    with open(out_dir / "sizes_summary.csv", "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["set_kind", "min", "q1", "median", "q3", "max"])
        for name, vals in kinds:
            if vals:
                q = np.percentile(vals, [0, 25, 50, 75, 100])
                writer.writerow([name] + [f"{v:.4f}" for v in q])
            else:
                writer.writerow([name, "", "", "", "", ""])
    if figures and ok_rows:
        _sizes_figure(kinds, out_dir / "sizes_summary.png")


def _write_histogram_csv(distances, path):
    counts = {}
    for d in distances:
        counts[d] = counts.get(d, 0) + 1
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["distance", "count"])
        for d in sorted(counts):
            writer.writerow([d, counts[d]])


def _figure_ctx():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _histogram_figure(distances, kind, path):
    plt = _figure_ctx()
    with _PLOT_LOCK:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        if distances:
            lo, hi = min(distances), max(distances)
            ax.hist(distances, bins=np.arange(lo - 0.5, hi + 1.5, 1.0), edgecolor="black")
        ax.set_xlabel(f"{kind} class distance")
        ax.set_ylabel("images")
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)


def _sizes_figure(kinds, path):
    plt = _figure_ctx()
    with _PLOT_LOCK:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.boxplot(
            [vals for _, vals in kinds], tick_labels=[name for name, _ in kinds]
        )
        ax.set_ylabel("size, % of pixels")
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
