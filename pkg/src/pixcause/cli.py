"""Command line interface.

Subcommands:
  explain <image>        explain one image, writing artifacts to --out
  batch <dir>            explain a directory, adding stats/plots/taxonomy distances
  oracle-check           run the greedy pipeline against the brute-force oracle
  taxonomy-dist          shortest-path distance between two class indices

All flags may also come from a TOML-style --config file of top-level
key = value pairs (strings, numbers, booleans); explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .classifier import builtin_spec, load_onnx_spec, shutdown_backends
from .classifier import ClassifierSpec, Preprocessing
from .errors import ConfigurationError, PixcauseError
from .harness import RunConfig, load_image, run_batch, run_single
from .imagery import BaselineSpec
from .oracle import compare_with_greedy, instance_from_file, named_instance
from .taxonomy import load_taxonomy, shortest_path

BUNDLED_EDGES = Path(__file__).parent / "data" / "taxonomy_edges.txt"
BUNDLED_MAP = Path(__file__).parent / "data" / "taxonomy_class_map.txt"


def _parse_config_text(text, path):
    """Flat TOML subset: key = value with strings, numbers and booleans."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            raise ConfigurationError(
                f"{path}:{lineno}: config keys must be top-level (no sections)"
            )
        key, eq, value = line.partition("=")
        if not eq:
            raise ConfigurationError(f"{path}:{lineno}: expected key = value")
        key = key.strip()
        value = value.strip()
        if value.startswith(('"', "'")):
            quote = value[0]
            if len(value) < 2 or not value.endswith(quote):
                raise ConfigurationError(f"{path}:{lineno}: unterminated string")
            out[key] = value[1:-1]
            continue
        value = value.split("#", 1)[0].strip()
        if value in ("true", "false"):
            out[key] = value == "true"
            continue
        try:
            out[key] = int(value)
        except ValueError:
            try:
                out[key] = float(value)
            except ValueError:
                raise ConfigurationError(
                    f"{path}:{lineno}: cannot parse value {value!r}"
                ) from None
    return out


def read_config(path):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e}") from e
    try:
        import tomllib

        doc = tomllib.loads(text)
        for key, value in doc.items():
            if isinstance(value, (dict, list)):
                raise ConfigurationError(
                    f"{path}: config keys must be top-level scalars ({key!r} is not)"
                )
        return doc
    except ModuleNotFoundError:
        return _parse_config_text(text, path)
    except ConfigurationError:
        raise
    except Exception as e:
        raise ConfigurationError(f"bad config {path}: {e}") from e


def _parse_baseline(text):
    try:
        values = [float(v) for v in str(text).split(",")]
    except ValueError:
        raise ConfigurationError(f"bad baseline {text!r}") from None
    return BaselineSpec(values[0] if len(values) == 1 else values)


def _parse_shape(text):
    try:
        dims = tuple(int(v) for v in str(text).lower().split("x"))
    except ValueError:
        raise ConfigurationError(f"bad shape {text!r}; expected HxWxC") from None
    if len(dims) != 3:
        raise ConfigurationError(f"bad shape {text!r}; expected HxWxC")
    return dims


def _infer_shape(image_path):
    from PIL import Image as PILImage

    import numpy as np

    path = Path(image_path)
    if path.suffix == ".npy":
        arr = np.load(path, mmap_mode="r")
        shape = arr.shape if arr.ndim == 3 else (*arr.shape, 1)
        return tuple(int(d) for d in shape)
    with PILImage.open(path) as im:
        c = 1 if im.mode in ("L", "1", "I", "F") else 3
        return (im.height, im.width, c)


def _resolve_spec(args, sample_path):
    backend = args.backend
    if backend.startswith("builtin:"):
        name = backend.split(":", 1)[1]
        shape = _parse_shape(args.input_shape) if args.input_shape else _infer_shape(sample_path)
        return builtin_spec(name, input_shape=shape)
    if backend == "onnx":
        if not args.model:
            raise ConfigurationError("--backend onnx needs --model <file.onnx>")
        return load_onnx_spec(args.model)
    if backend == "subprocess":
        if not args.model:
            raise ConfigurationError("--backend subprocess needs --model '<command>'")
        if not args.input_shape or not args.class_count:
            raise ConfigurationError(
                "--backend subprocess needs --input-shape and --class-count"
            )
        return ClassifierSpec(
            backend_kind="subprocess",
            model_ref=args.model,
            input_shape=_parse_shape(args.input_shape),
            preprocessing=Preprocessing(),
            class_count=args.class_count,
        )
    raise ConfigurationError(
        f"unknown backend {backend!r}; use onnx, subprocess or builtin:<name>"
    )


def _run_config(args) -> RunConfig:
    return RunConfig(
        delta=args.delta,
        seed=args.seed,
        iterations=args.iterations,
        branching=args.branching,
        depth_limit=args.depth_limit,
        refine_threshold=args.refine_threshold,
        strategy=args.strategy,
        precision_dp=args.precision_dp,
        baseline=_parse_baseline(args.baseline),
        chunk_size=args.chunk_size,
        workers=args.workers,
    )


def _add_run_flags(sub):
    sub.add_argument("--model", help="model file (onnx) or worker command (subprocess)")
    sub.add_argument(
        "--backend",
        default="builtin:count-conf",
        help="onnx | subprocess | builtin:<name>",
    )
    sub.add_argument("--delta", type=float, default=1.0)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--iterations", type=int, default=20)
    sub.add_argument("--baseline", default="0.0", help="scalar or comma per-channel")
    sub.add_argument("--precision-dp", type=int, default=4, dest="precision_dp")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--branching", type=int, default=4)
    sub.add_argument("--depth-limit", type=int, default=None, dest="depth_limit")
    sub.add_argument("--refine-threshold", type=int, default=4, dest="refine_threshold")
    sub.add_argument("--strategy", choices=["refine", "exact"], default="refine")
    sub.add_argument("--chunk-size", type=int, default=64, dest="chunk_size")
    sub.add_argument("--workers", type=int, default=1)
    sub.add_argument("--input-shape", dest="input_shape", help="HxWxC when not inferable")
    sub.add_argument("--class-count", type=int, dest="class_count")


def build_parser():
    parser = argparse.ArgumentParser(prog="pixcause", description=__doc__)
    parser.add_argument("--config", help="TOML-style config file of defaults")
    subs = parser.add_subparsers(dest="command", required=True)

    p_explain = subs.add_parser("explain", help="explain a single image")
    p_explain.add_argument("image")
    _add_run_flags(p_explain)

    p_batch = subs.add_parser("batch", help="explain a directory of images")
    p_batch.add_argument("dataset_dir")
    _add_run_flags(p_batch)
    p_batch.add_argument("--taxonomy-edges", dest="taxonomy_edges")
    p_batch.add_argument("--class-map", dest="class_map")

    p_oracle = subs.add_parser("oracle-check", help="greedy vs oracle comparison")
    p_oracle.add_argument("--instance", required=True, help="named instance or JSON file")
    p_oracle.add_argument("--delta", type=float, default=1.0)
    p_oracle.add_argument("--out", help="write the report JSON here too")

    p_dist = subs.add_parser("taxonomy-dist", help="distance between two classes")
    p_dist.add_argument("--edges", default=str(BUNDLED_EDGES))
    p_dist.add_argument("--map", dest="mapping", default=str(BUNDLED_MAP))
    p_dist.add_argument("class_a", type=int)
    p_dist.add_argument("class_b", type=int)
    return parser


def _known_dests(parser):
    dests = set()
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sub in action.choices.values():
                dests |= _known_dests(sub)
        elif action.dest != "help":
            dests.add(action.dest)
    return dests


def _inject_defaults(parser, overrides):
    # subparsers re-parse into a fresh namespace that overwrites the parent's,
    # so defaults must be planted on every subparser that owns the key
    parser.set_defaults(**{k: v for k, v in overrides.items() if k == "config"})
    for action in parser._actions:
        if not isinstance(action, argparse._SubParsersAction):
            continue
        for sub in action.choices.values():
            known = _known_dests(sub)
            picked = {k: v for k, v in overrides.items() if k in known}
            if picked:
                sub.set_defaults(**picked)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        # two-phase parse so --config can inject defaults under explicit flags
        probe = argparse.ArgumentParser(add_help=False)
        probe.add_argument("--config")
        pre, _ = probe.parse_known_args(argv)
        if pre.config:
            overrides = read_config(pre.config)
            unknown = set(overrides) - _known_dests(parser)
            if unknown:
                raise ConfigurationError(
                    f"unknown config keys: {', '.join(sorted(unknown))}"
                )
            _inject_defaults(parser, overrides)
        args = parser.parse_args(argv)
        return _dispatch(args)
    except PixcauseError as e:
        print(f"pixcause: error: {e}", file=sys.stderr)
        return 1
    finally:
        shutdown_backends()


def _dispatch(args) -> int:
    if args.command == "explain":
        spec = _resolve_spec(args, args.image)
        row = run_single(args.image, spec, _run_config(args), args.out)
        printable = {k: v for k, v in row.items() if k != "record"}
        print(json.dumps(printable, indent=2, sort_keys=True, default=str))
        return 0 if row["status"] == "ok" else 1

    if args.command == "batch":
        sample = next(
            (p for p in sorted(Path(args.dataset_dir).iterdir())
             if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".npy")),
            None,
        )
        if sample is None:
            raise ConfigurationError(f"no supported images in {args.dataset_dir}")
        spec = _resolve_spec(args, sample)
        taxonomy = None
        if args.taxonomy_edges or args.class_map:
            if not (args.taxonomy_edges and args.class_map):
                raise ConfigurationError(
                    "--taxonomy-edges and --class-map must be given together"
                )
            taxonomy = load_taxonomy(args.taxonomy_edges, args.class_map)
        manifest = run_batch(
            args.dataset_dir, spec, _run_config(args), args.out, taxonomy=taxonomy
        )
        counts = {}
        for row in manifest["images"]:
            counts[row["status"]] = counts.get(row["status"], 0) + 1
        print(json.dumps({"images": len(manifest["images"]), "statuses": counts}))
        return 0

    if args.command == "oracle-check":
        if args.instance.endswith(".json") or "/" in args.instance:
            inst = instance_from_file(args.instance)
        else:
            inst = named_instance(args.instance)
        report = compare_with_greedy(inst, args.delta)
        text = json.dumps(report, indent=2, sort_keys=True)
        print(text)
        if args.out:
            Path(args.out).write_text(text + "\n")
        agree = report["agreement"]
        ok = (
            agree["responsibility_max_abs_diff"] <= 1e-12
            and agree["sufficient_contains_a_minimal_set"]
            and agree["shrunk_not_smaller_than_min"]
            and agree["duality_holds"]
        )
        return 0 if ok else 1

    if args.command == "taxonomy-dist":
        tree = load_taxonomy(args.edges, args.mapping)
        print(shortest_path(tree, args.class_a, args.class_b))
        return 0

    raise ConfigurationError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
