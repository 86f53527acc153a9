"""Black-box causal explanations for image classifiers.

Finds minimal pixel sets that are sufficient for a classification, whose
occlusion changes it, and the adjustment pixels that restore the original
confidence exactly; all through batched queries to an opaque classifier.
"""

from .classifier import (
    ClassifierOutput,
    ClassifierSpec,
    Preprocessing,
    builtin_spec,
    classify,
    classify_batch,
    load_onnx_spec,
    shutdown_backends,
    softmax,
    validate_baseline,
)
from .errors import (
    BackendError,
    ConfigurationError,
    CursorExhausted,
    ExplanationNotFound,
    IngestionError,
    InstanceTooLarge,
    PixcauseError,
    ProtocolError,
)
from .explain import (
    CheckResult,
    ExplanationRecord,
    adjustment_discovery,
    check_contrastive,
    check_sufficient,
    shrink_minimal,
    sufficient_contrastive,
)
from .harness import RunConfig, load_image, run_batch, run_single
from .imagery import BaselineSpec, ContextCursor, ImageTensor, PixelMask, compose, sweep
from .oracle import (
    TinyInstance,
    compare_with_greedy,
    duality_holds,
    exact_responsibility,
    exact_responsibility_all,
    instance_from_file,
    minimal_contrastive_sets,
    minimal_sufficient_sets,
    named_instance,
)
from .responsibility import (
    RankingConfig,
    ResponsibilityLandscape,
    heatmap_png,
    load_landscape,
    pixel_ranking,
    rank_pixels,
    save_landscape,
)
from .taxonomy import TaxonomyTree, load_taxonomy, observed_diameter, shortest_path

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
