import numpy as np
import pytest

from pixcause import (
    BaselineSpec,
    ConfigurationError,
    ExplanationNotFound,
    ImageTensor,
    PixelMask,
    RankingConfig,
    adjustment_discovery,
    builtin_spec,
    check_contrastive,
    check_sufficient,
    classify,
    compose,
    pixel_ranking,
    rank_pixels,
    shrink_minimal,
    sufficient_contrastive,
)
from pixcause.explain import ExplanationRecord, record_to_json_dict

BASE = BaselineSpec(0.0)
EXACT = RankingConfig(strategy="exact")


def tensor(values):
    arr = np.asarray(values, dtype=np.float32)
    return ImageTensor(arr[:, :, None])


def mask(indices, h=2, w=2):
    return PixelMask.from_flat_indices(h, w, indices)


def pipeline(name, values, delta, shape=None):
    img = tensor(values)
    spec = builtin_spec(name, input_shape=shape or (img.height, img.width, 1))
    land = pixel_ranking(img, spec, BASE, EXACT)
    rec = sufficient_contrastive(img, spec, BASE, delta, land)
    return img, spec, land, rec


class TestChecks:
    def test_full_mask_is_sufficient_at_any_delta(self):
        img = tensor([[1, 1], [1, 1]])
        spec = builtin_spec("count-conf", input_shape=(2, 2, 1))
        res = check_sufficient(img, spec, BASE, PixelMask.full(2, 2), 1.0)
        assert res.holds and res.label == 1 and res.confidence == 0.875

    def test_and2_needs_both_pixels(self):
        img = tensor([[1, 1], [0, 0]])
        spec = builtin_spec("and2", input_shape=(2, 2, 1))
        assert not check_sufficient(img, spec, BASE, mask([0]), 0.0).holds
        assert check_sufficient(img, spec, BASE, mask([0, 1]), 1.0).holds

    def test_or2_single_pixel_suffices(self):
        img = tensor([[1, 1], [0, 0]])
        spec = builtin_spec("or2", input_shape=(2, 2, 1))
        assert check_sufficient(img, spec, BASE, mask([0]), 1.0).holds

    def test_contrastive_empty_mask_never_holds(self):
        img = tensor([[1, 1], [0, 0]])
        spec = builtin_spec("or2", input_shape=(2, 2, 1))
        assert not check_contrastive(img, spec, BASE, PixelMask.empty(2, 2)).holds

    def test_contrastive_and2_one_pixel(self):
        img = tensor([[1, 1], [0, 0]])
        spec = builtin_spec("and2", input_shape=(2, 2, 1))
        res = check_contrastive(img, spec, BASE, mask([0]))
        assert res.holds and res.label == 0

    def test_contrastive_full_mask_equals_baseline_validity(self):
        img = tensor([[1, 1], [0, 0]])
        spec = builtin_spec("and2", input_shape=(2, 2, 1))
        assert check_contrastive(img, spec, BASE, PixelMask.full(2, 2)).holds


class TestSufficientContrastive:
    def test_count_conf_half_delta(self):
        img, spec, land, rec = pipeline("count-conf", [[1, 1], [1, 1]], 0.5)
        assert sorted(rec.sufficient.flat_indices().tolist()) == [0]
        assert rec.contrastive.flat_indices().tolist() == [0]
        assert rec.original_label == 1
        assert rec.original_confidence == 0.875
        assert rec.tau == 0.4375
        assert rec.sufficient_confidence == 0.5
        assert rec.contrast_label == 0
        assert rec.sufficient_valid and rec.contrastive_valid
        assert not rec.complete_valid

    def test_count_conf_full_delta_needs_everything(self):
        img, spec, land, rec = pipeline("count-conf", [[1, 1], [1, 1]], 1.0)
        assert rec.sufficient.cardinality == 4
        assert rec.sufficient_confidence == 0.875

    def test_or2_needs_both_disjuncts_for_contrast(self):
        # {p0} alone is sufficient but occluding it leaves p1 carrying the label
        img, spec, land, rec = pipeline("or2", [[1, 1], [0, 0]], 1.0)
        assert sorted(rec.sufficient.flat_indices().tolist()) == [0, 1]
        assert rec.contrast_label == 0

    def test_or2_single_lit_pixel_is_both(self):
        img, spec, land, rec = pipeline("or2", [[1, 0], [0, 0]], 1.0)
        assert rec.sufficient.flat_indices().tolist() == [0]
        assert rec.contrast_label == 0

    def test_sufficient_equals_contrastive_prefix(self):
        img, spec, land, rec = pipeline("count-conf", [[1, 0], [1, 1]], 0.5)
        assert np.array_equal(rec.sufficient.array, rec.contrastive.array)
        ranking = rank_pixels(land, "high_to_low")
        k = rec.sufficient.cardinality
        assert sorted(rec.sufficient.flat_indices().tolist()) == sorted(
            int(p) for p in ranking[:k]
        )

    def test_returned_k_is_first_satisfying(self):
        # every shorter prefix must violate at least one stopping condition
        img, spec, land, rec = pipeline("count-conf", [[1, 1], [1, 1]], 1.0)
        ranking = rank_pixels(land, "high_to_low")
        k = rec.sufficient.cardinality
        for shorter in range(1, k):
            prefix = mask([int(p) for p in ranking[:shorter]])
            suff = check_sufficient(img, spec, BASE, prefix, rec.delta)
            contr = check_contrastive(img, spec, BASE, prefix)
            assert not (suff.holds and contr.holds)

    def test_delta_zero_stops_at_label_split(self):
        img, spec, land, rec = pipeline("count-conf", [[1, 1], [1, 1]], 0.0)
        assert rec.tau == 0.0
        assert rec.sufficient.flat_indices().tolist() == [0]

    def test_record_validates(self):
        img, spec, land, rec = pipeline("count-conf", [[1, 1], [1, 1]], 0.5)
        rec.validate()

    def test_invalid_baseline_rejected(self):
        img = tensor([[1, 1], [1, 1]])
        spec = builtin_spec("and2", input_shape=(2, 2, 1))
        land = pixel_ranking(img, spec, BASE, EXACT)
        with pytest.raises(ConfigurationError):
            sufficient_contrastive(img, spec, BaselineSpec(1.0), 0.5, land)

    def test_delta_out_of_range(self):
        img, spec, land, _ = pipeline("or2", [[1, 1], [0, 0]], 1.0)
        with pytest.raises(ConfigurationError):
            sufficient_contrastive(img, spec, BASE, 1.5, land)

    def test_small_chunks_agree_with_large(self):
        img = tensor([[1, 0, 1], [1, 1, 0], [0, 1, 1]])
        spec = builtin_spec("count-conf:4:0,2,6", input_shape=(3, 3, 1))
        land = pixel_ranking(img, spec, BASE, EXACT)
        a = sufficient_contrastive(img, spec, BASE, 0.5, land, chunk_size=1)
        b = sufficient_contrastive(img, spec, BASE, 0.5, land, chunk_size=64)
        assert np.array_equal(a.sufficient.array, b.sufficient.array)
        assert a.sufficient_confidence == b.sufficient_confidence


class TestAdjustment:
    def test_count_conf_restores_exact_confidence(self):
        img, spec, land, rec = pipeline("count-conf", [[1, 1], [1, 1]], 0.5)
        adj = adjustment_discovery(img, spec, BASE, land, rec)
        assert sorted(adj.flat_indices().tolist()) == [1, 2, 3]
        assert rec.complete_valid
        out = classify(spec, compose(img, rec.complete_mask(), BASE))
        assert round(float(out.confidences[rec.original_label]), 4) == round(
            rec.original_confidence, 4
        )

    def test_empty_adjustment_when_confidence_already_matches(self):
        img, spec, land, rec = pipeline("count-conf", [[1, 1], [1, 1]], 1.0)
        adj = adjustment_discovery(img, spec, BASE, land, rec)
        assert adj.cardinality == 0
        assert rec.complete_valid

    def test_adjustment_disjoint_from_explanation(self):
        img, spec, land, rec = pipeline("count-conf", [[1, 0], [1, 1]], 0.5)
        adj = adjustment_discovery(img, spec, BASE, land, rec)
        assert adj.intersection(rec.sufficient).cardinality == 0

    def test_adjustment_prefers_low_responsibility(self):
        # climbing low-to-high, the gate pixel is reached last
        img, spec, land, rec = pipeline("count-conf", [[1, 1], [1, 1]], 0.5)
        adjustment_discovery(img, spec, BASE, land, rec)
        order = [int(p) for p in rank_pixels(land, "low_to_high")]
        added = sorted(rec.adjustment.flat_indices().tolist())
        prefix = [p for p in order if p != 0][: len(added)]
        assert added == sorted(prefix)

    def test_needs_nonempty_explanation(self):
        img, spec, land, rec = pipeline("count-conf", [[1, 1], [1, 1]], 0.5)
        rec.contrastive = PixelMask.empty(2, 2)
        with pytest.raises(ConfigurationError):
            adjustment_discovery(img, spec, BASE, land, rec)


class TestShrink:
    def test_or2_keeps_earliest_ranked(self):
        img = tensor([[1, 1], [0, 0]])
        spec = builtin_spec("or2", input_shape=(2, 2, 1))
        land = pixel_ranking(img, spec, BASE, EXACT)
        shrunk = shrink_minimal(
            img, spec, BASE, mask([0, 1]), "sufficient", delta=1.0, landscape=land
        )
        assert shrunk.flat_indices().tolist() == [0]

    def test_and2_contrastive_shrinks_to_one(self):
        img = tensor([[1, 1], [0, 0]])
        spec = builtin_spec("and2", input_shape=(2, 2, 1))
        land = pixel_ranking(img, spec, BASE, EXACT)
        shrunk = shrink_minimal(
            img, spec, BASE, PixelMask.full(2, 2), "contrastive", landscape=land
        )
        assert shrunk.flat_indices().tolist() == [0]

    def test_result_is_one_minimal(self):
        img = tensor([[1, 1], [1, 1]])
        spec = builtin_spec("count-conf", input_shape=(2, 2, 1))
        land = pixel_ranking(img, spec, BASE, EXACT)
        shrunk = shrink_minimal(
            img, spec, BASE, PixelMask.full(2, 2), "sufficient", delta=0.5, landscape=land
        )
        assert check_sufficient(img, spec, BASE, shrunk, 0.5).holds
        arr = shrunk.array.copy()
        for p in shrunk.flat_indices():
            r, c = divmod(int(p), 2)
            arr[r, c] = False
            assert not check_sufficient(img, spec, BASE, PixelMask(arr.copy()), 0.5).holds
            arr[r, c] = True

    def test_predicate_must_hold_initially(self):
        img = tensor([[1, 1], [0, 0]])
        spec = builtin_spec("and2", input_shape=(2, 2, 1))
        with pytest.raises(ConfigurationError):
            shrink_minimal(img, spec, BASE, mask([0]), "sufficient", delta=1.0)

    def test_sufficient_needs_delta(self):
        img = tensor([[1, 1], [0, 0]])
        spec = builtin_spec("or2", input_shape=(2, 2, 1))
        with pytest.raises(ConfigurationError):
            shrink_minimal(img, spec, BASE, mask([0, 1]), "sufficient")

    def test_unknown_predicate(self):
        img = tensor([[1, 1], [0, 0]])
        spec = builtin_spec("or2", input_shape=(2, 2, 1))
        with pytest.raises(ConfigurationError):
            shrink_minimal(img, spec, BASE, mask([0, 1]), "both", delta=1.0)


class TestRecord:
    def test_validate_rejects_overlapping_adjustment(self):
        rec = ExplanationRecord(
            sufficient=mask([0]),
            contrastive=mask([0]),
            adjustment=mask([0, 1]),
            delta=0.5,
            tau=0.4375,
            original_label=1,
            original_confidence=0.875,
            sufficient_confidence=0.5,
            contrast_label=0,
            contrast_confidence=0.25,
            contrastive_valid=True,
        )
        with pytest.raises(ConfigurationError):
            rec.validate()

    def test_validate_rejects_wrong_tau(self):
        rec = ExplanationRecord(
            sufficient=mask([0]),
            contrastive=mask([0]),
            adjustment=mask([1]),
            delta=0.5,
            tau=0.9,
            original_label=1,
            original_confidence=0.875,
            sufficient_confidence=0.5,
            contrast_label=0,
            contrast_confidence=0.25,
        )
        with pytest.raises(ConfigurationError):
            rec.validate()

    def test_json_dict_keeps_volatile_values_under_timing(self):
        rec = ExplanationRecord(
            sufficient=mask([0]),
            contrastive=mask([0]),
            adjustment=mask([1, 2, 3]),
            delta=0.5,
            tau=0.4375,
            original_label=1,
            original_confidence=0.875,
            sufficient_confidence=0.5,
            contrast_label=0,
            contrast_confidence=0.25,
            sufficient_valid=True,
            contrastive_valid=True,
            complete_valid=True,
        )
        doc = record_to_json_dict(
            rec,
            mask_paths={"sufficient": "sufficient.png"},
            meta={"model_ref": "count-conf"},
            timing={"wallclock_ms": 12.5},
        )
        assert doc["sufficient_size"] == 1
        assert doc["adjustment_size"] == 3
        assert doc["timing"] == {"wallclock_ms": 12.5}
        stable = {k: v for k, v in doc.items() if k != "timing"}
        assert "wallclock" not in str(stable)

    def test_not_found_carries_diagnostics(self):
        e = ExplanationNotFound("no prefix works", best_k=3, best_confidence=0.4)
        assert e.best_k == 3 and e.best_confidence == 0.4
