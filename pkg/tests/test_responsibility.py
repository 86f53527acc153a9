import numpy as np
import pytest

from pixcause import (
    BaselineSpec,
    ConfigurationError,
    ImageTensor,
    RankingConfig,
    ResponsibilityLandscape,
    builtin_spec,
    load_landscape,
    pixel_ranking,
    rank_pixels,
    save_landscape,
)
from pixcause.responsibility import EXACT_PIXEL_LIMIT, heatmap_png


def tensor(values):
    arr = np.asarray(values, dtype=np.float32)
    return ImageTensor(arr[:, :, None])


BASE = BaselineSpec(0.0)
EXACT = RankingConfig(strategy="exact")


class TestExactScores:
    def test_or2_splits_responsibility(self):
        img = tensor([[1, 1], [0, 0]])
        spec = builtin_spec("or2", input_shape=(2, 2, 1))
        land = pixel_ranking(img, spec, BASE, EXACT)
        assert land.scores.ravel().tolist() == [0.5, 0.5, 0.0, 0.0]

    def test_and2_full_responsibility(self):
        img = tensor([[1, 1], [0, 0]])
        spec = builtin_spec("and2", input_shape=(2, 2, 1))
        land = pixel_ranking(img, spec, BASE, EXACT)
        assert land.scores.ravel().tolist() == [1.0, 1.0, 0.0, 0.0]

    def test_irrelevant_pixels_score_zero(self):
        img = tensor([[1, 1], [1, 1]])
        spec = builtin_spec("p0-only", input_shape=(2, 2, 1))
        land = pixel_ranking(img, spec, BASE, EXACT)
        assert land.scores.ravel().tolist() == [1.0, 0.0, 0.0, 0.0]

    def test_count_conf_gate_dominates(self):
        img = tensor([[1, 1], [1, 1]])
        spec = builtin_spec("count-conf", input_shape=(2, 2, 1))
        land = pixel_ranking(img, spec, BASE, EXACT)
        assert land.scores.ravel().tolist() == [1.0, 0.0, 0.0, 0.0]

    def test_baseline_valued_pixels_never_counted(self):
        # p1 is dark in the image, so witnesses never pay for it
        img = tensor([[1, 0], [1, 0]])
        spec = builtin_spec("threshold:2:0,1,2", input_shape=(2, 2, 1))
        land = pixel_ranking(img, spec, BASE, EXACT)
        assert land.scores.ravel().tolist() == [1.0, 0.0, 1.0, 0.0]

    def test_pixel_limit_enforced(self):
        img = ImageTensor(np.ones((5, 4, 1), dtype=np.float32))
        spec = builtin_spec("or:0,1", input_shape=(5, 4, 1))
        with pytest.raises(ConfigurationError):
            pixel_ranking(img, spec, BASE, EXACT)
        assert EXACT_PIXEL_LIMIT == 16

    def test_invalid_baseline_rejected(self):
        img = tensor([[1, 1], [1, 1]])
        spec = builtin_spec("and2", input_shape=(2, 2, 1))
        with pytest.raises(ConfigurationError, match="baseline"):
            pixel_ranking(img, spec, BaselineSpec(1.0), EXACT)


class TestRefineScores:
    def test_deterministic_across_runs(self):
        rng = np.random.default_rng(7)
        img = ImageTensor((rng.random((6, 6, 1)) > 0.5).astype(np.float32))
        arr = img.array.copy()
        arr[0, 0, 0] = 1.0
        img = ImageTensor(arr)
        spec = builtin_spec("p0-only", input_shape=(6, 6, 1))
        cfg = RankingConfig(seed=3, iterations=5)
        a = pixel_ranking(img, spec, BASE, cfg)
        b = pixel_ranking(img, spec, BASE, cfg)
        assert np.array_equal(a.scores, b.scores)
        assert a.seed == 3 and a.iterations == 5

    def test_decisive_pixel_tops_ranking(self):
        img = ImageTensor(np.ones((6, 6, 1), dtype=np.float32))
        spec = builtin_spec("p0-only", input_shape=(6, 6, 1))
        cfg = RankingConfig(seed=0, iterations=8, refine_threshold=1)
        land = pixel_ranking(img, spec, BASE, cfg)
        assert land.scores.ravel()[0] == land.scores.max() == 1.0
        assert rank_pixels(land, "high_to_low")[0] == 0

    def test_scores_bounded(self):
        img = ImageTensor(np.ones((5, 7, 1), dtype=np.float32))
        spec = builtin_spec("or:0,6,20", input_shape=(5, 7, 1))
        land = pixel_ranking(img, spec, BASE, RankingConfig(seed=1, iterations=6))
        assert land.scores.min() >= 0.0 and land.scores.max() <= 1.0

    def test_positive_scores_only_inside_passing_subsets(self):
        # pixels equal to the baseline can never carry image evidence
        img = tensor([[1, 0, 0], [0, 0, 0], [0, 0, 1]])
        spec = builtin_spec("or:0,8", input_shape=(3, 3, 1))
        land = pixel_ranking(img, spec, BASE, RankingConfig(seed=2, iterations=10))
        on = {0, 8}
        for p, score in enumerate(land.scores.ravel()):
            if score > 0:
                assert p in on

    def test_depth_limit_zero_is_single_level(self):
        img = ImageTensor(np.ones((4, 4, 1), dtype=np.float32))
        spec = builtin_spec("p0-only", input_shape=(4, 4, 1))
        cfg = RankingConfig(seed=0, iterations=3, depth_limit=0)
        land = pixel_ranking(img, spec, BASE, cfg)
        assert land.scores.max() == 1.0


class TestRankPixels:
    def test_all_equal_scores_row_major(self):
        land = ResponsibilityLandscape(scores=np.zeros((2, 3)), seed=0, iterations=1)
        assert rank_pixels(land, "high_to_low").tolist() == [0, 1, 2, 3, 4, 5]
        assert rank_pixels(land, "low_to_high").tolist() == [0, 1, 2, 3, 4, 5]

    def test_orderings_reverse_for_distinct_scores(self):
        scores = np.array([[0.1, 0.9], [0.5, 0.3]])
        land = ResponsibilityLandscape(scores=scores, seed=0, iterations=1)
        hi = rank_pixels(land, "high_to_low").tolist()
        lo = rank_pixels(land, "low_to_high").tolist()
        assert hi == [1, 2, 3, 0]
        assert lo == hi[::-1]

    def test_ties_break_row_major_in_both_orders(self):
        scores = np.array([[0.5, 0.1], [0.5, 0.1]])
        land = ResponsibilityLandscape(scores=scores, seed=0, iterations=1)
        assert rank_pixels(land, "high_to_low").tolist() == [0, 2, 1, 3]
        assert rank_pixels(land, "low_to_high").tolist() == [1, 3, 0, 2]

    def test_unknown_order(self):
        land = ResponsibilityLandscape(scores=np.zeros((2, 2)), seed=0, iterations=1)
        with pytest.raises(ConfigurationError):
            rank_pixels(land, "sideways")


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        scores = np.array([[1.0, 0.5], [0.25, 0.0]])
        land = ResponsibilityLandscape(scores=scores, seed=9, iterations=3)
        bin_path = tmp_path / "responsibility.bin"
        meta_path = tmp_path / "responsibility.json"
        save_landscape(land, bin_path, meta_path)
        back = load_landscape(bin_path, meta_path)
        assert np.array_equal(back.scores, scores.astype(np.float32).astype(np.float64))
        assert back.seed == 9 and back.iterations == 3 and back.degenerate is False

    def test_binary_layout_is_le_f32_row_major(self, tmp_path):
        scores = np.array([[1.0, 0.5], [0.25, 0.0]])
        land = ResponsibilityLandscape(scores=scores, seed=0, iterations=1)
        save_landscape(land, tmp_path / "r.bin", tmp_path / "r.json")
        raw = np.frombuffer((tmp_path / "r.bin").read_bytes(), dtype="<f4")
        assert raw.tolist() == [1.0, 0.5, 0.25, 0.0]
        meta = (tmp_path / "r.json").read_text()
        assert '"dtype": "<f4"' in meta and '"order": "row-major"' in meta

    def test_heatmap_written_and_stable(self, tmp_path):
        scores = np.array([[1.0, 0.5], [0.25, 0.0]])
        land = ResponsibilityLandscape(scores=scores, seed=0, iterations=1)
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        heatmap_png(land, a)
        heatmap_png(land, b)
        assert a.read_bytes() == b.read_bytes()
        assert a.stat().st_size > 0


class TestConfigValidation:
    def test_bad_values(self):
        for kwargs in (
            {"iterations": 0},
            {"branching": 1},
            {"refine_threshold": 0},
            {"depth_limit": -1},
            {"strategy": "psychic"},
            {"seed": -1},
        ):
            with pytest.raises(ConfigurationError):
                RankingConfig(**kwargs)

    def test_landscape_rejects_bad_scores(self):
        with pytest.raises(ConfigurationError):
            ResponsibilityLandscape(scores=np.array([[1.5]]), seed=0, iterations=1)
        with pytest.raises(ConfigurationError):
            ResponsibilityLandscape(scores=np.array([[-0.1]]), seed=0, iterations=1)
