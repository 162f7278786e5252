import json
import math

import numpy as np
import pytest

from sheetrefine import (
    EmbeddingError,
    EmbeddingVector,
    InvalidParameterError,
    cosine_similarity,
    evaluate_set,
    identity_consistency,
    load_embeddings,
    prompt_similarity,
)


def vec(*values, id=""):
    return EmbeddingVector(values=np.asarray(values, dtype=np.float64), id=id)


class TestCosineSimilarity:
    def test_self_similarity_is_one(self):
        assert cosine_similarity(vec(3, 4), vec(3, 4)) == 1.0

    def test_orthogonal_is_zero(self):
        assert cosine_similarity(vec(1, 0), vec(0, 1)) == 0.0

    def test_hand_arithmetic(self):
        assert cosine_similarity(vec(1, 1), vec(1, 0)) == pytest.approx(
            1 / math.sqrt(2), abs=1e-12)

    def test_symmetry_exact(self, rng):
        for _ in range(50):
            a = vec(*rng.normal(size=8))
            b = vec(*rng.normal(size=8))
            assert cosine_similarity(a, b) == cosine_similarity(b, a)

    def test_scale_invariance(self, rng):
        for _ in range(50):
            a = rng.normal(size=6)
            b = rng.normal(size=6)
            scale = float(rng.uniform(0.01, 100))
            assert cosine_similarity(vec(*(scale * a)), vec(*b)) == pytest.approx(
                cosine_similarity(vec(*a), vec(*b)), abs=1e-12)

    def test_result_clamped_to_unit_interval(self, rng):
        for _ in range(200):
            a = vec(*rng.normal(size=4))
            b = vec(*rng.normal(size=4))
            assert -1.0 <= cosine_similarity(a, b) <= 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidParameterError, match="dimension mismatch"):
            cosine_similarity(vec(1, 2), vec(1, 2, 3))

    def test_zero_vector(self):
        with pytest.raises(InvalidParameterError, match="zero vector"):
            cosine_similarity(vec(0, 0), vec(1, 0))


class TestPromptSimilarity:
    def test_images_equal_to_text(self):
        text = vec(0.2, 0.5, 0.1)
        assert prompt_similarity([text, text, text], text) == 1.0

    def test_mean_of_zero_and_one(self):
        text = vec(1, 0)
        assert prompt_similarity([vec(1, 0), vec(0, 1)], text) == 0.5

    def test_empty_list(self):
        with pytest.raises(InvalidParameterError):
            prompt_similarity([], vec(1, 0))


class TestIdentityConsistency:
    def test_identical_vectors(self):
        v = vec(2, 3, 4)
        assert identity_consistency([v, v, v, v]) == 1.0

    def test_hand_arithmetic_third(self):
        value = identity_consistency([vec(1, 0), vec(0, 1), vec(1, 0)])
        assert value == 1 / 3

    def test_permutation_invariant(self, rng):
        vectors = [vec(*rng.normal(size=5)) for _ in range(5)]
        base = identity_consistency(vectors)
        perm = [vectors[i] for i in rng.permutation(5)]
        assert identity_consistency(perm) == pytest.approx(base, abs=1e-12)

    def test_single_vector_rejected(self):
        with pytest.raises(InvalidParameterError):
            identity_consistency([vec(1, 0)])


class TestEvaluateSet:
    def test_report_fields(self):
        images = [vec(1, 0), vec(0, 1), vec(1, 0)]
        report = evaluate_set(images, vec(1, 0))
        assert report.n_images == 3
        assert report.n_pairs == 3
        assert report.identity_consistency == 1 / 3
        assert report.prompt_similarity == pytest.approx((1 + 0 + 1) / 3, abs=1e-12)
        assert -1.0 <= report.prompt_similarity <= 1.0
        assert -1.0 <= report.identity_consistency <= 1.0


class TestLoadEmbeddings:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "emb.json"
        path.write_text(json.dumps([
            {"id": "a", "values": [1.0, 2.0]},
            {"id": "b", "values": [3.0, 4.0]},
        ]))
        vectors = load_embeddings(path)
        assert [v.id for v in vectors] == ["a", "b"]
        assert vectors[0].values.tolist() == [1.0, 2.0]

    def test_single_object_is_wrapped(self, tmp_path):
        path = tmp_path / "one.json"
        path.write_text(json.dumps({"id": "t", "values": [1, 0, 0]}))
        vectors = load_embeddings(path)
        assert len(vectors) == 1
        assert vectors[0].dim == 3

    def test_missing_values_field(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps([{"id": "a"}]))
        with pytest.raises(EmbeddingError, match="entry 0"):
            load_embeddings(path)

    def test_non_numeric_values(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps([{"id": "a", "values": ["x", "y"]}]))
        with pytest.raises(EmbeddingError):
            load_embeddings(path)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("[{")
        with pytest.raises(EmbeddingError, match="malformed"):
            load_embeddings(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(EmbeddingError, match="not found"):
            load_embeddings(tmp_path / "absent.json")

    def test_missing_id_defaults_to_index(self, tmp_path):
        path = tmp_path / "emb.json"
        path.write_text(json.dumps([{"values": [1.0]}]))
        assert load_embeddings(path)[0].id == "0"
