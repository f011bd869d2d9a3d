"""Clustering, silhouette scoring and near-duplicate collapsing."""

from __future__ import annotations

from datetime import date

import numpy as np
import pytest

from assocmine.corpus import Article
from assocmine.dedup import (
    ClusterAssignment,
    agglomerate,
    dedup_articles,
    default_grid,
    distance_matrix,
    merge_sequence,
    select_representatives,
    silhouette,
    tune_threshold,
)
from assocmine.embed import HashedTfProvider


def brute_silhouette(dist, labels):
    """Direct-formula reimplementation used as the oracle."""
    n = len(labels)
    clusters = {}
    for i, label in enumerate(labels):
        clusters.setdefault(label, []).append(i)
    if len(clusters) in (1, n):
        return None
    scores = []
    for i in range(n):
        own = clusters[labels[i]]
        if len(own) == 1:
            scores.append(0.0)
            continue
        a = sum(dist[i][j] for j in own if j != i) / (len(own) - 1)
        b = min(sum(dist[i][j] for j in members) / len(members)
                for label, members in clusters.items() if label != labels[i])
        denom = max(a, b)
        scores.append(0.0 if denom == 0 else (b - a) / denom)
    return sum(scores) / n


def random_distance_matrix(rng, n):
    """Symmetric nonnegative matrix with a zero diagonal."""
    raw = rng.uniform(0.0, 2.0, size=(n, n))
    dist = (raw + raw.T) / 2
    np.fill_diagonal(dist, 0.0)
    return dist


FOUR_POINT = np.array([
    [0.00, 0.05, 0.90, 0.90],
    [0.05, 0.00, 0.90, 0.90],
    [0.90, 0.90, 0.00, 0.05],
    [0.90, 0.90, 0.05, 0.00],
])


class TestDistanceMatrix:
    def test_identical_vectors_zero(self):
        vectors = np.array([[1.0, 2.0], [1.0, 2.0]])
        assert distance_matrix(vectors).tolist() == [[0.0, 0.0], [0.0, 0.0]]

    def test_orthogonal_one_hots(self):
        vectors = np.eye(3)
        dist = distance_matrix(vectors)
        off = dist[~np.eye(3, dtype=bool)]
        assert np.allclose(off, 1.0)

    def test_known_pair(self):
        dist = distance_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
        assert dist[0, 1] == pytest.approx(0.2)

    def test_symmetric_bitwise(self):
        rng = np.random.default_rng(7)
        dist = distance_matrix(rng.normal(size=(12, 6)))
        assert np.array_equal(dist, dist.T)

    def test_zero_norm_rows_handled(self):
        dist = distance_matrix(np.array([[0.0, 0.0], [1.0, 0.0]]))
        assert dist[0, 1] == pytest.approx(1.0)

    def test_requires_2d(self):
        with pytest.raises(ValueError):
            distance_matrix(np.zeros(4))


class TestAgglomerate:
    def test_threshold_zero_distinct_points(self):
        dist = random_distance_matrix(np.random.default_rng(0), 8) + 0.01
        np.fill_diagonal(dist, 0.0)
        assignment = agglomerate(dist, 0.0)
        assert assignment.k == 8

    def test_threshold_above_max_single_cluster(self):
        dist = random_distance_matrix(np.random.default_rng(1), 8)
        assignment = agglomerate(dist, float(dist.max()))
        assert assignment.k == 1

    def test_four_point_fixture_two_clusters(self):
        assignment = agglomerate(FOUR_POINT, 0.2)
        assert assignment.k == 2
        assert list(assignment.labels) == [0, 0, 1, 1]

    def test_labels_by_smallest_member(self):
        # {0,2} merge first, then {1,3}: cluster containing 0 gets label 0.
        dist = np.array([
            [0.0, 0.9, 0.1, 0.9],
            [0.9, 0.0, 0.9, 0.1],
            [0.1, 0.9, 0.0, 0.9],
            [0.9, 0.1, 0.9, 0.0],
        ])
        assignment = agglomerate(dist, 0.2)
        assert list(assignment.labels) == [0, 1, 0, 1]

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(5)
        dist = random_distance_matrix(rng, 14)
        steps = merge_sequence(dist)
        previous = None
        for threshold in default_grid():
            k = agglomerate(dist, threshold, steps=steps).k
            if previous is not None:
                assert k <= previous
            previous = k

    def test_single_point(self):
        assignment = agglomerate(np.zeros((1, 1)), 0.5)
        assert assignment.k == 1

    def test_merge_heights_nondecreasing(self):
        rng = np.random.default_rng(11)
        dist = random_distance_matrix(rng, 20)
        steps = merge_sequence(dist)
        heights = [s.height for s in steps]
        assert heights == sorted(heights)
        assert len(steps) == 19


class TestSilhouette:
    def test_four_point_fixture_value(self):
        assignment = agglomerate(FOUR_POINT, 0.2)
        score = silhouette(FOUR_POINT, assignment)
        assert score == pytest.approx((0.9 - 0.05) / 0.9, abs=1e-12)

    def test_two_identical_point_clusters_score_one(self):
        dist = np.array([
            [0.0, 0.0, 0.7, 0.7],
            [0.0, 0.0, 0.7, 0.7],
            [0.7, 0.7, 0.0, 0.0],
            [0.7, 0.7, 0.0, 0.0],
        ])
        assignment = agglomerate(dist, 0.1)
        assert silhouette(dist, assignment) == pytest.approx(1.0)

    def test_degenerate_k_returns_none(self):
        dist = FOUR_POINT
        one = ClusterAssignment(labels=np.zeros(4, dtype=int), threshold=1.0)
        all_singletons = ClusterAssignment(labels=np.arange(4), threshold=0.0)
        assert silhouette(dist, one) is None
        assert silhouette(dist, all_singletons) is None

    def test_rejects_tiny_input(self):
        with pytest.raises(ValueError):
            silhouette(np.zeros((1, 1)),
                       ClusterAssignment(labels=np.zeros(1, dtype=int),
                                         threshold=0.0))

    def test_matches_brute_force_on_random_matrices(self):
        rng = np.random.default_rng(42)
        checked = 0
        for _ in range(100):
            n = int(rng.integers(2, 31))
            dist = random_distance_matrix(rng, n)
            k = int(rng.integers(2, n + 1)) if n > 2 else 2
            labels = rng.integers(0, k, size=n)
            assignment = ClusterAssignment(labels=labels, threshold=0.0)
            expected = brute_silhouette(dist.tolist(), labels.tolist())
            got = silhouette(dist, assignment)
            if expected is None:
                assert got is None
            else:
                assert got == pytest.approx(expected, abs=1e-9)
                checked += 1
        assert checked > 50


class TestTuneThreshold:
    def test_picks_best_silhouette(self):
        result = tune_threshold(FOUR_POINT, [0.01, 0.2, 1.0])
        assert result.threshold == 0.2
        assert result.silhouette == pytest.approx((0.9 - 0.05) / 0.9)

    def test_tie_takes_smallest_threshold(self):
        # Both 0.2 and 0.3 produce the identical 2-cluster split.
        result = tune_threshold(FOUR_POINT, [0.2, 0.3])
        assert result.threshold == 0.2

    def test_all_degenerate_falls_back_with_warning(self, caplog):
        dist = np.array([[0.0, 0.9], [0.9, 0.0]])
        with caplog.at_level("WARNING"):
            result = tune_threshold(dist, [0.05, 0.1])
        assert result.threshold == 0.05
        assert result.silhouette is None
        assert any("degenerate" in r.message for r in caplog.records)

    def test_grid_must_be_sorted(self):
        with pytest.raises(ValueError):
            tune_threshold(FOUR_POINT, [0.5, 0.2])

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            tune_threshold(FOUR_POINT, [])

    def test_evaluations_recorded(self):
        result = tune_threshold(FOUR_POINT, [0.01, 0.2, 1.0])
        assert [t for t, _ in result.evaluations] == [0.01, 0.2, 1.0]

    def test_default_grid_shape(self):
        grid = default_grid()
        assert grid[0] == pytest.approx(0.05)
        assert grid[-1] == pytest.approx(0.95)
        assert len(grid) == 19


class TestRepresentatives:
    @staticmethod
    def _pick(articles):
        pair = ClusterAssignment(labels=np.zeros(len(articles), dtype=int),
                                 threshold=0.5)
        (cluster,) = select_representatives(pair, articles)
        return cluster

    def test_earliest_dated_wins(self):
        cluster = self._pick([
            Article(id="b", published_at=date(2024, 1, 2), body="x"),
            Article(id="a", published_at=date(2024, 1, 5), body="x"),
        ])
        assert cluster.representative == "b"

    def test_undated_loses_to_dated(self):
        cluster = self._pick([
            Article(id="a", published_at=None, body="xxxx"),
            Article(id="b", published_at=date(2024, 3, 1), body="x"),
        ])
        assert cluster.representative == "b"

    def test_longer_body_breaks_date_tie(self):
        cluster = self._pick([
            Article(id="a", published_at=date(2024, 1, 1), body="short"),
            Article(id="b", published_at=date(2024, 1, 1), body="much longer"),
        ])
        assert cluster.representative == "b"

    def test_id_breaks_full_tie(self):
        cluster = self._pick([
            Article(id="b", published_at=date(2024, 1, 1), body="same"),
            Article(id="a", published_at=date(2024, 1, 1), body="same"),
        ])
        assert cluster.representative == "a"

    def test_members_listed_sorted(self):
        cluster = self._pick([
            Article(id="z", body="same"),
            Article(id="a", body="same"),
        ])
        assert cluster.members == ["a", "z"]


class TestDedupArticles:
    def test_exact_duplicates_collapse(self, provider):
        articles = [
            Article(id="a1", published_at=date(2024, 1, 1),
                    title="Same story", body="The fund launched a bond etf."),
            Article(id="a2", published_at=date(2024, 1, 2),
                    title="Same story", body="The fund launched a bond etf!"),
            Article(id="a3", published_at=date(2024, 1, 3),
                    title="Different", body="Rain soaked the coastal town."),
        ]
        report = dedup_articles(articles, provider)
        assert report.representatives == ["a1", "a3"]
        members = {c.representative: c.members for c in report.clusters}
        assert members["a1"] == ["a1", "a2"]

    def test_single_article_short_circuits(self, provider):
        report = dedup_articles(
            [Article(id="only", body="One story.")], provider)
        assert report.representatives == ["only"]
        assert report.silhouette is None

    def test_empty_input(self, provider):
        report = dedup_articles([], provider)
        assert report.representatives == []

    def test_batching_keeps_scalar_stats_single_batch_only(self, provider):
        articles = [Article(id=f"a{i}", published_at=date(2024, 1, i + 1),
                            body=f"story number {i} about topic {i}")
                    for i in range(6)]
        split = dedup_articles(articles, provider, max_batch=3)
        assert split.threshold is None
        assert len(split.batches) == 2
        assert sum(b.size for b in split.batches) == 6

    def test_report_json_shape(self, provider):
        articles = [
            Article(id="a1", body="Alpha beta gamma."),
            Article(id="a2", body="Delta epsilon zeta."),
        ]
        obj = dedup_articles(articles, provider).to_json_obj()
        assert set(obj) == {"threshold", "silhouette", "n_input", "n_kept",
                            "batches", "clusters"}
        assert obj["n_input"] == 2
