"""Coherence, cluster validity indices, projection export, and gain reports."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import davies_bouldin_score, silhouette_score

from embrank.analysis import (
    CoherenceConfig,
    EntityCluster,
    clusters_from_qrels,
    coherence,
    cosine,
    davies_bouldin,
    export_projection,
    load_projection,
    per_query_coherence,
    query_gain_report,
    silhouette,
    write_coherence_rows,
    write_gain_report,
)
from embrank.embedding import EmbeddingTable
from embrank.evaluation import Qrels
from embrank.reranking import Ranking
from embrank.util import ValidationError


def cluster(label, *vectors):
    return EntityCluster(label, [(f"{label}_{i}", np.asarray(v, float)) for i, v in enumerate(vectors)])


class TestCosine:
    def test_self_similarity(self):
        assert cosine([3.0, -4.0], [3.0, -4.0]) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        assert cosine([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_forty_five_degrees(self):
        assert cosine([1.0, 1.0], [1.0, 0.0]) == pytest.approx(1 / math.sqrt(2), abs=1e-9)

    def test_zero_norm_convention(self):
        assert cosine([0.0, 0.0], [1.0, 2.0]) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            cosine([1.0, 0.0], [1.0, 0.0, 0.0])


class TestCoherence:
    def test_identical_vectors(self):
        # axis-aligned members make the cosine exactly 1.0
        c = cluster("q", [2.0, 0.0], [2.0, 0.0], [2.0, 0.0])
        assert coherence(c, 1.0) == 1.0

    def test_orthogonal_members(self):
        c = cluster("q", [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0])
        assert coherence(c, 0.8) == 0.0

    def test_one_of_three_pairs(self):
        c = cluster("q", [1.0, 0.0], [1.0, 0.0], [0.0, 1.0])
        assert coherence(c, 0.8) == pytest.approx(1 / 3, abs=1e-12)

    def test_single_member_rejected(self):
        with pytest.raises(ValidationError):
            coherence(cluster("q", [1.0, 0.0]), 0.5)

    @given(seed=st.integers(0, 2000))
    @settings(max_examples=40, deadline=None)
    def test_matches_pair_enumeration_oracle(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(2, 51))
        vectors = rng.normal(0, 1, (m, 3))
        c = EntityCluster("q", [(f"e{i}", vectors[i]) for i in range(m)])
        tau = float(rng.uniform(-1, 1))
        hits = sum(
            1
            for i in range(m)
            for j in range(i + 1, m)
            if cosine(vectors[i], vectors[j]) >= tau
        )
        assert coherence(c, tau) == hits / (m * (m - 1) / 2)

    @given(seed=st.integers(0, 2000))
    @settings(max_examples=30, deadline=None)
    def test_monotone_nonincreasing_in_tau(self, seed):
        rng = np.random.default_rng(seed)
        vectors = rng.normal(0, 1, (int(rng.integers(2, 20)), 4))
        c = EntityCluster("q", [(f"e{i}", v) for i, v in enumerate(vectors)])
        taus = sorted(rng.uniform(-1, 1, 5))
        values = [coherence(c, t) for t in taus]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_invariant_to_positive_rescaling(self):
        base = cluster("q", [1.0, 0.2], [0.9, 0.3], [0.1, 1.0])
        scaled = cluster("q", [3.0, 0.6], [0.09, 0.03], [0.7, 7.0])
        for tau in (-0.5, 0.0, 0.5, 0.9):
            assert coherence(base, tau) == coherence(scaled, tau)


class TestPerQueryCoherence:
    def table(self, n=12):
        vecs = {f"E{i}": np.array([2.0, 0.0]) for i in range(n)}
        vecs.update({f"F{i}": np.array([0.0, 1.0]) for i in range(3)})
        return EmbeddingTable.from_vectors(entities=vecs)

    def test_no_query_passes_size_filter(self):
        qrels = Qrels({("q1", f"E{i}"): 1 for i in range(5)})
        rows = per_query_coherence(qrels, self.table(), CoherenceConfig(tau=0.9))
        assert rows == []

    def test_identical_vector_cluster_scores_one(self):
        qrels = Qrels({("q1", f"E{i}"): 1 for i in range(12)})
        rows = per_query_coherence(qrels, self.table(), CoherenceConfig(tau=0.9))
        assert rows == [("q1", 12, 1.0)]

    def test_sorted_by_cluster_size(self):
        judgments = {("small", f"E{i}"): 1 for i in range(11)}
        judgments.update({("big", f"E{i}"): 2 for i in range(12)})
        rows = per_query_coherence(Qrels(judgments), self.table(), CoherenceConfig(tau=0.9))
        assert [(r[0], r[1]) for r in rows] == [("small", 11), ("big", 12)]

    def test_grade_zero_and_missing_embeddings_excluded(self):
        judgments = {("q1", f"E{i}"): 1 for i in range(11)}
        judgments[("q1", "E11")] = 0  # irrelevant
        judgments[("q1", "GHOST")] = 2  # no embedding
        rows = per_query_coherence(Qrels(judgments), self.table(), CoherenceConfig(tau=0.9))
        assert rows == [("q1", 11, 1.0)]

    def test_row_file_format(self, tmp_path):
        path = tmp_path / "coherence.tsv"
        write_coherence_rows([("q1", 12, 0.5)], path)
        assert path.read_text() == "query_id\tsize\tcoherence\nq1\t12\t0.5\n"

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            CoherenceConfig(tau=1.5)
        with pytest.raises(ValidationError):
            CoherenceConfig(min_cluster_size=1)


class TestClustersFromQrels:
    def test_groups_by_query_and_skips_unembedded(self):
        table = EmbeddingTable.from_vectors(
            entities={"A": np.array([1.0, 0.0]), "B": np.array([0.0, 1.0])}
        )
        qrels = Qrels({("q1", "A"): 1, ("q1", "NOPE"): 2, ("q2", "B"): 1, ("q3", "NOPE"): 1})
        clusters = clusters_from_qrels(qrels, table)
        assert [(c.label, [e for e, _ in c.members]) for c in clusters] == [
            ("q1", ["A"]),
            ("q2", ["B"]),
        ]

    def test_duplicate_member_rejected(self):
        with pytest.raises(ValidationError):
            EntityCluster("q", [("A", np.zeros(2)), ("A", np.ones(2))])

    def test_empty_cluster_rejected(self):
        with pytest.raises(ValidationError):
            EntityCluster("q", [])


class TestDaviesBouldin:
    def test_two_singletons(self):
        assert davies_bouldin([cluster("a", [0.0, 0.0]), cluster("b", [5.0, 0.0])]) == 0.0

    def test_hand_computed_fixture(self):
        a = cluster("a", [0.0, 0.0], [0.0, 2.0])
        b = cluster("b", [10.0, 0.0], [10.0, 2.0])
        assert davies_bouldin([a, b]) == pytest.approx(0.2, abs=1e-12)

    def test_member_duplication_invariance(self):
        a = cluster("a", [0.0, 0.0], [0.0, 2.0])
        b = cluster("b", [10.0, 0.0], [10.0, 2.0])
        a2 = cluster("a", [0.0, 0.0], [0.0, 2.0], [0.0, 0.0], [0.0, 2.0])
        b2 = cluster("b", [10.0, 0.0], [10.0, 2.0], [10.0, 0.0], [10.0, 2.0])
        assert davies_bouldin([a2, b2]) == pytest.approx(davies_bouldin([a, b]), abs=1e-12)

    def test_coincident_centroids_rejected_with_names(self):
        a = cluster("left", [1.0, 1.0])
        b = cluster("right", [1.0, 1.0])
        with pytest.raises(ValidationError, match="left.*right"):
            davies_bouldin([a, b])

    def test_requires_two_clusters(self):
        with pytest.raises(ValidationError):
            davies_bouldin([cluster("a", [0.0, 0.0])])

    @given(seed=st.integers(0, 1000))
    @settings(max_examples=20, deadline=None)
    def test_matches_sklearn_on_random_data(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(2, 5))
        clusters, points, labels = [], [], []
        for i in range(k):
            center = rng.normal(0, 10, 3)
            members = center + rng.normal(0, 1, (int(rng.integers(2, 8)), 3))
            clusters.append(EntityCluster(f"c{i}", [(f"c{i}_{j}", m) for j, m in enumerate(members)]))
            points.extend(members)
            labels.extend([i] * len(members))
        ours = davies_bouldin(clusters)
        reference = davies_bouldin_score(np.array(points), labels)
        assert ours == pytest.approx(reference, rel=1e-9)

    def test_translation_and_scale_invariance(self):
        a = cluster("a", [0.0, 0.0], [0.0, 2.0])
        b = cluster("b", [10.0, 0.0], [10.0, 2.0])
        shifted = [
            cluster("a", [100.0, 50.0], [100.0, 52.0]),
            cluster("b", [110.0, 50.0], [110.0, 52.0]),
        ]
        scaled = [
            cluster("a", [0.0, 0.0], [0.0, 6.0]),
            cluster("b", [30.0, 0.0], [30.0, 6.0]),
        ]
        reference = davies_bouldin([a, b])
        assert davies_bouldin(shifted) == pytest.approx(reference, abs=1e-12)
        assert davies_bouldin(scaled) == pytest.approx(reference, abs=1e-12)


class TestSilhouette:
    def test_two_singletons_score_zero(self):
        assert silhouette([cluster("a", [0.0, 0.0]), cluster("b", [5.0, 0.0])]) == 0.0

    def test_hand_computed_fixture(self):
        a = cluster("a", [0.0, 0.0], [0.0, 1.0])
        b = cluster("b", [10.0, 0.0], [10.0, 1.0])
        value = silhouette([a, b])
        expected = ((10 + math.sqrt(101)) / 2 - 1) / ((10 + math.sqrt(101)) / 2)
        assert value == pytest.approx(expected, abs=1e-9)
        assert value == pytest.approx(0.9002, abs=1e-4)

    def test_mislabeling_decreases_index(self):
        good = [
            cluster("a", [0.0, 0.0], [0.0, 1.0]),
            cluster("b", [10.0, 0.0], [10.0, 1.0]),
        ]
        # move one tight pair under the other label
        bad = [
            cluster("a", [0.0, 0.0]),
            cluster("b", [10.0, 0.0], [10.0, 1.0], [0.0, 1.0]),
        ]
        assert silhouette(bad) < silhouette(good)

    @given(seed=st.integers(0, 1000))
    @settings(max_examples=20, deadline=None)
    def test_matches_sklearn_on_random_data(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(2, 5))
        clusters, points, labels = [], [], []
        for i in range(k):
            center = rng.normal(0, 10, 3)
            members = center + rng.normal(0, 1, (int(rng.integers(2, 8)), 3))
            clusters.append(EntityCluster(f"c{i}", [(f"c{i}_{j}", m) for j, m in enumerate(members)]))
            points.extend(members)
            labels.extend([i] * len(members))
        ours = silhouette(clusters)
        reference = silhouette_score(np.array(points), labels)
        assert ours == pytest.approx(float(reference), rel=1e-9)

    def test_requires_two_clusters(self):
        with pytest.raises(ValidationError):
            silhouette([cluster("a", [0.0, 0.0], [1.0, 0.0])])


class TestProjectionExport:
    def test_empty_list_writes_header_only(self, tmp_path):
        path = tmp_path / "proj.tsv"
        export_projection([], path)
        assert path.read_text() == "query_id\tentity_id\tvector\n"

    def test_two_member_cluster_writes_two_rows(self, tmp_path):
        path = tmp_path / "proj.tsv"
        export_projection([cluster("q1", [1.0, 2.0], [3.0, 4.0])], path)
        lines = path.read_text().splitlines()
        assert len(lines) == 3
        assert lines[1] == "q1\tq1_0\t1 2"

    def test_round_trip_at_rendered_precision(self, tmp_path):
        original = [
            cluster("q1", [0.123456789, -2.5e-7], [1.0, 2.0]),
            cluster("q2", [3.14159265, 1e6]),
        ]
        path = tmp_path / "proj.tsv"
        export_projection(original, path)
        loaded = load_projection(path)
        again = tmp_path / "proj2.tsv"
        export_projection(loaded, again)
        assert path.read_bytes() == again.read_bytes()


class TestQueryGainReport:
    def runs(self):
        qrels = Qrels({("q1", "A"): 1, ("q1", "B"): 0, ("q2", "C"): 1, ("q2", "D"): 0})
        good = {
            "q1": Ranking.from_scores("q1", [("A", 2.0), ("B", 1.0)]),
            "q2": Ranking.from_scores("q2", [("C", 2.0), ("D", 1.0)]),
        }
        bad = {
            "q1": Ranking.from_scores("q1", [("B", 2.0), ("A", 1.0)]),
            "q2": Ranking.from_scores("q2", [("C", 2.0), ("D", 1.0)]),
        }
        return qrels, good, bad

    def test_identical_runs_all_zero(self):
        qrels, good, _ = self.runs()
        rows = query_gain_report(good, good, qrels, 10)
        assert all(delta == 0.0 for _, delta in rows)

    def test_fixed_query_heads_the_list(self):
        qrels = Qrels({("q1", "A"): 1, ("q2", "B"): 1})
        before = {"q1": Ranking.from_scores("q1", [("X", 1.0)]), "q2": Ranking.from_scores("q2", [("B", 1.0)])}
        after = {"q1": Ranking.from_scores("q1", [("A", 1.0)]), "q2": Ranking.from_scores("q2", [("B", 1.0)])}
        rows = query_gain_report(before, after, qrels, 10)
        assert rows[0] == ("q1", pytest.approx(1.0))

    def test_antisymmetric_under_run_swap(self):
        qrels, good, bad = self.runs()
        forward = dict(query_gain_report(bad, good, qrels, 10))
        backward = dict(query_gain_report(good, bad, qrels, 10))
        for qid in forward:
            assert forward[qid] == pytest.approx(-backward[qid], abs=1e-12)

    def test_file_format(self, tmp_path):
        qrels, good, bad = self.runs()
        rows = query_gain_report(bad, good, qrels, 10)
        path = tmp_path / "gains.tsv"
        write_gain_report(rows, 10, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "qid\tdelta@10"
        assert lines[1].startswith("q1\t0.")
