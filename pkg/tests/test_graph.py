"""Graph construction, neighbor queries, and export formats."""

from __future__ import annotations

import csv
import io
import json

import networkx as nx
import pytest

from assocmine.associate import CoocRecord, TrendMatrix, WindowLevel
from assocmine.extract import EntityType, ExtractorId, Mention
from assocmine.graph import (
    CoocGraph,
    Edge,
    GraphFormat,
    Node,
    NodeInfo,
    build_graph,
    export_graph,
    export_heatmap,
    graph_from_json_obj,
    neighbors,
    node_catalog,
)


def mk_mention(entity, article_id, entity_type=EntityType.ORG):
    return Mention(article_id=article_id, start=0, end=1, surface=entity,
                   canonical_id=entity, entity_type=entity_type,
                   extractor=ExtractorId.GAZETTEER, confidence=1.0,
                   sentence_index=0, paragraph_index=0)


def mk_record(a, b, bucket="2023", count=1, keywords=(),
              window=WindowLevel.SENTENCE):
    return CoocRecord(a=a, b=b, window=window, bucket=bucket, count=count,
                      keywords=set(keywords))


def sample_graph():
    records = [
        mk_record("etf", "fidelity", "2022", 2, {"launch"}),
        mk_record("etf", "fidelity", "2023", 3, {"debut"}),
        mk_record("etf", "fidelity", "unknown", 1),
        mk_record("fidelity", "fund", "2023", 1),
        mk_record("etf", "sec", "2023", 4),
    ]
    catalog = {
        "fidelity": NodeInfo(label="Fidelity", entity_type=EntityType.ORG,
                             doc_count=6),
        "etf": NodeInfo(label="spot etf", entity_type=EntityType.PRODUCT,
                        doc_count=5),
        "sec": NodeInfo(label="SEC", entity_type=EntityType.ORG, doc_count=3),
        "fund": NodeInfo(label="bond fund", entity_type=EntityType.PRODUCT,
                         doc_count=1),
    }
    return build_graph(records, catalog, meta={"bucketing": "YEAR"})


class TestNodeCatalog:
    def test_doc_count_is_distinct_articles(self):
        mentions = [mk_mention("x", "a1"), mk_mention("x", "a1"),
                    mk_mention("x", "a2"), mk_mention("y", "a1")]
        catalog = node_catalog(mentions)
        assert catalog["x"].doc_count == 2
        assert catalog["y"].doc_count == 1

    def test_registry_supplies_label_and_type(self, org_registry):
        mentions = [mk_mention("fidelity", "a1", EntityType.OTHER)]
        catalog = node_catalog(mentions, org_registry)
        assert catalog["fidelity"].label == "Fidelity"
        assert catalog["fidelity"].entity_type is EntityType.ORG

    def test_unregistered_id_falls_back_to_mention_data(self, org_registry):
        mentions = [mk_mention("bitcoin fund", "a1", EntityType.PRODUCT)]
        catalog = node_catalog(mentions, org_registry)
        assert catalog["bitcoin fund"].label == "bitcoin fund"
        assert catalog["bitcoin fund"].entity_type is EntityType.PRODUCT

    def test_conflicting_mention_types_warn_and_pick_first(self, caplog):
        mentions = [mk_mention("x", "a1", EntityType.PRODUCT),
                    mk_mention("x", "a2", EntityType.ORG)]
        with caplog.at_level("WARNING", logger="assocmine.graph"):
            catalog = node_catalog(mentions)
        # ORG sorts before PRODUCT by type value
        assert catalog["x"].entity_type is EntityType.ORG
        assert any("several types" in m for m in caplog.messages)


class TestBuildGraph:
    def test_edges_aggregate_across_buckets(self):
        graph = sample_graph()
        edge = next(e for e in graph.edges
                    if (e.a, e.b) == ("etf", "fidelity"))
        assert edge.weight == 6
        assert edge.per_bucket == {"2022": 2, "2023": 3, "unknown": 1}
        assert edge.keywords == {"launch", "debut"}

    def test_nodes_only_for_surviving_endpoints(self):
        records = [mk_record("a", "b", count=5), mk_record("c", "d", count=1)]
        graph = build_graph(records, min_count=2)
        assert [n.canonical_id for n in graph.nodes] == ["a", "b"]
        assert graph.n_edges == 1

    def test_min_count_applies_to_cross_bucket_total(self):
        records = [mk_record("a", "b", "2022", 1),
                   mk_record("a", "b", "2023", 1)]
        graph = build_graph(records, min_count=2)
        assert graph.n_edges == 1

    def test_min_count_below_one_rejected(self):
        with pytest.raises(ValueError):
            build_graph([], min_count=0)

    def test_mixed_window_levels_rejected(self):
        records = [mk_record("a", "b"),
                   mk_record("a", "b", window=WindowLevel.ARTICLE)]
        with pytest.raises(ValueError, match="mix window levels"):
            build_graph(records)

    def test_empty_records(self):
        graph = build_graph([])
        assert graph.n_nodes == 0 and graph.n_edges == 0
        assert graph.meta == {"window": "SENTENCE", "min_count": 1}

    def test_meta_passthrough_with_defaults(self):
        graph = sample_graph()
        assert graph.meta["bucketing"] == "YEAR"
        assert graph.meta["window"] == "SENTENCE"
        assert graph.meta["min_count"] == 1

    def test_missing_catalog_entry_gets_fallback_node(self):
        graph = build_graph([mk_record("a", "b")], catalog={})
        node = graph.node("a")
        assert node.label == "a"
        assert node.entity_type is EntityType.OTHER
        assert node.doc_count == 0

    def test_nodes_and_edges_sorted(self):
        graph = sample_graph()
        ids = [n.canonical_id for n in graph.nodes]
        assert ids == sorted(ids)
        pairs = [(e.a, e.b) for e in graph.edges]
        assert pairs == sorted(pairs)


class TestNeighbors:
    def test_ranked_by_weight(self):
        graph = sample_graph()
        result = neighbors(graph, "etf")
        assert [(node.canonical_id, weight) for node, weight, _ in result] == \
            [("fidelity", 6), ("sec", 4)]
        assert result[0][2] == ["debut", "launch"]

    def test_min_weight_filter(self):
        graph = sample_graph()
        result = neighbors(graph, "etf", min_weight=5)
        assert [node.canonical_id for node, _, _ in result] == ["fidelity"]

    def test_bucket_range_recomputes_weight_excluding_unknown(self):
        graph = sample_graph()
        result = neighbors(graph, "etf", bucket_range=(None, None))
        weights = {node.canonical_id: w for node, w, _ in result}
        assert weights["fidelity"] == 5  # unknown-bucket count dropped
        result = neighbors(graph, "etf", bucket_range=("2023", "2023"))
        weights = {node.canonical_id: w for node, w, _ in result}
        assert weights["fidelity"] == 3

    def test_entity_type_filter(self):
        graph = sample_graph()
        result = neighbors(graph, "fidelity",
                           entity_type=EntityType.PRODUCT)
        assert sorted(node.canonical_id for node, _, _ in result) == \
            ["etf", "fund"]

    def test_absent_entity_warns_and_returns_empty(self, caplog):
        graph = sample_graph()
        with caplog.at_level("WARNING", logger="assocmine.graph"):
            assert neighbors(graph, "nobody") == []
        assert any("nobody" in m for m in caplog.messages)

    def test_weight_tie_breaks_by_label(self):
        records = [mk_record("hub", "z-first", count=2),
                   mk_record("a-last", "hub", count=2)]
        catalog = {
            "hub": NodeInfo("hub", EntityType.ORG, 1),
            "z-first": NodeInfo("Alpha", EntityType.ORG, 1),
            "a-last": NodeInfo("Beta", EntityType.ORG, 1),
        }
        result = neighbors(build_graph(records, catalog), "hub")
        assert [node.label for node, _, _ in result] == ["Alpha", "Beta"]


class TestJsonExport:
    def test_round_trip_preserves_graph(self):
        graph = sample_graph()
        obj = json.loads(export_graph(graph, "json").decode("utf-8"))
        assert graph_from_json_obj(obj) == graph

    def test_payload_shape(self):
        obj = json.loads(export_graph(sample_graph(), GraphFormat.JSON))
        assert set(obj) == {"meta", "nodes", "edges"}
        assert obj["nodes"][0] == {"id": "etf", "label": "spot etf",
                                   "entity_type": "PRODUCT", "doc_count": 5}
        edge = obj["edges"][0]
        assert list(edge["per_bucket"]) == ["2022", "2023", "unknown"]

    def test_export_is_deterministic(self):
        assert export_graph(sample_graph(), "json") == \
            export_graph(sample_graph(), "json")

    def test_unknown_format_rejected(self):
        with pytest.raises(ValueError):
            export_graph(sample_graph(), "xml")


class TestGraphmlExport:
    def read(self, graph):
        return nx.read_graphml(io.BytesIO(export_graph(graph, "graphml")))

    def test_networkx_parses_nodes_and_edges(self):
        graph = sample_graph()
        parsed = self.read(graph)
        assert not parsed.is_directed()
        assert set(parsed.nodes) == {"etf", "fidelity", "fund", "sec"}
        assert parsed.nodes["fidelity"]["label"] == "Fidelity"
        assert parsed.nodes["fidelity"]["entity_type"] == "ORG"
        assert parsed.nodes["fidelity"]["doc_count"] == 6
        edge = parsed.edges["etf", "fidelity"]
        assert edge["weight"] == 6
        assert edge["keywords"] == "debut|launch"
        assert edge["2022"] == 2 and edge["2023"] == 3 and edge["unknown"] == 1

    def test_graph_level_metadata(self):
        parsed = self.read(sample_graph())
        assert parsed.graph["bucketing"] == "YEAR"
        assert parsed.graph["window"] == "SENTENCE"

    def test_special_characters_survive(self):
        records = [mk_record('a&b "quoted"', "x<y>", count=1,
                             keywords={"<launch & co>"})]
        catalog = {'a&b "quoted"': NodeInfo('A&B "Q"', EntityType.OTHER, 1)}
        parsed = self.read(build_graph(records, catalog))
        assert set(parsed.nodes) == {'a&b "quoted"', "x<y>"}
        assert parsed.nodes['a&b "quoted"']["label"] == 'A&B "Q"'
        assert parsed.edges['a&b "quoted"', "x<y>"]["keywords"] == \
            "<launch & co>"


class TestDotExport:
    def test_structure(self):
        text = export_graph(sample_graph(), "dot").decode("utf-8")
        assert text.startswith("graph cooc {\n")
        assert text.endswith("}\n")
        assert '"etf" -- "fidelity" [label="6" weight="6"' in text
        assert '"fidelity" [label="Fidelity" entity_type="ORG"' in text

    def test_quotes_and_backslashes_escaped(self):
        records = [mk_record('say "hi"', "with\\slash")]
        text = export_graph(build_graph(records), "dot").decode("utf-8")
        assert '"say \\"hi\\""' in text
        assert '"with\\\\slash"' in text


class TestHeatmapExport:
    def test_header_rows_and_totals(self):
        matrix = TrendMatrix.from_counts({
            ("fidelity", "2022"): 2, ("fidelity", "2023"): 3,
            ("sec", "2023"): 1})
        rows = list(csv.reader(
            io.StringIO(export_heatmap(matrix).decode("utf-8"))))
        assert rows[0] == ["entity", "2022", "2023", "total"]
        assert rows[1] == ["fidelity", "2", "3", "5"]
        assert rows[2] == ["sec", "0", "1", "1"]

    def test_labels_with_commas_and_quotes_round_trip(self):
        matrix = TrendMatrix.from_counts({
            ('funds, "special"', "2023"): 2,
            ("plain", "2023"): 1})
        payload = export_heatmap(matrix).decode("utf-8")
        rows = list(csv.reader(io.StringIO(payload)))
        assert rows[1][0] == 'funds, "special"'
        assert rows[2][0] == "plain"

    def test_empty_matrix_has_header_only(self):
        payload = export_heatmap(TrendMatrix.from_counts({}))
        assert payload == b"entity,total\n"

    def test_lines_end_with_newline_only(self):
        matrix = TrendMatrix.from_counts({("a", "2023"): 1})
        assert b"\r" not in export_heatmap(matrix)
