"""Co-occurrence graph construction, queries, and exports.

The graph is simple and undirected: one node per canonical entity, one
edge per co-occurring pair, with total and per-bucket counts plus the
matched filter keywords as edge properties. Exports (GraphML, DOT,
JSON, CSV heatmaps) emit nodes and edges in sorted order so identical
graphs serialize to identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping
from xml.sax.saxutils import escape, quoteattr

from .associate import (CoocRecord, TrendMatrix, WindowLevel, bucket_sort_key)
from .extract import EntityType, Mention, Registry

logger = logging.getLogger(__name__)


@dataclass
class Node:
    canonical_id: str
    label: str
    entity_type: EntityType
    doc_count: int = 0

    def to_json_obj(self) -> dict:
        return {"id": self.canonical_id, "label": self.label,
                "entity_type": self.entity_type.value,
                "doc_count": self.doc_count}


@dataclass
class Edge:
    a: str
    b: str
    weight: int
    per_bucket: dict[str, int]
    keywords: set[str] = field(default_factory=set)
    window: WindowLevel = WindowLevel.SENTENCE

    def to_json_obj(self) -> dict:
        return {"a": self.a, "b": self.b, "weight": self.weight,
                "per_bucket": {k: self.per_bucket[k]
                               for k in sorted(self.per_bucket,
                                               key=bucket_sort_key)},
                "keywords": sorted(self.keywords),
                "window": self.window.value}


@dataclass
class CoocGraph:
    nodes: list[Node]
    edges: list[Edge]
    meta: dict = field(default_factory=dict)

    def node(self, canonical_id: str) -> Node | None:
        for node in self.nodes:
            if node.canonical_id == canonical_id:
                return node
        return None

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def to_json_obj(self) -> dict:
        return {"meta": dict(sorted(self.meta.items())),
                "nodes": [n.to_json_obj() for n in self.nodes],
                "edges": [e.to_json_obj() for e in self.edges]}


def graph_from_json_obj(obj: dict) -> CoocGraph:
    nodes = [Node(canonical_id=n["id"], label=n["label"],
                  entity_type=EntityType(n["entity_type"]),
                  doc_count=n["doc_count"]) for n in obj["nodes"]]
    edges = [Edge(a=e["a"], b=e["b"], weight=e["weight"],
                  per_bucket=dict(e["per_bucket"]),
                  keywords=set(e["keywords"]),
                  window=WindowLevel(e["window"])) for e in obj["edges"]]
    return CoocGraph(nodes=nodes, edges=edges, meta=dict(obj.get("meta", {})))


@dataclass
class NodeInfo:
    label: str
    entity_type: EntityType
    doc_count: int


def node_catalog(mentions: Iterable[Mention],
                 registry: Registry | None = None) -> dict[str, NodeInfo]:
    """Display label, type, and document frequency per canonical id."""
    docs: dict[str, set[str]] = {}
    types: dict[str, set[EntityType]] = {}
    for mention in mentions:
        docs.setdefault(mention.canonical_id, set()).add(mention.article_id)
        types.setdefault(mention.canonical_id, set()).add(mention.entity_type)
    catalog: dict[str, NodeInfo] = {}
    for canonical_id in sorted(docs):
        label = canonical_id
        entity_type: EntityType | None = None
        if registry is not None:
            record = registry.record(canonical_id)
            if record is not None:
                label = record.canonical_name
                entity_type = record.entity_type
        if entity_type is None:
            seen = sorted(types[canonical_id], key=lambda t: t.value)
            if len(seen) > 1:
                logger.warning("entity %r tagged with several types %s; using %s",
                               canonical_id, [t.value for t in seen],
                               seen[0].value)
            entity_type = seen[0]
        catalog[canonical_id] = NodeInfo(label=label, entity_type=entity_type,
                                         doc_count=len(docs[canonical_id]))
    return catalog


def build_graph(records: list[CoocRecord],
                catalog: Mapping[str, NodeInfo] | None = None,
                min_count: int = 1,
                meta: dict | None = None) -> CoocGraph:
    """Aggregate pair records across buckets into a weighted graph.

    Pairs whose cross-bucket total falls below min_count are dropped, and
    nodes are created only for endpoints that survive.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    windows = {r.window for r in records}
    if len(windows) > 1:
        raise ValueError("records mix window levels: %s"
                         % sorted(w.value for w in windows))
    window = next(iter(windows)) if windows else WindowLevel.SENTENCE

    pairs: dict[tuple[str, str], Edge] = {}
    for record in records:
        edge = pairs.get((record.a, record.b))
        if edge is None:
            edge = Edge(a=record.a, b=record.b, weight=0, per_bucket={},
                        keywords=set(), window=window)
            pairs[(record.a, record.b)] = edge
        edge.weight += record.count
        edge.per_bucket[record.bucket] = (edge.per_bucket.get(record.bucket, 0)
                                          + record.count)
        edge.keywords |= record.keywords

    edges = [pairs[key] for key in sorted(pairs)
             if pairs[key].weight >= min_count]
    ids = sorted({e.a for e in edges} | {e.b for e in edges})
    nodes = []
    for canonical_id in ids:
        info = (catalog or {}).get(canonical_id)
        if info is None:
            info = NodeInfo(label=canonical_id, entity_type=EntityType.OTHER,
                            doc_count=0)
        nodes.append(Node(canonical_id=canonical_id, label=info.label,
                          entity_type=info.entity_type,
                          doc_count=info.doc_count))
    graph_meta = dict(meta or {})
    graph_meta.setdefault("window", window.value)
    graph_meta.setdefault("min_count", min_count)
    return CoocGraph(nodes=nodes, edges=edges, meta=graph_meta)


def neighbors(graph: CoocGraph, entity: str,
              entity_type: EntityType | None = None,
              bucket_range: tuple[str | None, str | None] | None = None,
              min_weight: int = 1) -> list[tuple[Node, int, list[str]]]:
    """Adjacent nodes with bucket-filtered weights, heaviest first."""
    by_id = {node.canonical_id: node for node in graph.nodes}
    if entity not in by_id:
        logger.warning("entity %r not present in graph", entity)
        return []
    out = []
    for edge in graph.edges:
        if entity == edge.a:
            partner = edge.b
        elif entity == edge.b:
            partner = edge.a
        else:
            continue
        node = by_id[partner]
        if entity_type is not None and node.entity_type != entity_type:
            continue
        if bucket_range is None:
            weight = edge.weight
        else:
            lo, hi = bucket_range
            weight = sum(count for bucket, count in edge.per_bucket.items()
                         if bucket != "unknown"
                         and (lo is None or bucket >= lo)
                         and (hi is None or bucket <= hi))
        if weight >= min_weight:
            out.append((node, weight, sorted(edge.keywords)))
    out.sort(key=lambda item: (-item[1], item[0].label, item[0].canonical_id))
    return out


class GraphFormat(str, Enum):
    GRAPHML = "GRAPHML"
    DOT = "DOT"
    JSON = "JSON"


_GRAPHML_HEADER = (
    '<?xml version="1.0" encoding="UTF-8"?>\n'
    '<graphml xmlns="http://graphml.graphdrawing.org/xmlns"'
    ' xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance"'
    ' xsi:schemaLocation="http://graphml.graphdrawing.org/xmlns'
    ' http://graphml.graphdrawing.org/xmlns/1.0/graphml.xsd">\n'
)


def _graphml(graph: CoocGraph) -> str:
    buckets = sorted({bucket for edge in graph.edges
                      for bucket in edge.per_bucket}, key=bucket_sort_key)
    keys: list[tuple[str, str, str, str]] = []  # (id, for, name, type)

    def declare(target: str, name: str, attr_type: str) -> str:
        key_id = "d%d" % len(keys)
        keys.append((key_id, target, name, attr_type))
        return key_id

    k_meta = {name: declare("graph", name, "string")
              for name in sorted(graph.meta)}
    k_label = declare("node", "label", "string")
    k_type = declare("node", "entity_type", "string")
    k_docs = declare("node", "doc_count", "int")
    k_weight = declare("edge", "weight", "int")
    k_keywords = declare("edge", "keywords", "string")
    k_buckets = {bucket: declare("edge", bucket, "int") for bucket in buckets}

    lines = [_GRAPHML_HEADER]
    for key_id, target, name, attr_type in keys:
        lines.append('  <key id=%s for=%s attr.name=%s attr.type=%s/>\n'
                     % (quoteattr(key_id), quoteattr(target), quoteattr(name),
                        quoteattr(attr_type)))
    lines.append('  <graph id="G" edgedefault="undirected">\n')
    for name in sorted(graph.meta):
        lines.append('    <data key=%s>%s</data>\n'
                     % (quoteattr(k_meta[name]), escape(str(graph.meta[name]))))
    for node in graph.nodes:
        lines.append('    <node id=%s>\n' % quoteattr(node.canonical_id))
        lines.append('      <data key=%s>%s</data>\n'
                     % (quoteattr(k_label), escape(node.label)))
        lines.append('      <data key=%s>%s</data>\n'
                     % (quoteattr(k_type), escape(node.entity_type.value)))
        lines.append('      <data key=%s>%d</data>\n'
                     % (quoteattr(k_docs), node.doc_count))
        lines.append('    </node>\n')
    for edge in graph.edges:
        lines.append('    <edge source=%s target=%s>\n'
                     % (quoteattr(edge.a), quoteattr(edge.b)))
        lines.append('      <data key=%s>%d</data>\n'
                     % (quoteattr(k_weight), edge.weight))
        lines.append('      <data key=%s>%s</data>\n'
                     % (quoteattr(k_keywords),
                        escape("|".join(sorted(edge.keywords)))))
        for bucket in sorted(edge.per_bucket, key=bucket_sort_key):
            lines.append('      <data key=%s>%d</data>\n'
                         % (quoteattr(k_buckets[bucket]),
                            edge.per_bucket[bucket]))
        lines.append('    </edge>\n')
    lines.append('  </graph>\n</graphml>\n')
    return "".join(lines)


def _dot_quote(value: str) -> str:
    return '"%s"' % value.replace("\\", "\\\\").replace('"', '\\"')


def _dot(graph: CoocGraph) -> str:
    lines = ["graph cooc {\n"]
    for node in graph.nodes:
        lines.append("  %s [label=%s entity_type=%s doc_count=%s];\n"
                     % (_dot_quote(node.canonical_id), _dot_quote(node.label),
                        _dot_quote(node.entity_type.value),
                        _dot_quote(str(node.doc_count))))
    for edge in graph.edges:
        lines.append("  %s -- %s [label=%s weight=%s keywords=%s];\n"
                     % (_dot_quote(edge.a), _dot_quote(edge.b),
                        _dot_quote(str(edge.weight)),
                        _dot_quote(str(edge.weight)),
                        _dot_quote("|".join(sorted(edge.keywords)))))
    lines.append("}\n")
    return "".join(lines)


def export_graph(graph: CoocGraph, fmt: GraphFormat | str) -> bytes:
    """Serialize a graph to GraphML, DOT, or JSON bytes (deterministic)."""
    fmt = GraphFormat(fmt.upper() if isinstance(fmt, str) else fmt)
    if fmt is GraphFormat.GRAPHML:
        return _graphml(graph).encode("utf-8")
    if fmt is GraphFormat.DOT:
        return _dot(graph).encode("utf-8")
    payload = json.dumps(graph.to_json_obj(), ensure_ascii=False, indent=2,
                         sort_keys=True)
    return (payload + "\n").encode("utf-8")


def export_heatmap(matrix: TrendMatrix) -> bytes:
    """Render a trend matrix as CSV: entity, one column per bucket, total."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerow(["entity"] + list(matrix.buckets) + ["total"])
    for i, entity in enumerate(matrix.entities):
        row = [entity] + [int(c) for c in matrix.cells[i]] + [matrix.totals[i]]
        writer.writerow(row)
    return out.getvalue().encode("utf-8")
