"""Case graphs: entity alignment, fusion and export."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .document import CaseInfo, RuleSet

log = logging.getLogger(__name__)

CASE_TYPE = "CASE"
ROLE_RELATIONS = {"plaintiff": "Plaintiff", "defendant": "Defendant", "other": "ThirdParty"}


@dataclass(frozen=True)
class FactTriple:
    """A relation between two typed surface strings found in one sentence."""

    head: str
    head_type: str
    relation: str
    tail: str
    tail_type: str
    sentence: int
    confidence: float = 1.0

    def to_json(self) -> dict:
        return {
            "head": self.head,
            "head_type": self.head_type,
            "relation": self.relation,
            "tail": self.tail,
            "tail_type": self.tail_type,
            "sentence": self.sentence,
            "confidence": self.confidence,
        }

    @classmethod
    def from_json(cls, d: dict) -> "FactTriple":
        return cls(**d)


@dataclass
class Node:
    id: str
    type: str
    name: str
    aliases: list[str] = field(default_factory=list)
    attributes: dict = field(default_factory=dict)

    @property
    def surfaces(self) -> set[str]:
        return {self.name, *self.aliases}

    def to_json(self) -> dict:
        return {"id": self.id, "type": self.type, "name": self.name, "aliases": self.aliases, "attributes": self.attributes}


@dataclass
class Edge:
    source: str
    target: str
    relation: str
    provenance: list[str] = field(default_factory=list)
    confidence: float = 1.0

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.source, self.relation, self.target)

    def to_json(self) -> dict:
        return {
            "source": self.source,
            "target": self.target,
            "relation": self.relation,
            "provenance": self.provenance,
            "confidence": self.confidence,
        }


@dataclass
class CaseGraph:
    nodes: dict[str, Node] = field(default_factory=dict)
    edges: dict[tuple[str, str, str], Edge] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    sources: dict[str, list[int]] = field(default_factory=dict)  # provenance id -> [start, end]

    def add_node(self, node: Node) -> Node:
        old = self.nodes.get(node.id)
        if old is None:
            self.nodes[node.id] = node
            return node
        old.aliases = sorted(old.surfaces.union(node.surfaces) - {old.name})
        for k, v in node.attributes.items():
            old.attributes.setdefault(k, v)
        return old

    def add_edge(self, source, relation, target, provenance=(), confidence=1.0) -> None:
        if source not in self.nodes or target not in self.nodes:
            raise KeyError(f"edge endpoint missing: {source!r} -> {target!r}")
        key = (source, relation, target)
        e = self.edges.get(key)
        if e is None:
            self.edges[key] = Edge(source, target, relation, sorted(set(provenance)), float(confidence))
        else:
            e.provenance = sorted(set(e.provenance).union(provenance))
            e.confidence = max(e.confidence, float(confidence))

    def to_json(self) -> dict:
        return {
            "nodes": [self.nodes[k].to_json() for k in sorted(self.nodes)],
            "edges": [self.edges[k].to_json() for k in sorted(self.edges)],
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_json(cls, d: dict) -> "CaseGraph":
        g = cls(warnings=list(d.get("warnings", [])))
        for n in d["nodes"]:
            g.nodes[n["id"]] = Node(n["id"], n["type"], n["name"], list(n["aliases"]), dict(n["attributes"]))
        for e in d["edges"]:
            g.edges[(e["source"], e["relation"], e["target"])] = Edge(
                e["source"], e["target"], e["relation"], list(e["provenance"]), float(e["confidence"])
            )
        return g


def _node_id(kind: str, name: str) -> str:
    return f"{kind}:{name}"


def find_aliases(text: str, rules: RuleSet) -> list[tuple[str, str]]:
    """(full, alias) pairs declared in text by the alias patterns."""
    out = []
    for rx in rules.alias_patterns:
        for m in rx.finditer(text):
            out.append((m.group("full").strip(), m.group("alias").strip()))
    return out


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller id becomes the root, so results do not depend on order
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def _canonical(members: list[Node], plate_rx) -> str:
    parties = sorted(n.name for n in members if "role" in n.attributes)
    if parties:
        return parties[0]
    surfaces = set().union(*(n.surfaces for n in members))
    plates = sorted({m.group() for s in surfaces for m in plate_rx.finditer(s)})
    if plates:
        return plates[0]
    return min(surfaces, key=lambda s: (-len(s), s))


def fuse_graph(graph: CaseGraph, rules: RuleSet) -> CaseGraph:
    """Merge nodes of one type that share a surface form or a plate token.

    Merging is transitive. Surfaces shared across different types are
    reported in ``warnings`` and left apart. Applying the function to its own
    output returns an equal graph.
    """
    plate_rx = rules.plate_pattern
    ids = sorted(k for k, n in graph.nodes.items() if n.type != CASE_TYPE)
    uf = _UnionFind(ids)
    by_key: dict[tuple[str, str], list[str]] = {}
    types_of_surface: dict[str, set[str]] = {}
    for nid in ids:
        n = graph.nodes[nid]
        for s in n.surfaces:
            by_key.setdefault((n.type, "s", s), []).append(nid)
            types_of_surface.setdefault(s, set()).add(n.type)
            for m in plate_rx.finditer(s):
                by_key.setdefault((n.type, "p", m.group()), []).append(nid)
    for group in by_key.values():
        for other in group[1:]:
            uf.union(group[0], other)
    warnings = list(graph.warnings)
    for s in sorted(types_of_surface):
        if len(types_of_surface[s]) > 1:
            msg = f"surface {s!r} used with types {sorted(types_of_surface[s])}; not merged"
            if msg not in warnings:
                warnings.append(msg)

    groups: dict[str, list[Node]] = {}
    for nid in ids:
        groups.setdefault(uf.find(nid), []).append(graph.nodes[nid])
    out = CaseGraph(warnings=warnings, sources=dict(graph.sources))
    remap = {}
    for members in groups.values():
        kind = members[0].type
        name = _canonical(members, plate_rx)
        attrs: dict = {}
        # structured party fields first, then the rest in id order
        for n in sorted(members, key=lambda n: ("role" not in n.attributes, n.id)):
            for k, v in n.attributes.items():
                if k in attrs and attrs[k] != v:
                    msg = f"{_node_id(kind, name)}: conflicting {k!r} values {attrs[k]!r} and {v!r}; kept the first"
                    if msg not in out.warnings:
                        out.warnings.append(msg)
                    continue
                attrs.setdefault(k, v)
        surfaces = set().union(*(n.surfaces for n in members))
        node = Node(_node_id(kind, name), kind, name, sorted(surfaces - {name}), attrs)
        out.add_node(node)
        for n in members:
            remap[n.id] = node.id
    for nid, n in graph.nodes.items():
        if n.type == CASE_TYPE:
            out.add_node(Node(n.id, n.type, n.name, list(n.aliases), dict(n.attributes)))
            remap[nid] = nid
    for key in sorted(graph.edges):
        e = graph.edges[key]
        out.add_edge(remap[e.source], e.relation, remap[e.target], e.provenance, e.confidence)
    return out


def fuse_knowledge(
    info: CaseInfo,
    triples,
    rules: RuleSet,
    doc_id: str = "doc",
    alias_text: str = "",
    sources: dict[str, list[int]] | None = None,
) -> CaseGraph:
    """Build the aligned case graph from structured info and fact triples.

    Mentions become nodes keyed by (type, surface); alias declarations in
    the party lines and in ``alias_text``, shared plate tokens and identical
    surfaces then merge them. Parties are attached to a case node through
    role edges.
    """
    g = CaseGraph(sources=dict(sources or {}))
    alias_pairs = sorted(set(find_aliases(alias_text, rules)) | {(full, a) for a, full in info.aliases().items()})
    linked: dict[str, set[str]] = {}
    for full, alias in alias_pairs:
        linked.setdefault(full, set()).add(alias)
        linked.setdefault(alias, set()).add(full)

    case_key = info.case_number or doc_id
    case = g.add_node(
        Node(
            _node_id(CASE_TYPE, case_key),
            CASE_TYPE,
            case_key,
            [],
            {k: v for k, v in (("doc_id", doc_id), ("title", info.title), ("case_number", info.case_number), ("court", info.court)) if v},
        )
    )
    party_prov = f"{doc_id}:party_info"
    for p in info.parties:
        attrs = {"role": p.role}
        if p.agents:
            attrs["agents"] = [dict(a) for a in p.agents]
        node = g.add_node(Node(_node_id(p.kind, p.name), p.kind, p.name, sorted(set(p.aliases) | linked.get(p.name, set())), attrs))
        g.add_edge(case.id, ROLE_RELATIONS.get(p.role, "ThirdParty"), node.id, [party_prov])

    def mention(kind, surface):
        return g.add_node(Node(_node_id(kind, surface), kind, surface, sorted(linked.get(surface, set()) - {surface})))

    for t in triples:
        h = mention(t.head_type, t.head)
        tl = mention(t.tail_type, t.tail)
        g.add_edge(h.id, t.relation, tl.id, [f"{doc_id}:s{t.sentence}"], t.confidence)
    return fuse_graph(g, rules)


def graph_f1(gold: CaseGraph, predicted: CaseGraph) -> dict:
    """Exact-match precision, recall and F1 over node ids and edge keys."""

    def prf(g, p):
        tp = len(g & p)
        P = tp / len(p) if p else (1.0 if not g else 0.0)
        R = tp / len(g) if g else (1.0 if not p else 0.0)
        F = 2 * P * R / (P + R) if P + R else 0.0
        return {"precision": P, "recall": R, "f1": F, "tp": tp, "n_gold": len(g), "n_pred": len(p)}

    gn, pn = set(gold.nodes), set(predicted.nodes)
    ge, pe = set(gold.edges), set(predicted.edges)
    return {
        "nodes": prf(gn, pn),
        "edges": prf(ge, pe),
        "overall": prf({("n", x) for x in gn} | {("e", x) for x in ge}, {("n", x) for x in pn} | {("e", x) for x in pe}),
    }


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def export_graph(graph: CaseGraph, directory, fmt: str = "jsonl") -> list[Path]:
    """Write nodes and edges sorted by id, byte-identical for equal graphs.

    ``jsonl`` writes nodes.jsonl and edges.jsonl. ``bulk_csv`` writes
    nodes.csv and edges.csv with graph-database bulk-import headers; list
    fields are joined by ';'.
    """
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {directory}: {exc}") from exc
    nodes = [graph.nodes[k] for k in sorted(graph.nodes)]
    edges = [graph.edges[k] for k in sorted(graph.edges)]
    if fmt == "jsonl":
        paths = [directory / "nodes.jsonl", directory / "edges.jsonl"]
        for path, items in zip(paths, (nodes, edges)):
            with open(path, "w", encoding="utf-8", newline="") as fh:
                for x in items:
                    fh.write(_dumps(x.to_json()) + "\n")
        return paths
    if fmt == "bulk_csv":
        paths = [directory / "nodes.csv", directory / "edges.csv"]
        _write_csv(
            paths[0],
            ["id:ID", "type:LABEL", "name", "aliases:string[]", "attributes"],
            [[n.id, n.type, n.name, ";".join(n.aliases), _dumps(n.attributes)] for n in nodes],
        )
        _write_csv(
            paths[1],
            [":START_ID", ":END_ID", ":TYPE", "provenance:string[]", "confidence:float"],
            [[e.source, e.target, e.relation, ";".join(e.provenance), f"{e.confidence:.6f}"] for e in edges],
        )
        return paths
    raise ValueError(f"unknown export format {fmt!r}")
