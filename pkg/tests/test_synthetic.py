import hashlib

import pytest

from casegraph.pipeline import (
    SyntheticCorpus,
    extract_structured,
    facts_text,
    fuse_knowledge,
    generate_synthetic_corpus,
    preprocess_facts,
    read_documents,
    segment_document,
)
from casegraph.schema import RelationSchema, SchemaError


def digest(corpus, tmp_path):
    corpus.save(tmp_path)
    return [hashlib.sha256((tmp_path / n).read_bytes()).hexdigest() for n in ("documents.jsonl", "gold.jsonl")]


def test_same_seed_same_bytes(schema, tmp_path):
    a = digest(generate_synthetic_corpus(1, 1, schema), tmp_path / "a")
    b = digest(generate_synthetic_corpus(1, 1, schema), tmp_path / "b")
    c = digest(generate_synthetic_corpus(2, 1, schema), tmp_path / "c")
    assert a == b and a != c


def test_gold_is_reproduced_by_the_rule_steps(small_corpus, rules):
    for doc, gold in zip(small_corpus.documents, small_corpus.gold):
        segs = segment_document(doc, rules)
        assert [(s.type, s.start, s.end) for s in segs] == [(s.type, s.start, s.end) for s in gold.segments]
        info = extract_structured(segs, rules)
        assert info == gold.info
        body, offset = facts_text(segs, rules)
        sents = preprocess_facts(body, info, rules, offset)
        assert [s.text for s in sents] == gold.sentences
        assert not any(s.ambiguous for s in sents)


def test_mentions_and_relations_are_consistent(small_corpus, schema):
    for gold in small_corpus.gold:
        assert len(gold.mentions) == len(gold.sentences) == len(gold.relations)
        for i, (ms, rels) in enumerate(zip(gold.mentions, gold.relations)):
            toks = gold.tokens(i)
            for m in ms:
                assert 0 <= m.start < m.end <= len(toks)
                assert m.type in schema.entity_types
            for (a, b), label in rels.items():
                assert label != schema.other
                assert schema.allows(label, ms[a].type, ms[b].type)
        for t in gold.triples:
            assert schema.allows(t.relation, t.head_type, t.tail_type)


def test_gold_graph_is_the_fusion_of_gold_triples(small_corpus, rules):
    gold = small_corpus.gold[0]
    facts = next(s for s in gold.segments if s.type == "facts").text
    again = fuse_knowledge(gold.info, gold.triples, rules, gold.doc_id, alias_text=facts)
    assert set(again.nodes) == set(gold.graph.nodes)
    assert set(again.edges) == set(gold.graph.edges)


def test_save_load_round_trip(small_corpus, tmp_path):
    small_corpus.save(tmp_path)
    again = SyntheticCorpus.load(tmp_path)
    assert len(again) == len(small_corpus)
    assert [g.to_json() for g in again.gold] == [g.to_json() for g in small_corpus.gold]
    assert [d.text for d in read_documents(tmp_path / "documents.jsonl")] == [d.text for d in small_corpus.documents]


def test_split_is_head_and_tail(small_corpus):
    tr, te = small_corpus.split(0.8)
    assert tr == list(range(48)) and te == list(range(48, 60))


def test_errors(schema):
    with pytest.raises(ValueError):
        generate_synthetic_corpus(0, 0, schema)
    narrow = RelationSchema(("NP", "MV"), {"Driving": (("NP", "MV"),)})
    with pytest.raises(SchemaError):
        generate_synthetic_corpus(0, 2, narrow)
    with pytest.raises(SchemaError):
        generate_synthetic_corpus(0, 2, schema, tagset=narrow.tagset())
