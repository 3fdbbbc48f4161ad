import json
from types import SimpleNamespace

import pytest

from casegraph.pipeline import CaseDocument, PipelineError, Segment, build_case_graph, segment_document, segment_eval


def test_provenance_points_at_source_sentences(tiny_models, small_corpus, rules, schema):
    doc = small_corpus.documents[-1]
    trace = {}
    graph = build_case_graph(doc, tiny_models, rules, schema, trace=trace)
    assert set(trace) == {"segments", "info", "sentences", "mentions", "triples"}
    texts = {f"{doc.doc_id}:s{s.index}": s for s in trace["sentences"]}
    for edge in graph.edges.values():
        assert edge.provenance
        for pid in edge.provenance:
            start, end = graph.sources[pid]
            if pid.endswith(":party_info"):
                assert doc.text[start:end].lstrip().startswith("Plaintiff")
            else:
                s = texts[pid]
                assert (start, end) == (s.start, s.end)
                assert doc.text[start:end].endswith(".")


def test_case_and_party_nodes_always_present(tiny_models, small_corpus, rules, schema):
    gold = small_corpus.gold[-1]
    graph = build_case_graph(small_corpus.documents[-1], tiny_models, rules, schema)
    parties = {n for n in gold.graph.nodes if gold.graph.nodes[n].attributes.get("role")}
    assert parties <= set(graph.nodes)
    assert any(n.startswith("CASE:") for n in graph.nodes)


def test_empty_facts_give_case_and_parties_only(tiny_models, rules, schema):
    text = "X Court Civil Judgment\nCase No. (2020) Su 1 No. 2\nPlaintiff: Gao Min, female.\nDefendant: Ye Tao, male.\n"
    graph = build_case_graph(CaseDocument("d", text), tiny_models, rules, schema)
    assert sorted(n.type for n in graph.nodes.values()) == ["CASE", "NP", "NP"]
    assert sorted(e.relation for e in graph.edges.values()) == ["Defendant", "Plaintiff"]


def test_empty_text_fails_at_segmentation(tiny_models, rules, schema):
    with pytest.raises(PipelineError) as err:
        build_case_graph("   ", tiny_models, rules, schema)
    assert err.value.step == 1 and "segmentation" in str(err.value)


def test_tagset_mismatch_fails_at_recognition(tiny_models, small_corpus, rules, schema):
    wrong = SimpleNamespace(ner=SimpleNamespace(tagset=SimpleNamespace(labels=["O", "B-NP", "I-NP"])), re=tiny_models.re)
    with pytest.raises(PipelineError) as err:
        build_case_graph(small_corpus.documents[0], wrong, rules, schema)
    assert err.value.step == 4 and "tagset mismatch" in str(err.value)


def test_build_is_deterministic(tiny_models, small_corpus, rules, schema):
    doc = small_corpus.documents[-2]
    a = build_case_graph(doc, tiny_models, rules, schema).to_json()
    b = build_case_graph(doc, tiny_models, rules, schema).to_json()
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_segment_eval_perfect_and_synthetic(small_corpus, rules):
    gold = [g.segments for g in small_corpus.gold]
    pred = [segment_document(d, rules) for d in small_corpus.documents]
    m = segment_eval(gold, pred)
    for mode in ("exact", "overlap"):
        assert set(m[mode]) >= {"title", "case_number", "court", "party_info", "facts"}
        assert all(v["f1"] == 1.0 for v in m[mode].values())


def test_segment_eval_shifted_facts():
    # gold facts [10, 40); prediction starts one sentence late at 20
    gold = [[Segment("title", 0, 10, ""), Segment("facts", 10, 40, "")]]
    pred = [[Segment("title", 0, 20, ""), Segment("facts", 20, 40, "")]]
    m = segment_eval(gold, pred)
    assert m["exact"]["facts"]["f1"] == 0.0
    # IoU 20/30 passes the default 0.5 threshold but not 0.7
    assert m["overlap"]["facts"]["f1"] == 1.0
    assert segment_eval(gold, pred, overlap=0.7)["overlap"]["facts"]["f1"] == 0.0
    # title IoU 10/20 = 0.5, accepted at the threshold
    assert m["overlap"]["title"]["recall"] == 1.0
    with pytest.raises(ValueError):
        segment_eval(gold, [])
