"""Document-to-graph orchestration and segment scoring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..crf import TagSet
from ..encoder import tokenize
from ..ner import EntityMention
from ..relation import AnnotatedSentence, generate_candidates
from ..schema import RelationSchema, SchemaError
from .document import (
    CaseDocument,
    FactSentence,
    RuleSet,
    Segment,
    SEGMENT_TYPES,
    extract_structured,
    facts_text,
    preprocess_facts,
    segment_document,
)
from .graph import CaseGraph, FactTriple, fuse_knowledge

STEPS = {
    1: "segmentation",
    2: "structured extraction",
    3: "fact preprocessing",
    4: "entity recognition",
    5: "relation extraction",
    6: "knowledge fusion",
}


class PipelineError(RuntimeError):
    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step} ({STEPS[step]}): {cause}")
        self.step = step
        self.cause = cause


@dataclass
class SentenceMentions:
    sentence: FactSentence
    tokens: list[tuple[str, int, int]]
    mentions: list[EntityMention]  # text holds the surface from the sentence


def _surface(text, tokens, m: EntityMention) -> str:
    return text[tokens[m.start][1] : tokens[m.end - 1][2]]


def run_ner(sentences, model, tagset: TagSet | None = None) -> list[SentenceMentions]:
    """Tag each sentence and decode its mentions."""
    if tagset is not None and list(model.tagset.labels) != list(tagset.labels):
        raise ValueError(
            f"tagset mismatch: model was trained on {len(model.tagset.labels)} labels "
            f"{model.tagset.labels[:5]}..., pipeline expects {len(tagset.labels)} labels {tagset.labels[:5]}..."
        )
    out = []
    for s in sentences:
        toks = tokenize(s.text)
        ms = model.predict_mentions([t for t, _, _ in toks]) if toks else []
        ms = [EntityMention(m.start, m.end, m.type, _surface(s.text, toks, m)) for m in ms]
        out.append(SentenceMentions(s, toks, ms))
    return out


def run_relation_extraction(tagged: list[SentenceMentions], model, schema: RelationSchema) -> list[FactTriple]:
    """Classify every admissible mention pair; ``Other`` predictions are dropped."""
    if list(model.schema.labels) != list(schema.labels) or model.schema.admissible_pairs() != schema.admissible_pairs():
        raise SchemaError("relation model was trained on a different schema")
    sents = [AnnotatedSentence([t for t, _, _ in x.tokens], x.mentions) for x in tagged]
    cands = generate_candidates(sents, schema, mode="inference")
    if not cands:
        return []
    probs = model.predict_proba(cands)
    labels = schema.labels
    out = []
    for c, p in zip(cands, probs):
        k = int(np.argmax(p))
        if labels[k] == schema.other:
            continue
        i, j = c.pair
        a, b = tagged[c.sentence].mentions[i], tagged[c.sentence].mentions[j]
        out.append(
            FactTriple(a.text, a.type, labels[k], b.text, b.type, tagged[c.sentence].sentence.index, float(p[k]))
        )
    return out


@dataclass
class CaseModels:
    ner: object
    re: object


def build_case_graph(doc: CaseDocument, models: CaseModels, rules: RuleSet, schema: RelationSchema, trace=None) -> CaseGraph:
    """Run segmentation through fusion on one document.

    Failures are re-raised as PipelineError naming the step. ``trace``, if a
    dict, receives the intermediate results.
    """

    def step(n, fn, *args, **kw):
        try:
            return fn(*args, **kw)
        except Exception as exc:  # noqa: BLE001 - re-raised with its step label
            raise PipelineError(n, exc) from exc

    if not isinstance(doc, CaseDocument):
        doc = step(1, CaseDocument, "doc", doc)
    segments = step(1, segment_document, doc, rules)
    info = step(2, extract_structured, segments, rules)
    body, offset = step(3, facts_text, segments, rules)
    sentences = step(3, preprocess_facts, body, info, rules, offset)
    tagged = step(4, run_ner, sentences, models.ner, schema.tagset())
    triples = step(5, run_relation_extraction, tagged, models.re, schema)
    sources = {f"{doc.doc_id}:s{s.index}": [s.start, s.end] for s in sentences}
    for seg in segments:
        if seg.type == "party_info":
            sources[f"{doc.doc_id}:party_info"] = [seg.start, seg.end]
            break
    graph = step(6, fuse_knowledge, info, triples, rules, doc.doc_id, body, sources)
    if trace is not None:
        trace.update(segments=segments, info=info, sentences=sentences, mentions=tagged, triples=triples)
    return graph


def segment_eval(gold: list[list[Segment]], predicted: list[list[Segment]], overlap: float = 0.5) -> dict:
    """Per-type precision, recall and F1 over segments of aligned documents.

    ``exact`` counts a prediction as correct only with identical span and
    type; ``overlap`` accepts a same-type prediction whose intersection over
    union with an unmatched gold segment reaches ``overlap``.
    """
    if len(gold) != len(predicted):
        raise ValueError("gold and predicted document counts differ")
    counts = {
        mode: {t: [0, 0, 0] for t in SEGMENT_TYPES} for mode in ("exact", "overlap")
    }  # tp, n_pred, n_gold
    for g_doc, p_doc in zip(gold, predicted):
        for t in SEGMENT_TYPES:
            gs = [(s.start, s.end) for s in g_doc if s.type == t]
            ps = [(s.start, s.end) for s in p_doc if s.type == t]
            for mode in counts:
                c = counts[mode][t]
                c[1] += len(ps)
                c[2] += len(gs)
            counts["exact"][t][0] += len(set(gs) & set(ps))
            free = list(gs)
            for ps_ in ps:
                best, best_iou = None, 0.0
                for gi, gs_ in enumerate(free):
                    inter = max(0, min(ps_[1], gs_[1]) - max(ps_[0], gs_[0]))
                    union = max(ps_[1], gs_[1]) - min(ps_[0], gs_[0])
                    iou = inter / union if union else 0.0
                    if iou > best_iou:
                        best, best_iou = gi, iou
                if best is not None and best_iou >= overlap:
                    counts["overlap"][t][0] += 1
                    free.pop(best)
    out = {}
    for mode, per in counts.items():
        out[mode] = {}
        for t, (tp, n_pred, n_gold) in per.items():
            if n_pred == 0 and n_gold == 0:
                continue
            p = tp / n_pred if n_pred else 0.0
            r = tp / n_gold if n_gold else 0.0
            out[mode][t] = {"precision": p, "recall": r, "f1": 2 * p * r / (p + r) if p + r else 0.0}
    return out
