"""From judgment text to an exported case graph.

Generates a small synthetic corpus, trains the tagger and the relation
classifier on most of it, then builds and exports the graph of one
held-out judgment.

Run: python3 demos/end_to_end.py [out_dir]  (a couple of minutes)
"""

import sys
from pathlib import Path

import numpy as np

from casegraph.ner import NerConfig, train_ner
from casegraph.pipeline import CaseModels, build_case_graph, example_rules, export_graph, generate_synthetic_corpus, graph_f1
from casegraph.relation import ReConfig, generate_candidates, train_re
from casegraph.schema import example_schema

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
schema, rules = example_schema(), example_rules()
corpus = generate_synthetic_corpus(seed=1, n_docs=200, schema=schema)
train, held = corpus.split(0.8)

ner = train_ner(corpus.ner_sentences(train), schema.tagset(), NerConfig(lr=5e-3, epochs=3))
cands = generate_candidates(corpus.re_sentences(train), schema, "train", 0.5, np.random.default_rng(0))
re_model = train_re(cands, schema, ReConfig(lr=1e-3, epochs=2))
models = CaseModels(ner, re_model)

i = held[0]
doc = corpus.documents[i]
print(doc.text)
trace = {}
graph = build_case_graph(doc, models, rules, schema, trace=trace)
print("extracted triples:")
for t in trace["triples"]:
    print(f"  s{t.sentence}: {t.head} -[{t.relation}]-> {t.tail}  ({t.confidence:.2f})")
print(f"\n{len(graph.nodes)} nodes, {len(graph.edges)} edges")
for w in graph.warnings:
    print("warning:", w)
print("F1 against gold:", {k: round(v["f1"], 3) for k, v in graph_f1(corpus.gold[i].graph, graph).items()})
for p in export_graph(graph, out, "bulk_csv"):
    print("wrote", p)
