"""Document-to-graph pipeline and the synthetic judgment corpus."""

from .build import CaseModels, PipelineError, build_case_graph, run_ner, run_relation_extraction, segment_eval
from .document import (
    CaseDocument,
    CaseInfo,
    FactSentence,
    Party,
    RuleError,
    RuleSet,
    Segment,
    example_rules,
    extract_structured,
    facts_text,
    preprocess_facts,
    segment_document,
    split_sentences,
)
from .graph import CaseGraph, Edge, FactTriple, Node, export_graph, fuse_graph, fuse_knowledge, graph_f1
from .synthetic import GoldDocument, SyntheticCorpus, generate_synthetic_corpus, read_documents

__all__ = [
    "CaseDocument",
    "CaseGraph",
    "CaseInfo",
    "CaseModels",
    "Edge",
    "FactSentence",
    "FactTriple",
    "GoldDocument",
    "Node",
    "Party",
    "PipelineError",
    "RuleError",
    "RuleSet",
    "Segment",
    "SyntheticCorpus",
    "build_case_graph",
    "example_rules",
    "export_graph",
    "extract_structured",
    "facts_text",
    "fuse_graph",
    "fuse_knowledge",
    "generate_synthetic_corpus",
    "graph_f1",
    "preprocess_facts",
    "read_documents",
    "run_ner",
    "run_relation_extraction",
    "segment_document",
    "segment_eval",
    "split_sentences",
]
