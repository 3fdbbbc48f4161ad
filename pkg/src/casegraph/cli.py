"""casegraph <command> --config run.json [--set section.key=value ...]

Every command prints one JSON summary {"command", "status", "metrics",
"artifacts"} on stdout and exits 0 only on success.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import kge
from .ner import NerConfig, NerModel, read_corpus, span_f1, decode_mentions, train_ner
from .relation import ReConfig, ReModel, generate_candidates, macro_f1, read_instances, train_re
from .schema import RelationSchema, example_schema

COMMANDS = ("gen-corpus", "train-ner", "train-re", "train-kge", "derive-components", "complete", "build-kg", "eval")

DEFAULTS = {
    "seed": 0,
    "paths": {
        "out_dir": "runs/default",
        "schema": None,
        "rules": None,
        "corpus": None,
        "documents": None,
        "ner_model": None,
        "re_model": None,
        "kg": None,
        "embeddings": None,
    },
    "corpus": {"n_docs": 600, "train_fraction": 0.8},
    "ner": {},
    "re": {},
    "kge": {"model": "rotate", "planted": None},
    "msre": {"relations": None, "pca_dim": 2, "bandwidth": None, "average": "circular", "min_cluster_size": 2, "finetune": False},
    "complete": {"head": None, "relation": None, "tail": None, "top": 10, "filtered": True},
    "build": {"format": "jsonl", "split": "test"},
    "eval": {"task": None, "gold": None, "predicted": None},
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _merge(base: dict, over: dict, where="") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(out.get(k), dict) and isinstance(v, dict):
            out[k] = _merge(out[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def load_config(path, overrides=()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            user = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from None
        cfg = _merge(cfg, user)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {key}: {p!r} is not a section")
        node[parts[-1]] = _parse_value(raw)
    if not isinstance(cfg.get("seed"), int):
        raise ConfigError("seed: an integer seed is required")
    return cfg


def _dataclass_from(cls, section: dict, name: str, **extra):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(section) - known)
    if unknown:
        raise ConfigError(f"{name}: unknown field(s) {unknown}")
    try:
        return cls(**{**section, **extra})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def _path(cfg, key, must_exist=True) -> Path:
    value = cfg["paths"].get(key)
    if not value:
        raise ConfigError(f"paths.{key} is required for this command")
    p = Path(value)
    if must_exist and not p.exists():
        raise ConfigError(f"paths.{key}: {p} does not exist")
    return p


def _out(cfg) -> Path:
    p = Path(cfg["paths"]["out_dir"])
    p.mkdir(parents=True, exist_ok=True)
    return p


def _schema(cfg) -> RelationSchema:
    p = cfg["paths"].get("schema")
    return RelationSchema.load(p) if p else example_schema()


def _rules(cfg):
    from .pipeline import RuleSet, example_rules

    p = cfg["paths"].get("rules")
    return RuleSet.load(p) if p else example_rules()


def _corpus(cfg):
    from .pipeline import SyntheticCorpus

    return SyntheticCorpus.load(_path(cfg, "corpus"))


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def _round(x):
    """Round floats so summaries stay byte-stable across platforms."""
    if isinstance(x, float):
        return round(x, 10)
    if isinstance(x, dict):
        return {k: _round(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round(v) for v in x]
    return x


# ---------------------------------------------------------------------------
# commands: each returns (metrics, artifacts)
# ---------------------------------------------------------------------------


def cmd_gen_corpus(cfg):
    from .pipeline import generate_synthetic_corpus

    schema = _schema(cfg)
    corpus = generate_synthetic_corpus(cfg["seed"], int(cfg["corpus"]["n_docs"]), schema, rules=_rules(cfg))
    target = Path(cfg["paths"]["corpus"] or Path(cfg["paths"]["out_dir"]) / "corpus")
    arts = corpus.save(target)
    metrics = {
        "n_docs": len(corpus),
        "n_sentences": sum(len(g.sentences) for g in corpus.gold),
        "n_mentions": sum(len(m) for g in corpus.gold for m in g.mentions),
        "n_triples": sum(len(g.triples) for g in corpus.gold),
    }
    return metrics, [str(a) for a in arts]


def _ner_eval(model, sentences):
    gold = [decode_mentions(s.tokens, s.labels) for s in sentences]
    pred = [model.predict_mentions(s.tokens) for s in sentences]
    overall, per = span_f1(gold, pred)
    return {"precision": overall[0], "recall": overall[1], "f1": overall[2], "per_type_f1": {k: v[2] for k, v in per.items()}}


def cmd_train_ner(cfg):
    schema = _schema(cfg)
    config = _dataclass_from(NerConfig, {"seed": cfg["seed"], **cfg["ner"]}, "ner")
    corpus = _corpus(cfg)
    tr, te = corpus.split(cfg["corpus"]["train_fraction"])
    model = train_ner(corpus.ner_sentences(tr), schema.tagset(), config)
    out = _out(cfg)
    path = Path(cfg["paths"]["ner_model"] or out / "ner.npz")
    model.save(path)
    metrics = {"final_loss": model.history.losses[-1] if model.history.losses else None, "n_train_docs": len(tr)}
    if te:
        metrics["heldout"] = _ner_eval(model, corpus.ner_sentences(te))
    metrics = _round(metrics)
    return metrics, [str(path), str(_write_json(out / "train-ner.metrics.json", metrics))]


def _re_eval(model, schema, sentences):
    # every admissible pair, unrelated ones labelled Other
    cands = generate_candidates(sentences, schema, "train", keep_prob=1.0, rng=np.random.default_rng(0))
    pred = model.predict(cands)
    p, r, f, table = macro_f1([c.label for c in cands], pred, include_other=True, other=schema.other, labels=schema.labels)
    return {"macro_precision": p, "macro_recall": r, "macro_f1": f, "per_class_f1": {k: v[2] for k, v in table.items()}, "n": len(cands)}


def cmd_train_re(cfg):
    schema = _schema(cfg)
    config = _dataclass_from(ReConfig, {"seed": cfg["seed"], **cfg["re"]}, "re")
    corpus = _corpus(cfg)
    tr, te = corpus.split(cfg["corpus"]["train_fraction"])
    rng = np.random.default_rng([cfg["seed"], 2])
    train = generate_candidates(corpus.re_sentences(tr), schema, "train", config.keep_prob, rng)
    model = train_re(train, schema, config)
    out = _out(cfg)
    path = Path(cfg["paths"]["re_model"] or out / "re.npz")
    model.save(path)
    metrics = {"final_loss": model.history[-1] if model.history else None, "n_train_instances": len(train)}
    if te:
        metrics["heldout"] = _re_eval(model, schema, corpus.re_sentences(te))
    metrics = _round(metrics)
    return metrics, [str(path), str(_write_json(out / "train-re.metrics.json", metrics))]


def _kge_store(cfg, out):
    planted = cfg["kge"].get("planted")
    if planted:
        from .kge.synthetic import planted_pattern_kg, planted_two_cluster

        if planted == "two_cluster":
            store, _ = planted_two_cluster(seed=cfg["seed"])
        else:
            store = planted_pattern_kg(planted, seed=cfg["seed"])
        kg_dir = Path(cfg["paths"]["kg"] or out / "kg")
        store.save_tsv(kg_dir)
        return store, kg_dir
    kg_dir = _path(cfg, "kg")
    return kge.TripleStore.load_tsv(kg_dir), kg_dir


def cmd_train_kge(cfg):
    out = _out(cfg)
    store, kg_dir = _kge_store(cfg, out)
    section = {k: v for k, v in cfg["kge"].items() if k not in ("model", "planted")}
    config = _dataclass_from(kge.KgeTrainConfig, {"seed": cfg["seed"], **section}, "kge")
    kind = cfg["kge"].get("model", "rotate")
    if kind == "rotate":
        model = kge.train_rotate(store, config)
    elif kind == "transe":
        model = kge.train_transe(store, config)
    else:
        raise ConfigError(f"kge.model: unknown model {kind!r}")
    path = Path(cfg["paths"]["embeddings"] or out / "embeddings.json")
    kge.save_embeddings(path, model, store.entities, store.relations)
    metrics = {"final_loss": model.history[-1], "final_lr": model.final_lr, "n_train": int(len(store.train))}
    part = "test" if len(store.test) else "train"
    metrics[f"link_prediction_{part}"] = kge.eval_link_prediction(store, lambda h, r, t: -model.distance(h, r, t), part)
    planted = cfg["kge"].get("planted")
    if kind == "rotate" and planted in ("symmetric", "inverse", "composition"):
        n = {"symmetric": 1, "inverse": 2, "composition": 3}[planted]
        v = kge.check_pattern(planted, *model.phases[:n], tol=0.2, min_fraction=0.9)
        metrics["pattern"] = {"name": planted, "holds": v.holds, "fraction_within": v.fraction_within}
    metrics = _round(metrics)
    return metrics, [str(kg_dir), str(path), str(_write_json(out / "train-kge.metrics.json", metrics))]


def _load_kge(cfg):
    model, ents, rels, comps = kge.load_embeddings(_path(cfg, "embeddings"))
    store = kge.TripleStore.load_tsv(_path(cfg, "kg"))
    if list(store.entities) != list(ents) or list(store.relations) != list(rels):
        # entity ids follow file order; re-index the store to the embedding table
        index = {e: i for i, e in enumerate(ents)}
        rindex = {r: i for i, r in enumerate(rels)}
        try:
            parts = {
                p: np.array([(index[store.entities[h]], rindex[store.relations[r]], index[store.entities[t]]) for h, r, t in store.partitions[p]], dtype=np.int64).reshape(-1, 3)
                for p in store.partitions
            }
        except KeyError as exc:
            raise ConfigError(f"triples mention {exc} which the embeddings do not cover") from None
        store = kge.TripleStore(list(ents), list(rels), parts)
    if model.kind != "rotate":
        raise ConfigError("multi-semantic components need rotational embeddings")
    return model, store, comps


def cmd_derive_components(cfg):
    model, store, _ = _load_kge(cfg)
    ms = cfg["msre"]
    names = ms.get("relations") or [r for i, r in enumerate(store.relations) if np.any(store.train[:, 1] == i)]
    E = model.entities
    comps, rows = {}, []
    for name in names:
        angles = kge.collect_relation_angles(store, E, name)
        comps[name] = kge.derive_components(
            angles,
            pca_dim=int(ms.get("pca_dim", 2)),
            bandwidth=ms.get("bandwidth"),
            average=ms.get("average", "circular"),
            min_cluster_size=int(ms.get("min_cluster_size", 2)),
        )
        rows += kge.reduced_angles(angles, comps[name])
    msre = kge.MsreModel.from_rotate(model, store, comps)
    if ms.get("finetune"):
        section = {k: v for k, v in cfg["kge"].items() if k not in ("model", "planted")}
        msre = kge.finetune_components(store, msre, _dataclass_from(kge.KgeTrainConfig, {"seed": cfg["seed"], **section}, "kge"))
        comps = {store.relations[r]: c for r, c in msre.components.items() if store.relations[r] in comps}
    out = _out(cfg)
    path = out / "embeddings.msre.json"
    kge.save_embeddings(path, model, store.entities, store.relations, comps)
    plot = out / "reduced_angles.jsonl"
    plot.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows), encoding="utf-8")
    metrics = {"components": {n: int(c.k) for n, c in comps.items()}}
    if len(store.test):
        metrics["link_prediction_test"] = {
            "msre": kge.eval_link_prediction(store, msre.score, "test"),
            "rotate": kge.eval_link_prediction(store, lambda h, r, t: -model.distance(h, r, t), "test"),
        }
    metrics = _round(metrics)
    return metrics, [str(path), str(plot), str(_write_json(out / "derive-components.metrics.json", metrics))]


def cmd_complete(cfg):
    model, store, comps = _load_kge(cfg)
    q = cfg["complete"]
    if q.get("relation") is None:
        raise ConfigError("complete.relation is required")
    msre = kge.MsreModel.from_rotate(model, store, comps)
    ranked = kge.complete(store, msre, (q.get("head"), q["relation"], q.get("tail")), filtered=bool(q.get("filtered", True)), top=int(q.get("top", 10)))
    metrics = _round({"query": [q.get("head"), q["relation"], q.get("tail")], "ranking": [list(r) for r in ranked], "top1": ranked[0][0] if ranked else None})
    return metrics, []


def cmd_build_kg(cfg):
    from .pipeline import CaseModels, build_case_graph, export_graph, graph_f1, read_documents

    schema = _schema(cfg)
    rules = _rules(cfg)
    models = CaseModels(NerModel.load(_path(cfg, "ner_model")), ReModel.load(_path(cfg, "re_model")))
    gold = None
    if cfg["paths"].get("documents"):
        docs = read_documents(_path(cfg, "documents"))
    else:
        corpus = _corpus(cfg)
        tr, te = corpus.split(cfg["corpus"]["train_fraction"])
        idx = {"test": te, "train": tr, "all": tr + te}[cfg["build"].get("split", "test")]
        docs = [corpus.documents[i] for i in idx]
        gold = [corpus.gold[i].graph for i in idx]
    out = _out(cfg) / "graphs"
    fmt = cfg["build"].get("format", "jsonl")
    scores = []
    for i, doc in enumerate(docs):
        g = build_case_graph(doc, models, rules, schema)
        export_graph(g, out / doc.doc_id, fmt)
        if gold is not None:
            scores.append(graph_f1(gold[i], g))
    metrics = {"n_docs": len(docs)}
    if scores:
        tot = {k: sum(s["overall"][k] for s in scores) for k in ("tp", "n_gold", "n_pred")}
        p = tot["tp"] / tot["n_pred"] if tot["n_pred"] else 0.0
        r = tot["tp"] / tot["n_gold"] if tot["n_gold"] else 0.0
        metrics["graph"] = {"precision": p, "recall": r, "f1": 2 * p * r / (p + r) if p + r else 0.0}
    metrics = _round(metrics)
    return metrics, [str(out)]


def cmd_eval(cfg):
    from .pipeline import CaseGraph, Segment, graph_f1, segment_eval

    ev = cfg["eval"]
    task = ev.get("task")
    if task is None:
        raise ConfigError("eval.task is required (ner, re, segments or graph)")
    gold_p, pred_p = ev.get("gold"), ev.get("predicted")
    if not gold_p or not pred_p:
        raise ConfigError("eval.gold and eval.predicted are required")
    for p in (gold_p, pred_p):
        if not Path(p).exists():
            raise ConfigError(f"eval: {p} does not exist")
    if task == "ner":
        g = [decode_mentions(s.tokens, s.labels) for s in read_corpus(gold_p)]
        pr = [decode_mentions(s.tokens, s.labels) for s in read_corpus(pred_p)]
        if len(g) != len(pr):
            raise ConfigError("eval: gold and predicted sentence counts differ")
        overall, per = span_f1(g, pr)
        metrics = {"precision": overall[0], "recall": overall[1], "f1": overall[2], "per_type_f1": {k: v[2] for k, v in per.items()}}
    elif task == "re":
        g = [x.label for x in read_instances(gold_p)]
        pr = [x.label for x in read_instances(pred_p)]
        if len(g) != len(pr):
            raise ConfigError("eval: gold and predicted instance counts differ")
        schema = _schema(cfg)
        p, r, f, table = macro_f1(g, pr, include_other=True, other=schema.other, labels=schema.labels)
        metrics = {"macro_precision": p, "macro_recall": r, "macro_f1": f, "per_class_f1": {k: v[2] for k, v in table.items()}}
    elif task == "segments":

        def read(path):
            return [
                [Segment(s["type"], s["start"], s["end"], "") for s in json.loads(line)["segments"]]
                for line in Path(path).read_text(encoding="utf-8").splitlines()
                if line.strip()
            ]

        metrics = segment_eval(read(gold_p), read(pred_p))
    elif task == "graph":
        gold = json.loads(Path(gold_p).read_text(encoding="utf-8"))
        pred = json.loads(Path(pred_p).read_text(encoding="utf-8"))
        gold = gold if isinstance(gold, list) else [gold]
        pred = pred if isinstance(pred, list) else [pred]
        if len(gold) != len(pred):
            raise ConfigError("eval: gold and predicted graph counts differ")
        scores = [graph_f1(CaseGraph.from_json(a), CaseGraph.from_json(b)) for a, b in zip(gold, pred)]
        tot = {k: sum(s["overall"][k] for s in scores) for k in ("tp", "n_gold", "n_pred")}
        p = tot["tp"] / tot["n_pred"] if tot["n_pred"] else 0.0
        r = tot["tp"] / tot["n_gold"] if tot["n_gold"] else 0.0
        metrics = {"precision": p, "recall": r, "f1": 2 * p * r / (p + r) if p + r else 0.0}
    else:
        raise ConfigError(f"eval.task: unknown task {task!r}")
    return _round(metrics), []


HANDLERS = {
    "gen-corpus": cmd_gen_corpus,
    "train-ner": cmd_train_ner,
    "train-re": cmd_train_re,
    "train-kge": cmd_train_kge,
    "derive-components": cmd_derive_components,
    "complete": cmd_complete,
    "build-kg": cmd_build_kg,
    "eval": cmd_eval,
}


def run(command: str, config_path=None, overrides=()) -> tuple[int, dict]:
    summary = {"command": command, "status": "ok", "metrics": {}, "artifacts": []}
    try:
        cfg = load_config(config_path, overrides)
        metrics, arts = HANDLERS[command](cfg)
        summary["metrics"] = metrics
        summary["artifacts"] = arts
        return 0, summary
    except Exception as exc:  # noqa: BLE001 - every failure becomes a summary
        summary["status"] = "error"
        summary["error"] = f"{type(exc).__name__}: {exc}"
        return 1, summary


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="casegraph", description="Case knowledge-graph construction and completion.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override a config field, e.g. ner.epochs=3")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr)
    status, summary = run(args.command, args.config, args.overrides)
    print(json.dumps(summary, sort_keys=True))
    return status


if __name__ == "__main__":
    sys.exit(main())
