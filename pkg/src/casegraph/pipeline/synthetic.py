"""Template-generated traffic-accident judgments with full gold annotations.

Each document follows the layout the example rules expect: a title line,
case number, court, party lines, one facts line and closing boilerplate.
Fact sentences are assembled from typed pieces so gold mention spans and
relations are exact. Where a role is held by a single party, the raw text
sometimes says "the plaintiff" or "the defendant" instead of the name; the
gold sentences carry the resolved name.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from ..crf import TagSet
from ..encoder import tokenize
from ..ner import EntityMention, LabeledSentence, encode_mentions
from ..relation import AnnotatedSentence
from ..schema import RelationSchema, SchemaError
from .document import CaseDocument, CaseInfo, Party, RuleSet, Segment, example_rules
from .graph import CaseGraph, FactTriple, fuse_knowledge

SURNAMES = "Wang Li Zhang Liu Chen Yang Zhao Huang Zhou Wu Xu Sun Hu Zhu Gao Lin He Guo Ma Luo".split()
GIVEN = "Wei Fang Na Min Jing Lei Qiang Jun Yan Tao Ming Hui Jie Ping Gang Hong Bin Xia Yong Lan".split()
STEMS = "Huatai Changjiang Jinling Hengxin Dongfang Xinda Yuantong Ruifeng Tianma Zhongyuan Kaida Shunfeng".split()
CITIES = [("Nanjing", "Su 01"), ("Suzhou", "Su 05"), ("Wuxi", "Su 02"), ("Changzhou", "Su 04"), ("Yangzhou", "Su 10"), ("Hefei", "Wan 01")]
DISTRICTS = "Xuanwu Gulou Qinhuai Jianye Pukou Jiangning Binhu Tianning".split()
ROADS = ["Zhongshan Road", "Beijing Road", "Hunan Road", "Jiefang Avenue", "Renmin Road", "Hongwu Road", "Longpan Road", "Yingtian Street", "Hanzhong Road", "Xinghuo Road"]
MONTHS = "January February March April May June July August September October November December".split()
MV_KINDS = ["small car", "heavy truck", "light van", "passenger bus", "motorcycle", "SUV", "dump truck"]
NMV_KINDS = ["electric bicycle", "bicycle", "tricycle", "electric scooter"]
LEXICON = {
    "INS": ["compulsory traffic accident liability insurance", "commercial third-party liability insurance", "vehicle damage insurance"],
    "RESP": ["full responsibility", "primary responsibility", "secondary responsibility", "equal responsibility", "no responsibility"],
    "INJ": ["a fractured left leg", "a head injury", "multiple rib fractures", "soft tissue contusions", "a broken right arm", "a spinal injury"],
    "DEATH": ["died on the spot", "died after emergency treatment failed"],
    "PDI": ["a roadside guardrail", "a traffic light pole", "a shop window", "a bus shelter", "a green belt"],
    "V12": ["speeding", "exceeding the speed limit"],
    "V13": ["drunk driving"],
    "V14": ["running a red light"],
    "V15": ["driving without a license"],
    "V16": ["illegal overtaking"],
    "V17": ["overloading"],
    "V18": ["fatigue driving"],
    "V19": ["failure to yield"],
    "V20": ["an improper lane change"],
}
VIOLATIONS = [f"V{i}" for i in range(12, 21)]
USED_TYPES = {"NP", "NNP", "MV", "NMV", "DEATH", "PDI", "INJ", "LOC", "TIME", "INS", "RESP", *VIOLATIONS}
USED_RELATIONS = {
    ("Driving", "NP", "MV"), ("Driving", "NP", "NMV"), ("Ride", "NP", "MV"), ("Ride", "NP", "NMV"),
    ("Accident", "MV", "MV"), ("Accident", "MV", "NMV"), ("Accident", "MV", "NP"),
    ("Owns", "NP", "MV"), ("Owns", "NNP", "MV"), ("Insures", "NNP", "MV"), ("Insures", "NNP", "INS"),
    ("Consequence", "NP", "INJ"), ("Consequence", "NP", "DEATH"), ("Consequence", "MV", "PDI"),
    *(("Violation", "NP", v) for v in VIOLATIONS), ("Liability", "NP", "RESP"), ("Liability", "NNP", "RESP"),
    ("OccurredAt", "MV", "LOC"), ("OccurredAt", "MV", "TIME"),
}  # fmt: skip


@dataclass(frozen=True)
class Ent:
    """An entity the facts can mention: resolved surface, type and, for
    sole role holders, the role word that may replace it."""

    surface: str
    type: str
    role_word: str | None = None


@dataclass
class GoldDocument:
    doc_id: str
    segments: list[Segment]
    info: CaseInfo
    sentences: list[str]
    mentions: list[list[EntityMention]]
    relations: list[dict[tuple[int, int], str]]
    triples: list[FactTriple]
    graph: CaseGraph

    def tokens(self, i: int) -> list[str]:
        return [t for t, _, _ in tokenize(self.sentences[i])]

    def to_json(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "segments": [s.to_json() for s in self.segments],
            "info": self.info.to_json(),
            "sentences": self.sentences,
            "mentions": [[[m.start, m.end, m.type, m.text] for m in ms] for ms in self.mentions],
            "relations": [[[i, j, lab] for (i, j), lab in sorted(r.items())] for r in self.relations],
            "triples": [t.to_json() for t in self.triples],
            "graph": self.graph.to_json(),
        }

    @classmethod
    def from_json(cls, d: dict, text: str) -> "GoldDocument":
        return cls(
            d["doc_id"],
            [Segment(s["type"], s["start"], s["end"], text[s["start"] : s["end"]]) for s in d["segments"]],
            CaseInfo.from_json(d["info"]),
            list(d["sentences"]),
            [[EntityMention(*m) for m in ms] for ms in d["mentions"]],
            [{(i, j): lab for i, j, lab in r} for r in d["relations"]],
            [FactTriple.from_json(t) for t in d["triples"]],
            CaseGraph.from_json(d["graph"]),
        )


@dataclass
class SyntheticCorpus:
    documents: list[CaseDocument]
    gold: list[GoldDocument]

    def __len__(self):
        return len(self.documents)

    def split(self, train_fraction: float = 0.8) -> tuple[list[int], list[int]]:
        """Deterministic head/tail split of document indices."""
        n = int(round(train_fraction * len(self.documents)))
        return list(range(n)), list(range(n, len(self.documents)))

    def ner_sentences(self, indices=None) -> list[LabeledSentence]:
        out = []
        for g in self._select(indices):
            for i, ms in enumerate(g.mentions):
                toks = g.tokens(i)
                out.append(LabeledSentence(toks, encode_mentions(len(toks), ms)))
        return out

    def re_sentences(self, indices=None) -> list[AnnotatedSentence]:
        out = []
        for g in self._select(indices):
            for i, ms in enumerate(g.mentions):
                out.append(AnnotatedSentence(g.tokens(i), list(ms), dict(g.relations[i])))
        return out

    def _select(self, indices):
        return self.gold if indices is None else [self.gold[i] for i in indices]

    def save(self, directory) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        docs = directory / "documents.jsonl"
        gold = directory / "gold.jsonl"
        with open(docs, "w", encoding="utf-8", newline="") as fh:
            for d in self.documents:
                fh.write(json.dumps({"id": d.doc_id, "text": d.text}, ensure_ascii=False, sort_keys=True) + "\n")
        with open(gold, "w", encoding="utf-8", newline="") as fh:
            for g in self.gold:
                fh.write(json.dumps(g.to_json(), ensure_ascii=False, sort_keys=True) + "\n")
        return [docs, gold]

    @classmethod
    def load(cls, directory) -> "SyntheticCorpus":
        directory = Path(directory)
        docs = [
            CaseDocument(d["id"], d["text"])
            for d in map(json.loads, (directory / "documents.jsonl").read_text(encoding="utf-8").splitlines())
        ]
        gold = [
            GoldDocument.from_json(json.loads(line), doc.text)
            for line, doc in zip((directory / "gold.jsonl").read_text(encoding="utf-8").splitlines(), docs)
        ]
        return cls(docs, gold)


def read_documents(path) -> list[CaseDocument]:
    """JSONL batch of {"id", "text"} records."""
    with open(path, encoding="utf-8") as fh:
        return [CaseDocument(d["id"], d["text"]) for d in map(json.loads, filter(str.strip, fh))]


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


class _Sentence:
    """Pieces are strings or (Ent, key); relations use the keys."""

    def __init__(self, *pieces):
        self.pieces = list(pieces)
        self.rels: list[tuple[str, str, str]] = []

    def rel(self, label, a, b):
        self.rels.append((label, a, b))
        return self

    def render(self, rng: random.Random, use_role_words: bool):
        text, raw = "", ""
        spans = {}
        for piece in self.pieces:
            if isinstance(piece, str):
                text += piece
                raw += piece
                continue
            ent, key = piece
            spans[key] = (len(text), len(text) + len(ent.surface), ent)
            text += ent.surface
            if use_role_words and ent.role_word and rng.random() < 0.5:
                raw += ent.role_word.capitalize() if not raw else ent.role_word
            else:
                raw += ent.surface
        return text, raw, spans


def _person(rng, taken):
    while True:
        name = f"{rng.choice(SURNAMES)} {rng.choice(GIVEN)}"
        if name not in taken:
            taken.add(name)
            return name


def _plate(rng, taken):
    while True:
        p = "".join(rng.choice("ABCDEFGHJKLMNPQRSTUVWXYZ") for _ in range(2)) + "-" + "".join(rng.choice("0123456789") for _ in range(4))
        if p not in taken:
            taken.add(p)
            return p


def _time(rng):
    return f"{rng.randint(0, 23):02d}:{rng.choice(range(0, 60, 5)):02d} on {rng.choice(MONTHS)} {rng.randint(1, 28)}, {rng.randint(2015, 2022)}"


def _location(rng):
    a, b = rng.sample(ROADS, 2)
    return rng.choice([f"the intersection of {a} and {b}", f"the section of {a} near {b}"])


def _party_line(role, name, kind, rng, city, alias=None):
    if kind == "NP":
        sex = rng.choice(["male", "female"])
        born = f"{rng.randint(1950, 2000)}-{rng.randint(1, 12):02d}-{rng.randint(1, 28):02d}"
        return f"{role}: {name}, {sex}, born on {born}, residing in {city}."
    return f'{role}: {name} (hereinafter referred to as "{alias}"), domiciled in {city}.'


def _check(schema: RelationSchema, tagset: TagSet) -> None:
    missing = USED_TYPES - set(schema.entity_types)
    if missing:
        raise SchemaError(f"schema lacks entity types used by the generator: {sorted(missing)}")
    tag_types = {lab[2:] for lab in tagset.labels if lab != "O"}
    if tag_types != set(schema.entity_types):
        raise SchemaError(
            f"tagset types differ from schema types: {sorted(tag_types ^ set(schema.entity_types))}"
        )
    for rel, h, t in sorted(USED_RELATIONS):
        if not schema.allows(rel, h, t):
            raise SchemaError(f"schema does not admit {rel}({h}, {t})")


def _generate_one(rng: random.Random, doc_id: str, rules: RuleSet):
    names: set[str] = set()
    plates: set[str] = set()
    city, code = rng.choice(CITIES)
    court = f"{city} {rng.choice(DISTRICTS)} District People's Court"
    year = rng.randint(2016, 2023)
    case_number = f"({year}) {code}{rng.randint(0, 9):02d} Civil First Instance No. {rng.randint(100, 9999)}"

    plaintiffs = [_person(rng, names) for _ in range(2 if rng.random() < 0.3 else 1)]
    driver = _person(rng, names)
    stems = rng.sample(STEMS, 2)
    owner = (f"{stems[0]} {rng.choice(['Transport', 'Logistics', 'Construction'])} Co., Ltd.", f"{stems[0]} Co.") if rng.random() < 0.5 else None
    insurer = (f"{stems[1]} Property Insurance Co., Ltd. {city} Branch", f"{stems[1]} Insurance") if rng.random() < 0.7 else None

    parties = [Party("plaintiff", p, "NP") for p in plaintiffs]
    parties.append(Party("defendant", driver, "NP"))
    for org in (owner, insurer):
        if org:
            parties.append(Party("defendant", org[0], "NNP", [org[1]]))
    sole = {
        role: len([p for p in parties if p.role == role]) == 1 for role in ("plaintiff", "defendant")
    }

    def np_ent(name, role):
        return Ent(name, "NP", f"the {role}" if sole[role] else None)

    P1 = np_ent(plaintiffs[0], "plaintiff")
    P2 = np_ent(plaintiffs[1], "plaintiff") if len(plaintiffs) > 1 else None
    D1 = np_ent(driver, "defendant")
    plate1 = _plate(rng, plates)
    MV1 = Ent(f"{rng.choice(MV_KINDS)} {plate1}", "MV")
    MV1b = Ent(f"vehicle {plate1}", "MV") if rng.random() < 0.4 else MV1
    mode = rng.choice(["nmv", "mv", "walk"])
    victim_vehicle = None
    if mode == "nmv":
        victim_vehicle = Ent(rng.choice(NMV_KINDS), "NMV")
    elif mode == "mv":
        victim_vehicle = Ent(f"{rng.choice(MV_KINDS)} {_plate(rng, plates)}", "MV")
    TIME = Ent(_time(rng), "TIME")
    LOC = Ent(_location(rng), "LOC")

    def E(kind):
        return Ent(rng.choice(LEXICON[kind]), kind)

    S = []
    if rng.random() < 0.5:
        S.append(_Sentence("At ", (TIME, "t"), ", ", (D1, "d"), " was driving ", (MV1, "v"), " through ", (LOC, "l"), ".")
                 .rel("Driving", "d", "v").rel("OccurredAt", "v", "t").rel("OccurredAt", "v", "l"))
    else:
        S.append(_Sentence((D1, "d"), " was driving ", (MV1, "v"), " through ", (LOC, "l"), " at ", (TIME, "t"), ".")
                 .rel("Driving", "d", "v").rel("OccurredAt", "v", "t").rel("OccurredAt", "v", "l"))
    if rng.random() < 0.3:
        S.append(_Sentence((Ent(_person(rng, names), "NP"), "q"), " was a passenger in ", (MV1, "v"), ".").rel("Ride", "q", "v"))
    if mode == "nmv":
        article = "an" if victim_vehicle.surface[0] in "aeiou" else "a"
        S.append(_Sentence((P1, "p"), f" was riding {article} ", (victim_vehicle, "x"), rng.choice([" in the same direction.", " across the road."]))
                 .rel("Driving", "p", "x"))
        if P2:
            S.append(_Sentence((P2, "q"), " was sitting on the back seat of ", (victim_vehicle, "x"), ".").rel("Ride", "q", "x"))
    elif mode == "mv":
        S.append(_Sentence((P1, "p"), " was driving ", (victim_vehicle, "x"), " in the opposite direction.").rel("Driving", "p", "x"))
        if P2:
            S.append(_Sentence((P2, "q"), " was a passenger in ", (victim_vehicle, "x"), ".").rel("Ride", "q", "x"))
    else:
        S.append(_Sentence((P1, "p"), " was crossing the road on foot."))
    target = victim_vehicle if victim_vehicle else P1
    if target is P1:
        S.append(_Sentence("The ", (MV1b, "v"), " struck ", (P1, "x"), ".").rel("Accident", "v", "x"))
    elif rng.random() < 0.5:
        S.append(_Sentence("The ", (MV1b, "v"), " collided with ", (target, "x"), ".").rel("Accident", "v", "x"))
    else:
        S.append(_Sentence("The front of ", (MV1b, "v"), " hit ", (target, "x"), ".").rel("Accident", "v", "x"))
    if rng.random() < 0.2:
        S.append(_Sentence((P1, "p"), " ", (E("DEATH"), "c"), ".").rel("Consequence", "p", "c"))
    else:
        S.append(_Sentence((P1, "p"), " suffered ", (E("INJ"), "c"), ".").rel("Consequence", "p", "c"))
    if P2:
        S.append(_Sentence((P2, "q"), " suffered ", (E("INJ"), "c"), ".").rel("Consequence", "q", "c"))
    if rng.random() < 0.4:
        S.append(_Sentence("The ", (MV1b, "v"), " also damaged ", (E("PDI"), "c"), ".").rel("Consequence", "v", "c"))
    vs = rng.sample(VIOLATIONS, 2 if rng.random() < 0.3 else 1)
    if len(vs) == 1:
        S.append(_Sentence("The investigation showed that ", (D1, "d"), " had committed ", (E(vs[0]), "a"), ".").rel("Violation", "d", "a"))
    else:
        S.append(_Sentence("The investigation showed that ", (D1, "d"), " had committed ", (E(vs[0]), "a"), " and ", (E(vs[1]), "b"), ".")
                 .rel("Violation", "d", "a").rel("Violation", "d", "b"))
    S.append(_Sentence("The traffic police determined that ", (D1, "d"), " bears ", (E("RESP"), "r"), ".").rel("Liability", "d", "r"))
    if mode != "walk" or rng.random() < 0.5:
        S.append(_Sentence((P1, "p"), " bears ", (E("RESP"), "r"), ".").rel("Liability", "p", "r"))
    if owner:
        O = Ent(owner[1], "NNP")
        S.append(_Sentence((O, "o"), " is the registered owner of ", (MV1, "v"), ".").rel("Owns", "o", "v"))
    elif rng.random() < 0.5:
        S.append(_Sentence((D1, "d"), " is the owner of ", (MV1, "v"), ".").rel("Owns", "d", "v"))
    if insurer:
        I = Ent(insurer[1], "NNP")
        S.append(_Sentence((I, "i"), " insured ", (MV1, "v"), " under ", (E("INS"), "n"), ".")
                 .rel("Insures", "i", "v").rel("Insures", "i", "n"))

    sentences, raws, mentions, relations, triples = [], [], [], [], []
    for si, sent in enumerate(S):
        text, raw, spans = sent.render(rng, use_role_words=True)
        toks = tokenize(text)
        start_of = {s: i for i, (_, s, _) in enumerate(toks)}
        end_of = {e: i + 1 for i, (_, _, e) in enumerate(toks)}
        ordered = sorted(spans.items(), key=lambda kv: kv[1][0])
        ms = [EntityMention(start_of[s], end_of[e], ent.type, ent.surface) for _, (s, e, ent) in ordered]
        index = {key: i for i, (key, _) in enumerate(ordered)}
        rels = {}
        for label, a, b in sent.rels:
            rels[(index[a], index[b])] = label
            ha, hb = spans[a][2], spans[b][2]
            triples.append(FactTriple(ha.surface, ha.type, label, hb.surface, hb.type, si))
        sentences.append(text)
        raws.append(raw)
        mentions.append(ms)
        relations.append(rels)

    lines = [
        ("title", f"{court} Civil Judgment"),
        ("case_number", f"Case No. {case_number}"),
        ("court", f"Court: {court}"),
    ]
    for p in parties:
        org = {owner[0]: owner[1]} if owner else {}
        if insurer:
            org[insurer[0]] = insurer[1]
        lines.append(("party_info", _party_line(p.role.capitalize(), p.name, p.kind, rng, city, org.get(p.name))))
        if rng.random() < 0.4:
            agent = _person(rng, names)
            detail = f"lawyer of {rng.choice(STEMS)} Law Firm"
            p.agents.append({"name": agent, "detail": detail})
            lines.append(("party_info", f"Agent ad litem: {agent}, {detail}."))
    lines.append(("other", "This court accepted the case and tried it in open session according to law."))
    lines.append(("facts", "The court found the following facts: " + " ".join(raws)))
    lines.append(("other", "The court holds that the losses caused by the accident shall be compensated according to the determined responsibility."))
    lines.append(("other", f"Presiding Judge: {_person(rng, names)}"))

    text = "".join(line + "\n" for _, line in lines)
    segments, pos = [], 0
    for kind, line in lines:
        end = pos + len(line) + 1
        if segments and segments[-1][0] == kind:
            segments[-1][2] = end
        else:
            segments.append([kind, pos, end])
        pos = end
    segments = [Segment(k, s, e, text[s:e]) for k, s, e in segments]
    info = CaseInfo(f"{court} Civil Judgment", case_number, court, parties, [])
    facts_line = lines[-3][1]
    graph = fuse_knowledge(info, triples, rules, doc_id, alias_text=facts_line)
    doc = CaseDocument(doc_id, text)
    return doc, GoldDocument(doc_id, segments, info, sentences, mentions, relations, triples, graph)


def generate_synthetic_corpus(
    seed: int,
    n_docs: int,
    schema: RelationSchema,
    tagset: TagSet | None = None,
    rules: RuleSet | None = None,
) -> SyntheticCorpus:
    """Deterministic corpus of ``n_docs`` judgments and their gold outputs."""
    if n_docs < 1:
        raise ValueError("n_docs must be >= 1")
    tagset = tagset or schema.tagset()
    _check(schema, tagset)
    rules = rules or example_rules()
    rng = random.Random(seed)
    docs, gold = [], []
    for i in range(n_docs):
        d, g = _generate_one(rng, f"case-{seed}-{i:05d}", rules)
        docs.append(d)
        gold.append(g)
    return SyntheticCorpus(docs, gold)
