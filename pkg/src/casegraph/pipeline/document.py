"""Rule-driven document handling: segmentation, structured fields and fact
preprocessing."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

SEGMENT_TYPES = ("title", "case_number", "court", "party_info", "facts", "other")
MANDATORY_FIELDS = ("title", "case_number", "court")


class RuleError(ValueError):
    pass


@dataclass(frozen=True)
class CaseDocument:
    doc_id: str
    text: str

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError(f"document {self.doc_id!r} has no text")


@dataclass(frozen=True)
class Segment:
    type: str
    start: int
    end: int
    text: str

    def to_json(self) -> dict:
        return {"type": self.type, "start": self.start, "end": self.end}


@dataclass(frozen=True)
class SegmentRule:
    type: str
    pattern: re.Pattern
    priority: int


@dataclass
class RuleSet:
    segments: list[SegmentRule]
    fields: dict[str, tuple[str, re.Pattern]]
    party: re.Pattern | None
    roles: dict[str, str]
    agent: re.Pattern | None
    organization: re.Pattern | None
    facts_prefix: re.Pattern | None
    role_words: dict[str, list[str]]
    abbreviations: frozenset[str]
    alias_patterns: list[re.Pattern]
    plate_pattern: re.Pattern
    source: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, d: dict) -> "RuleSet":
        def compile_(pat, where):
            try:
                return re.compile(pat, re.MULTILINE)
            except re.error as exc:
                raise RuleError(f"{where}: bad pattern {pat!r}: {exc}") from None

        segs = []
        seen: dict[str, set[int]] = {}
        for i, r in enumerate(d.get("segments", [])):
            t = r["type"]
            if t not in SEGMENT_TYPES:
                raise RuleError(f"segments[{i}]: unknown segment type {t!r}")
            prio = int(r.get("priority", 0))
            if prio in seen.setdefault(t, set()):
                raise RuleError(f"segments[{i}]: duplicate priority {prio} for {t!r}")
            seen[t].add(prio)
            segs.append(SegmentRule(t, compile_(r["pattern"], f"segments[{i}]"), prio))
        # highest priority first; ties between targets broken by file order
        segs.sort(key=lambda r: -r.priority)
        fields = {
            name: (f["segment"], compile_(f["pattern"], f"fields.{name}")) for name, f in d.get("fields", {}).items()
        }
        party = d.get("party", {})
        return cls(
            segments=segs,
            fields=fields,
            party=compile_(party["pattern"], "party.pattern") if "pattern" in party else None,
            roles=dict(party.get("roles", {})),
            agent=compile_(party["agent_pattern"], "party.agent_pattern") if "agent_pattern" in party else None,
            organization=compile_(party["organization_pattern"], "party.organization_pattern")
            if "organization_pattern" in party
            else None,
            facts_prefix=compile_(d["facts_prefix"], "facts_prefix") if "facts_prefix" in d else None,
            role_words={k: list(v) for k, v in d.get("role_words", {}).items()},
            abbreviations=frozenset(d.get("abbreviations", [])),
            alias_patterns=[compile_(p, f"alias_patterns[{i}]") for i, p in enumerate(d.get("alias_patterns", []))],
            plate_pattern=compile_(d.get("plate_pattern", r"\b[A-Z]{2}-\d{4}\b"), "plate_pattern"),
            source=d,
        )

    @classmethod
    def load(cls, path) -> "RuleSet":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def example_rules() -> RuleSet:
    """Rules matching the layout of the synthetic corpus."""
    text = resources.files("casegraph.data").joinpath("example_rules.json").read_text(encoding="utf-8")
    return RuleSet.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# step 1: segmentation
# ---------------------------------------------------------------------------


def segment_document(doc: CaseDocument | str, rules: RuleSet) -> list[Segment]:
    """Label each line with the highest-priority matching rule and merge runs.

    The result partitions the text: every character lies in exactly one
    segment. Lines no rule matches are ``other``; blank lines join the
    preceding segment.
    """
    text = doc.text if isinstance(doc, CaseDocument) else doc
    if not text:
        raise ValueError("empty document")
    if not rules.segments:
        raise RuleError("rule set has no segment rules")
    labelled = []
    pos = 0
    for line in text.splitlines(keepends=True):
        body = line.rstrip("\r\n")
        if body.strip():
            kind = next((r.type for r in rules.segments if r.pattern.search(body)), "other")
        else:
            kind = labelled[-1][0] if labelled else "other"
        labelled.append((kind, pos, pos + len(line)))
        pos += len(line)
    out = []
    for kind, s, e in labelled:
        if out and out[-1][0] == kind:
            out[-1][2] = e
        else:
            out.append([kind, s, e])
    return [Segment(k, s, e, text[s:e]) for k, s, e in out]


# ---------------------------------------------------------------------------
# step 2: structured fields
# ---------------------------------------------------------------------------


@dataclass
class Party:
    role: str
    name: str
    kind: str = "NP"  # NP or NNP
    aliases: list[str] = field(default_factory=list)
    agents: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"role": self.role, "name": self.name, "kind": self.kind, "aliases": self.aliases, "agents": self.agents}

    @classmethod
    def from_json(cls, d: dict) -> "Party":
        return cls(d["role"], d["name"], d.get("kind", "NP"), list(d.get("aliases", [])), list(d.get("agents", [])))


@dataclass
class CaseInfo:
    title: str | None = None
    case_number: str | None = None
    court: str | None = None
    parties: list[Party] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)

    def holders(self, role: str) -> list[Party]:
        return [p for p in self.parties if p.role == role]

    def aliases(self) -> dict[str, str]:
        """alias surface -> full party name"""
        return {a: p.name for p in self.parties for a in p.aliases}

    def to_json(self) -> dict:
        return {
            "title": self.title,
            "case_number": self.case_number,
            "court": self.court,
            "parties": [p.to_json() for p in self.parties],
            "missing": list(self.missing),
        }

    @classmethod
    def from_json(cls, d: dict) -> "CaseInfo":
        return cls(
            d.get("title"),
            d.get("case_number"),
            d.get("court"),
            [Party.from_json(p) for p in d.get("parties", [])],
            list(d.get("missing", [])),
        )


def _lines(segments, kind):
    for seg in segments:
        if seg.type == kind:
            for line in seg.text.splitlines():
                if line.strip():
                    yield line


def extract_structured(segments, rules: RuleSet) -> CaseInfo:
    """Fill case attributes and parties from labelled segments.

    Fields that cannot be captured are listed in ``missing`` instead of
    raising.
    """
    info = CaseInfo()
    for name, (kind, pattern) in rules.fields.items():
        value = None
        for line in _lines(segments, kind):
            m = pattern.search(line)
            if m:
                value = m.group("value").strip()
                break
        if value and name in MANDATORY_FIELDS:
            setattr(info, name, value)
        elif not value:
            info.missing.append(name)
    if rules.party is not None:
        for line in _lines(segments, "party_info"):
            m = rules.party.match(line)
            if m:
                name = m.group("name").strip()
                kind = "NNP" if rules.organization and rules.organization.search(name) else "NP"
                alias = m.group("alias")
                info.parties.append(
                    Party(rules.roles.get(m.group("role"), "other"), name, kind, [alias] if alias else [])
                )
                continue
            a = rules.agent.match(line) if rules.agent else None
            if a and info.parties:
                info.parties[-1].agents.append({"name": a.group("name").strip(), "detail": (a.group("detail") or "").strip()})
    if not info.parties:
        info.missing.append("parties")
    return info


# ---------------------------------------------------------------------------
# step 3: fact preprocessing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FactSentence:
    index: int
    text: str  # after referent completion
    start: int  # character span of the original sentence in the document
    end: int
    ambiguous: bool = False


_BOUNDARY = re.compile(r"[.!?](?=[\"')\]]*(\s+|$))")


def split_sentences(text: str, abbreviations=frozenset()) -> list[tuple[int, int]]:
    """Character spans of sentences ending at terminal punctuation.

    A period after a listed abbreviation or a single capital letter (an
    initial) does not end a sentence.
    """
    spans = []
    start = 0
    for m in _BOUNDARY.finditer(text):
        if m.group() == ".":
            word = re.search(r"([A-Za-z]+)$", text[start : m.start()])
            w = word.group(1) if word else ""
            if w in abbreviations or (len(w) == 1 and w.isupper()):
                continue
        end = m.end()
        while end < len(text) and text[end] in "\"')]":
            end += 1
        if text[start:end].strip():
            spans.append((start, end))
        start = end
    if text[start:].strip():
        spans.append((start, len(text)))
    # trim surrounding whitespace
    out = []
    for s, e in spans:
        while s < e and text[s].isspace():
            s += 1
        while e > s and text[e - 1].isspace():
            e -= 1
        out.append((s, e))
    return out


def facts_text(segments, rules: RuleSet) -> tuple[str, int]:
    """Concatenated facts body and its document offset (prefix stripped)."""
    for seg in segments:
        if seg.type == "facts":
            body = seg.text
            offset = seg.start
            if rules.facts_prefix is not None:
                m = rules.facts_prefix.match(body)
                if m:
                    offset += m.end()
                    body = body[m.end() :]
            return body, offset
    return "", 0


def preprocess_facts(text: str, info: CaseInfo, rules: RuleSet, offset: int = 0) -> list[FactSentence]:
    """Split facts into sentences and replace role words by party names.

    A role word is replaced only when exactly one party holds that role;
    otherwise it stays and the sentence is flagged ambiguous.
    """
    patterns = []
    for role, words in sorted(rules.role_words.items()):
        holders = info.holders(role)
        for w in words:
            rx = re.compile(rf"\b{re.escape(w)}\b", re.IGNORECASE)
            patterns.append((rx, holders[0].name if len(holders) == 1 else None))
    out = []
    for i, (s, e) in enumerate(split_sentences(text, rules.abbreviations)):
        sent = text[s:e]
        ambiguous = False
        for rx, name in patterns:
            if rx.search(sent):
                if name is None:
                    ambiguous = True
                else:
                    sent = rx.sub(lambda _m, n=name: n, sent)
        out.append(FactSentence(i, sent, offset + s, offset + e, ambiguous))
    return out
