"""Entity/relation schema: which relations may hold between which entity types."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

from .crf import TagSet


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class RelationSchema:
    entity_types: tuple[str, ...]
    relations: dict[str, tuple[tuple[str, str], ...]]
    other: str = "Other"
    entity_names: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        known = set(self.entity_types)
        for rel, pairs in self.relations.items():
            if rel == self.other:
                raise SchemaError(f"{self.other!r} must not carry type pairs")
            for h, t in pairs:
                if h not in known or t not in known:
                    raise SchemaError(f"relation {rel!r} references unknown type pair ({h}, {t})")

    @property
    def substantive(self) -> list[str]:
        return list(self.relations)

    @property
    def labels(self) -> list[str]:
        """Classifier label space: substantive relations then the Other class."""
        return [*self.relations, self.other]

    def label_index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise SchemaError(f"unknown relation label {label!r}") from None

    @property
    def n_conceptual_triples(self) -> int:
        return sum(len(p) for p in self.relations.values())

    def admissible_pairs(self) -> set[tuple[str, str]]:
        return {pair for pairs in self.relations.values() for pair in pairs}

    def allows(self, relation: str, head_type: str, tail_type: str) -> bool:
        if relation == self.other:
            return (head_type, tail_type) in self.admissible_pairs()
        return (head_type, tail_type) in self.relations.get(relation, ())

    def tagset(self) -> TagSet:
        return TagSet(self.entity_types)

    def to_dict(self) -> dict:
        return {
            "entity_types": [{"code": c, "name": self.entity_names.get(c, c)} for c in self.entity_types],
            "relations": [{"name": r, "pairs": [list(p) for p in ps]} for r, ps in self.relations.items()],
            "other": self.other,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RelationSchema":
        types, names = [], {}
        for e in d["entity_types"]:
            if isinstance(e, str):
                types.append(e)
            else:
                types.append(e["code"])
                names[e["code"]] = e.get("name", e["code"])
        rels = {r["name"]: tuple(tuple(p) for p in r["pairs"]) for r in d["relations"]}
        return cls(tuple(types), rels, d.get("other", "Other"), names)

    @classmethod
    def load(cls, path) -> "RelationSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def example_schema() -> RelationSchema:
    """The shipped EXAMPLE schema: 20 entity types, 9 relations, 30 type pairs."""
    text = resources.files("casegraph.data").joinpath("example_schema.json").read_text(encoding="utf-8")
    return RelationSchema.from_dict(json.loads(text))
