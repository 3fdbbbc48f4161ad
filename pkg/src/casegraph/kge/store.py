"""Triple storage with train/valid/test partitions and TSV input."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PARTITIONS = ("train", "valid", "test")


@dataclass
class TripleStore:
    entities: list[str]
    relations: list[str]
    partitions: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.entity_index = {e: i for i, e in enumerate(self.entities)}
        self.relation_index = {r: i for i, r in enumerate(self.relations)}
        if len(self.entity_index) != len(self.entities) or len(self.relation_index) != len(self.relations):
            raise ValueError("duplicate entity or relation names")
        for name in PARTITIONS:
            arr = np.asarray(self.partitions.get(name, np.zeros((0, 3))), dtype=np.int64).reshape(-1, 3)
            if len(arr):
                if arr[:, [0, 2]].min() < 0 or arr[:, [0, 2]].max() >= len(self.entities):
                    raise ValueError(f"{name}: entity index out of range")
                if arr[:, 1].min() < 0 or arr[:, 1].max() >= len(self.relations):
                    raise ValueError(f"{name}: relation index out of range")
                if len(np.unique(arr, axis=0)) != len(arr):
                    raise ValueError(f"{name}: duplicate triples")
            self.partitions[name] = arr

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    @property
    def train(self) -> np.ndarray:
        return self.partitions["train"]

    @property
    def valid(self) -> np.ndarray:
        return self.partitions["valid"]

    @property
    def test(self) -> np.ndarray:
        return self.partitions["test"]

    def all_triples(self) -> np.ndarray:
        return np.concatenate([self.partitions[p] for p in PARTITIONS], axis=0)

    def known(self) -> set[tuple[int, int, int]]:
        return {tuple(map(int, t)) for t in self.all_triples()}

    def entity_id(self, name_or_id) -> int:
        if isinstance(name_or_id, (int, np.integer)):
            if not 0 <= name_or_id < self.n_entities:
                raise KeyError(f"unknown entity id {name_or_id}")
            return int(name_or_id)
        try:
            return self.entity_index[name_or_id]
        except KeyError:
            raise KeyError(f"unknown entity {name_or_id!r}") from None

    def relation_id(self, name_or_id) -> int:
        if isinstance(name_or_id, (int, np.integer)):
            if not 0 <= name_or_id < self.n_relations:
                raise KeyError(f"unknown relation id {name_or_id}")
            return int(name_or_id)
        try:
            return self.relation_index[name_or_id]
        except KeyError:
            raise KeyError(f"unknown relation {name_or_id!r}") from None

    @classmethod
    def from_named(cls, partitions: dict[str, list[tuple[str, str, str]]]) -> "TripleStore":
        """Build from (head, relation, tail) name triples; ids follow first appearance."""
        ents: dict[str, int] = {}
        rels: dict[str, int] = {}
        out = {}
        for name in PARTITIONS:
            rows = []
            for h, r, t in partitions.get(name, []):
                hi = ents.setdefault(h, len(ents))
                ri = rels.setdefault(r, len(rels))
                ti = ents.setdefault(t, len(ents))
                rows.append((hi, ri, ti))
            out[name] = np.array(rows, dtype=np.int64).reshape(-1, 3)
        return cls(list(ents), list(rels), out)

    @classmethod
    def load_tsv(cls, directory) -> "TripleStore":
        """Read train.txt / valid.txt / test.txt of ``head<TAB>relation<TAB>tail`` lines."""
        directory = Path(directory)
        parts = {}
        for name in PARTITIONS:
            path = directory / f"{name}.txt"
            rows = []
            if path.exists():
                for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
                    if not line.strip():
                        continue
                    fields = line.split("\t")
                    if len(fields) != 3:
                        raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
                    rows.append(tuple(fields))
            parts[name] = list(dict.fromkeys(rows))
        return cls.from_named(parts)

    def save_tsv(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name in PARTITIONS:
            lines = [f"{self.entities[h]}\t{self.relations[r]}\t{self.entities[t]}\n" for h, r, t in self.partitions[name]]
            (directory / f"{name}.txt").write_text("".join(lines), encoding="utf-8")
