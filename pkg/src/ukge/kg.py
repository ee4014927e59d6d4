"""N-Triples ingestion, dictionary interning and the binary graph format."""

from __future__ import annotations

import gzip
import io
import logging
import re
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, Sequence

import numpy as np

logger = logging.getLogger(__name__)

GRAPH_MAGIC = b"UKG1"
_FLAG_IDS32 = 0
_HEADER = struct.Struct("<4sBQQQ")
_LEN = struct.Struct("<I")

_IRI = r"<([^<>\"{}|^`\\\s]+)>"
_BNODE = r"_:[^\s<>\"]+?"
_LITERAL = r'"(?:[^"\\]|\\.)*"(?:@[A-Za-z]+(?:-[A-Za-z0-9]+)*|\^\^<[^<>\s]+>)?'
_LINE = re.compile(
    rf"^(?:{_IRI}|(?P<sb>{_BNODE}))\s+{_IRI}\s+"
    rf"(?:{_IRI}|(?P<ob>{_BNODE})|(?P<lit>{_LITERAL}))\s*\.\s*(?:#.*)?$"
)


class NTriplesError(ValueError):
    """A malformed statement encountered in strict mode."""

    def __init__(self, lineno: int, line: str):
        super().__init__(f"malformed N-Triples statement at line {lineno}: {line[:120]!r}")
        self.lineno = lineno


class GraphFormatError(ValueError):
    pass


def check_iri(value: str) -> str:
    if not value or any(ch.isspace() for ch in value) or value[0] == "<" or value[-1] == ">":
        raise ValueError(f"not a bare absolute IRI: {value!r}")
    return value


@dataclass
class ParseStats:
    total_lines: int = 0
    yielded: int = 0
    skipped_literals: int = 0
    skipped_blank_nodes: int = 0
    malformed: int = 0
    blank: int = 0

    def balanced(self) -> bool:
        return self.total_lines == (
            self.yielded + self.skipped_literals + self.skipped_blank_nodes + self.malformed + self.blank
        )


def open_source(path: str | Path) -> BinaryIO:
    """Open a file for binary reading, transparently decompressing gzip by magic bytes."""
    fh = open(path, "rb")
    head = fh.peek(2)[:2] if hasattr(fh, "peek") else b""
    if head == b"\x1f\x8b":
        return gzip.GzipFile(fileobj=fh, mode="rb")  # type: ignore[return-value]
    return fh


def parse_ntriples(
    source: BinaryIO | Iterable[bytes] | Iterable[str],
    stats: ParseStats | None = None,
    strict: bool = False,
) -> Iterator[tuple[str, str, str]]:
    """Yield ``(subject, predicate, object)`` IRIs for every IRI-object statement.

    Literal and blank-node statements are counted in ``stats`` and dropped.
    Malformed lines are counted and skipped unless ``strict`` is set, in which
    case :class:`NTriplesError` is raised.
    """
    if stats is None:
        stats = ParseStats()
    for lineno, raw in enumerate(source, start=1):
        stats.total_lines += 1
        if isinstance(raw, bytes):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError:
                stats.malformed += 1
                if strict:
                    raise NTriplesError(lineno, raw.decode("utf-8", "replace"))
                continue
        else:
            line = raw
        line = line.strip()
        if not line or line.startswith("#"):
            stats.blank += 1
            continue
        m = _LINE.match(line)
        if m is None:
            stats.malformed += 1
            if strict:
                raise NTriplesError(lineno, line)
            continue
        if m.group("lit") is not None:
            stats.skipped_literals += 1
            continue
        if m.group("sb") is not None or m.group("ob") is not None:
            stats.skipped_blank_nodes += 1
            continue
        s, p, o = m.group(1), m.group(3), m.group(4)
        stats.yielded += 1
        yield s, p, o


def read_ntriples(path: str | Path, strict: bool = False) -> tuple["KnowledgeGraph", ParseStats]:
    stats = ParseStats()
    with open_source(path) as fh:
        g = build_graph(parse_ntriples(fh, stats, strict=strict))
    return g, stats


@dataclass(frozen=True, eq=False)
class KnowledgeGraph:
    """An interned triple set.

    ``triples`` is an ``(n, 3)`` int64 array of ``(head, relation, tail)`` ids in
    insertion order; ids index into ``entities`` and ``relations``.
    """

    entities: tuple[str, ...] = ()
    relations: tuple[str, ...] = ()
    triples: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    def __post_init__(self):
        arr = np.ascontiguousarray(self.triples, dtype=np.int64).reshape(-1, 3)
        arr.setflags(write=False)
        object.__setattr__(self, "triples", arr)

    @cached_property
    def entity_index(self) -> dict[str, int]:
        return {iri: i for i, iri in enumerate(self.entities)}

    @cached_property
    def relation_index(self) -> dict[str, int]:
        return {iri: i for i, iri in enumerate(self.relations)}

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def __len__(self) -> int:
        return len(self.triples)

    def iter_iri_triples(self) -> Iterator[tuple[str, str, str]]:
        ents, rels = self.entities, self.relations
        for h, r, t in self.triples.tolist():
            yield ents[h], rels[r], ents[t]

    def triple_set(self) -> set[tuple[str, str, str]]:
        return set(self.iter_iri_triples())

    def subgraph(self, rows: np.ndarray) -> "KnowledgeGraph":
        """Re-intern the selected triple rows (boolean mask or index array) into a fresh graph."""
        return reintern(self.entities, self.relations, self.triples[rows])

    def same_as(self, other: "KnowledgeGraph") -> bool:
        """Identity including id assignment."""
        return (
            self.entities == other.entities
            and self.relations == other.relations
            and np.array_equal(self.triples, other.triples)
        )


def _first_appearance(ids: np.ndarray) -> np.ndarray:
    _, first = np.unique(ids, return_index=True)
    return ids[np.sort(first)]


def reintern(entities: Sequence[str], relations: Sequence[str], triples: np.ndarray) -> KnowledgeGraph:
    """Build a graph from id triples over foreign dictionaries, keeping first-appearance order."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if len(triples) == 0:
        return KnowledgeGraph()
    # entity order of build_graph: head then tail of each triple in turn
    ent_order = _first_appearance(triples[:, [0, 2]].ravel())
    rel_order = _first_appearance(triples[:, 1])
    ent_map = np.full(int(triples[:, [0, 2]].max()) + 1, -1, dtype=np.int64)
    ent_map[ent_order] = np.arange(len(ent_order))
    rel_map = np.full(int(triples[:, 1].max()) + 1, -1, dtype=np.int64)
    rel_map[rel_order] = np.arange(len(rel_order))
    new = np.stack([ent_map[triples[:, 0]], rel_map[triples[:, 1]], ent_map[triples[:, 2]]], axis=1)
    _, keep = np.unique(new, axis=0, return_index=True)
    new = new[np.sort(keep)]
    return KnowledgeGraph(
        tuple(entities[i] for i in ent_order.tolist()),
        tuple(relations[i] for i in rel_order.tolist()),
        new,
    )


def build_graph(triples: Iterable[tuple[str, str, str]]) -> KnowledgeGraph:
    """Intern an IRI triple stream; ids are dense in first-appearance order, duplicates collapse."""
    ents: dict[str, int] = {}
    rels: dict[str, int] = {}
    seen: set[tuple[int, int, int]] = set()
    rows: list[tuple[int, int, int]] = []
    for s, p, o in triples:
        h = ents.setdefault(s, len(ents))
        r = rels.setdefault(p, len(rels))
        t = ents.setdefault(o, len(ents))
        key = (h, r, t)
        if key not in seen:
            seen.add(key)
            rows.append(key)
    arr = np.array(rows, dtype=np.int64).reshape(-1, 3)
    return KnowledgeGraph(tuple(ents), tuple(rels), arr)


@dataclass(frozen=True)
class GraphStats:
    num_entities: int
    num_relations: int
    num_triples: int

    @property
    def avg_degree(self) -> float:
        # each triple adds one edge to its head and one to its tail
        if self.num_entities == 0:
            return 0.0
        return 2.0 * self.num_triples / self.num_entities

    def as_dict(self) -> dict:
        return {
            "num_entities": self.num_entities,
            "num_relations": self.num_relations,
            "num_triples": self.num_triples,
            "avg_degree": round(self.avg_degree, 2),
        }

    def __str__(self) -> str:
        return (
            f"|E|={self.num_entities:,} |R|={self.num_relations:,} "
            f"|G|={self.num_triples:,} Deg.={self.avg_degree:.2f}"
        )


def graph_stats(g: KnowledgeGraph) -> GraphStats:
    return GraphStats(g.num_entities, g.num_relations, len(g))


def _write_dictionary(sink: BinaryIO, items: Sequence[str]) -> None:
    for item in items:
        data = item.encode("utf-8")
        sink.write(_LEN.pack(len(data)))
        sink.write(data)


def write_graph(g: KnowledgeGraph, sink: BinaryIO | str | Path) -> None:
    if isinstance(sink, (str, Path)):
        with open(sink, "wb") as fh:
            write_graph(g, fh)
        return
    if g.num_entities > 0xFFFFFFFF or g.num_relations > 0xFFFFFFFF:
        raise GraphFormatError("graph exceeds 32-bit id space")
    sink.write(_HEADER.pack(GRAPH_MAGIC, _FLAG_IDS32, g.num_entities, g.num_relations, len(g)))
    _write_dictionary(sink, g.entities)
    _write_dictionary(sink, g.relations)
    sink.write(g.triples.astype("<u4").tobytes())


def _read_exact(source: BinaryIO, n: int) -> bytes:
    data = source.read(n)
    if len(data) != n:
        raise GraphFormatError("truncated graph payload")
    return data


def _read_dictionary(source: BinaryIO, count: int) -> tuple[str, ...]:
    out = []
    for _ in range(count):
        (n,) = _LEN.unpack(_read_exact(source, _LEN.size))
        try:
            out.append(_read_exact(source, n).decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise GraphFormatError("dictionary entry is not UTF-8") from exc
    return tuple(out)


def read_graph(source: BinaryIO | str | Path) -> KnowledgeGraph:
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            return read_graph(fh)
    header = source.read(_HEADER.size)
    if len(header) < 4 or header[:4] != GRAPH_MAGIC:
        raise GraphFormatError("bad magic bytes, not a UKG1 graph file")
    if len(header) != _HEADER.size:
        raise GraphFormatError("truncated header")
    _, flag, n_ent, n_rel, n_tri = _HEADER.unpack(header)
    if flag != _FLAG_IDS32:
        raise GraphFormatError(f"unsupported graph format flag {flag}")
    entities = _read_dictionary(source, n_ent)
    relations = _read_dictionary(source, n_rel)
    raw = _read_exact(source, 12 * n_tri)
    if source.read(1):
        raise GraphFormatError("trailing bytes after triple block")
    triples = np.frombuffer(raw, dtype="<u4").reshape(-1, 3).astype(np.int64)
    if n_tri and (
        triples[:, [0, 2]].max() >= n_ent or triples[:, 1].max() >= n_rel
    ):
        raise GraphFormatError("triple id out of dictionary range")
    return KnowledgeGraph(entities, relations, triples)


def load_graph(path: str | Path, strict: bool = False) -> KnowledgeGraph:
    """Load either a binary ``UKG1`` file or N-Triples (optionally gzipped)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == GRAPH_MAGIC:
        return read_graph(path)
    g, stats = read_ntriples(path, strict=strict)
    logger.info("parsed %s: %s", path, stats)
    return g


def write_ntriples(g: KnowledgeGraph, sink: io.TextIOBase | str | Path) -> None:
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8") as fh:
            write_ntriples(g, fh)
        return
    for s, p, o in g.iter_iri_triples():
        sink.write(f"<{s}> <{p}> <{o}> .\n")


def sidecar(path: str | Path, suffix: str) -> Path:
    """Companion file path: ``model.uke`` + ``.entities.tsv`` -> ``model.entities.tsv``."""
    p = Path(path)
    return p.with_name(p.stem + suffix)


def write_dictionary_tsv(items: Sequence[str], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, iri in enumerate(items):
            fh.write(f"{i}\t{iri}\n")


def read_dictionary_tsv(path: str | Path) -> list[str]:
    items: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.rstrip("\n")
            if not line:
                continue
            idx, _, iri = line.partition("\t")
            if not idx.isdigit() or int(idx) != len(items) or not iri:
                raise GraphFormatError(f"{path}:{lineno + 1}: expected '<id>\\t<iri>' with dense ids")
            items.append(iri)
    return items
