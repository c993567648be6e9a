"""Ontological schema data model, file ingestion, ablation and text vectors."""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

TAGS = ("hierarchy", "attribute", "domain_range", "comment", "other")
ABLATABLE = ("hierarchy", "attribute", "domain_range", "comment")
COMMENT_PROPERTY = "rdfs:comment"

# short names used in report tags, after the usual table row labels
ABLATION_LABELS = {
    "comment": "-text",
    "hierarchy": "-hie",
    "attribute": "-att",
    "domain_range": "-domain&range",
}

TRIPLES_FILE = "triples.tsv"
DESCRIPTIONS_FILE = "descriptions.tsv"
TAGS_FILE = "tags.tsv"

_TOKEN_SPLIT = re.compile(r"[\W_]+", re.UNICODE)


class SchemaError(ValueError):
    """Malformed schema input or an invalid schema."""


@dataclass(frozen=True)
class OntologySchema:
    concepts: tuple[str, ...]
    properties: tuple[str, ...]
    triples: tuple[tuple[str, str, str], ...]
    descriptions: dict[str, str] = field(default_factory=dict)
    property_tags: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        concepts = set(self.concepts)
        props = set(self.properties)
        if len(concepts) != len(self.concepts) or len(props) != len(self.properties):
            raise SchemaError("duplicate identifiers")
        for ident in (*self.concepts, *self.properties):
            _check_identifier(ident)
        for h, p, t in self.triples:
            if h not in concepts or t not in concepts:
                raise SchemaError(f"triple ({h}, {p}, {t}) uses an unknown concept")
            if p not in props:
                raise SchemaError(f"triple ({h}, {p}, {t}) uses an unknown property")
            if self.tag(p) == "comment":
                raise SchemaError(f"comment property {p} may not appear in structural triples")
        for c in self.descriptions:
            if c not in concepts:
                raise SchemaError(f"description for unknown concept {c}")
        for p, tag in self.property_tags.items():
            if tag not in TAGS:
                raise SchemaError(f"unknown tag {tag!r} for property {p}")

    def tag(self, prop: str) -> str:
        if prop == COMMENT_PROPERTY:
            return "comment"
        return self.property_tags.get(prop, "other")

    def description(self, concept: str) -> str:
        return self.descriptions.get(concept, "")

    def index(self) -> dict[str, int]:
        return {c: i for i, c in enumerate(self.concepts)}


def _check_identifier(ident: str) -> None:
    if not ident or any(ch.isspace() for ch in ident):
        raise SchemaError(f"invalid identifier {ident!r}")


def _read_tsv(path: Path, ncols: int, *, allow_short_last: bool = False):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t", ncols - 1)
            if allow_short_last and len(parts) == ncols - 1:
                parts.append("")
            if len(parts) != ncols or any(not p for p in parts[: ncols - 1]):
                raise SchemaError(f"{path}:{lineno}: expected {ncols} tab-separated fields")
            yield lineno, parts


def load_tag_map(path) -> dict[str, str]:
    tags = {}
    for lineno, (prop, tag) in _read_tsv(Path(path), 2):
        tag = tag.strip()
        if tag not in TAGS:
            raise SchemaError(f"{path}:{lineno}: unknown tag {tag!r}")
        tags[prop.strip()] = tag
    return tags


def load_schema(triples_source, descriptions_source=None, tag_map=None, *, strict: bool = False) -> OntologySchema:
    """Read a schema from a triples file plus optional descriptions and tags.

    ``tag_map`` may be a path or a ready dict. Properties without a tag are
    tagged ``other``. Triples whose property is tagged ``comment`` (or is
    ``rdfs:comment``) are routed into the descriptions. In strict mode every
    concept must be declared in the descriptions file and every property in
    the tag map.
    """
    if tag_map is None:
        tags: dict[str, str] = {}
    elif isinstance(tag_map, dict):
        tags = dict(tag_map)
    else:
        tags = load_tag_map(tag_map)

    declared: dict[str, str] = {}
    if descriptions_source is not None:
        for lineno, (concept, text) in _read_tsv(Path(descriptions_source), 2, allow_short_last=True):
            concept = concept.strip()
            try:
                _check_identifier(concept)
            except SchemaError as exc:
                raise SchemaError(f"{descriptions_source}:{lineno}: {exc}") from None
            declared[concept] = _join_text(declared.get(concept, ""), text)

    concepts: dict[str, None] = dict.fromkeys(declared)
    properties: dict[str, None] = {}
    triples = []
    comments: dict[str, str] = {}
    for lineno, (h, p, t) in _read_tsv(Path(triples_source), 3):
        h, p = h.strip(), p.strip()
        is_comment = p == COMMENT_PROPERTY or tags.get(p) == "comment"
        if is_comment:
            t = t.strip()
        else:
            t = t.strip()
            if "\t" in t or not t:
                raise SchemaError(f"{triples_source}:{lineno}: expected 3 tab-separated fields")
        try:
            _check_identifier(h)
            _check_identifier(p)
            if not is_comment:
                _check_identifier(t)
        except SchemaError as exc:
            raise SchemaError(f"{triples_source}:{lineno}: {exc}") from None
        if strict:
            undeclared = [x for x in ((h,) if is_comment else (h, t)) if x not in declared]
            if undeclared or p not in tags:
                what = undeclared[0] if undeclared else p
                raise SchemaError(f"{triples_source}:{lineno}: undeclared identifier {what}")
        properties.setdefault(p, None)
        concepts.setdefault(h, None)
        if is_comment:
            comments[h] = _join_text(comments.get(h, ""), t)
        else:
            concepts.setdefault(t, None)
            triples.append((h, p, t))

    descriptions = {}
    for c in concepts:
        text = _join_text(declared.get(c, ""), comments.get(c, ""))
        if text:
            descriptions[c] = text
    for p in properties:
        tags.setdefault(p, "comment" if p == COMMENT_PROPERTY else "other")
    prop_tags = {p: tags[p] for p in sorted(set(properties) | set(tags))}
    return OntologySchema(
        concepts=tuple(sorted(concepts)),
        properties=tuple(sorted(set(properties) | set(prop_tags))),
        triples=tuple(triples),
        descriptions=descriptions,
        property_tags=prop_tags,
    )


def _join_text(a: str, b: str) -> str:
    a, b = " ".join(a.split()), " ".join(b.split())
    return f"{a} {b}" if a and b else a or b


def load_schema_dir(directory, *, strict: bool = False) -> OntologySchema:
    d = Path(directory)
    desc = d / DESCRIPTIONS_FILE
    tags = d / TAGS_FILE
    return load_schema(d / TRIPLES_FILE, desc if desc.exists() else None, tags if tags.exists() else None,
                       strict=strict)


def save_schema(schema: OntologySchema, directory) -> Path:
    """Write the three schema files. Comments live only in the descriptions file."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / TRIPLES_FILE, "w", encoding="utf-8", newline="\n") as fh:
        for h, p, t in schema.triples:
            fh.write(f"{h}\t{p}\t{t}\n")
    with open(d / DESCRIPTIONS_FILE, "w", encoding="utf-8", newline="\n") as fh:
        for c in schema.concepts:
            fh.write(f"{c}\t{schema.description(c)}\n")
    with open(d / TAGS_FILE, "w", encoding="utf-8", newline="\n") as fh:
        for p in schema.properties:
            fh.write(f"{p}\t{schema.tag(p)}\n")
    return d


def ablate(schema: OntologySchema, drop) -> OntologySchema:
    """Copy of ``schema`` without the triples of the dropped property tags.

    Dropping ``comment`` clears the descriptions. Concepts are never removed.
    """
    drop = frozenset(drop)
    unknown = drop - set(ABLATABLE)
    if unknown:
        raise SchemaError(f"unknown ablation tag(s): {sorted(unknown)}")
    triples = tuple(tr for tr in schema.triples if schema.tag(tr[1]) not in drop)
    descriptions = {} if "comment" in drop else dict(schema.descriptions)
    return replace(schema, triples=triples, descriptions=descriptions)


def ablation_label(drop) -> str:
    drop = sorted(set(drop), key=ABLATABLE.index)
    if not drop:
        return "all"
    return "".join(ABLATION_LABELS[t] for t in drop)


# ---------------------------------------------------------------------------
# text vectors
# ---------------------------------------------------------------------------


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


def load_word_vectors(path) -> dict[str, np.ndarray]:
    """Read GloVe-style text vectors: token followed by space-separated floats."""
    table: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                if not line.strip():
                    continue
                raise SchemaError(f"{path}:{lineno}: expected a token and at least one float")
            try:
                vec = np.array([float(x) for x in parts[1:]])
            except ValueError:
                raise SchemaError(f"{path}:{lineno}: non-numeric vector entry") from None
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise SchemaError(f"{path}:{lineno}: dimension {vec.size}, expected {dim}")
            table[parts[0]] = vec
    return table


def save_word_vectors(table: dict[str, np.ndarray], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tok, vec in table.items():
            fh.write(tok + " " + " ".join(repr(float(x)) for x in vec) + "\n")


@dataclass
class TextMatrix:
    concepts: tuple[str, ...]
    vectors: np.ndarray
    idf: dict[str, float]
    n_documents: int

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __getitem__(self, concept: str) -> np.ndarray:
        return self.vectors[self.concepts.index(concept)]


def idf_table(documents: list[list[str]]) -> dict[str, float]:
    """Smoothed inverse document frequency: ln(N / df) + 1."""
    n = len(documents)
    df = Counter(tok for doc in documents for tok in set(doc))
    return {tok: math.log(n / c) + 1.0 for tok, c in df.items()}


def text_vectors(schema: OntologySchema, word_vectors: dict[str, np.ndarray]) -> TextMatrix:
    """TF-IDF weighted mean of word vectors, one row per concept.

    Term frequency is count / document length; IDF is taken over the
    non-empty descriptions of the schema. Out-of-vocabulary tokens are
    skipped and a description with none in vocabulary maps to zero.
    """
    if not word_vectors:
        raise ValueError("word vector table is empty")
    dim = len(next(iter(word_vectors.values())))
    if any(len(v) != dim for v in word_vectors.values()):
        raise ValueError("word vectors have inconsistent dimensions")

    docs = {c: tokenize(schema.description(c)) for c in schema.concepts}
    corpus = [toks for toks in docs.values() if toks]
    idf = idf_table(corpus)
    out = np.zeros((len(schema.concepts), dim))
    for i, c in enumerate(schema.concepts):
        toks = docs[c]
        if not toks:
            continue
        counts = Counter(toks)
        total = np.zeros(dim)
        weight = 0.0
        for tok in sorted(counts):
            vec = word_vectors.get(tok)
            if vec is None:
                continue
            w = counts[tok] / len(toks) * idf[tok]
            total += w * np.asarray(vec, dtype=np.float64)
            weight += w
        if weight > 0:
            out[i] = total / weight
    return TextMatrix(schema.concepts, out, idf, len(corpus))
