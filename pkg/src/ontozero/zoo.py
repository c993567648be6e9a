"""Synthetic fixtures with known ground truth.

IMGC fixtures: each class owns a set of attributes; its feature prototype
is a fixed linear map of its attribute indicator vector, and instances are
prototype plus Gaussian noise. The schema carries the hierarchy, the
attribute edges and short descriptions built from attribute words.

KGC fixtures: entities fall into typed clusters; each relation links a
domain cluster to a range cluster. The schema carries domain/range edges,
a relation and type hierarchy, and descriptions.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .imgc import FeatureDataset
from .ontology import OntologySchema, save_schema, save_word_vectors

FILLER = ("a", "kind", "of", "thing", "with", "and", "that", "has")


class SpecError(ValueError):
    pass


@dataclass
class SyntheticSpec:
    task: str = "imgc"
    # imgc
    n_classes: int = 6
    n_unseen: int = 2
    n_attributes: int = 8
    attrs_per_class: int = 3
    n_groups: int = 2
    feature_dim: int = 32
    noise: float = 0.1
    train_per_class: int = 100
    test_per_class: int = 50
    attribute_only: bool = False
    duplicate_unseen_attributes: bool = False
    # kgc
    n_entities: int = 200
    n_relations: int = 10
    n_unseen_relations: int = 2
    n_clusters: int = 5
    triples_per_relation: int = 80
    # shared
    word_dim: int = 16
    seed: int = 0

    def validate(self) -> None:
        if self.task not in ("imgc", "kgc"):
            raise SpecError(f"task must be imgc or kgc, got {self.task!r}")
        if self.task == "imgc":
            if not 0 < self.n_unseen < self.n_classes:
                raise SpecError("need at least one seen and one unseen class")
            if not 0 < self.attrs_per_class <= self.n_attributes:
                raise SpecError("attrs_per_class must be in [1, n_attributes]")
            if self.noise < 0 or self.feature_dim < 1 or self.n_groups < 1:
                raise SpecError("noise must be non-negative, dims and groups positive")
            if self.train_per_class < 1 or self.test_per_class < 1:
                raise SpecError("need at least one train and test row per class")
        else:
            if not 0 < self.n_unseen_relations < self.n_relations:
                raise SpecError("need at least one seen and one unseen relation")
            if self.n_clusters < 2 or self.n_entities < 2 * self.n_clusters:
                raise SpecError("need at least two clusters of two entities")
            if self.triples_per_relation < 1:
                raise SpecError("triples_per_relation must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise SpecError(f"unknown spec keys: {sorted(unknown)}")
        spec = cls(**data)
        spec.validate()
        return spec

    @classmethod
    def load(cls, path) -> "SyntheticSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def class_name(i: int) -> str:
    return f"class{i:02d}"


def attribute_name(k: int) -> str:
    return f"attr{k:02d}"


def _in_affine_hull(rows: np.ndarray, v: np.ndarray, tol: float = 1e-8) -> bool:
    M = np.vstack([rows.T, np.ones(len(rows))])
    target = np.append(v, 1.0)
    coef = np.linalg.lstsq(M, target, rcond=None)[0]
    return float(np.abs(M @ coef - target).max()) < tol


def _attribute_matrix(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Distinct attribute sets; unseen sets lie in the affine hull of the seen ones.

    The hull condition makes every unseen prototype an affine combination of
    seen prototypes, so transfer is identifiable from the seen classes.
    """
    n, k, m = spec.n_classes, spec.n_attributes, spec.attrs_per_class
    n_seen = n - spec.n_unseen
    combos = [np.array(c) for c in itertools.combinations(range(k), m)]
    if len(combos) < n - int(spec.duplicate_unseen_attributes):
        raise SpecError("too few distinct attribute sets for the number of classes")

    def indicator(c):
        row = np.zeros(k, dtype=np.int64)
        row[c] = 1
        return row

    for _ in range(2000):
        picks = rng.choice(len(combos), size=n_seen, replace=False)
        seen = np.stack([indicator(combos[i]) for i in picks])
        if seen.sum(axis=0).min() == 0 and m * n_seen >= k:
            continue
        taken = set(int(i) for i in picks)
        pool = [i for i in rng.permutation(len(combos))
                if int(i) not in taken and _in_affine_hull(seen, indicator(combos[i]))]
        need = spec.n_unseen - int(spec.duplicate_unseen_attributes)
        if len(pool) < need:
            continue
        unseen = [indicator(combos[i]) for i in pool[:need]]
        if spec.duplicate_unseen_attributes:
            unseen.append(unseen[-1].copy())
        return np.vstack([seen, *unseen])
    raise SpecError("could not draw transferable attribute sets; relax the fixture spec")


def make_imgc_fixture(spec: SyntheticSpec):
    """Schema, feature dataset, and ground truth (prototypes, attributes, word vectors)."""
    spec.validate()
    if spec.task != "imgc":
        raise SpecError("make_imgc_fixture needs task='imgc'")
    rng = np.random.default_rng(spec.seed)
    n, k = spec.n_classes, spec.n_attributes
    classes = [class_name(i) for i in range(n)]
    attrs = [attribute_name(j) for j in range(k)]
    A = _attribute_matrix(spec, rng)
    proto_map = rng.standard_normal((k, spec.feature_dim))
    prototypes = A @ proto_map

    n_seen = n - spec.n_unseen
    split = {c: ("seen" if i < n_seen else "unseen") for i, c in enumerate(classes)}
    noise = spec.noise
    train_X, train_y, test_X, test_y = [], [], [], []
    for i, c in enumerate(classes):
        if split[c] == "seen":
            train_X.append(prototypes[i] + noise * rng.standard_normal((spec.train_per_class, spec.feature_dim)))
            train_y += [c] * spec.train_per_class
        test_X.append(prototypes[i] + noise * rng.standard_normal((spec.test_per_class, spec.feature_dim)))
        test_y += [c] * spec.test_per_class
    dataset = FeatureDataset(np.vstack(train_X), train_y, np.vstack(test_X), test_y, split)

    # schema
    triples = []
    groups = [f"group{g}" for g in range(spec.n_groups)]
    if spec.attribute_only:
        parents = ["animal"] * n
        hierarchy_concepts = ["animal"]
    else:
        parents = [groups[i % spec.n_groups] for i in range(n)]
        hierarchy_concepts = ["animal", *groups]
        triples += [(g, "rdfs:subClassOf", "animal") for g in groups]
    triples += [(c, "rdfs:subClassOf", parents[i]) for i, c in enumerate(classes)]
    half = (k + 1) // 2
    for i, c in enumerate(classes):
        for j in np.flatnonzero(A[i]):
            prop = "imgc:hasColor" if j < half else "imgc:hasPart"
            triples.append((c, prop, attrs[j]))

    words = {f"w{a}": a for a in attrs}
    descriptions = {}
    for i, c in enumerate(classes):
        if spec.attribute_only:
            descriptions[c] = "a kind of thing"
        else:
            attr_words = " and ".join(f"w{attrs[j]}" for j in np.flatnonzero(A[i]))
            descriptions[c] = f"a kind of thing with {attr_words}"
    for a in attrs:
        descriptions[a] = f"w{a}"
    for h in hierarchy_concepts:
        descriptions[h] = "a kind of thing"

    concepts = tuple(sorted(set(classes) | set(attrs) | set(hierarchy_concepts)))
    tags = {"rdfs:subClassOf": "hierarchy", "imgc:hasColor": "attribute", "imgc:hasPart": "attribute",
            "rdfs:comment": "comment"}
    schema = OntologySchema(concepts, tuple(sorted(tags)), tuple(triples), descriptions, tags)

    vocab = sorted(set(FILLER) | set(words))
    word_vectors = {w: rng.standard_normal(spec.word_dim) for w in vocab}
    truth = {
        "task": "imgc",
        "classes": classes,
        "split": split,
        "attributes": {c: [attrs[j] for j in np.flatnonzero(A[i])] for i, c in enumerate(classes)},
        "prototypes": {c: prototypes[i].tolist() for i, c in enumerate(classes)},
    }
    return schema, dataset, truth, word_vectors


def nearest_prototype(X: np.ndarray, prototypes: dict[str, np.ndarray], classes) -> list[str]:
    classes = list(classes)
    P = np.stack([np.asarray(prototypes[c]) for c in classes])
    d = ((X[:, None, :] - P[None, :, :]) ** 2).sum(axis=2)
    return [classes[i] for i in np.argmin(d, axis=1)]


def write_imgc_fixture(spec: SyntheticSpec, directory) -> Path:
    schema, dataset, truth, word_vectors = make_imgc_fixture(spec)
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_schema(schema, d / "schema")
    dataset.save(d / "features")
    save_word_vectors(word_vectors, d / "word_vectors.txt")
    _write_json(d / "ground_truth.json", truth)
    _write_json(d / "spec.json", asdict(spec))
    return d


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def entity_name(i: int) -> str:
    return f"ent{i:03d}"


def relation_name(i: int) -> str:
    return f"rel{i:02d}"


def type_name(i: int) -> str:
    return f"type{i}"


KGC_TAGS = {"kgc:domain": "domain_range", "kgc:range": "domain_range", "rdfs:subPropertyOf": "hierarchy",
            "rdfs:subClassOf": "hierarchy", "rdfs:comment": "comment"}


def _kgc_layout(spec: SyntheticSpec, rng: np.random.Generator):
    """Entity clusters plus (domain, range) cluster pairs; unseen relations copy a seen twin's pair."""
    n_e, n_c = spec.n_entities, spec.n_clusters
    cluster = np.array([i * n_c // n_e for i in range(n_e)])
    n_seen = spec.n_relations - spec.n_unseen_relations
    pairs = [(a, b) for a in range(n_c) for b in range(n_c)]
    if n_seen > len(pairs):
        raise SpecError("more seen relations than distinct (domain, range) cluster pairs")
    picked = [pairs[i] for i in rng.choice(len(pairs), size=n_seen, replace=False)]
    twins = rng.choice(n_seen, size=spec.n_unseen_relations, replace=spec.n_unseen_relations > n_seen)
    dom_rng = picked + [picked[int(j)] for j in twins]
    return cluster, dom_rng, [int(j) for j in twins]


def _sample_triples(members_h, members_t, count, rng, allowed=None):
    """Up to ``count`` distinct (h, t) pairs drawn uniformly from the two clusters."""
    hs = np.array([e for e in members_h if allowed is None or e in allowed])
    ts = np.array([e for e in members_t if allowed is None or e in allowed])
    total = len(hs) * len(ts)
    if total == 0:
        return []
    flat = rng.choice(total, size=min(count, total), replace=False)
    return sorted((int(hs[f // len(ts)]), int(ts[f % len(ts)])) for f in flat)


def make_kgc_fixture(spec: SyntheticSpec):
    """Schema, KG dataset and ground truth (clusters, domain/range, twins)."""
    from .kgc import KGDataset

    spec.validate()
    if spec.task != "kgc":
        raise SpecError("make_kgc_fixture needs task='kgc'")
    rng = np.random.default_rng(spec.seed)
    cluster, dom_rng, twins = _kgc_layout(spec, rng)
    entities = [entity_name(i) for i in range(spec.n_entities)]
    relations = [relation_name(i) for i in range(spec.n_relations)]
    types = [type_name(c) for c in range(spec.n_clusters)]
    n_seen = spec.n_relations - spec.n_unseen_relations
    members = [np.flatnonzero(cluster == c) for c in range(spec.n_clusters)]

    triples = []
    for r in range(n_seen):
        d, g = dom_rng[r]
        triples += [(entities[h], relations[r], entities[t])
                    for h, t in _sample_triples(members[d], members[g], spec.triples_per_relation, rng)]
    in_train = {entities.index(e) for h, _, t in triples for e in (h, t)}
    for r in range(n_seen, spec.n_relations):
        d, g = dom_rng[r]
        pairs = _sample_triples(members[d], members[g], spec.triples_per_relation, rng, in_train)
        if not pairs:
            raise SpecError(f"unseen relation {relations[r]} has no entity pair covered by training triples")
        triples += [(entities[h], relations[r], entities[t]) for h, t in pairs]
    split = {r: ("train" if i < n_seen else "test") for i, r in enumerate(relations)}
    dataset = KGDataset(tuple(entities), tuple(relations), triples, split)

    # schema: relations and types are concepts; a relation group per domain type
    schema_triples = []
    groups = sorted({f"relgroup{dom_rng[i][0]}" for i in range(spec.n_relations)})
    for t in types:
        schema_triples.append((t, "rdfs:subClassOf", "kgc:Thing"))
    for g in groups:
        schema_triples.append((g, "rdfs:subPropertyOf", "kgc:Relation"))
    descriptions = {"kgc:Thing": "a kind of thing", "kgc:Relation": "a kind of thing"}
    for i, r in enumerate(relations):
        d, g = dom_rng[i]
        schema_triples += [(r, "kgc:domain", types[d]), (r, "kgc:range", types[g]),
                           (r, "rdfs:subPropertyOf", f"relgroup{d}")]
        descriptions[r] = f"a kind of thing that has w{types[d]} and w{types[g]}"
    for c, t in enumerate(types):
        descriptions[t] = f"w{t}"
    for g in groups:
        descriptions[g] = "a kind of thing"
    concepts = tuple(sorted({h for h, _, _ in schema_triples} | {t for _, _, t in schema_triples}))
    schema = OntologySchema(concepts, tuple(sorted(KGC_TAGS)), tuple(schema_triples), descriptions, dict(KGC_TAGS))

    vocab = sorted(set(FILLER) | {f"w{t}" for t in types})
    word_vectors = {w: rng.standard_normal(spec.word_dim) for w in vocab}
    truth = {
        "task": "kgc",
        "clusters": {e: types[int(cluster[i])] for i, e in enumerate(entities)},
        "domain_range": {r: [types[dom_rng[i][0]], types[dom_rng[i][1]]] for i, r in enumerate(relations)},
        "twins": {relations[n_seen + k]: relations[j] for k, j in enumerate(twins)},
        "split": split,
    }
    return schema, dataset, truth, word_vectors


def write_kgc_fixture(spec: SyntheticSpec, directory) -> Path:
    schema, dataset, truth, word_vectors = make_kgc_fixture(spec)
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_schema(schema, d / "schema")
    dataset.save(d / "kg")
    save_word_vectors(word_vectors, d / "word_vectors.txt")
    _write_json(d / "ground_truth.json", truth)
    _write_json(d / "spec.json", asdict(spec))
    return d


def write_fixture(spec: SyntheticSpec, directory) -> Path:
    return write_imgc_fixture(spec, directory) if spec.task == "imgc" else write_kgc_fixture(spec, directory)


def schema_distance(schema: OntologySchema, a: str, b: str) -> int:
    """Undirected hop count between two concepts over the schema triples (-1 if disconnected)."""
    adj: dict[str, set[str]] = {}
    for h, _, t in schema.triples:
        adj.setdefault(h, set()).add(t)
        adj.setdefault(t, set()).add(h)
    frontier, seen, dist = [a], {a}, 0
    while frontier:
        if b in frontier:
            return dist
        nxt = []
        for node in frontier:
            for n in adj.get(node, ()):
                if n not in seen:
                    seen.add(n)
                    nxt.append(n)
        frontier, dist = nxt, dist + 1
    return -1


def chain_schema() -> OntologySchema:
    """Five concepts: a chain a < b < c plus one attribute edge on each of a and b."""
    triples = (
        ("a", "rdfs:subClassOf", "b"),
        ("b", "rdfs:subClassOf", "c"),
        ("a", "hasAttr", "x"),
        ("b", "hasAttr", "y"),
    )
    descriptions = {"a": "small striped thing", "b": "striped thing", "c": "thing", "x": "stripes", "y": "legs"}
    tags = {"rdfs:subClassOf": "hierarchy", "hasAttr": "attribute", "rdfs:comment": "comment"}
    return OntologySchema(("a", "b", "c", "x", "y"), tuple(sorted(tags)), triples, descriptions, tags)
