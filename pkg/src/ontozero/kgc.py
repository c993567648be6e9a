"""Zero-shot knowledge graph completion for unseen relations.

Pipeline pieces:

* ``pretrain_kge`` fits TransE or DistMult vectors on the seen-relation triples.
* ``ExtractorModel`` turns an entity pair into a relation feature
  ``[tanh(f1(h)); tanh(f1(t)); u_h; u_t]`` where ``u`` encodes the (capped)
  one-hop neighbourhood; ``train_extractor`` fits it per relation bag with a
  cosine margin loss around the mean of fixed reference triples.
* ``rank_tail`` scores candidate tails by the average cosine between generated
  relation features and the candidate pair feature, in the filtered setting.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import numcore as nc
from .formats import (read_checkpoint, read_embedding_text, read_pairs, read_triples, write_checkpoint,
                      write_embedding_text, write_pairs, write_triples)

log = logging.getLogger(__name__)

KGE_METHODS = ("transe", "distmult")
PARTITIONS = ("train", "valid", "test")


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------


@dataclass
class KGDataset:
    entities: tuple[str, ...]
    relations: tuple[str, ...]
    triples: list[tuple[str, str, str]]
    relation_split: dict[str, str]

    def __post_init__(self):
        self.entities = tuple(self.entities)
        self.relations = tuple(self.relations)
        self.triples = [tuple(t) for t in self.triples]
        self.eidx = {e: i for i, e in enumerate(self.entities)}
        self.ridx = {r: i for i, r in enumerate(self.relations)}
        bad = set(self.relation_split.values()) - set(PARTITIONS)
        if bad:
            raise ValueError(f"unknown partitions {sorted(bad)}")
        for h, r, t in self.triples:
            if h not in self.eidx or t not in self.eidx:
                raise ValueError(f"triple ({h}, {r}, {t}) uses an unknown entity")
            if r not in self.relation_split:
                raise ValueError(f"relation {r} has no partition")
        seen_entities = {e for h, _, t in self.train_triples for e in (h, t)}
        for h, r, t in self.triples:
            if self.relation_split[r] != "train" and (h not in seen_entities or t not in seen_entities):
                raise ValueError(f"entity of ({h}, {r}, {t}) never appears in training triples")

    def partition(self, name: str) -> tuple[str, ...]:
        return tuple(r for r in self.relations if self.relation_split.get(r) == name)

    @property
    def seen(self) -> tuple[str, ...]:
        return self.partition("train")

    @property
    def unseen(self) -> tuple[str, ...]:
        return self.partition("test")

    def _triples_of(self, name: str):
        return [tr for tr in self.triples if self.relation_split[tr[1]] == name]

    @property
    def train_triples(self):
        return self._triples_of("train")

    @property
    def valid_triples(self):
        return self._triples_of("valid")

    @property
    def test_triples(self):
        return self._triples_of("test")

    def index_triples(self, triples) -> np.ndarray:
        return np.array([(self.eidx[h], self.ridx[r], self.eidx[t]) for h, r, t in triples],
                        dtype=np.int64).reshape(-1, 3)

    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        write_triples(d / "triples.tsv", self.triples)
        write_pairs(d / "relation_split.tsv", [(r, self.relation_split[r]) for r in self.relations])
        return d

    @classmethod
    def load(cls, directory) -> "KGDataset":
        d = Path(directory)
        triples = read_triples(d / "triples.tsv")
        split = read_pairs(d / "relation_split.tsv")
        relations = tuple(r for r, _ in split)
        entities: dict[str, None] = {}
        for h, _, t in triples:
            entities.setdefault(h, None)
            entities.setdefault(t, None)
        return cls(tuple(sorted(entities)), relations, triples, dict(split))


# ---------------------------------------------------------------------------
# metrics and ranking
# ---------------------------------------------------------------------------


def kgc_metrics(ranks) -> dict[str, float]:
    ranks = np.asarray(list(ranks), dtype=np.float64)
    if ranks.size == 0:
        raise ValueError("no ranks to summarise")
    if np.any(ranks < 1):
        raise ValueError("ranks must be >= 1")
    return {
        "MRR": float(np.mean(1.0 / ranks)),
        "Hit@10": float(np.mean(ranks <= 10)),
        "Hit@5": float(np.mean(ranks <= 5)),
        "Hit@1": float(np.mean(ranks <= 1)),
    }


def random_mrr(candidate_counts) -> float:
    """Expected MRR of uniform random ranking: mean over queries of H(|C|) / |C|."""
    counts = list(candidate_counts)
    if not counts:
        raise ValueError("no queries")
    return float(np.mean([sum(1.0 / k for k in range(1, n + 1)) / n for n in counts]))


def rank_of(scores: np.ndarray, candidate_ids: np.ndarray, gold_id: int) -> int:
    """1-based rank of ``gold_id`` under descending score, ties to the lower id."""
    pos = np.flatnonzero(candidate_ids == gold_id)
    if pos.size == 0:
        raise ValueError("gold entity is not among the candidates")
    g = scores[pos[0]]
    better = scores > g
    tied = (scores == g) & (candidate_ids < gold_id)
    return int(1 + better.sum() + tied.sum())


def cosine_rows(a: np.ndarray, b: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Cosine similarity of every row of ``a`` with every row of ``b``."""
    an = a / np.sqrt((a * a).sum(axis=1, keepdims=True) + eps)
    bn = b / np.sqrt((b * b).sum(axis=1, keepdims=True) + eps)
    return an @ bn.T


# ---------------------------------------------------------------------------
# KG embedding pre-training
# ---------------------------------------------------------------------------


@dataclass
class KGEConfig:
    method: str = "transe"
    dim: int = 200
    margin: float = 1.0
    epochs: int = 200
    batch: int = 256
    lr: float = 0.01
    l2: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.method not in KGE_METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {KGE_METHODS}")


@dataclass
class KGEmbedding:
    method: str
    entities: tuple[str, ...]
    relations: tuple[str, ...]
    entity_vectors: np.ndarray
    relation_vectors: np.ndarray
    history: list = field(default_factory=list)

    def score(self, h: np.ndarray, r: np.ndarray, t: np.ndarray) -> np.ndarray:
        return kge_score(self.method, self.entity_vectors[h], self.relation_vectors[r], self.entity_vectors[t])

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        write_embedding_text(d / "entity_vectors.txt", self.entities, self.entity_vectors)
        write_embedding_text(d / "relation_vectors.txt", self.relations, self.relation_vectors)
        (d / "kge_method.txt").write_text(self.method + "\n", encoding="utf-8")

    @classmethod
    def load(cls, directory) -> "KGEmbedding":
        d = Path(directory)
        ents, E = read_embedding_text(d / "entity_vectors.txt")
        rels, R = read_embedding_text(d / "relation_vectors.txt")
        method = (d / "kge_method.txt").read_text(encoding="utf-8").strip()
        return cls(method, ents, rels, E, R)


def kge_score(method: str, h, r, t):
    """TransE: -||h + r - t||; DistMult: <h, diag(r), t>. Works on arrays or tensors."""
    if method == "transe":
        if isinstance(h, nc.Tensor):
            return -nc.norm(h + r - t, axis=-1)
        return -np.linalg.norm(np.asarray(h) + np.asarray(r) - np.asarray(t), axis=-1)
    if method == "distmult":
        if isinstance(h, nc.Tensor):
            return nc.tsum(h * r * t, axis=-1)
        return np.sum(np.asarray(h) * np.asarray(r) * np.asarray(t), axis=-1)
    raise ValueError(f"unknown method {method!r}")


def corrupt_tails(pos: np.ndarray, n_entities: int, known: set, rng: np.random.Generator,
                  tries: int = 20) -> np.ndarray:
    neg = pos.copy()
    for k in range(len(pos)):
        h, r, t = (int(x) for x in pos[k])
        c = t
        for _ in range(tries):
            c = int(rng.integers(n_entities))
            if (h, r, c) not in known:
                break
        neg[k, 2] = c
    return neg


def corrupt(pos: np.ndarray, n_entities: int, known: set, rng: np.random.Generator, tries: int = 20) -> np.ndarray:
    neg = pos.copy()
    for k in range(len(pos)):
        h, r, t = (int(x) for x in pos[k])
        head = rng.random() < 0.5
        cand = (h, r, t)
        for _ in range(tries):
            c = int(rng.integers(n_entities))
            cand = (c, r, t) if head else (h, r, c)
            if cand not in known:
                break
        neg[k] = cand
    return neg


def kge_loss(method: str, E: nc.Tensor, R: nc.Tensor, pos: np.ndarray, neg: np.ndarray,
             margin: float, l2: float) -> nc.Tensor:
    f_pos = kge_score(method, E[pos[:, 0]], R[pos[:, 1]], E[pos[:, 2]])
    f_neg = kge_score(method, E[neg[:, 0]], R[neg[:, 1]], E[neg[:, 2]])
    if method == "transe":
        return nc.hinge(margin + f_neg - f_pos).mean()
    loss = (nc.softplus(-f_pos) + nc.softplus(f_neg)).mean()
    if l2 > 0:
        loss = loss + l2 * (nc.square(E).mean() + nc.square(R).mean())
    return loss


def pretrain_kge(dataset: KGDataset, config: KGEConfig) -> KGEmbedding:
    """Fit entity/relation vectors on the training (seen-relation) triples."""
    if config.method not in KGE_METHODS:
        raise ValueError(f"unknown method {config.method!r}")
    triples = dataset.index_triples(dataset.train_triples)
    if len(triples) == 0:
        raise ValueError("no training triples")
    rng = np.random.default_rng(config.seed)
    bound = 6.0 / math.sqrt(config.dim)
    E = nc.uniform_init(rng, (len(dataset.entities), config.dim), bound)
    R = nc.uniform_init(rng, (len(dataset.relations), config.dim), bound)
    if config.method == "transe":
        R.data /= np.linalg.norm(R.data, axis=1, keepdims=True)
    known = {tuple(int(x) for x in row) for row in triples}
    opt = nc.Adam([E, R], lr=config.lr)
    history = []
    n = len(triples)
    for _ in range(config.epochs):
        if config.method == "transe":
            E.data /= np.maximum(np.linalg.norm(E.data, axis=1, keepdims=True), 1e-12)
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch):
            pos = triples[order[start:start + config.batch]]
            neg = corrupt(pos, len(dataset.entities), known, rng)
            total += opt.minimize(kge_loss(config.method, E, R, pos, neg, config.margin, config.l2)) * len(pos)
        history.append(total / n)
    if config.method == "transe":
        E.data /= np.maximum(np.linalg.norm(E.data, axis=1, keepdims=True), 1e-12)
    return KGEmbedding(config.method, dataset.entities, dataset.relations, E.data.copy(), R.data.copy(), history)


def kge_tail_ranks(kge: KGEmbedding, dataset: KGDataset, triples, known=None) -> list[int]:
    """Filtered tail ranks of ``triples`` under the KG embedding score (all entities as candidates)."""
    known = set(dataset.triples) if known is None else known
    ids = np.arange(len(dataset.entities))
    ranks = []
    for h, r, t in triples:
        hi, ri, ti = dataset.eidx[h], dataset.ridx[r], dataset.eidx[t]
        scores = kge.score(np.full(len(ids), hi), np.full(len(ids), ri), ids)
        keep = np.array([e == t or (h, r, e) not in known for e in dataset.entities])
        ranks.append(rank_of(scores[keep], ids[keep], ti))
    return ranks


# ---------------------------------------------------------------------------
# feature extractor
# ---------------------------------------------------------------------------


@dataclass
class ExtractorConfig:
    ent_out: int = 50
    nbr_out: int = 50
    neighbor_cap: int = 50
    margin: float = 10.0
    lr: float = 5e-4
    n_refs: int = 30
    epochs: int = 100
    batch: int = 64
    finetune: bool = True
    eval_every: int = 10
    seed: int = 0


class NeighborIndex:
    """Outgoing one-hop neighbours (relation, tail) per entity, capped by seeded sampling."""

    def __init__(self, dataset: KGDataset, cap: int, seed: int):
        rng = np.random.default_rng(seed)
        n_e, n_r = len(dataset.entities), len(dataset.relations)
        lists: list[list[tuple[int, int]]] = [[] for _ in range(n_e)]
        for h, r, t in dataset.train_triples:
            lists[dataset.eidx[h]].append((dataset.ridx[r], dataset.eidx[t]))
        self.neighbors: list[list[tuple[int, int]]] = []
        for nb in lists:
            if len(nb) > cap:
                pick = np.sort(rng.choice(len(nb), size=cap, replace=False))
                nb = [nb[i] for i in pick]
            self.neighbors.append(nb)
        self.rel_avg = np.zeros((n_e, n_r))
        self.ent_avg = np.zeros((n_e, n_e))
        for e, nb in enumerate(self.neighbors):
            for r, t in nb:
                self.rel_avg[e, r] += 1.0 / len(nb)
                self.ent_avg[e, t] += 1.0 / len(nb)
        self.has_neighbors = np.array([[1.0 if nb else 0.0] for nb in self.neighbors])

    def count(self, e: int) -> int:
        return len(self.neighbors[e])


class ExtractorModel:
    def __init__(self, dataset: KGDataset, kge: KGEmbedding, config: ExtractorConfig):
        if tuple(kge.entities) != dataset.entities:
            missing = set(dataset.entities) - set(kge.entities)
            if missing:
                raise KeyError(f"missing pretrained vectors for entities {sorted(missing)[:5]}")
        self.config = config
        self.dataset = dataset
        eidx = {e: i for i, e in enumerate(kge.entities)}
        ridx = {r: i for i, r in enumerate(kge.relations)}
        E0 = np.stack([kge.entity_vectors[eidx[e]] for e in dataset.entities])
        R0 = np.zeros((len(dataset.relations), kge.relation_vectors.shape[1]))
        for r in dataset.relations:
            if r in ridx:
                R0[dataset.ridx[r]] = kge.relation_vectors[ridx[r]]
        rng = np.random.default_rng(config.seed)
        self.E = nc.Tensor(E0, requires_grad=config.finetune)
        self.R = nc.Tensor(R0, requires_grad=config.finetune)
        self.f1 = nc.Linear(E0.shape[1], config.ent_out, rng)
        self.f2 = nc.Linear(R0.shape[1] + E0.shape[1], config.nbr_out, rng)
        self.index = NeighborIndex(dataset, config.neighbor_cap, config.seed)
        self.history: dict = {"loss": [], "valid_mrr": []}

    @property
    def out_dim(self) -> int:
        return 2 * self.config.ent_out + 2 * self.config.nbr_out

    def params(self) -> list[nc.Tensor]:
        ps = self.f1.params() + self.f2.params()
        if self.config.finetune:
            ps += [self.E, self.R]
        return ps

    def entity_parts(self) -> tuple[nc.Tensor, nc.Tensor]:
        """Per-entity tanh(f1(x_e)) and neighbourhood vector u_e for all entities."""
        ent = nc.tanh(self.f1(self.E))
        idx = self.index
        mean_in = nc.concat([nc.Tensor(idx.rel_avg) @ self.R, nc.Tensor(idx.ent_avg) @ self.E], axis=1)
        pre = (mean_in @ self.f2.W + self.f2.b) * nc.Tensor(idx.has_neighbors)
        return ent, nc.tanh(pre)

    def pair_features(self, heads: np.ndarray, tails: np.ndarray, parts=None) -> nc.Tensor:
        ent, u = parts if parts is not None else self.entity_parts()
        return nc.concat([ent[heads], ent[tails], u[heads], u[tails]], axis=1)

    def pair_array(self, heads, tails, parts=None) -> np.ndarray:
        with nc.no_graph():
            return self.pair_features(np.asarray(heads), np.asarray(tails), parts).data

    def frozen_parts(self):
        with nc.no_graph():
            ent, u = self.entity_parts()
        return nc.Tensor(ent.data), nc.Tensor(u.data)

    # checkpoint ---------------------------------------------------------

    def save(self, path) -> None:
        meta = {
            "kind": "extractor",
            "config": asdict(self.config),
            "entities": list(self.dataset.entities),
            "relations": list(self.dataset.relations),
        }
        write_checkpoint(path, [self.E.data, self.R.data, *[p.data for p in self.f1.params() + self.f2.params()]],
                         meta)

    @classmethod
    def load(cls, path, dataset: KGDataset) -> "ExtractorModel":
        blocks, meta = read_checkpoint(path)
        if meta.get("kind") != "extractor":
            raise ValueError(f"{path} is not an extractor checkpoint")
        if tuple(meta["entities"]) != dataset.entities or tuple(meta["relations"]) != dataset.relations:
            raise ValueError("extractor checkpoint does not match the dataset")
        E, R, W1, b1, W2, b2 = blocks
        kge = KGEmbedding("transe", dataset.entities, dataset.relations, E, R)
        model = cls(dataset, kge, ExtractorConfig(**meta["config"]))
        model.f1.W.data[:], model.f1.b.data[:] = W1, b1
        model.f2.W.data[:], model.f2.b.data[:] = W2, b2
        return model


def relation_embedding(model: ExtractorModel, h: str, t: str) -> np.ndarray:
    """x_r for one entity pair: [tanh f1(h); tanh f1(t); u_h; u_t]."""
    ds = model.dataset
    if h not in ds.eidx or t not in ds.eidx:
        raise KeyError(f"missing pretrained vector for {h if h not in ds.eidx else t!r}")
    return model.pair_array([ds.eidx[h]], [ds.eidx[t]])[0]


@dataclass
class Bag:
    relation: str
    references: np.ndarray
    positives: np.ndarray


def make_bags(dataset: KGDataset, n_refs: int, seed: int, relations=None) -> list[Bag]:
    """Split each relation's triples once into references and positives."""
    rng = np.random.default_rng(seed)
    relations = dataset.seen if relations is None else relations
    bags = []
    for r in relations:
        rows = dataset.index_triples([tr for tr in dataset.triples if tr[1] == r])
        if len(rows) <= n_refs:
            log.warning("relation %s has %d triples, needs more than %d; skipped", r, len(rows), n_refs)
            continue
        order = rng.permutation(len(rows))
        bags.append(Bag(r, rows[order[:n_refs]], rows[order[n_refs:]]))
    return bags


def extractor_loss(model: ExtractorModel, bag: Bag, pos: np.ndarray, neg: np.ndarray, parts=None) -> nc.Tensor:
    """mean [margin - cos(center, x+) + cos(center, x-)]_+ over the positives."""
    parts = parts if parts is not None else model.entity_parts()
    refs = model.pair_features(bag.references[:, 0], bag.references[:, 2], parts)
    center = refs.mean(axis=0, keepdims=True)
    xp = model.pair_features(pos[:, 0], pos[:, 2], parts)
    xn = model.pair_features(neg[:, 0], neg[:, 2], parts)
    s_pos = nc.cosine(xp, center, axis=1)
    s_neg = nc.cosine(xn, center, axis=1)
    return nc.hinge(model.config.margin - s_pos + s_neg).mean()


def validation_mrr(model: ExtractorModel, bags: list[Bag]) -> float:
    """Tail ranking of held-out relations around their own reference centre."""
    ds = model.dataset
    known = set(ds.triples)
    parts = model.frozen_parts()
    ids = np.arange(len(ds.entities))
    ranks = []
    for bag in bags:
        center = model.pair_array(bag.references[:, 0], bag.references[:, 2], parts).mean(axis=0, keepdims=True)
        r = ds.relations[bag.positives[0, 1]]
        for h, _, t in bag.positives:
            keep = np.array([e == t or (ds.entities[h], r, ds.entities[e]) not in known for e in ids])
            cand = ids[keep]
            x = model.pair_array(np.full(len(cand), h), cand, parts)
            ranks.append(rank_of(cosine_rows(x, center)[:, 0], cand, int(t)))
    return kgc_metrics(ranks)["MRR"] if ranks else float("nan")


def train_extractor(dataset: KGDataset, kge: KGEmbedding, config: ExtractorConfig) -> ExtractorModel:
    model = ExtractorModel(dataset, kge, config)
    bags = make_bags(dataset, config.n_refs, config.seed)
    if not bags:
        raise ValueError("no relation bag is larger than the reference count")
    valid_bags = make_bags(dataset, config.n_refs, config.seed, dataset.partition("valid"))
    known = {tuple(int(x) for x in row) for row in dataset.index_triples(dataset.train_triples)}
    rng = np.random.default_rng(config.seed + 1)
    opt = nc.Adam(model.params(), lr=config.lr)
    best, best_state = -1.0, None
    n_e = len(dataset.entities)
    for epoch in range(config.epochs):
        total, count = 0.0, 0
        for b in rng.permutation(len(bags)):
            bag = bags[b]
            order = rng.permutation(len(bag.positives))
            for start in range(0, len(order), config.batch):
                pos = bag.positives[order[start:start + config.batch]]
                neg = corrupt_tails(pos, n_e, known, rng)
                loss = extractor_loss(model, bag, pos, neg)
                total += opt.minimize(loss) * len(pos)
                count += len(pos)
        model.history["loss"].append(total / count)
        if valid_bags and ((epoch + 1) % config.eval_every == 0 or epoch + 1 == config.epochs):
            mrr = validation_mrr(model, valid_bags)
            model.history["valid_mrr"].append(mrr)
            if mrr > best:
                best, best_state = mrr, [p.data.copy() for p in model.params()]
    if best_state is not None:
        for p, saved in zip(model.params(), best_state):
            p.data[:] = saved
    return model


def real_relation_features(model: ExtractorModel, relations=None, seed: int = 0):
    """Pair features of every training triple, their labels, and per-relation negative centres."""
    ds = model.dataset
    relations = ds.seen if relations is None else relations
    parts = model.frozen_parts()
    known = {tuple(int(x) for x in row) for row in ds.index_triples(ds.train_triples)}
    rng = np.random.default_rng(seed)
    feats, labels, negatives = [], [], {}
    for r in relations:
        rows = ds.index_triples([tr for tr in ds.train_triples if tr[1] == r])
        if len(rows) == 0:
            continue
        feats.append(model.pair_array(rows[:, 0], rows[:, 2], parts))
        labels += [r] * len(rows)
        neg = corrupt_tails(rows, len(ds.entities), known, rng)
        negatives[r] = model.pair_array(neg[:, 0], neg[:, 2], parts).mean(axis=0)
    return np.vstack(feats), labels, negatives


# ---------------------------------------------------------------------------
# zero-shot ranking
# ---------------------------------------------------------------------------


def candidate_scores(generated: np.ndarray, pair_feats: np.ndarray) -> np.ndarray:
    """v(t') = mean_i cos(x^_i, x_(h,t')) for every candidate row."""
    return cosine_rows(pair_feats, np.atleast_2d(generated)).mean(axis=1)


def filtered_candidates(h: str, r: str, gold: str, candidates, known: set) -> list[str]:
    return [c for c in candidates if c == gold or (h, r, c) not in known]


def rank_tail(query: tuple[str, str], generated: np.ndarray, model: ExtractorModel, candidates, gold: str,
              known: set, parts=None) -> int:
    """Filtered 1-based rank of ``gold`` for the query (h, r_u)."""
    h, r = query
    ds = model.dataset
    if gold not in candidates:
        raise ValueError("gold tail is not in the candidate set")
    cand = filtered_candidates(h, r, gold, candidates, known)
    ids = np.array([ds.eidx[c] for c in cand])
    x = model.pair_array(np.full(len(ids), ds.eidx[h]), ids, parts)
    return rank_of(candidate_scores(generated, x), ids, ds.eidx[gold])


def load_candidates(path) -> dict[tuple[str, str], list[str]]:
    """Optional type-constrained candidates: ``h TAB r TAB t1 t2 ...`` per line."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            h, r, rest = line.rstrip("\n").split("\t", 2)
            out[(h, r)] = rest.split()
    return out


@dataclass
class KGCEvalConfig:
    n_generated: int = 20
    seed: int = 0


def evaluate_unseen(dataset: KGDataset, model: ExtractorModel, gan, table, config: KGCEvalConfig,
                    candidates: dict | None = None) -> dict:
    """Zero-shot tail ranking on the test relations; returns metrics, random baseline and ranks."""
    from .feature_gan import generate

    known = set(dataset.triples)
    parts = model.frozen_parts()
    ranks, counts, per_relation = [], [], {}
    for i, r in enumerate(dataset.unseen):
        if r not in table:
            raise KeyError(f"missing embedding for relation {r!r}")
        gen = generate(gan, table[r], config.n_generated, config.seed + 1000 * (i + 1))
        r_ranks = []
        for h, _, t in (tr for tr in dataset.test_triples if tr[1] == r):
            cands = candidates.get((h, r), dataset.entities) if candidates else dataset.entities
            filt = filtered_candidates(h, r, t, cands, known)
            counts.append(len(filt))
            r_ranks.append(rank_tail((h, r), gen, model, cands, t, known, parts))
        per_relation[r] = kgc_metrics(r_ranks) if r_ranks else {}
        ranks += r_ranks
    if not ranks:
        raise ValueError("no test triples for unseen relations")
    return {
        "metrics": kgc_metrics(ranks),
        "random_mrr": random_mrr(counts),
        "per_relation": per_relation,
        "ranks": ranks,
        "candidate_counts": counts,
    }
