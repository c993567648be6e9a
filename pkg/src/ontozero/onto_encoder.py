"""Text-aware translational embedding of an ontological schema.

Concepts carry a structural vector and a text vector (from ``TextMatrix``).
Both are projected into one space by single fully connected layers and
trained with the sum of five translational distances (structure, text, the
two crossed forms and the additive form). The emitted concept embedding is
``[c^s ; c^t]``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import numcore as nc
from .formats import read_embedding_text, write_embedding_text
from .ontology import OntologySchema, TextMatrix

MODES = ("default", "text_aware")


@dataclass
class EncoderConfig:
    margin: float = 12.0
    dim: int = 100
    epochs: int = 1000
    batch: int = 128
    lr: float = 1e-3
    mode: str = "text_aware"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.dim < 1 or self.epochs < 0 or self.batch < 1:
            raise ValueError("dim and batch must be positive, epochs non-negative")


@dataclass
class ConceptEmbeddingTable:
    concepts: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self):
        self.concepts = tuple(self.concepts)
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self._index = {c: i for i, c in enumerate(self.concepts)}

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __contains__(self, concept: str) -> bool:
        return concept in self._index

    def __getitem__(self, concept: str) -> np.ndarray:
        try:
            return self.vectors[self._index[concept]]
        except KeyError:
            raise KeyError(f"no embedding for {concept!r}") from None

    def rows(self, concepts) -> np.ndarray:
        return np.stack([self[c] for c in concepts])

    def save(self, path) -> None:
        write_embedding_text(path, self.concepts, self.vectors)

    @classmethod
    def load(cls, path) -> "ConceptEmbeddingTable":
        ids, vecs = read_embedding_text(path)
        return cls(ids, vecs)


# ---------------------------------------------------------------------------
# score functions (plain numpy, for inspection and tests)
# ---------------------------------------------------------------------------


def _same_dims(*vs):
    vs = [np.asarray(v, dtype=np.float64) for v in vs]
    if len({v.shape for v in vs}) != 1:
        raise ValueError(f"dimension mismatch: {[v.shape for v in vs]}")
    return vs


def score_structural(ci_s, p_s, cj_s) -> float:
    ci_s, p_s, cj_s = _same_dims(ci_s, p_s, cj_s)
    return -float(np.linalg.norm(ci_s + p_s - cj_s))


def score_terms(ci_s, ci_t, p_s, cj_s, cj_t) -> dict[str, float]:
    ci_s, ci_t, p_s, cj_s, cj_t = _same_dims(ci_s, ci_t, p_s, cj_s, cj_t)
    n = np.linalg.norm
    return {
        "s": -float(n(ci_s + p_s - cj_s)),
        "t": -float(n(ci_t + p_s - cj_t)),
        "st": -float(n(ci_s + p_s - cj_t)),
        "ts": -float(n(ci_t + p_s - cj_s)),
        "add": -float(n((ci_s + ci_t) + p_s - (cj_s + cj_t))),
    }


def score_full(ci_s, ci_t, p_s, cj_s, cj_t) -> float:
    return sum(score_terms(ci_s, ci_t, p_s, cj_s, cj_t).values())


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


class EncoderModel:
    def __init__(self, schema: OntologySchema, text: TextMatrix | None, config: EncoderConfig):
        self.config = config
        self.concepts = schema.concepts
        self.properties = tuple(p for p in schema.properties if schema.tag(p) != "comment")
        self.cidx = {c: i for i, c in enumerate(self.concepts)}
        self.pidx = {p: i for i, p in enumerate(self.properties)}
        rng = np.random.default_rng(config.seed)
        dim = config.dim
        bound = 6.0 / np.sqrt(dim)
        self.C = nc.uniform_init(rng, (len(self.concepts), dim), bound)
        self.P = nc.uniform_init(rng, (len(self.properties), dim), bound)
        self._renormalize()
        if text is None:
            text_rows = np.zeros((len(self.concepts), 1))
        else:
            if tuple(text.concepts) != tuple(self.concepts):
                text_rows = np.stack([text[c] for c in self.concepts])
            else:
                text_rows = text.vectors
        self.text = nc.Tensor(text_rows)
        self.proj_c = nc.Linear(dim, dim, rng, bound)
        self.proj_p = nc.Linear(dim, dim, rng, bound)
        self.proj_t = nc.Linear(self.text.shape[1], dim, rng, bound)
        self.history: list[float] = []

    @property
    def text_aware(self) -> bool:
        return self.config.mode == "text_aware"

    def params(self) -> list[nc.Tensor]:
        ps = [self.C, self.P]
        if self.text_aware:
            ps += self.proj_c.params() + self.proj_p.params() + self.proj_t.params()
        return ps

    def _renormalize(self) -> None:
        norms = np.linalg.norm(self.C.data, axis=1, keepdims=True)
        self.C.data /= np.where(norms > 0, norms, 1.0)

    def score(self, h: np.ndarray, r: np.ndarray, t: np.ndarray) -> nc.Tensor:
        """Plausibility of a batch of index triples (higher is better)."""
        if not self.text_aware:
            return -nc.norm(self.C[h] + self.P[r] - self.C[t], axis=1)
        hs, ts = self.proj_c(self.C[h]), self.proj_c(self.C[t])
        ht, tt = self.proj_t(self.text[h]), self.proj_t(self.text[t])
        ps = self.proj_p(self.P[r])
        terms = (
            nc.norm(hs + ps - ts, axis=1),
            nc.norm(ht + ps - tt, axis=1),
            nc.norm(hs + ps - tt, axis=1),
            nc.norm(ht + ps - ts, axis=1),
            nc.norm((hs + ht) + ps - (ts + tt), axis=1),
        )
        total = terms[0]
        for term in terms[1:]:
            total = total + term
        return -total

    def loss(self, pos: np.ndarray, neg: np.ndarray) -> nc.Tensor:
        f_pos = self.score(pos[:, 0], pos[:, 1], pos[:, 2])
        f_neg = self.score(neg[:, 0], neg[:, 1], neg[:, 2])
        return nc.hinge(self.config.margin + f_neg - f_pos).mean()

    def tail_scores(self, head: str, prop: str) -> np.ndarray:
        """Score of (head, prop, c) for every concept c, in concept order."""
        n = len(self.concepts)
        with nc.no_graph():
            s = self.score(np.full(n, self.cidx[head]), np.full(n, self.pidx[prop]), np.arange(n))
        return s.data

    def table(self) -> ConceptEmbeddingTable:
        with nc.no_graph():
            if self.text_aware:
                struct = self.proj_c(self.C).data
                text = self.proj_t(self.text).data
            else:
                struct = self.C.data
                text = np.zeros_like(struct)
        return ConceptEmbeddingTable(self.concepts, np.hstack([struct, text]))


def sample_negatives(pos: np.ndarray, n_concepts: int, known: set, rng: np.random.Generator,
                     tries: int = 20) -> np.ndarray:
    """Corrupt head or tail (probability 1/2 each) with a uniform concept not forming a known triple."""
    neg = pos.copy()
    for k in range(len(pos)):
        h, r, t = (int(x) for x in pos[k])
        side = rng.random() < 0.5
        cand = (h, r, t)
        for _ in range(tries):
            c = int(rng.integers(n_concepts))
            cand = (c, r, t) if side else (h, r, c)
            if cand not in known:
                break
        neg[k] = cand
    return neg


def fit_encoder(schema: OntologySchema, text: TextMatrix | None, config: EncoderConfig) -> EncoderModel:
    """Train the encoder by minibatch Adam on the margin loss."""
    model = EncoderModel(schema, text, config)
    triples = np.array([(model.cidx[h], model.pidx[p], model.cidx[t]) for h, p, t in schema.triples],
                       dtype=np.int64).reshape(-1, 3)
    if len(triples) == 0:
        raise ValueError("schema has no structural triples to train on")
    known = {tuple(int(x) for x in row) for row in triples}
    rng = np.random.default_rng(config.seed + 1)
    opt = nc.Adam(model.params(), lr=config.lr)
    n = len(triples)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch):
            pos = triples[order[start:start + config.batch]]
            neg = sample_negatives(pos, len(model.concepts), known, rng)
            loss = model.loss(pos, neg)
            value = opt.minimize(loss)
            if not np.isfinite(value):
                raise nc.NonFiniteError("encoder loss is not finite")
            total += value * len(pos)
        model._renormalize()
        model.history.append(total / n)
    return model


def train_encoder(schema: OntologySchema, text: TextMatrix | None, config: EncoderConfig) -> ConceptEmbeddingTable:
    return fit_encoder(schema, text, config).table()


def config_dict(config: EncoderConfig) -> dict:
    return asdict(config)
