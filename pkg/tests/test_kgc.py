import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ontozero import kgc
from ontozero import numcore as nc


def cycle_dataset():
    ents = ("e0", "e1", "e2", "e3")
    triples = [("e0", "next", "e1"), ("e1", "next", "e2"), ("e2", "next", "e3"), ("e3", "next", "e0")]
    return kgc.KGDataset(ents, ("next",), triples, {"next": "train"})


def two_cluster_dataset(n=20, per_rel=60, seed=0):
    """Relation A links cluster 1 to cluster 2, relation B the reverse; C and D are held out."""
    rng = np.random.default_rng(seed)
    ents = tuple(f"e{i:02d}" for i in range(2 * n))
    c1, c2 = ents[:n], ents[n:]
    triples = set()
    for rel, hs, ts in (("A", c1, c2), ("B", c2, c1), ("C", c1, c2), ("D", c2, c1)):
        while sum(1 for t in triples if t[1] == rel) < per_rel:
            triples.add((hs[rng.integers(n)], rel, ts[rng.integers(n)]))
    split = {"A": "train", "B": "train", "C": "test", "D": "test"}
    return kgc.KGDataset(ents, ("A", "B", "C", "D"), sorted(triples), split)


def toy_kge(ds, dim=3, seed=0):
    rng = np.random.default_rng(seed)
    return kgc.KGEmbedding("transe", ds.entities, ds.relations, rng.standard_normal((len(ds.entities), dim)),
                           rng.standard_normal((len(ds.relations), dim)))


# ---------------------------------------------------------------------------
# metrics and ranking
# ---------------------------------------------------------------------------


def test_metric_examples():
    assert kgc.kgc_metrics([1, 1, 1]) == {"MRR": 1.0, "Hit@10": 1.0, "Hit@5": 1.0, "Hit@1": 1.0}
    m = kgc.kgc_metrics([2, 4])
    assert m["MRR"] == 0.375 and m["Hit@1"] == 0.0 and m["Hit@5"] == 1.0
    assert kgc.kgc_metrics([11] * 4)["Hit@10"] == 0.0
    with pytest.raises(ValueError):
        kgc.kgc_metrics([])
    with pytest.raises(ValueError):
        kgc.kgc_metrics([0, 1])


@given(st.lists(st.integers(1, 50), min_size=1, max_size=30))
def test_metric_ordering(ranks):
    m = kgc.kgc_metrics(ranks)
    assert 0 < m["MRR"] <= 1
    assert m["Hit@1"] <= m["Hit@5"] <= m["Hit@10"]


def test_random_mrr_closed_form():
    assert kgc.random_mrr([1]) == 1.0
    assert kgc.random_mrr([2]) == pytest.approx(0.75)
    # exhaustive check: expected reciprocal rank of a uniformly placed gold
    assert kgc.random_mrr([4, 3]) == pytest.approx((np.mean(1 / np.arange(1, 5)) + np.mean(1 / np.arange(1, 4))) / 2)


def test_rank_of_ties_by_id():
    scores = np.array([0.5, 0.9, 0.5, 0.5])
    ids = np.array([7, 3, 2, 9])
    assert kgc.rank_of(scores, ids, 3) == 1
    assert kgc.rank_of(scores, ids, 2) == 2
    assert kgc.rank_of(scores, ids, 7) == 3
    assert kgc.rank_of(scores, ids, 9) == 4
    with pytest.raises(ValueError):
        kgc.rank_of(scores, ids, 5)


@given(st.lists(st.integers(0, 3), min_size=1, max_size=8), st.data())
def test_rank_invariant_to_candidate_order(score_levels, data):
    ids = np.arange(len(score_levels)) * 3
    scores = np.array(score_levels, dtype=float)
    gold = int(data.draw(st.sampled_from(list(ids))))
    perm = np.array(data.draw(st.permutations(range(len(ids)))))
    assert kgc.rank_of(scores, ids, gold) == kgc.rank_of(scores[perm], ids[perm], gold)


def test_candidate_scores_average_cosines():
    gen = np.array([[1.0, 0.0], [0.0, 1.0]])
    pairs = np.array([[1.0, 1.0], [1.0, 0.0], [-1.0, 0.0]])
    np.testing.assert_allclose(kgc.candidate_scores(gen, pairs), [np.sqrt(0.5), 0.5, -0.5])
    np.testing.assert_allclose(kgc.candidate_scores(gen[:1], pairs), [np.sqrt(0.5), 1.0, -1.0])


@pytest.fixture(scope="module")
def toy_model():
    ds = two_cluster_dataset()
    return kgc.ExtractorModel(ds, toy_kge(ds), kgc.ExtractorConfig(ent_out=2, nbr_out=2, seed=1))


def test_rank_tail_single_candidate(toy_model):
    gen = np.random.default_rng(0).standard_normal((3, toy_model.out_dim))
    assert kgc.rank_tail(("e00", "C"), gen, toy_model, ["e25"], "e25", set()) == 1


def test_rank_tail_gold_matches_generated(toy_model):
    ds = toy_model.dataset
    cands = ["e21", "e22", "e23", "e24", "e25"]
    gold_x = kgc.relation_embedding(toy_model, "e01", "e23")
    assert kgc.rank_tail(("e01", "C"), gold_x[None, :], toy_model, cands, "e23", set()) == 1
    # brute force over all five candidates
    rng = np.random.default_rng(3)
    gen = rng.standard_normal((4, toy_model.out_dim))
    brute = []
    for c in cands:
        x = kgc.relation_embedding(toy_model, "e01", c)
        brute.append(np.mean([x @ g / np.linalg.norm(x) / np.linalg.norm(g) for g in gen]))
    ids = np.array([ds.eidx[c] for c in cands])
    for gold in cands:
        expected = kgc.rank_of(np.array(brute), ids, ds.eidx[gold])
        assert kgc.rank_tail(("e01", "C"), gen, toy_model, cands, gold, set()) == expected


def test_filtering_only_improves_rank(toy_model):
    rng = np.random.default_rng(5)
    gen = rng.standard_normal((2, toy_model.out_dim))
    ents = list(toy_model.dataset.entities)
    for gold in ents[20:30]:
        known = {("e02", "C", e) for e in ents[20:40] if e != gold}
        raw = kgc.rank_tail(("e02", "C"), gen, toy_model, ents, gold, set())
        filt = kgc.rank_tail(("e02", "C"), gen, toy_model, ents, gold, known)
        assert filt <= raw
    with pytest.raises(ValueError):
        kgc.rank_tail(("e02", "C"), gen, toy_model, ents[:5], "e30", set())


# ---------------------------------------------------------------------------
# relation embedding
# ---------------------------------------------------------------------------


def test_entity_without_neighbors_has_zero_structure(toy_model):
    ds = toy_model.dataset
    lonely = [e for e in ds.entities if toy_model.index.count(ds.eidx[e]) == 0]
    x = kgc.relation_embedding(toy_model, ds.entities[0], ds.entities[25])
    assert np.all(np.abs(x) < 1)
    if lonely:
        x = kgc.relation_embedding(toy_model, lonely[0], lonely[0])
        np.testing.assert_array_equal(x[4:], 0.0)


def test_zero_vectors_one_dim_hand_computation():
    ents = ("a", "b", "c")
    triples = [("a", "r", "b"), ("b", "r", "a")]
    ds = kgc.KGDataset(ents, ("r",), triples, {"r": "train"})
    kge = kgc.KGEmbedding("transe", ents, ("r",), np.zeros((3, 1)), np.zeros((1, 1)))
    model = kgc.ExtractorModel(ds, kge, kgc.ExtractorConfig(ent_out=1, nbr_out=1))
    model.f1.b.data[:] = 0.3
    model.f2.b.data[:] = -0.7
    x = kgc.relation_embedding(model, "a", "b")
    np.testing.assert_allclose(x, [np.tanh(0.3), np.tanh(0.3), np.tanh(-0.7), np.tanh(-0.7)])
    # c has no outgoing neighbours
    np.testing.assert_allclose(kgc.relation_embedding(model, "c", "a"), [np.tanh(0.3), np.tanh(0.3), 0.0, np.tanh(-0.7)])
    with pytest.raises(KeyError):
        kgc.relation_embedding(model, "zz", "a")


def test_neighbor_cap_is_seeded():
    ents = tuple(f"e{i:03d}" for i in range(121))
    triples = [("e000", "r", e) for e in ents[1:]]
    ds = kgc.KGDataset(ents, ("r",), triples, {"r": "train"})
    a = kgc.NeighborIndex(ds, 50, seed=3)
    b = kgc.NeighborIndex(ds, 50, seed=3)
    c = kgc.NeighborIndex(ds, 50, seed=4)
    assert a.count(0) == 50
    assert a.neighbors[0] == b.neighbors[0] != c.neighbors[0]
    np.testing.assert_allclose(a.ent_avg[0].sum(), 1.0)


def test_output_dimension(toy_model):
    assert toy_model.out_dim == 8
    assert kgc.relation_embedding(toy_model, "e00", "e20").shape == (8,)


# ---------------------------------------------------------------------------
# KG embeddings
# ---------------------------------------------------------------------------


def test_transe_on_cycle_graph():
    # one translation cannot close a 4-cycle, so at most 3 of 4 tails can rank first
    ds = cycle_dataset()
    passed = 0
    for seed in range(5):
        emb = kgc.pretrain_kge(ds, kgc.KGEConfig(dim=8, epochs=500, lr=0.01, batch=4, seed=seed))
        ranks = kgc.kge_tail_ranks(emb, ds, ds.triples, known=set())
        passed += kgc.kgc_metrics(ranks)["Hit@1"] >= 0.75
    assert passed >= 3


def test_distmult_trains_and_identity_relation():
    ds = cycle_dataset()
    emb = kgc.pretrain_kge(ds, kgc.KGEConfig(method="distmult", dim=4, epochs=50, lr=0.05, seed=0))
    assert np.isfinite(emb.history[-1]) and emb.history[-1] < emb.history[0]
    h, t = np.array([1.0, 2.0, -1.0]), np.array([0.5, 0.5, 3.0])
    assert kgc.kge_score("distmult", h, np.ones(3), t) == pytest.approx(h @ t)


def test_transe_exact_translation_scores_zero():
    h, r = np.array([0.2, -1.0]), np.array([0.5, 0.5])
    assert kgc.kge_score("transe", h, r, h + r) == 0.0


def test_unknown_kge_method():
    with pytest.raises(ValueError):
        kgc.KGEConfig(method="rotate")


def test_kge_round_trip(tmp_path):
    ds = cycle_dataset()
    emb = toy_kge(ds)
    emb.save(tmp_path / "a")
    back = kgc.KGEmbedding.load(tmp_path / "a")
    back.save(tmp_path / "b")
    for name in ("entity_vectors.txt", "relation_vectors.txt", "kge_method.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


# ---------------------------------------------------------------------------
# extractor
# ---------------------------------------------------------------------------


def test_bags_split_references_and_positives(caplog):
    ds = two_cluster_dataset()
    bags = kgc.make_bags(ds, 30, seed=0)
    for bag in bags:
        rows = {tuple(r) for r in ds.index_triples([t for t in ds.triples if t[1] == bag.relation]).tolist()}
        refs = {tuple(r) for r in bag.references.tolist()}
        pos = {tuple(r) for r in bag.positives.tolist()}
        assert len(refs) == 30 and refs | pos == rows and not refs & pos
    with caplog.at_level(logging.WARNING):
        assert kgc.make_bags(ds, 60, seed=0) == []
    assert "skipped" in caplog.text


def test_reference_config():
    cfg = kgc.ExtractorConfig()
    assert (cfg.margin, cfg.lr, cfg.n_refs, cfg.neighbor_cap) == (10.0, 5e-4, 30, 50)
    assert kgc.KGCEvalConfig().n_generated == 20


def test_identical_positive_scores_cosine_one(toy_model):
    x = kgc.relation_embedding(toy_model, "e00", "e20")
    assert kgc.cosine_rows(x[None, :], x[None, :])[0, 0] == pytest.approx(1.0)


def test_extractor_loss_gradients():
    ds = two_cluster_dataset(n=6, per_rel=20)
    for seed in range(5):
        model = kgc.ExtractorModel(ds, toy_kge(ds, seed=seed), kgc.ExtractorConfig(ent_out=2, nbr_out=2, seed=seed,
                                                                                   margin=1.0))
        bag = kgc.make_bags(ds, 5, seed)[0]
        rng = np.random.default_rng(seed)
        pos = bag.positives[:6]
        neg = kgc.corrupt_tails(pos, len(ds.entities), set(), rng)
        params = model.params()
        analytic = [g.data for g in nc.grad(kgc.extractor_loss(model, bag, pos, neg), params, allow_unused=True)]
        numeric = [nc.finite_difference(lambda: kgc.extractor_loss(model, bag, pos, neg).item(), p) for p in params]
        assert nc.max_relative_error(analytic, numeric) < 1e-4


def test_trained_extractor_separates_relations():
    ds = two_cluster_dataset()
    kge = kgc.pretrain_kge(ds, kgc.KGEConfig(dim=8, epochs=50, seed=0))
    model = kgc.train_extractor(ds, kge, kgc.ExtractorConfig(ent_out=8, nbr_out=8, epochs=20, lr=5e-3, seed=0))
    bags = {b.relation: b for b in kgc.make_bags(ds, 30, 0)}
    centers = {r: model.pair_array(b.references[:, 0], b.references[:, 2]).mean(axis=0) for r, b in bags.items()}
    for r, other in (("A", "B"), ("B", "A")):
        # held-out relations C and D follow A and B's cluster pattern
        held = "C" if r == "A" else "D"
        rows = ds.index_triples([t for t in ds.triples if t[1] == held])
        x = model.pair_array(rows[:, 0], rows[:, 2])
        own = kgc.cosine_rows(x, centers[r][None, :]).mean()
        cross = kgc.cosine_rows(x, centers[other][None, :]).mean()
        assert own > cross


def test_extractor_checkpoint_round_trip(tmp_path, toy_model):
    toy_model.save(tmp_path / "x.ckpt")
    back = kgc.ExtractorModel.load(tmp_path / "x.ckpt", toy_model.dataset)
    back.save(tmp_path / "y.ckpt")
    assert (tmp_path / "x.ckpt").read_bytes() == (tmp_path / "y.ckpt").read_bytes()


# ---------------------------------------------------------------------------
# dataset
# ---------------------------------------------------------------------------


def test_closed_entity_invariant():
    with pytest.raises(ValueError, match="never appears"):
        kgc.KGDataset(("a", "b", "c"), ("r", "u"), [("a", "r", "b"), ("a", "u", "c")], {"r": "train", "u": "test"})
    with pytest.raises(ValueError):
        kgc.KGDataset(("a", "b"), ("r",), [("a", "r", "b")], {"r": "holdout"})


def test_dataset_round_trip(tmp_path, kgc_fixture):
    ds = kgc_fixture[1]
    ds.save(tmp_path / "a")
    back = kgc.KGDataset.load(tmp_path / "a")
    back.save(tmp_path / "b")
    for name in ("triples.tsv", "relation_split.tsv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert back.seen == ds.seen and back.unseen == ds.unseen
    assert not set(back.seen) & set(back.unseen)


def test_candidate_file(tmp_path):
    (tmp_path / "c.tsv").write_text("e00\tC\te20 e21\n")
    assert kgc.load_candidates(tmp_path / "c.tsv") == {("e00", "C"): ["e20", "e21"]}
