import numpy as np
import pytest

from ontozero import numcore as nc
from ontozero.classifier import train_softmax
from ontozero.feature_gan import (ClassStats, GanConfig, GanModel, classification_loss, generate,
                                  gradient_penalty, loss_D, loss_G, pivot_loss, train_gan)
from ontozero.onto_encoder import ConceptEmbeddingTable, EncoderConfig, train_encoder
from ontozero.ontology import text_vectors

SMALL = dict(noise_dim=3, hidden_g=5, hidden_d=4)


def small_model(seed=0, cls_loss="softmax", emb_dim=2, feat_dim=3, **kw):
    rng = np.random.default_rng(seed + 100)
    classes = ("c0", "c1", "c2")
    means = rng.standard_normal((3, feat_dim))
    stats = ClassStats(classes, means, rng.standard_normal((3, feat_dim)))
    cfg = GanConfig(**{**SMALL, "cls_loss": cls_loss, "seed": seed, **kw})
    X = np.repeat(means, 4, axis=0) + 0.1 * rng.standard_normal((12, feat_dim))
    labels = [c for c in classes for _ in range(4)]
    clf = train_softmax(X, labels, classes) if cls_loss == "softmax" else None
    return GanModel.init(emb_dim, feat_dim, cfg, stats, clf), rng


def batch(rng, model, n=6):
    labels = [model.stats.classes[i % 3] for i in range(n)]
    emb = rng.standard_normal((n, model.emb_dim))
    z = rng.standard_normal((n, model.config.noise_dim))
    real = rng.standard_normal((n, model.feat_dim))
    return labels, emb, z, real


def fd_error(loss_fn, params):
    analytic = [g.data for g in nc.grad(loss_fn(), params, allow_unused=True)]
    numeric = [nc.finite_difference(lambda: loss_fn().item(), p) for p in params]
    return nc.max_relative_error(analytic, numeric)


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def test_generate_is_deterministic():
    model, _ = small_model()
    emb = np.array([0.3, -0.2])
    assert generate(model, emb, 1, seed=4).tobytes() == generate(model, emb, 1, seed=4).tobytes()


def test_zero_generator_outputs_zero():
    model, _ = small_model()
    for p in model.g_params():
        p.data[:] = 0.0
    np.testing.assert_array_equal(generate(model, np.ones(2), 5, seed=1), 0.0)


def test_different_embeddings_give_different_outputs():
    model, _ = small_model()
    a = generate(model, np.array([1.0, 0.0]), 3, seed=0)
    b = generate(model, np.array([0.0, 1.0]), 3, seed=0)
    assert not np.allclose(a, b)


def test_generate_checks_dimension():
    model, _ = small_model()
    with pytest.raises(ValueError):
        generate(model, np.ones(5), 2, seed=0)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def test_generator_loss_reduces_to_wasserstein():
    model, rng = small_model(lambda_cls=0.0, lambda_pivot=0.0)
    labels, emb, z, _ = batch(rng, model)
    total, _ = loss_G(model, emb, labels, model.stats, z)
    fake = model.generator(z, emb)
    assert total.item() == pytest.approx(-model.critic(fake, emb).mean().item())


def test_pivot_zero_when_means_match():
    stats = ClassStats(("a", "b"), np.array([[1.0, 2.0], [0.0, -1.0]]))
    fake = nc.Tensor([[0.0, 2.0], [2.0, 2.0], [0.0, -1.0]])
    assert pivot_loss(fake, ["a", "a", "b"], stats).item() == 0.0
    assert pivot_loss(fake, ["a", "b", "b"], stats).item() > 0.0


def test_pivot_unknown_class():
    stats = ClassStats(("a",), np.zeros((1, 2)))
    with pytest.raises(KeyError):
        pivot_loss(nc.Tensor(np.zeros((1, 2))), ["zz"], stats)


def test_reference_weights():
    cfg = GanConfig()
    assert (cfg.lambda_cls, cfg.lambda_pivot, cfg.lr, cfg.n_critic) == (0.01, 5.0, 1e-4, 5)
    with pytest.raises(ValueError):
        GanConfig(lambda_pivot=-1.0)


def test_constant_critic():
    model, rng = small_model()
    for p in model.d_params():
        p.data[:] = 0.0
    model.D2.b.data[:] = 3.0
    _, emb, _, real = batch(rng, model)
    fake = rng.standard_normal(real.shape)
    total, parts = loss_D(model, real, emb, fake, rng.random(len(real)))
    assert parts["wasserstein"] == 0.0
    assert parts["gp"] == 1.0
    assert total.item() == pytest.approx(-model.config.beta_gp)


def test_unit_linear_critic_has_zero_penalty():
    model, rng = small_model(hidden_d=1)
    a = rng.standard_normal(model.feat_dim)
    a /= np.linalg.norm(a)
    model.D1.W.data[:] = 0.0
    model.D1.W.data[: model.feat_dim, 0] = a
    model.D1.b.data[:] = 100.0
    model.D2.W.data[:] = 1.0
    _, emb, _, real = batch(rng, model)
    fake = rng.standard_normal(real.shape)
    gp = gradient_penalty(model, real, fake, emb, rng.random(len(real)))
    assert gp.item() == pytest.approx(0.0, abs=1e-20)


def test_penalty_is_invariant_to_batch_relabeling():
    model, rng = small_model()
    _, emb, _, real = batch(rng, model)
    fake, eps = rng.standard_normal(real.shape), rng.random(len(real))
    perm = rng.permutation(len(real))
    a = gradient_penalty(model, real, fake, emb, eps).item()
    b = gradient_penalty(model, real[perm], fake[perm], emb[perm], eps[perm]).item()
    assert a == pytest.approx(b, rel=1e-12)


def test_wasserstein_terms_antisymmetric():
    model, rng = small_model(lambda_cls=0.0, lambda_pivot=0.0, beta_gp=0.0)
    labels, emb, z, real = batch(rng, model)
    g, _ = loss_G(model, emb, labels, model.stats, z)
    fake = model.generator(z, emb).data
    d, _ = loss_D(model, real, emb, fake, rng.random(len(real)))
    assert d.item() - model.critic(real, emb).mean().item() == pytest.approx(g.item())


def test_loss_D_shape_checks():
    model, rng = small_model()
    _, emb, _, real = batch(rng, model)
    with pytest.raises(ValueError):
        loss_D(model, real, emb, real[:2], rng.random(6))
    with pytest.raises(ValueError):
        loss_D(model, real[:, :2], emb, real[:, :2], rng.random(6))


@pytest.mark.parametrize("seed", range(5))
def test_full_losses_match_finite_differences(seed):
    for cls_loss in ("softmax", "hinge"):
        model, rng = small_model(seed, cls_loss)
        labels, emb, z, real = batch(rng, model)
        fake = model.generator(z, emb).data
        eps = rng.random(len(real))
        assert fd_error(lambda: loss_D(model, real, emb, fake, eps)[0], model.d_params()) < 1e-3
        assert fd_error(lambda: loss_G(model, emb, labels, model.stats, z)[0], model.g_params()) < 1e-3


@pytest.mark.parametrize("seed", range(5))
def test_loss_components_match_finite_differences(seed):
    model, rng = small_model(seed, "hinge")
    labels, emb, z, real = batch(rng, model)
    fake_np = model.generator(z, emb).data
    eps = rng.random(len(real))
    g = model.g_params()
    components = {
        "adversarial": (lambda: -model.critic(model.generator(z, emb), emb).mean(), g),
        "hinge_cls": (lambda: classification_loss(model, model.generator(z, emb), labels), g),
        "pivot": (lambda: pivot_loss(model.generator(z, emb), labels, model.stats), g),
        "penalty": (lambda: gradient_penalty(model, real, fake_np, emb, eps), [model.D1.W, model.D2.W]),
    }
    soft, _ = small_model(seed, "softmax")
    components["softmax_cls"] = (lambda: classification_loss(soft, soft.generator(z, emb), labels), soft.g_params())
    for name, (fn, params) in components.items():
        assert fd_error(fn, params) < 1e-3, name


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def test_single_class_pivot_distance_decreases():
    rng = np.random.default_rng(0)
    X = np.array([2.0, -1.0, 0.5]) + 0.05 * rng.standard_normal((40, 3))
    table = ConceptEmbeddingTable(("only",), np.array([[0.5, -0.5]]))
    cfg = GanConfig(noise_dim=4, hidden_g=16, hidden_d=16, lr=1e-3, iterations=150, batch=16)
    model = train_gan(X, ["only"] * 40, table, cfg)
    h = model.history["pivot_distance"]
    assert np.mean(h[-20:]) < np.mean(h[:20])


def test_missing_embedding_and_negatives():
    table = ConceptEmbeddingTable(("a",), np.zeros((1, 2)))
    X = np.zeros((4, 3))
    with pytest.raises(KeyError, match="missing embedding"):
        train_gan(X, ["a", "a", "b", "b"], table, GanConfig(**SMALL, iterations=1))
    with pytest.raises(ValueError):
        train_gan(X, ["a"] * 4, table, GanConfig(**SMALL, iterations=1, cls_loss="hinge"))


def test_generated_features_match_own_prototypes(imgc_fixture):
    schema, ds, truth, wv = imgc_fixture
    table = train_encoder(schema, text_vectors(schema, wv), EncoderConfig(dim=16, epochs=300, batch=64, lr=1e-2))
    cfg = GanConfig(noise_dim=16, hidden_g=128, hidden_d=128, lr=1e-3, iterations=600)
    gan = train_gan(ds.train_X, ds.train_y, table, cfg)
    classes = truth["classes"]
    P = np.array([truth["prototypes"][c] for c in classes])
    P /= np.linalg.norm(P, axis=1, keepdims=True)
    wins = 0
    for i, c in enumerate(classes):
        gen = generate(gan, table[c], 100, seed=i)
        gen /= np.linalg.norm(gen, axis=1, keepdims=True)
        sims = (gen @ P.T).mean(axis=0)
        wins += int(np.argmax(sims) == i)
    assert wins >= 4


def test_checkpoint_round_trip(tmp_path):
    for cls_loss in ("softmax", "hinge"):
        model, _ = small_model(cls_loss=cls_loss)
        model.save(tmp_path / "g.ckpt")
        back = GanModel.load(tmp_path / "g.ckpt")
        back.save(tmp_path / "h.ckpt")
        assert (tmp_path / "g.ckpt").read_bytes() == (tmp_path / "h.ckpt").read_bytes()
        np.testing.assert_allclose(generate(back, np.ones(2), 3, 0), generate(model, np.ones(2), 3, 0),
                                   rtol=1e-5, atol=1e-5)
