"""Conditional Wasserstein GAN that synthesises instance features from concept embeddings.

Generator and critic are two-layer networks conditioned on the concept
embedding by concatenation. The generator loss combines the Wasserstein
term, a classification loss on the synthesised features and a pivot term
that pulls per-class means of generated features onto the real means. The
critic loss carries the gradient penalty on random interpolates.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numcore as nc
from .classifier import ClassifierConfig, SoftmaxClassifier, train_softmax
from .formats import read_checkpoint, write_checkpoint

log = logging.getLogger(__name__)

CLS_LOSSES = ("softmax", "hinge")


@dataclass
class GanConfig:
    noise_dim: int = 100
    hidden_g: int = 4096
    hidden_d: int = 4096
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    lambda_cls: float = 0.01
    lambda_pivot: float = 5.0
    beta_gp: float = 10.0
    n_critic: int = 5
    batch: int = 64
    iterations: int = 2000
    slope: float = 0.2
    cls_loss: str = "softmax"
    cls_margin: float = 10.0
    cls_epochs: int = 30
    cls_lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if min(self.lambda_cls, self.lambda_pivot, self.beta_gp) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.cls_loss not in CLS_LOSSES:
            raise ValueError(f"cls_loss must be one of {CLS_LOSSES}")
        if self.noise_dim < 1 or self.hidden_g < 1 or self.hidden_d < 1:
            raise ValueError("layer sizes must be positive")


@dataclass
class ClassStats:
    """Per-class real feature means, plus negative means for the hinge loss."""

    classes: tuple[str, ...]
    means: np.ndarray
    negatives: np.ndarray | None = None

    def __post_init__(self):
        self.classes = tuple(self.classes)
        self._pos = {c: i for i, c in enumerate(self.classes)}

    def index(self, labels) -> np.ndarray:
        try:
            return np.array([self._pos[c] for c in labels], dtype=np.int64)
        except KeyError as exc:
            raise KeyError(f"class {exc.args[0]!r} absent from class statistics") from None

    @classmethod
    def from_features(cls, features: np.ndarray, labels, negatives: dict | None = None) -> "ClassStats":
        labels = np.asarray(list(labels))
        classes = tuple(sorted(set(labels.tolist())))
        means = np.stack([features[labels == c].mean(axis=0) for c in classes])
        neg = None
        if negatives is not None:
            neg = np.stack([np.asarray(negatives[c], dtype=np.float64) for c in classes])
        return cls(classes, means, neg)


@dataclass
class GanModel:
    config: GanConfig
    emb_dim: int
    feat_dim: int
    G1: nc.Linear
    G2: nc.Linear
    D1: nc.Linear
    D2: nc.Linear
    stats: ClassStats
    classifier: SoftmaxClassifier | None = None
    history: dict = field(default_factory=dict)

    @classmethod
    def init(cls, emb_dim: int, feat_dim: int, config: GanConfig, stats: ClassStats,
             classifier: SoftmaxClassifier | None = None) -> "GanModel":
        rng = np.random.default_rng(config.seed)
        return cls(
            config, emb_dim, feat_dim,
            G1=nc.Linear(config.noise_dim + emb_dim, config.hidden_g, rng),
            G2=nc.Linear(config.hidden_g, feat_dim, rng),
            D1=nc.Linear(feat_dim + emb_dim, config.hidden_d, rng),
            D2=nc.Linear(config.hidden_d, 1, rng),
            stats=stats,
            classifier=classifier,
        )

    def g_params(self) -> list[nc.Tensor]:
        return self.G1.params() + self.G2.params()

    def d_params(self) -> list[nc.Tensor]:
        return self.D1.params() + self.D2.params()

    def generator(self, z, emb) -> nc.Tensor:
        h = nc.leaky_relu(self.G1(nc.concat([nc.as_tensor(z), nc.as_tensor(emb)], axis=1)), self.config.slope)
        return self.G2(h)

    def critic(self, x, emb) -> nc.Tensor:
        """One critic value per row, shape (n,)."""
        h = nc.leaky_relu(self.D1(nc.concat([nc.as_tensor(x), nc.as_tensor(emb)], axis=1)), self.config.slope)
        return nc.reshape(self.D2(h), (-1,))

    # checkpoint ---------------------------------------------------------

    def blocks(self) -> list[np.ndarray]:
        out = [p.data for p in self.g_params() + self.d_params()]
        out.append(self.stats.means)
        if self.stats.negatives is not None:
            out.append(self.stats.negatives)
        if self.classifier is not None:
            out += [self.classifier.W, self.classifier.b]
        return out

    def save(self, path) -> None:
        meta = {
            "kind": "feature_gan",
            "config": asdict(self.config),
            "emb_dim": self.emb_dim,
            "feat_dim": self.feat_dim,
            "classes": list(self.stats.classes),
            "has_negatives": self.stats.negatives is not None,
            "classifier_classes": list(self.classifier.classes) if self.classifier is not None else None,
        }
        write_checkpoint(path, self.blocks(), meta)

    @classmethod
    def load(cls, path) -> "GanModel":
        blocks, meta = read_checkpoint(path)
        if meta.get("kind") != "feature_gan":
            raise ValueError(f"{path} is not a feature GAN checkpoint")
        config = GanConfig(**meta["config"])
        it = iter(blocks)
        layers = []
        for _ in range(4):
            W, b = next(it), next(it)
            lin = nc.Linear.__new__(nc.Linear)
            lin.W, lin.b = nc.parameter(W), nc.parameter(b)
            layers.append(lin)
        means = next(it)
        negatives = next(it) if meta["has_negatives"] else None
        stats = ClassStats(tuple(meta["classes"]), means, negatives)
        classifier = None
        if meta["classifier_classes"] is not None:
            classifier = SoftmaxClassifier(tuple(meta["classifier_classes"]), next(it), next(it))
        return cls(config, meta["emb_dim"], meta["feat_dim"], *layers, stats=stats, classifier=classifier)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def classification_loss(model: GanModel, fake: nc.Tensor, labels) -> nc.Tensor:
    if model.config.cls_loss == "softmax":
        if model.classifier is None:
            raise ValueError("softmax classification loss needs a frozen classifier")
        clf = model.classifier
        logits = fake @ nc.Tensor(clf.W) + nc.Tensor(clf.b)
        logp = nc.log_softmax(logits, axis=1)
        return -logp[np.arange(len(labels)), clf.encode(labels)].mean()
    idx = model.stats.index(labels)
    if model.stats.negatives is None:
        raise ValueError("hinge classification loss needs negative class statistics")
    pos = nc.cosine(fake, nc.Tensor(model.stats.means[idx]), axis=1)
    neg = nc.cosine(fake, nc.Tensor(model.stats.negatives[idx]), axis=1)
    return nc.hinge(model.config.cls_margin - pos + neg).mean()


def pivot_loss(fake: nc.Tensor, labels, stats: ClassStats) -> nc.Tensor:
    """Mean over batch classes of ||mean generated - mean real||^2."""
    idx = stats.index(labels)
    present = np.unique(idx)
    avg = np.zeros((len(present), len(idx)))
    for row, c in enumerate(present):
        mask = idx == c
        avg[row, mask] = 1.0 / mask.sum()
    gen_means = nc.Tensor(avg) @ fake
    diff = gen_means - nc.Tensor(stats.means[present])
    return nc.tsum(nc.square(diff), axis=1).mean()


def loss_G(model: GanModel, emb: np.ndarray, labels, stats: ClassStats, z: np.ndarray):
    """Generator loss and its parts: -E[D(x^, o)] + l1 * L_cls + l2 * L_pivot."""
    cfg = model.config
    stats.index(labels)
    fake = model.generator(z, emb)
    adv = -model.critic(fake, emb).mean()
    total = adv
    parts = {"wasserstein": adv.item()}
    if cfg.lambda_cls > 0:
        cls = classification_loss(model, fake, labels)
        total = total + cfg.lambda_cls * cls
        parts["cls"] = cls.item()
    if cfg.lambda_pivot > 0:
        piv = pivot_loss(fake, labels, stats)
        total = total + cfg.lambda_pivot * piv
        parts["pivot"] = piv.item()
    else:
        with nc.no_graph():
            parts["pivot"] = pivot_loss(nc.Tensor(fake.data), labels, stats).item()
    return total, parts


def gradient_penalty(model: GanModel, real: np.ndarray, fake: np.ndarray, emb: np.ndarray,
                     eps: np.ndarray) -> nc.Tensor:
    """E[(||grad_x D(x~, o)|| - 1)^2] with x~ = eps * real + (1 - eps) * fake."""
    eps = np.asarray(eps, dtype=np.float64).reshape(-1, 1)
    interp = nc.Tensor(eps * real + (1.0 - eps) * fake, requires_grad=True)
    norms = nc.input_grad_norm(model.critic(interp, emb).sum(), interp, axis=1)
    return nc.square(norms - 1.0).mean()


def loss_D(model: GanModel, real: np.ndarray, emb: np.ndarray, fake: np.ndarray, eps: np.ndarray):
    """E[D(x, o)] - E[D(x^, o)] - beta * GP; the critic ascends this quantity."""
    real = np.asarray(real, dtype=np.float64)
    fake = np.asarray(fake, dtype=np.float64)
    if real.shape != fake.shape:
        raise ValueError(f"real batch {real.shape} and fake batch {fake.shape} differ")
    if real.shape[1] != model.feat_dim:
        raise ValueError(f"feature dimension {real.shape[1]} != model dimension {model.feat_dim}")
    d_real = model.critic(real, emb).mean()
    d_fake = model.critic(fake, emb).mean()
    wass = d_real - d_fake
    total = wass
    gp_value = 0.0
    if model.config.beta_gp > 0:
        gp = gradient_penalty(model, real, fake, emb, eps)
        total = total - model.config.beta_gp * gp
        gp_value = gp.item()
    return total, {"wasserstein": wass.item(), "gp": gp_value}


# ---------------------------------------------------------------------------
# generation and training
# ---------------------------------------------------------------------------


def generate(model: GanModel, emb: np.ndarray, n: int, seed: int) -> np.ndarray:
    """n synthetic feature rows for one concept embedding, deterministic per seed."""
    emb = np.asarray(emb, dtype=np.float64).reshape(-1)
    if emb.size != model.emb_dim:
        raise ValueError(f"embedding dimension {emb.size} != trained dimension {model.emb_dim}")
    if n < 1:
        raise ValueError("n must be at least 1")
    z = np.random.default_rng(seed).standard_normal((n, model.config.noise_dim))
    with nc.no_graph():
        return model.generator(z, np.tile(emb, (n, 1))).data


def train_gan(features: np.ndarray, labels, table, config: GanConfig, *,
              negatives: dict | None = None, classifier: SoftmaxClassifier | None = None) -> GanModel:
    """Alternate ``n_critic`` critic steps with one generator step.

    ``table`` maps class id to concept embedding. For the softmax
    classification loss a classifier is fitted on the real features and
    frozen unless one is supplied; the hinge variant needs ``negatives``.
    """
    X = np.asarray(features, dtype=np.float64)
    labels = list(labels)
    if len(labels) != len(X):
        raise ValueError("features and labels differ in length")
    classes = sorted(set(labels))
    missing = [c for c in classes if c not in table]
    if missing:
        raise KeyError(f"missing embedding for classes {missing}")
    emb_rows = {c: np.asarray(table[c], dtype=np.float64) for c in classes}
    emb_dim = len(next(iter(emb_rows.values())))
    E = np.stack([emb_rows[c] for c in labels])

    stats = ClassStats.from_features(X, labels, negatives)
    if config.cls_loss == "softmax" and config.lambda_cls > 0 and classifier is None:
        classifier = train_softmax(X, labels, classes,
                                   ClassifierConfig(lr=config.cls_lr, epochs=config.cls_epochs, seed=config.seed))
    if config.cls_loss == "hinge" and config.lambda_cls > 0 and negatives is None:
        raise ValueError("hinge classification loss needs per-class negatives")

    model = GanModel.init(emb_dim, X.shape[1], config, stats, classifier)
    rng = np.random.default_rng(config.seed + 1)
    opt_d = nc.Adam(model.d_params(), lr=config.lr, betas=(config.beta1, config.beta2))
    opt_g = nc.Adam(model.g_params(), lr=config.lr, betas=(config.beta1, config.beta2))
    hist = {"loss_D": [], "loss_G": [], "wasserstein": [], "gp": [], "pivot_distance": []}
    n, bs = len(X), min(config.batch, len(X))
    label_arr = np.array(labels, dtype=object)

    for it in range(config.iterations):
        for _ in range(config.n_critic):
            idx = rng.integers(n, size=bs)
            z = rng.standard_normal((bs, config.noise_dim))
            with nc.no_graph():
                fake = model.generator(z, E[idx]).data
            eps = rng.random(bs)
            d_obj, d_parts = loss_D(model, X[idx], E[idx], fake, eps)
            d_val = -opt_d.minimize(-d_obj)
        idx = rng.integers(n, size=bs)
        z = rng.standard_normal((bs, config.noise_dim))
        g_loss, g_parts = loss_G(model, E[idx], label_arr[idx].tolist(), stats, z)
        g_val = opt_g.minimize(g_loss)
        if not (np.isfinite(d_val) and np.isfinite(g_val)):
            raise nc.NonFiniteError(f"GAN losses diverged at iteration {it}: loss_D={d_val}, loss_G={g_val}")
        hist["loss_D"].append(d_val)
        hist["loss_G"].append(g_val)
        hist["wasserstein"].append(d_parts["wasserstein"])
        hist["gp"].append(d_parts["gp"])
        hist["pivot_distance"].append(g_parts["pivot"])
    model.history = hist
    log.info("trained GAN for %d iterations", config.iterations)
    return model


def pivot_distance(model: GanModel, table, n: int = 200, seed: int = 0) -> float:
    """Mean over training classes of ||mean generated - mean real||^2."""
    dists = []
    for i, c in enumerate(model.stats.classes):
        gen = generate(model, table[c], n, seed + i)
        dists.append(float(np.sum((gen.mean(axis=0) - model.stats.means[i]) ** 2)))
    return float(np.mean(dists))
