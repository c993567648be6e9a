"""Zero-shot and generalized zero-shot classification over feature datasets."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .classifier import ClassifierConfig, SoftmaxClassifier, train_softmax
from .feature_gan import GanModel, generate
from .formats import read_features, read_lines, read_pairs, write_features, write_lines, write_pairs

MODES = ("standard", "generalized")


@dataclass
class FeatureDataset:
    train_X: np.ndarray
    train_y: list[str]
    test_X: np.ndarray
    test_y: list[str]
    split: dict[str, str]

    def __post_init__(self):
        self.train_X = np.asarray(self.train_X, dtype=np.float64)
        self.test_X = np.asarray(self.test_X, dtype=np.float64)
        self.train_y = list(self.train_y)
        self.test_y = list(self.test_y)
        if len(self.train_y) != len(self.train_X) or len(self.test_y) != len(self.test_X):
            raise ValueError("feature and label counts differ")
        bad = {v for v in self.split.values()} - {"seen", "unseen"}
        if bad:
            raise ValueError(f"split values must be seen/unseen, got {sorted(bad)}")
        unknown = (set(self.train_y) | set(self.test_y)) - set(self.split)
        if unknown:
            raise ValueError(f"labels missing from split: {sorted(unknown)}")
        leaked = set(self.train_y) & set(self.unseen)
        if leaked:
            raise ValueError(f"unseen classes have training rows: {sorted(leaked)}")

    @property
    def seen(self) -> tuple[str, ...]:
        return tuple(sorted(c for c, s in self.split.items() if s == "seen"))

    @property
    def unseen(self) -> tuple[str, ...]:
        return tuple(sorted(c for c, s in self.split.items() if s == "unseen"))

    @property
    def dim(self) -> int:
        return self.train_X.shape[1]

    def test_rows(self, classes) -> tuple[np.ndarray, list[str]]:
        keep = set(classes)
        mask = np.array([y in keep for y in self.test_y], dtype=bool)
        return self.test_X[mask], [y for y in self.test_y if y in keep]

    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        write_features(d / "train.feat", self.train_X)
        write_lines(d / "train.labels", self.train_y)
        write_features(d / "test.feat", self.test_X)
        write_lines(d / "test.labels", self.test_y)
        write_pairs(d / "split.tsv", sorted(self.split.items()))
        return d

    @classmethod
    def load(cls, directory) -> "FeatureDataset":
        d = Path(directory)
        train_X = read_features(d / "train.feat")
        test_X = read_features(d / "test.feat")
        train_y = read_lines(d / "train.labels") if train_X.shape[0] else []
        test_y = read_lines(d / "test.labels") if test_X.shape[0] else []
        return cls(train_X, train_y, test_X, test_y, dict(read_pairs(d / "split.tsv")))


@dataclass
class EvalConfig:
    n_syn: int = 300
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    seed: int = 0


@dataclass
class EvalReport:
    task: str
    mode: str
    metrics: dict
    per_class: dict
    excluded: list
    candidates: list
    config: dict
    seed: int
    ablation: str = "all"

    def to_dict(self) -> dict:
        return asdict(self)


def per_class_accuracy(predictions, labels, classes) -> dict[str, float]:
    """Correct ratio per class; classes without rows are left out."""
    classes = list(classes)
    if not classes:
        raise ValueError("class set is empty")
    predictions, labels = list(predictions), list(labels)
    if len(predictions) != len(labels):
        raise ValueError("predictions and labels differ in length")
    allowed = set(classes)
    stray = set(labels) - allowed
    if stray:
        raise ValueError(f"labels outside the class set: {sorted(stray)}")
    out = {}
    for c in classes:
        idx = [i for i, y in enumerate(labels) if y == c]
        if idx:
            out[c] = sum(predictions[i] == c for i in idx) / len(idx)
    return out


def macro_accuracy(predictions, labels, classes) -> float:
    """Unweighted mean of per-class accuracies over classes that have rows."""
    per = per_class_accuracy(predictions, labels, classes)
    if not per:
        raise ValueError("no evaluated rows for any class")
    return float(np.mean(list(per.values())))


def harmonic_mean(acc_s: float, acc_u: float) -> float:
    total = acc_s + acc_u
    return 0.0 if total <= 0 else 2.0 * acc_s * acc_u / total


def synthesize(gan: GanModel, table, classes, n_syn: int, seed: int) -> tuple[np.ndarray, list[str]]:
    feats, labels = [], []
    for i, c in enumerate(sorted(classes)):
        if c not in table:
            raise KeyError(f"missing embedding for class {c!r}")
        feats.append(generate(gan, table[c], n_syn, seed + 1000 * (i + 1)))
        labels += [c] * n_syn
    return np.vstack(feats), labels


def zsl_evaluate(dataset: FeatureDataset, gan: GanModel, table, mode: str = "standard",
                 config: EvalConfig | None = None, *, ablation: str = "all",
                 config_echo: dict | None = None) -> EvalReport:
    """Train a softmax classifier on synthetic (and, for GZSL, real seen) features and score it."""
    config = config or EvalConfig()
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    unseen, seen = dataset.unseen, dataset.seen
    if not unseen:
        raise ValueError("dataset has no unseen classes")
    missing = [c for c in (*seen, *unseen) if c not in table]
    if missing:
        raise KeyError(f"missing embedding for classes {missing}")
    if dataset.dim != gan.feat_dim:
        raise ValueError(f"feature dimension {dataset.dim} != generator output {gan.feat_dim}")
    X_syn, y_syn = synthesize(gan, table, unseen, config.n_syn, config.seed)
    clf_cfg = ClassifierConfig(**{**asdict(config.classifier), "seed": config.seed})

    if mode == "standard":
        X_test, y_test = dataset.test_rows(unseen)
        if not y_test:
            raise ValueError("empty unseen test split")
        clf = train_softmax(X_syn, y_syn, unseen, clf_cfg)
        per = per_class_accuracy(clf.predict(X_test), y_test, unseen)
        metrics = {"acc": float(np.mean(list(per.values())))}
        candidates, evaluated = list(unseen), unseen
    else:
        X_train = np.vstack([dataset.train_X, X_syn])
        y_train = dataset.train_y + y_syn
        candidates = sorted(set(seen) | set(unseen))
        clf = train_softmax(X_train, y_train, candidates, clf_cfg)
        Xs, ys = dataset.test_rows(seen)
        Xu, yu = dataset.test_rows(unseen)
        if not ys or not yu:
            raise ValueError("generalized evaluation needs seen and unseen test rows")
        per_s = per_class_accuracy(clf.predict(Xs), ys, candidates)
        per_u = per_class_accuracy(clf.predict(Xu), yu, candidates)
        acc_s = float(np.mean(list(per_s.values())))
        acc_u = float(np.mean(list(per_u.values())))
        metrics = {"acc_s": acc_s, "acc_u": acc_u, "H": harmonic_mean(acc_s, acc_u)}
        per = {**per_s, **per_u}
        evaluated = candidates
    excluded = sorted(c for c in evaluated if c not in per)
    return EvalReport("imgc", mode, metrics, per, excluded, candidates,
                      config_echo if config_echo is not None else {"eval": asdict(config)},
                      config.seed, ablation)


def evaluate_classifier(clf: SoftmaxClassifier, X: np.ndarray, labels) -> float:
    return macro_accuracy(clf.predict(X), labels, clf.classes)
