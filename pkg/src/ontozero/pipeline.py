"""Pipeline steps shared by the command line and the experiment scripts.

Each step reads its inputs from the configured data directory and the
artifact directory ``paths.out``, writes its artifacts there, and returns
a report dict. Reports are written as sorted-key JSON; the only volatile
content (timestamps) lives under ``metadata``.
"""
from __future__ import annotations

import json
import logging
import shutil
import time
from pathlib import Path

import numpy as np

from . import kgc
from .config import RunConfig
from .feature_gan import GanModel, train_gan
from .imgc import FeatureDataset, zsl_evaluate
from .onto_encoder import ConceptEmbeddingTable, fit_encoder
from .ontology import ABLATABLE, ablate, ablation_label, load_schema_dir, load_word_vectors, text_vectors

log = logging.getLogger(__name__)

EMBEDDINGS = "onto_embeddings.txt"
GAN_CKPT = "gan.ckpt"
KGE_DIR = "kge"
EXTRACTOR_CKPT = "extractor.ckpt"
REPORTS = "reports"


class MissingArtifact(RuntimeError):
    pass


def out_dir(cfg: RunConfig) -> Path:
    d = Path(cfg.paths.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_report(cfg: RunConfig, name: str, report: dict) -> Path:
    report = dict(report)
    report["metadata"] = {"command": name, "created": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
    path = out_dir(cfg) / REPORTS / f"{name}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def strip_metadata(report: dict) -> dict:
    return {k: v for k, v in report.items() if k != "metadata"}


def _require(path: Path, what: str, hint: str) -> Path:
    if not path.exists():
        raise MissingArtifact(f"missing {what}: {path} ({hint})")
    return path


# ---------------------------------------------------------------------------
# ontology encoder
# ---------------------------------------------------------------------------


def load_schema(cfg: RunConfig):
    schema = load_schema_dir(cfg.paths.resolve("schema", "schema"))
    return ablate(schema, cfg.ablation) if cfg.ablation else schema


def train_onto(cfg: RunConfig) -> dict:
    schema = load_schema(cfg)
    text = None
    if cfg.use_text and cfg.encoder.mode == "text_aware":
        wv_path = cfg.paths.resolve("word_vectors", "word_vectors.txt")
        if wv_path.exists():
            text = text_vectors(schema, load_word_vectors(wv_path))
        else:
            log.warning("no word vectors at %s; text branch gets zero vectors", wv_path)
    model = fit_encoder(schema, text, cfg.encoder)
    table = model.table()
    table.save(out_dir(cfg) / EMBEDDINGS)
    return {
        "task": cfg.task,
        "ablation": ablation_label(cfg.ablation),
        "concepts": len(table.concepts),
        "dim": table.dim,
        "final_loss": model.history[-1],
        "seed": cfg.seed,
        "config": cfg.to_dict(),
    }


def load_table(cfg: RunConfig) -> ConceptEmbeddingTable:
    path = _require(out_dir(cfg) / EMBEDDINGS, "embedding table", "run train-onto first")
    return ConceptEmbeddingTable.load(path)


# ---------------------------------------------------------------------------
# KG side
# ---------------------------------------------------------------------------


def load_kg(cfg: RunConfig) -> kgc.KGDataset:
    return kgc.KGDataset.load(cfg.paths.resolve("kg", "kg"))


def pretrain_kge(cfg: RunConfig) -> dict:
    ds = load_kg(cfg)
    emb = kgc.pretrain_kge(ds, cfg.kge)
    emb.save(out_dir(cfg) / KGE_DIR)
    ranks = kgc.kge_tail_ranks(emb, ds, ds.train_triples)
    return {"task": "kgc", "method": emb.method, "final_loss": emb.history[-1],
            "train_metrics": kgc.kgc_metrics(ranks), "seed": cfg.seed, "config": cfg.to_dict()}


def load_kge(cfg: RunConfig) -> kgc.KGEmbedding:
    d = _require(out_dir(cfg) / KGE_DIR, "pretrained KG vectors", "run pretrain-kge first")
    return kgc.KGEmbedding.load(d)


def train_extractor(cfg: RunConfig) -> dict:
    ds = load_kg(cfg)
    model = kgc.train_extractor(ds, load_kge(cfg), cfg.extractor)
    model.save(out_dir(cfg) / EXTRACTOR_CKPT)
    return {"task": "kgc", "out_dim": model.out_dim, "loss": model.history["loss"],
            "valid_mrr": model.history["valid_mrr"], "seed": cfg.seed, "config": cfg.to_dict()}


def load_extractor(cfg: RunConfig, ds: kgc.KGDataset) -> kgc.ExtractorModel:
    path = _require(out_dir(cfg) / EXTRACTOR_CKPT, "extractor checkpoint", "run train-extractor first")
    return kgc.ExtractorModel.load(path, ds)


# ---------------------------------------------------------------------------
# GAN and evaluation
# ---------------------------------------------------------------------------


def load_features(cfg: RunConfig) -> FeatureDataset:
    return FeatureDataset.load(cfg.paths.resolve("features", "features"))


def train_gan_step(cfg: RunConfig) -> dict:
    table = load_table(cfg)
    if cfg.task == "imgc":
        ds = load_features(cfg)
        gan = train_gan(ds.train_X, ds.train_y, table, cfg.gan)
    else:
        kg = load_kg(cfg)
        X, y, neg = kgc.real_relation_features(load_extractor(cfg, kg), seed=cfg.seed)
        gan = train_gan(X, y, table, cfg.gan, negatives=neg)
    gan.save(out_dir(cfg) / GAN_CKPT)
    h = gan.history
    return {"task": cfg.task, "ablation": ablation_label(cfg.ablation), "iterations": len(h["loss_G"]),
            "final": {k: v[-1] for k, v in h.items() if v}, "seed": cfg.seed, "config": cfg.to_dict()}


def load_gan(cfg: RunConfig) -> GanModel:
    return GanModel.load(_require(out_dir(cfg) / GAN_CKPT, "GAN checkpoint", "run train-gan first"))


def _check_dims(gan: GanModel, table: ConceptEmbeddingTable, feat_dim: int) -> None:
    if table.dim != gan.emb_dim:
        raise ValueError(f"embedding dimension {table.dim} does not match the GAN condition size {gan.emb_dim}")
    if feat_dim != gan.feat_dim:
        raise ValueError(f"feature dimension {feat_dim} does not match the generator output {gan.feat_dim}")


def evaluate(cfg: RunConfig) -> dict:
    table, gan = load_table(cfg), load_gan(cfg)
    label = ablation_label(cfg.ablation)
    if cfg.task == "imgc":
        ds = load_features(cfg)
        _check_dims(gan, table, ds.dim)
        return zsl_evaluate(ds, gan, table, cfg.mode, cfg.eval, ablation=label,
                            config_echo=cfg.to_dict()).to_dict()
    kg = load_kg(cfg)
    model = load_extractor(cfg, kg)
    _check_dims(gan, table, model.out_dim)
    cand_path = cfg.paths.candidates
    cands = kgc.load_candidates(cand_path) if cand_path else None
    res = kgc.evaluate_unseen(kg, model, gan, table, cfg.kgc_eval, cands)
    return {
        "task": "kgc",
        "mode": "standard",
        "metrics": res["metrics"],
        "per_class": res["per_relation"],
        "baseline": {"random_MRR": res["random_mrr"]},
        "queries": len(res["ranks"]),
        "excluded": [],
        "candidates": "file" if cands else "all",
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "ablation": label,
    }


def report_name(cfg: RunConfig) -> str:
    return f"eval-{cfg.mode}" if cfg.task == "imgc" else "eval-kgc"


def run_all(cfg: RunConfig, *, reports: bool = True) -> dict:
    """Full pipeline for one seed; returns the evaluation report."""
    steps = [("train-onto", train_onto)]
    if cfg.task == "kgc":
        steps = [("pretrain-kge", pretrain_kge), ("train-extractor", train_extractor)] + steps
    steps += [("train-gan", train_gan_step)]
    for name, fn in steps:
        rep = fn(cfg)
        if reports:
            write_report(cfg, name, rep)
    rep = evaluate(cfg)
    if reports:
        write_report(cfg, report_name(cfg), rep)
    return rep


# ---------------------------------------------------------------------------
# ablation suite
# ---------------------------------------------------------------------------


def present_tags(cfg: RunConfig) -> list[str]:
    schema = load_schema_dir(cfg.paths.resolve("schema", "schema"))
    tags = {schema.tag(p) for _, p, _ in schema.triples}
    if any(schema.description(c) for c in schema.concepts):
        tags.add("comment")
    return [t for t in ABLATABLE if t in tags]


def headline(cfg: RunConfig) -> str:
    if cfg.task == "kgc":
        return "MRR"
    return "acc" if cfg.mode == "standard" else "H"


def ablate_suite(cfg: RunConfig) -> dict:
    """Full schema plus each single-tag drop, for every seed in ``cfg.seeds``."""
    root = Path(cfg.paths.out)
    variants = [()] + [(t,) for t in present_tags(cfg)]
    rows: dict[str, dict] = {}
    for seed in cfg.seeds:
        base = cfg.with_seed(int(seed))
        shared = root / "ablation" / "shared" / f"seed{seed}"
        if cfg.task == "kgc":
            pre = base.with_seed(int(seed))  # copy
            pre.paths.out = str(shared)
            pre.ablation = []
            write_report(pre, "pretrain-kge", pretrain_kge(pre))
            write_report(pre, "train-extractor", train_extractor(pre))
        for drop in variants:
            run = base.with_seed(int(seed))
            run.ablation = list(drop)
            label = ablation_label(drop)
            run.paths.out = str(root / "ablation" / label / f"seed{seed}")
            if cfg.task == "kgc":
                out = out_dir(run)
                for name in (KGE_DIR, EXTRACTOR_CKPT):
                    _copy_artifact(shared / name, out / name)
            rep = run_all(run)
            rows.setdefault(label, {})[str(seed)] = rep["metrics"]
    key = headline(cfg)
    summary = {
        label: {"per_seed": per_seed,
                "mean": {m: float(np.mean([v[m] for v in per_seed.values()])) for m in next(iter(per_seed.values()))}}
        for label, per_seed in rows.items()
    }
    return {"task": cfg.task, "mode": cfg.mode, "metric": key, "variants": list(rows), "results": summary,
            "seeds": list(cfg.seeds), "config": cfg.to_dict()}


def _copy_artifact(src: Path, dst: Path) -> None:
    if dst.exists():
        shutil.rmtree(dst) if dst.is_dir() else dst.unlink()
    if src.is_dir():
        shutil.copytree(src, dst)
    else:
        shutil.copyfile(src, dst)
