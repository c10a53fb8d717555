"""Training and evaluation loops."""
from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from relqa.embed import EmbedSpec, load_source
from relqa.errors import NonFiniteError, ValidationError
from relqa.graphbuild import Instance, build_graph
from relqa.models import GraphInput, ModelConfig, QAModel, prepare
from relqa.numcore import Tape, adam_step, dump_checkpoint, load_checkpoint, mean

log = logging.getLogger(__name__)

DEFAULT_EMBEDDINGS = ({"name": "hash", "kind": "hash_fallback", "dim": 32},)


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    epochs: int = 50
    batch_size: int = 16
    lr: float = 1e-4
    patience: int = 5
    out_dir: str | None = None
    train_path: str | None = None
    dev_path: str | None = None
    embeddings: list[dict] = field(default_factory=lambda: [dict(e) for e in DEFAULT_EMBEDDINGS])
    record_time: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ValidationError(f"lr must be positive, got {self.lr}")
        if self.patience < 1:
            raise ValidationError(f"patience must be >= 1, got {self.patience}")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["model"] = self.model.to_dict()
        return out

    @classmethod
    def from_dict(cls, rec: dict) -> RunConfig:
        rec = dict(rec)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(rec) - known
        if unknown:
            raise ValidationError(f"unknown run config keys {sorted(unknown)}")
        rec["model"] = ModelConfig.from_dict(rec.get("model", {}))
        return cls(**rec)


def build_spec(names: Sequence[str], embeddings: Sequence[dict]) -> EmbedSpec:
    registry = {}
    for entry in embeddings:
        src = load_source(entry)
        registry[src.name] = src
    return EmbedSpec.resolve(list(names), registry)


def prepare_all(instances: Sequence[Instance], config: ModelConfig, spec: EmbedSpec) -> list[GraphInput]:
    return [prepare(inst, build_graph(inst, config.graph), spec) for inst in instances]


@dataclass
class TrainResult:
    metrics: list[dict]
    best_dev_acc: float
    best_epoch: int
    model: QAModel
    checkpoint: bytes

    @property
    def epochs_run(self) -> int:
        return len(self.metrics)


def metrics_jsonl(records: Sequence[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


def accuracy(model: QAModel, inputs: Sequence[GraphInput]) -> float:
    if not inputs:
        return 0.0
    return sum(model.forward(x).prediction == x.answer for x in inputs) / len(inputs)


def train(run: RunConfig, train_set: Sequence[Instance], dev_set: Sequence[Instance],
          out_dir=None) -> TrainResult:
    """Minimise mean cross-entropy with Adam; keep the best-dev parameters."""
    if not train_set:
        raise ValidationError("training set is empty")
    if not dev_set:
        raise ValidationError("dev set is empty")
    cfg = run.model
    spec = build_spec(cfg.embed_spec, run.embeddings)
    train_in = prepare_all(train_set, cfg, spec)
    dev_in = prepare_all(dev_set, cfg, spec)
    model = QAModel(cfg, spec.total_dim)
    params = model.params
    order_rng = np.random.default_rng([cfg.seed, 1])
    drop_rng = np.random.default_rng([cfg.seed, 2])

    metrics: list[dict] = []
    best_acc, best_epoch, best_state = -1.0, 0, model.state()
    out_dir = Path(out_dir or run.out_dir) if (out_dir or run.out_dir) else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "metrics.jsonl").write_text("")

    for epoch in range(1, run.epochs + 1):
        start = time.perf_counter()
        order = order_rng.permutation(len(train_in))
        total_loss, correct = 0.0, 0
        for b in range(0, len(order), run.batch_size):
            batch = [train_in[i] for i in order[b:b + run.batch_size]]
            try:
                with Tape() as tape:
                    losses = []
                    for x in batch:
                        loss, scores = model.loss(x, drop_rng)
                        losses.append(loss)
                        correct += scores.prediction == x.answer
                        total_loss += loss.item()
                    grads = tape.backward(mean(losses), wrt=[p.value for p in params])
                adam_step(params, grads, lr=run.lr)
            except NonFiniteError as exc:
                ids = [x.instance_id for x in batch]
                raise NonFiniteError(f"epoch {epoch}, batch starting {b}, instances {ids}: {exc}") from None
        dev_acc = accuracy(model, dev_in)
        rec = {
            "epoch": epoch,
            "train_loss": total_loss / len(train_in),
            "train_acc": correct / len(train_in),
            "dev_acc": dev_acc,
            "seconds": round(time.perf_counter() - start, 3) if run.record_time else None,
        }
        metrics.append(rec)
        log.info("epoch %d loss %.4f train %.3f dev %.3f", epoch, rec["train_loss"], rec["train_acc"], dev_acc)
        if out_dir:
            with (out_dir / "metrics.jsonl").open("a") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        if dev_acc > best_acc:
            best_acc, best_epoch, best_state = dev_acc, epoch, model.state()
        elif epoch - best_epoch >= run.patience:
            break

    model.store.load_state(best_state)
    meta = dict(model.checkpoint_meta(), embeddings=list(run.embeddings),
                best_dev_acc=best_acc, best_epoch=best_epoch)
    blob = dump_checkpoint(best_state, meta)
    if out_dir:
        (out_dir / "best.ckpt").write_bytes(blob)
        summary = {"best_dev_acc": best_acc, "best_epoch": best_epoch, "epochs_run": len(metrics),
                   "label": cfg.label, "setting": cfg.graph.setting}
        (out_dir / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    return TrainResult(metrics, best_acc, best_epoch, model, blob)


@dataclass
class EvalResult:
    accuracy: float
    predictions: list[dict]

    def predictions_jsonl(self) -> str:
        return metrics_jsonl(self.predictions)


def load_model(path) -> tuple[QAModel, dict]:
    meta, state = load_checkpoint(path)
    return QAModel.from_checkpoint(meta, state), meta


def evaluate(model: QAModel, dataset: Sequence[Instance], embeddings: Sequence[dict]) -> EvalResult:
    """Accuracy plus one prediction record (with probabilities) per instance."""
    spec = build_spec(model.config.embed_spec, embeddings)
    if spec.total_dim != model.feature_dim:
        raise ValidationError(
            f"embeddings give {spec.total_dim} features but the model expects {model.feature_dim}"
        )
    preds = []
    for inst in dataset:
        x = prepare(inst, build_graph(inst, model.config.graph), spec)
        scores = model.forward(x)
        k = scores.prediction
        preds.append({
            "id": inst.id,
            "gold": inst.answer,
            "predicted": inst.candidates[k],
            "correct": k == inst.answer_index,
            "probabilities": {c: float(p) for c, p in zip(inst.candidates, scores.probabilities)},
        })
    acc = sum(p["correct"] for p in preds) / len(preds) if preds else 0.0
    return EvalResult(acc, preds)


def evaluate_checkpoint(path, dataset: Sequence[Instance]) -> EvalResult:
    model, meta = load_model(path)
    return evaluate(model, dataset, meta.get("embeddings", DEFAULT_EMBEDDINGS))
