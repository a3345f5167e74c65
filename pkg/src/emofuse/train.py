"""Training loop, evaluation metrics and cross-fold combination.

Per fold: seed-deterministic mini-batch shuffling, one gradient step per
batch (analytic gradients, global-norm clipping, Adam), validation after
every epoch, and test metrics from the parameter snapshot with the best
validation unweighted accuracy. Fold results are combined by pooling the
per-segment predictions, which is the same as summing the confusion
matrices.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import dataio, fusion, numkit
from .alignment import METHOD_CHARACTERS, AlignmentSpec, apply_alignment
from .dataio import (
    LABELS,
    BadMagicError,
    FoldPlan,
    SegmentRecord,
    TruncatedPayloadError,
    UnsupportedVersionError,
    align8,
    atomic_write_bytes,
)
from .fusion import ATTENTION_ARCHS, FusionModel, ModelConfig, init_params, model_forward

N_CLASSES = numkit.N_CLASSES


@dataclass
class Hyper:
    """Optimizer and loop settings; the defaults mirror the training recipe
    (lr 1e-5, batches of 8, global-norm clip at 1)."""

    lr: float = 1e-5
    batch_size: int = 8
    max_epochs: int = 50
    clip_norm: float = 1.0
    seed: int = 0
    precision: str = "f32"

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.max_epochs < 0 or self.clip_norm <= 0:
            raise ValueError("hyperparameters must be positive (max_epochs may be 0)")
        if self.precision not in ("f32", "f64"):
            raise ValueError(f"unknown precision {self.precision!r}")

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64

    def to_dict(self) -> dict:
        return {
            "lr": self.lr,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "clip_norm": self.clip_norm,
            "seed": self.seed,
            "precision": self.precision,
        }


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@dataclass
class Metrics:
    """Confusion matrix (rows true, cols predicted), per-class recalls and UA."""

    confusion: np.ndarray
    per_class_recall: np.ndarray  # nan where the class is absent
    ua: float
    predictions: list[tuple[str, int, int]]  # (segment_id, true, predicted)
    missing_classes: tuple[int, ...] = ()

    @property
    def warned(self) -> bool:
        """True when some class had no segments and UA covers only the rest."""
        return bool(self.missing_classes)

    def to_dict(self) -> dict:
        recall = {
            name: (None if np.isnan(self.per_class_recall[i]) else float(self.per_class_recall[i]))
            for i, name in enumerate(LABELS)
        }
        return {
            "confusion": self.confusion.astype(int).tolist(),
            "recall": recall,
            "ua": float(self.ua),
            "missing_classes": [LABELS[i] for i in self.missing_classes],
            "predictions": [[seg_id, t, p] for seg_id, t, p in self.predictions],
        }


def metrics_from_predictions(predictions: list[tuple[str, int, int]]) -> Metrics:
    """Build confusion, recalls and UA from (id, true, predicted) triples."""
    if not predictions:
        raise ValueError("no predictions to score")
    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for _, true, pred in predictions:
        confusion[true, pred] += 1
    row_sums = confusion.sum(axis=1)
    recall = np.full(N_CLASSES, np.nan)
    present = row_sums > 0
    recall[present] = confusion.diagonal()[present] / row_sums[present]
    missing = tuple(int(i) for i in np.flatnonzero(~present))
    ua = float(np.mean(recall[present]))
    return Metrics(
        confusion=confusion,
        per_class_recall=recall,
        ua=ua,
        predictions=list(predictions),
        missing_classes=missing,
    )


@dataclass
class PreparedSegment:
    """A segment with alignment already applied and the label as an index."""

    id: str
    h_p: np.ndarray  # aligned for attention architectures, raw otherwise
    h_s: np.ndarray
    label: int


def prepare_segments(records: list[SegmentRecord], config: ModelConfig, dtype=np.float32):
    """Cast to the training dtype and apply alignment once per segment."""
    needs_alignment = config.architecture in ATTENTION_ARCHS
    prepared = []
    for rec in records:
        if rec.h_p.shape[1] != config.d_model or rec.h_s.shape[1] != config.d_model:
            raise ValueError(
                f"segment {rec.id}: widths ({rec.h_p.shape[1]}, {rec.h_s.shape[1]}) "
                f"do not match d_model {config.d_model}"
            )
        h_p = rec.h_p.astype(dtype)
        if needs_alignment:
            lengths = rec.char_lengths if config.alignment == METHOD_CHARACTERS else None
            spec = AlignmentSpec(method=config.alignment, char_lengths=lengths)
            h_p = apply_alignment(h_p, rec.n_subwords, spec)
        prepared.append(
            PreparedSegment(id=rec.id, h_p=h_p, h_s=rec.h_s.astype(dtype), label=rec.label_index)
        )
    return prepared


def _evaluate_prepared(model: FusionModel, prepared: list[PreparedSegment]) -> Metrics:
    predictions = []
    for seg in prepared:
        probs = model_forward(model, seg.h_p, seg.h_s)
        predictions.append((seg.id, seg.label, int(np.argmax(probs))))
    return metrics_from_predictions(predictions)


def evaluate(model: FusionModel, segments: list[SegmentRecord]) -> Metrics:
    """Metrics for a list of raw segment records (alignment applied here)."""
    if not segments:
        raise ValueError("no segments to evaluate")
    dtype = next(iter(model.params.values())).dtype
    return _evaluate_prepared(model, prepare_segments(segments, model.config, dtype))


def combine_folds(per_fold: list[Metrics]) -> Metrics:
    """Pool per-segment predictions across folds; segment ids must be disjoint.

    The pooled confusion matrix equals the elementwise sum of the fold
    confusions, and UA is recomputed from it.
    """
    seen: set[str] = set()
    pooled: list[tuple[str, int, int]] = []
    for metrics in per_fold:
        for seg_id, true, pred in metrics.predictions:
            if seg_id in seen:
                raise ValueError(f"segment {seg_id!r} appears in more than one fold")
            seen.add(seg_id)
            pooled.append((seg_id, true, pred))
    combined = metrics_from_predictions(pooled)
    total = sum((m.confusion for m in per_fold), np.zeros_like(combined.confusion))
    if not np.array_equal(total, combined.confusion):
        raise AssertionError("pooled confusion does not match the sum of fold confusions")
    return combined


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class FoldResult:
    fold_index: int
    best_model: FusionModel
    history: list[dict]
    test_metrics: Metrics
    best_epoch: int  # 0 means "initialization" (max_epochs == 0)
    best_val_ua: float


def train_fold(
    config: ModelConfig,
    hyper: Hyper,
    records: list[SegmentRecord],
    fold_index: int,
    plan: FoldPlan,
) -> FoldResult:
    """Train one fold and report test metrics from the best-validation-UA epoch.

    Ties in validation UA keep the earlier epoch. Everything is a pure
    function of (config, hyper, records, fold_index, plan).
    """
    if not 0 <= fold_index < plan.k:
        raise ValueError(f"fold index {fold_index} out of range for k={plan.k}")
    split = plan.folds[fold_index]
    by_id = {rec.id: rec for rec in records}
    try:
        train_recs = [by_id[i] for i in split.train]
        val_recs = [by_id[i] for i in split.validation]
        test_recs = [by_id[i] for i in split.test]
    except KeyError as exc:
        raise ValueError(f"fold plan references unknown segment id {exc}") from exc
    if not train_recs or not val_recs or not test_recs:
        raise ValueError(f"fold {fold_index} has an empty split")

    dtype = hyper.dtype
    train_items = prepare_segments(train_recs, config, dtype)
    val_items = prepare_segments(val_recs, config, dtype)
    test_items = prepare_segments(test_recs, config, dtype)

    model = init_params(config, seed=(hyper.seed, fold_index, 0), dtype=dtype)
    adam = numkit.AdamState.zeros_like(model.params)
    shuffle_rng = np.random.default_rng((hyper.seed, fold_index, 1))

    best_params = {k: v.copy() for k, v in model.params.items()}
    best_val_ua = -1.0
    best_epoch = 0
    history: list[dict] = []

    n_train = len(train_items)
    for epoch in range(1, hyper.max_epochs + 1):
        order = shuffle_rng.permutation(n_train)
        step_losses = []
        step_norms = []
        for start in range(0, n_train, hyper.batch_size):
            batch = [
                (train_items[i].h_p, train_items[i].h_s, train_items[i].label)
                for i in order[start : start + hyper.batch_size]
            ]
            try:
                loss, grads = fusion.model_grad(model, batch)
            except ValueError as exc:
                raise RuntimeError(
                    f"aborting fold {fold_index} at epoch {epoch}: {exc}"
                ) from exc
            clipped = numkit.clip_global_norm(grads, hyper.clip_norm)
            step_norms.append(numkit.global_norm(clipped))
            model.params, adam = numkit.adam_step(model.params, clipped, adam, lr=hyper.lr)
            step_losses.append(loss)
        val_ua = _evaluate_prepared(model, val_items).ua
        history.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(step_losses)),
                "val_ua": float(val_ua),
                "postclip_norm_mean": float(np.mean(step_norms)),
                "postclip_norm_max": float(np.max(step_norms)),
            }
        )
        if val_ua > best_val_ua:
            best_val_ua = val_ua
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in model.params.items()}

    best_model = FusionModel(config=config, params=best_params)
    test_metrics = _evaluate_prepared(best_model, test_items)
    return FoldResult(
        fold_index=fold_index,
        best_model=best_model,
        history=history,
        test_metrics=test_metrics,
        best_epoch=best_epoch,
        best_val_ua=float(best_val_ua),
    )


@dataclass
class CrossValResult:
    plan: FoldPlan
    fold_results: list[FoldResult]
    combined: Metrics


def train_all_folds(
    config: ModelConfig,
    hyper: Hyper,
    records: list[SegmentRecord],
    k: int = 5,
    fold_seed: int | None = None,
) -> CrossValResult:
    """Train every fold of a speaker-disjoint plan and pool the test outputs."""
    plan = dataio.make_folds(records, k=k, seed=hyper.seed if fold_seed is None else fold_seed)
    fold_results = [train_fold(config, hyper, records, i, plan) for i in range(k)]
    combined = combine_folds([fr.test_metrics for fr in fold_results])
    return CrossValResult(plan=plan, fold_results=fold_results, combined=combined)


def build_report(config: ModelConfig, hyper: Hyper, result: CrossValResult) -> dict:
    """JSON-ready report: per-fold blocks plus one combined block.

    Reports both the pooled UA (predictions concatenated across folds) and
    the mean of the per-fold UAs.
    """
    fold_blocks = []
    for fr in result.fold_results:
        fold_blocks.append(
            {
                "fold": fr.fold_index,
                "best_epoch": fr.best_epoch,
                "best_val_ua": fr.best_val_ua,
                "test": fr.test_metrics.to_dict(),
            }
        )
    return {
        "config": config.to_dict(),
        "hyper": hyper.to_dict(),
        "trainable_params": fusion.count_params(config),
        "fold_seed": result.plan.seed,
        "k": result.plan.k,
        "folds": fold_blocks,
        "combined": {
            **result.combined.to_dict(),
            "ua_pooled": float(result.combined.ua),
            "ua_mean_of_folds": float(
                np.mean([fr.test_metrics.ua for fr in result.fold_results])
            ),
        },
    }


def report_to_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def history_to_jsonl(fold_results: list[FoldResult]) -> str:
    lines = []
    for fr in fold_results:
        for row in fr.history:
            lines.append(json.dumps({"fold": fr.fold_index, **row}, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# Model serialization (same conventions as the bundle format)
# ---------------------------------------------------------------------------

MODEL_MAGIC = b"EMOM"
MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<4sHI")


def save_model(model: FusionModel, path, meta: dict | None = None) -> None:
    """Little-endian container: magic, version, JSON manifest, aligned payloads."""
    dtype = next(iter(model.params.values())).dtype
    dtype_tag = "<f8" if dtype == np.float64 else "<f4"
    entries = []
    payloads = []
    cursor = 0
    for name, arr in model.params.items():
        data = np.ascontiguousarray(arr, dtype=dtype_tag).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": cursor})
        payloads.append((cursor, data))
        cursor = align8(cursor + len(data))
    manifest = {
        "config": model.config.to_dict(),
        "dtype": dtype_tag,
        "params": entries,
        "meta": meta or {},
    }
    manifest_bytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    header = _MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, len(manifest_bytes))
    base = align8(len(header) + len(manifest_bytes))
    blob = bytearray(base + cursor)
    blob[: len(header)] = header
    blob[len(header) : len(header) + len(manifest_bytes)] = manifest_bytes
    for offset, data in payloads:
        blob[base + offset : base + offset + len(data)] = data
    atomic_write_bytes(path, bytes(blob))


def load_model(path) -> tuple[FusionModel, dict]:
    """Read a model container back; returns (model, meta)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != MODEL_MAGIC:
        raise BadMagicError(f"{path}: not a model file")
    _, version, manifest_len = _MODEL_HEADER.unpack_from(blob)
    if version != MODEL_VERSION:
        raise UnsupportedVersionError(f"{path}: model version {version}")
    manifest = json.loads(blob[_MODEL_HEADER.size : _MODEL_HEADER.size + manifest_len].decode("utf-8"))
    config = ModelConfig.from_dict(manifest["config"])
    dtype = np.dtype(manifest["dtype"])
    base = align8(_MODEL_HEADER.size + manifest_len)
    params = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        offset = base + int(entry["offset"])
        if offset + count * dtype.itemsize > len(blob):
            raise TruncatedPayloadError(f"{path}: parameter {entry['name']} truncated")
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=offset)
        params[entry["name"]] = arr.astype(dtype.newbyteorder("=")).reshape(shape)
    return FusionModel(config=config, params=params), manifest.get("meta", {})
