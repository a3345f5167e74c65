"""Command-line entry point: synth, folds, train, eval, gradcheck, align, report.

Every subcommand is deterministic given its flags and seed. Exit codes:
0 success, 2 usage error, 3 inconsistent configuration, 4 data or format
error, 5 gradient-check failure, 1 unexpected failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import dataio, fusion, numkit, train
from .alignment import METHOD_CHARACTERS, METHOD_SUBWORDS

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_GRADCHECK = 5

ARCH_BY_FLAG = {
    "unimodal-para": fusion.ARCH_UNIMODAL_PARA,
    "unimodal-sem": fusion.ARCH_UNIMODAL_SEM,
    "score": fusion.ARCH_SCORE,
    "concat": fusion.ARCH_CONCAT,
    "para-xattn": fusion.ARCH_PARA_XATTN,
    "sem-xattn": fusion.ARCH_SEM_XATTN,
    "symmetric": fusion.ARCH_SYMMETRIC,
}

ARCH_TITLES = {
    fusion.ARCH_UNIMODAL_PARA: "Unimodal paralinguistic",
    fusion.ARCH_UNIMODAL_SEM: "Unimodal semantic",
    fusion.ARCH_SCORE: "Score",
    fusion.ARCH_CONCAT: "Concatenation",
    fusion.ARCH_PARA_XATTN: "Paralinguistic cross-attention",
    fusion.ARCH_SEM_XATTN: "Semantic cross-attention",
    fusion.ARCH_SYMMETRIC: "Symmetric cross-attention",
}

# Bundles this narrow get the fast desk-scale defaults (lr 1e-3, 30 epochs)
# unless the flags pin something else; wide bundles default to lr 1e-5, 50.
DESK_WIDTH_LIMIT = 64


class ConfigError(Exception):
    """Mutually inconsistent or unresolvable run configuration."""


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emofuse",
        description="Late-fusion emotion classifiers over embedding bundles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic embedding bundle")
    p_synth.add_argument("--out", required=True, help="output bundle path")
    p_synth.add_argument(
        "--preset",
        default="partial-info",
        choices=["partial-info", "partial-info-xl"],
        help="partial-info: 200 segments/class desk preset; partial-info-xl: 1056/class",
    )
    p_synth.add_argument("--spec-json", help="full SynthSpec as JSON (overrides the preset)")
    p_synth.add_argument("--segments-per-class", type=int)
    p_synth.add_argument("--d-p", type=int)
    p_synth.add_argument("--d-s", type=int)
    p_synth.add_argument("--sigma", type=float)
    p_synth.add_argument("--speakers-per-class", type=int)
    p_synth.add_argument("--seed", type=int, default=0)

    p_folds = sub.add_parser("folds", help="emit a speaker-disjoint fold plan as JSON")
    p_folds.add_argument("--bundle", required=True)
    p_folds.add_argument("--k", type=int, default=5)
    p_folds.add_argument("--seed", type=int, default=0)
    p_folds.add_argument("--out", help="write JSON here instead of stdout")

    p_train = sub.add_parser("train", help="train one fold, all folds, or the whole grid")
    p_train.add_argument("--config", help="JSON file with defaults for any train flag")
    p_train.add_argument("--bundle")
    p_train.add_argument("--arch", choices=sorted(ARCH_BY_FLAG))
    p_train.add_argument("--align", choices=[METHOD_SUBWORDS, METHOD_CHARACTERS])
    p_train.add_argument(
        "--size",
        choices=sorted(fusion.SIZE_PRESETS),
        help="attention-head ladder (base: 16 heads, large: 32); width follows the bundle",
    )
    p_train.add_argument("--d-model", type=int, help="override the width taken from the bundle")
    p_train.add_argument("--heads", type=int, help="override the head count from --size")
    p_train.add_argument("--lr", type=float)
    p_train.add_argument("--batch-size", type=int)
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--clip-norm", type=float)
    p_train.add_argument("--precision", choices=["f32", "f64"])
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--fold", type=int, help="train a single fold index")
    p_train.add_argument("--all-folds", action="store_true")
    p_train.add_argument("--k", type=int)
    p_train.add_argument("--fold-seed", type=int, help="seed for the fold plan (defaults to --seed)")
    p_train.add_argument("--grid", action="store_true", help="run the full fusion x alignment x size grid")
    p_train.add_argument("--out", help="output directory")

    p_eval = sub.add_parser("eval", help="metrics for a saved model on a bundle split")
    p_eval.add_argument("--bundle", required=True)
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--split", default="test", choices=["train", "validation", "test"])
    p_eval.add_argument("--fold", type=int, help="defaults to the fold stored in the model file")
    p_eval.add_argument("--k", type=int)
    p_eval.add_argument("--fold-seed", type=int)
    p_eval.add_argument("--out", help="write metrics JSON here instead of stdout")

    p_grad = sub.add_parser("gradcheck", help="finite-difference audit of every architecture")
    p_grad.add_argument("--d-model", type=int, default=8)
    p_grad.add_argument("--heads", type=int, default=2)
    p_grad.add_argument("--subwords", type=int, default=3)
    p_grad.add_argument("--frames", type=int, default=7)
    p_grad.add_argument("--batch", type=int, default=2)
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--tolerance", type=float, default=1e-4)

    p_align = sub.add_parser("align", help="dump a segment's aligned matrix, both methods")
    p_align.add_argument("--bundle", required=True)
    group = p_align.add_mutually_exclusive_group()
    group.add_argument("--segment", help="segment id")
    group.add_argument("--index", type=int, default=0, help="segment position in the bundle")
    p_align.add_argument("--out", help="write JSON here instead of stdout")

    p_report = sub.add_parser("report", help="render train reports as an aligned text table")
    p_report.add_argument("inputs", nargs="*", help="report.json files")
    p_report.add_argument("--grid-dir", help="directory holding per-cell report.json files")
    p_report.add_argument("--out", help="write the table here instead of stdout")

    return parser


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def _cmd_synth(args) -> int:
    if args.spec_json:
        with open(args.spec_json, encoding="utf-8") as fh:
            spec = dataio.SynthSpec.from_dict(json.load(fh))
    else:
        overrides = {"seed": args.seed}
        if args.preset == "partial-info-xl":
            overrides["n_per_class"] = 1056
            overrides["n_speakers_per_class"] = 50
        if args.segments_per_class is not None:
            overrides["n_per_class"] = args.segments_per_class
        if args.d_p is not None:
            overrides["d_p"] = args.d_p
        if args.d_s is not None:
            overrides["d_s"] = args.d_s
        if args.sigma is not None:
            overrides["sigma"] = args.sigma
        if args.speakers_per_class is not None:
            overrides["n_speakers_per_class"] = args.speakers_per_class
        spec = dataio.SynthSpec(**overrides)
    records = dataio.synth_generate(spec)
    dataio.write_bundle(records, args.out)
    print(
        f"wrote {len(records)} segments "
        f"(d_p={spec.d_p}, d_s={spec.d_s}, sigma={spec.sigma}, seed={spec.seed}) to {args.out}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# folds
# ---------------------------------------------------------------------------


def _cmd_folds(args) -> int:
    records = dataio.read_bundle(args.bundle)
    plan = dataio.make_folds(records, k=args.k, seed=args.seed)
    _emit(json.dumps(plan.to_dict(), sort_keys=True, indent=2) + "\n", args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _apply_config_file(args) -> None:
    if not args.config:
        return
    with open(args.config, encoding="utf-8") as fh:
        defaults = json.load(fh)
    for key, value in defaults.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ConfigError(f"unknown config key {key!r}")
        if getattr(args, attr) in (None, False):
            setattr(args, attr, value)


def _bundle_width(records) -> int:
    if not records:
        raise ConfigError("bundle is empty")
    d_p = records[0].h_p.shape[1]
    d_s = records[0].h_s.shape[1]
    if d_p != d_s:
        raise ConfigError(
            f"bundle widths differ (d_p={d_p}, d_s={d_s}); fusion needs equal widths"
        )
    return d_p


def _resolve_model_config(args, records, arch: str, align: str) -> fusion.ModelConfig:
    d_model = args.d_model if args.d_model is not None else _bundle_width(records)
    if args.heads is not None:
        n_heads = args.heads
    else:
        size = args.size or "base"
        n_heads = fusion.SIZE_PRESETS[size][1]
    try:
        return fusion.ModelConfig(
            architecture=arch, d_model=d_model, n_heads=n_heads, alignment=align
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _resolve_hyper(args, d_model: int) -> train.Hyper:
    desk = d_model <= DESK_WIDTH_LIMIT
    return train.Hyper(
        lr=args.lr if args.lr is not None else (1e-3 if desk else 1e-5),
        batch_size=args.batch_size if args.batch_size is not None else 8,
        max_epochs=args.epochs if args.epochs is not None else (30 if desk else 50),
        clip_norm=args.clip_norm if args.clip_norm is not None else 1.0,
        seed=args.seed if args.seed is not None else 0,
        precision=args.precision or "f32",
    )


def _train_cell(records, config, hyper, k, fold_seed, out_dir, fold_index=None, size_label=None):
    """Train one configuration (single fold or all folds) and write artifacts."""
    os.makedirs(out_dir, exist_ok=True)
    plan = dataio.make_folds(records, k=k, seed=fold_seed)
    if fold_index is not None:
        fold_results = [train.train_fold(config, hyper, records, fold_index, plan)]
        combined = fold_results[0].test_metrics
        result = train.CrossValResult(plan=plan, fold_results=fold_results, combined=combined)
    else:
        fold_results = [train.train_fold(config, hyper, records, i, plan) for i in range(k)]
        combined = train.combine_folds([fr.test_metrics for fr in fold_results])
        result = train.CrossValResult(plan=plan, fold_results=fold_results, combined=combined)

    report = train.build_report(config, hyper, result)
    if size_label:
        report["config"]["size_label"] = size_label
    if fold_index is not None:
        report["fold_index"] = fold_index
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(train.report_to_json(report))
    with open(os.path.join(out_dir, "history.jsonl"), "w", encoding="utf-8") as fh:
        fh.write(train.history_to_jsonl(fold_results))
    meta = {"k": k, "fold_seed": fold_seed, "hyper": hyper.to_dict()}
    if fold_index is not None:
        train.save_model(
            fold_results[0].best_model,
            os.path.join(out_dir, "model.bin"),
            meta={**meta, "fold_index": fold_index},
        )
    else:
        for fr in fold_results:
            train.save_model(
                fr.best_model,
                os.path.join(out_dir, f"model_fold{fr.fold_index}.bin"),
                meta={**meta, "fold_index": fr.fold_index},
            )
    return report


def _grid_cells():
    """The comparative-study grid: fusion x size, with both alignments for
    the attention fusions."""
    cells = []
    for arch in (fusion.ARCH_SCORE, fusion.ARCH_CONCAT):
        for size in ("base", "large"):
            cells.append((arch, METHOD_SUBWORDS, size, f"{arch}_{size}"))
    for arch in (fusion.ARCH_PARA_XATTN, fusion.ARCH_SEM_XATTN, fusion.ARCH_SYMMETRIC):
        for align in (METHOD_SUBWORDS, METHOD_CHARACTERS):
            for size in ("base", "large"):
                cells.append((arch, align, size, f"{arch}_{align}_{size}"))
    return cells


def _cmd_train(args) -> int:
    _apply_config_file(args)
    if not args.bundle:
        raise ConfigError("--bundle is required")
    if not args.out:
        raise ConfigError("--out is required")
    records = dataio.read_bundle(args.bundle)
    k = args.k if args.k is not None else 5
    seed = args.seed if args.seed is not None else 0
    fold_seed = args.fold_seed if args.fold_seed is not None else seed

    if args.grid:
        summaries = []
        for arch, align, size, name in _grid_cells():
            grid_args = argparse.Namespace(**vars(args))
            grid_args.size = size
            grid_args.heads = args.heads
            config = _resolve_model_config(grid_args, records, arch, align)
            hyper = _resolve_hyper(args, config.d_model)
            report = _train_cell(
                records, config, hyper, k, fold_seed,
                os.path.join(args.out, name), size_label=size,
            )
            ua = report["combined"]["ua_pooled"]
            summaries.append({"cell": name, "ua_pooled": ua})
            print(f"{name:40s} pooled UA {ua:.4f}")
        with open(os.path.join(args.out, "grid_summary.json"), "w", encoding="utf-8") as fh:
            json.dump({"cells": summaries}, fh, sort_keys=True, indent=2)
            fh.write("\n")
        return EXIT_OK

    if not args.arch:
        raise ConfigError("--arch is required (or use --grid)")
    if args.fold is None and not args.all_folds:
        raise ConfigError("pick --fold N or --all-folds")
    arch = ARCH_BY_FLAG[args.arch]
    align = args.align or METHOD_SUBWORDS
    config = _resolve_model_config(args, records, arch, align)
    hyper = _resolve_hyper(args, config.d_model)
    report = _train_cell(
        records, config, hyper, k, fold_seed, args.out,
        fold_index=None if args.all_folds else args.fold,
        size_label=args.size,
    )
    print(
        f"{ARCH_TITLES[arch]} ({align}, d_model={config.d_model}, h={config.n_heads}): "
        f"pooled UA {report['combined']['ua_pooled']:.4f} -> {args.out}/report.json"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def _cmd_eval(args) -> int:
    model, meta = train.load_model(args.model)
    records = dataio.read_bundle(args.bundle)
    fold_index = args.fold if args.fold is not None else meta.get("fold_index")
    if fold_index is None:
        raise ConfigError("--fold not given and the model file has no stored fold")
    k = args.k if args.k is not None else meta.get("k", 5)
    fold_seed = args.fold_seed if args.fold_seed is not None else meta.get("fold_seed", 0)
    plan = dataio.make_folds(records, k=k, seed=fold_seed)
    if not 0 <= fold_index < k:
        raise ConfigError(f"fold {fold_index} out of range for k={k}")
    split = plan.folds[fold_index]
    ids = {"train": split.train, "validation": split.validation, "test": split.test}[args.split]
    by_id = {rec.id: rec for rec in records}
    segments = [by_id[i] for i in ids]
    metrics = train.evaluate(model, segments)
    payload = {"split": args.split, "fold": fold_index, "k": k, "fold_seed": fold_seed}
    payload.update(metrics.to_dict())
    _emit(json.dumps(payload, sort_keys=True, indent=2) + "\n", args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------


def gradcheck_all(
    d_model: int = 8,
    n_heads: int = 2,
    n_subwords: int = 3,
    n_frames: int = 7,
    batch: int = 2,
    seed: int = 0,
    tolerance: float = 1e-4,
):
    """Compare analytic and finite-difference gradients for every architecture.

    Returns a list of (architecture, max relative error, passed) rows.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for arch in fusion.ARCHITECTURES:
        config = fusion.ModelConfig(architecture=arch, d_model=d_model, n_heads=n_heads)
        model = fusion.init_params(config, seed=(seed, 17), dtype=np.float64)
        rows_p = n_subwords if arch in fusion.ATTENTION_ARCHS else n_frames
        batch_items = [
            (
                rng.normal(size=(rows_p, d_model)),
                rng.normal(size=(n_subwords, d_model)),
                int(rng.integers(numkit.N_CLASSES)),
            )
            for _ in range(batch)
        ]
        _, analytic = fusion.model_grad(model, batch_items)
        numeric = numkit.finite_diff_grad(
            lambda p: fusion.model_loss(fusion.FusionModel(config, p), batch_items),
            model.params,
        )
        err = numkit.max_rel_error(analytic, numeric)
        rows.append((arch, err, err <= tolerance))
    return rows


def _cmd_gradcheck(args) -> int:
    rows = gradcheck_all(
        d_model=args.d_model,
        n_heads=args.heads,
        n_subwords=args.subwords,
        n_frames=args.frames,
        batch=args.batch,
        seed=args.seed,
        tolerance=args.tolerance,
    )
    all_ok = True
    for arch, err, ok in rows:
        all_ok &= ok
        print(f"{arch:15s} max_rel_err={err:.3e} {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if all_ok else EXIT_GRADCHECK


# ---------------------------------------------------------------------------
# align
# ---------------------------------------------------------------------------


def _cmd_align(args) -> int:
    records = dataio.read_bundle(args.bundle)
    if not records:
        raise ConfigError("bundle is empty")
    if args.segment is not None:
        matches = [r for r in records if r.id == args.segment]
        if not matches:
            raise ConfigError(f"no segment with id {args.segment!r}")
        rec = matches[0]
    else:
        if not 0 <= args.index < len(records):
            raise ConfigError(f"index {args.index} out of range ({len(records)} segments)")
        rec = records[args.index]
    from . import alignment as al

    by_subwords = al.align_subwords(rec.h_p, rec.n_subwords)
    by_characters = al.align_characters(rec.h_p, rec.char_lengths)
    payload = {
        "segment": rec.id,
        "label": rec.label,
        "n_frames": rec.n_frames,
        "n_subwords": rec.n_subwords,
        "char_lengths": rec.char_lengths,
        "subwords": [[float(x) for x in row] for row in by_subwords],
        "characters": [[float(x) for x in row] for row in by_characters],
    }
    _emit(json.dumps(payload, sort_keys=True, indent=2) + "\n", args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

_ARCH_ORDER = [
    fusion.ARCH_UNIMODAL_PARA,
    fusion.ARCH_UNIMODAL_SEM,
    fusion.ARCH_SCORE,
    fusion.ARCH_CONCAT,
    fusion.ARCH_PARA_XATTN,
    fusion.ARCH_SEM_XATTN,
    fusion.ARCH_SYMMETRIC,
]


def _format_params(n: int) -> str:
    if n >= 1_000_000:
        return f"{n / 1_000_000:.1f} M"
    if n >= 1_000:
        return f"{n / 1_000:.1f} K"
    return str(n)


def render_report_table(reports: list[dict]) -> str:
    """Aligned text table: one row per report, recall columns per class."""

    def sort_key(rep):
        cfg = rep["config"]
        align_rank = 0 if cfg["alignment"] == METHOD_SUBWORDS else 1
        return (_ARCH_ORDER.index(cfg["architecture"]), align_rank, cfg["d_model"], cfg["n_heads"])

    header = ["Fusion", "Alignment", "Config", "Train.p", "ANG", "FEA", "NEU", "POS", "Total"]
    rows = [header]
    for rep in sorted(reports, key=sort_key):
        cfg = rep["config"]
        arch = cfg["architecture"]
        recall = rep["combined"]["recall"]
        label = cfg.get("size_label") or f"d{cfg['d_model']}/h{cfg['n_heads']}"
        uses_alignment = arch in fusion.ATTENTION_ARCHS
        rows.append(
            [
                ARCH_TITLES[arch],
                (cfg["alignment"] if uses_alignment else "-"),
                label,
                _format_params(rep["trainable_params"]),
                *(
                    ("-" if recall[name] is None else f"{100 * recall[name]:.1f}")
                    for name in dataio.LABELS
                ),
                f"{100 * rep['combined']['ua_pooled']:.1f}",
            ]
        )
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _cmd_report(args) -> int:
    paths = list(args.inputs)
    if args.grid_dir:
        for name in sorted(os.listdir(args.grid_dir)):
            candidate = os.path.join(args.grid_dir, name, "report.json")
            if os.path.isfile(candidate):
                paths.append(candidate)
    if not paths:
        raise ConfigError("no report files given")
    reports = []
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            reports.append(json.load(fh))
    _emit(render_report_table(reports), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

_HANDLERS = {
    "synth": _cmd_synth,
    "folds": _cmd_folds,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "gradcheck": _cmd_gradcheck,
    "align": _cmd_align,
    "report": _cmd_report,
}


def run(argv) -> int:
    """Parse argv and dispatch; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except dataio.BundleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
