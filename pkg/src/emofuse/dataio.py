"""Embedding-bundle file format, fold construction and synthetic data.

A bundle file ("EMOB") stores per-segment embedding matrices bit-exactly:
a little-endian header, a length-prefixed JSON manifest, then raw float32
row-major payloads at 8-byte-aligned offsets. The format is documented in
docs/emob_format.md with a golden sample under test.

The synthetic generator produces bimodal Gaussian segments with a known
Bayes-optimal structure: under the default partial-information means, each
modality can separate only two of the four classes, so any unimodal
classifier tops out at 75% unweighted accuracy while the bimodal rule
reaches ~100%.
"""

from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

LABELS = ("ANG", "FEA", "NEU", "POS")

MAGIC = b"EMOB"
FORMAT_VERSION = 1
HEADER_STRUCT = struct.Struct("<4sHI")  # magic, version, manifest byte length


class BundleError(Exception):
    """Base class for bundle format violations."""


class BadMagicError(BundleError):
    pass


class UnsupportedVersionError(BundleError):
    pass


class TruncatedPayloadError(BundleError):
    pass


class ShapeMismatchError(BundleError):
    pass


class NonFinitePayloadError(BundleError):
    pass


class DuplicateIdError(BundleError):
    pass


@dataclass
class SegmentRecord:
    """One utterance: embedding matrices plus labeling and speaker metadata."""

    id: str
    speaker_id: str
    dialogue_id: str
    label: str
    char_lengths: list[int]
    h_p: np.ndarray  # (n_frames, d_p) float32
    h_s: np.ndarray  # (n_subwords, d_s) float32

    @property
    def n_frames(self) -> int:
        return self.h_p.shape[0]

    @property
    def n_subwords(self) -> int:
        return self.h_s.shape[0]

    @property
    def label_index(self) -> int:
        return LABELS.index(self.label)

    def validate(self) -> None:
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        if self.h_p.ndim != 2 or self.h_p.shape[0] < 1:
            raise ValueError(f"H_p must have >= 1 frame, got shape {self.h_p.shape}")
        if self.h_s.ndim != 2 or self.h_s.shape[0] < 1:
            raise ValueError(f"H_s must have >= 1 subword, got shape {self.h_s.shape}")
        if len(self.char_lengths) != self.n_subwords:
            raise ValueError("char_lengths must have one entry per subword")
        if any(c < 1 for c in self.char_lengths):
            raise ValueError("char_lengths entries must be >= 1")
        if not np.all(np.isfinite(self.h_p)) or not np.all(np.isfinite(self.h_s)):
            raise ValueError(f"segment {self.id}: non-finite matrix entries")


def align8(n: int) -> int:
    return (n + 7) & ~7


def atomic_write_bytes(path, blob: bytes) -> None:
    """Write a file atomically: temp file in the target directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".emofuse-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_bundle(records: list[SegmentRecord], path) -> None:
    """Write records to an EMOB file; atomic (temp file + rename) and
    byte-deterministic for identical inputs."""
    seen: set[str] = set()
    for rec in records:
        rec.validate()
        if rec.id in seen:
            raise DuplicateIdError(f"duplicate segment id {rec.id!r}")
        seen.add(rec.id)
    if records:
        d_p = records[0].h_p.shape[1]
        d_s = records[0].h_s.shape[1]
        for rec in records:
            if rec.h_p.shape[1] != d_p or rec.h_s.shape[1] != d_s:
                raise ShapeMismatchError(
                    f"segment {rec.id}: matrix widths differ from the bundle's ({d_p}, {d_s})"
                )
    else:
        d_p = d_s = 0

    # Offsets are relative to the payload base (the 8-aligned position after
    # the manifest), so the manifest's own size never feeds back into them.
    segments = []
    payloads: list[tuple[int, bytes]] = []
    cursor = 0
    for rec in records:
        h_p_bytes = np.ascontiguousarray(rec.h_p, dtype="<f4").tobytes()
        h_s_bytes = np.ascontiguousarray(rec.h_s, dtype="<f4").tobytes()
        h_p_off = cursor
        cursor = align8(cursor + len(h_p_bytes))
        h_s_off = cursor
        cursor = align8(cursor + len(h_s_bytes))
        payloads.append((h_p_off, h_p_bytes))
        payloads.append((h_s_off, h_s_bytes))
        segments.append(
            {
                "id": rec.id,
                "speaker_id": rec.speaker_id,
                "dialogue_id": rec.dialogue_id,
                "label": rec.label,
                "n_frames": rec.n_frames,
                "n_subwords": rec.n_subwords,
                "char_lengths": list(rec.char_lengths),
                "h_p_offset": h_p_off,
                "h_s_offset": h_s_off,
            }
        )
    manifest = {"d_p": int(d_p), "d_s": int(d_s), "segments": segments}
    manifest_bytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")

    header = HEADER_STRUCT.pack(MAGIC, FORMAT_VERSION, len(manifest_bytes))
    base = align8(len(header) + len(manifest_bytes))
    blob = bytearray(base + cursor)
    blob[: len(header)] = header
    blob[len(header) : len(header) + len(manifest_bytes)] = manifest_bytes
    for offset, data in payloads:
        blob[base + offset : base + offset + len(data)] = data

    atomic_write_bytes(path, bytes(blob))


def read_bundle(path) -> list[SegmentRecord]:
    """Read and validate an EMOB file; raises a named error per defect class."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: not an EMOB file")
    if len(blob) < HEADER_STRUCT.size:
        raise TruncatedPayloadError(f"{path}: header truncated")
    _, version, manifest_len = HEADER_STRUCT.unpack_from(blob)
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: version {version}, expected {FORMAT_VERSION}")
    if HEADER_STRUCT.size + manifest_len > len(blob):
        raise TruncatedPayloadError(f"{path}: manifest truncated")
    try:
        manifest = json.loads(blob[HEADER_STRUCT.size : HEADER_STRUCT.size + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BundleError(f"{path}: manifest is not valid JSON ({exc})") from exc
    for key in ("d_p", "d_s", "segments"):
        if key not in manifest:
            raise BundleError(f"{path}: manifest missing {key!r}")
    d_p, d_s = int(manifest["d_p"]), int(manifest["d_s"])
    base = align8(HEADER_STRUCT.size + manifest_len)

    records = []
    seen: set[str] = set()
    for meta in manifest["segments"]:
        seg_id = meta["id"]
        if seg_id in seen:
            raise DuplicateIdError(f"{path}: duplicate segment id {seg_id!r}")
        seen.add(seg_id)
        n_frames, n_subwords = int(meta["n_frames"]), int(meta["n_subwords"])
        if n_frames < 1 or n_subwords < 1 or d_p < 1 or d_s < 1:
            raise ShapeMismatchError(f"{path}: segment {seg_id} declares an empty matrix")
        if len(meta["char_lengths"]) != n_subwords:
            raise ShapeMismatchError(
                f"{path}: segment {seg_id} has {len(meta['char_lengths'])} char_lengths "
                f"for {n_subwords} subwords"
            )
        h_p = _read_matrix(blob, base + int(meta["h_p_offset"]), n_frames, d_p, path, seg_id, "H_p")
        h_s = _read_matrix(blob, base + int(meta["h_s_offset"]), n_subwords, d_s, path, seg_id, "H_s")
        records.append(
            SegmentRecord(
                id=seg_id,
                speaker_id=meta["speaker_id"],
                dialogue_id=meta["dialogue_id"],
                label=meta["label"],
                char_lengths=[int(c) for c in meta["char_lengths"]],
                h_p=h_p,
                h_s=h_s,
            )
        )
    return records


def _read_matrix(blob, offset, rows, cols, path, seg_id, name) -> np.ndarray:
    nbytes = rows * cols * 4
    if offset < 0 or offset + nbytes > len(blob):
        raise TruncatedPayloadError(
            f"{path}: segment {seg_id} {name} payload ({rows}x{cols}) exceeds file size"
        )
    flat = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=offset)
    m = flat.astype(np.float32).reshape(rows, cols)
    if not np.all(np.isfinite(m)):
        raise NonFinitePayloadError(f"{path}: segment {seg_id} {name} contains NaN or Inf")
    return m


# ---------------------------------------------------------------------------
# Speaker-disjoint folds
# ---------------------------------------------------------------------------


@dataclass
class FoldSplit:
    train: list[str]
    validation: list[str]
    test: list[str]


@dataclass
class FoldPlan:
    """k-way speaker-disjoint assignment of segment ids to train/val/test."""

    k: int
    seed: int
    folds: list[FoldSplit]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "folds": [
                {"train": f.train, "validation": f.validation, "test": f.test}
                for f in self.folds
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FoldPlan":
        return cls(
            k=int(d["k"]),
            seed=int(d["seed"]),
            folds=[
                FoldSplit(train=list(f["train"]), validation=list(f["validation"]), test=list(f["test"]))
                for f in d["folds"]
            ],
        )


def make_folds(records: list[SegmentRecord], k: int = 5, seed: int = 0) -> FoldPlan:
    """Shuffle speakers by seed, split into k groups, rotate the roles.

    Fold i tests on speaker group i, validates on group (i+1) mod k and
    trains on the rest, so all of a speaker's segments travel together and
    every segment lands in exactly one test set.
    """
    speakers = sorted({rec.speaker_id for rec in records})
    if len(speakers) < k:
        raise ValueError(f"need at least {k} distinct speakers, got {len(speakers)}")
    rng = np.random.default_rng(seed)
    order = list(speakers)
    rng.shuffle(order)
    groups = [list(g) for g in np.array_split(np.array(order, dtype=object), k)]

    by_speaker: dict[str, list[str]] = {s: [] for s in speakers}
    for rec in records:
        by_speaker[rec.speaker_id].append(rec.id)

    def segment_ids(group_indices):
        ids = []
        for gi in group_indices:
            for spk in groups[gi]:
                ids.extend(by_speaker[spk])
        return ids

    folds = []
    for i in range(k):
        val = (i + 1) % k
        train_groups = [g for g in range(k) if g not in (i, val)]
        folds.append(
            FoldSplit(
                train=segment_ids(train_groups),
                validation=segment_ids([val]),
                test=segment_ids([i]),
            )
        )
    return FoldPlan(k=k, seed=seed, folds=folds)


# ---------------------------------------------------------------------------
# Synthetic bimodal data with a known Bayes-optimal structure
# ---------------------------------------------------------------------------


def partial_info_means(d_p: int, d_s: int, separation: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
    """Class-mean tables where each modality separates only two classes.

    Modality P places ANG and FEA at opposite ends of one axis and gives NEU
    and POS a single shared mean; modality S mirrors this for NEU vs POS.
    All informative pairwise distances equal `separation`.
    """
    if d_p < 2 or d_s < 2:
        raise ValueError("partial-information means need width >= 2")
    r = separation / 2.0
    mu_p = np.zeros((4, d_p))
    mu_p[0, 0] = r
    mu_p[1, 0] = -r
    mu_p[2, 1] = mu_p[3, 1] = r * math.sqrt(3.0)
    mu_s = np.zeros((4, d_s))
    mu_s[2, 0] = r
    mu_s[3, 0] = -r
    mu_s[0, 1] = mu_s[1, 1] = r * math.sqrt(3.0)
    return mu_p, mu_s


@dataclass
class SynthSpec:
    """Shape and distribution of a synthetic bundle; deterministic per seed."""

    n_per_class: int = 200
    d_p: int = 32
    d_s: int = 32
    frames_range: tuple[int, int] = (20, 80)
    subwords_range: tuple[int, int] = (3, 12)
    char_len_range: tuple[int, int] = (1, 10)
    sigma: float = 0.5
    n_speakers_per_class: int = 10
    seed: int = 0
    mu_p: np.ndarray | None = None
    mu_s: np.ndarray | None = None

    def __post_init__(self):
        for name, (lo, hi) in (
            ("frames_range", self.frames_range),
            ("subwords_range", self.subwords_range),
            ("char_len_range", self.char_len_range),
        ):
            if lo < 1 or hi < lo:
                raise ValueError(f"invalid {name}: ({lo}, {hi})")
        if self.n_per_class < 1 or self.n_speakers_per_class < 1:
            raise ValueError("counts must be positive")
        if self.n_speakers_per_class > self.n_per_class:
            raise ValueError("more speakers than segments per class")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.mu_p is None or self.mu_s is None:
            mu_p, mu_s = partial_info_means(self.d_p, self.d_s)
            if self.mu_p is None:
                self.mu_p = mu_p
            if self.mu_s is None:
                self.mu_s = mu_s
        self.mu_p = np.asarray(self.mu_p, dtype=np.float64)
        self.mu_s = np.asarray(self.mu_s, dtype=np.float64)
        if self.mu_p.shape != (4, self.d_p) or self.mu_s.shape != (4, self.d_s):
            raise ValueError("class-mean tables must be (4, d_p) and (4, d_s)")

    def to_dict(self) -> dict:
        return {
            "n_per_class": self.n_per_class,
            "d_p": self.d_p,
            "d_s": self.d_s,
            "frames_range": list(self.frames_range),
            "subwords_range": list(self.subwords_range),
            "char_len_range": list(self.char_len_range),
            "sigma": self.sigma,
            "n_speakers_per_class": self.n_speakers_per_class,
            "seed": self.seed,
            "mu_p": self.mu_p.tolist(),
            "mu_s": self.mu_s.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        for key in ("frames_range", "subwords_range", "char_len_range"):
            if key in d:
                d[key] = tuple(d[key])
        for key in ("mu_p", "mu_s"):
            if d.get(key) is not None:
                d[key] = np.asarray(d[key], dtype=np.float64)
        return cls(**d)


def synth_generate(spec: SynthSpec) -> list[SegmentRecord]:
    """Generate round-robin-labeled Gaussian segments, deterministic per seed.

    Each speaker belongs to one class pool and contributes several segments;
    every row of H_p is drawn from Normal(mu_p[label], sigma^2 I) and every
    row of H_s from Normal(mu_s[label], sigma^2 I).
    """
    rng = np.random.default_rng(spec.seed)
    f_lo, f_hi = spec.frames_range
    s_lo, s_hi = spec.subwords_range
    c_lo, c_hi = spec.char_len_range
    records: list[SegmentRecord] = []
    counter = 0
    for i in range(spec.n_per_class):
        for c, label in enumerate(LABELS):
            n_frames = int(rng.integers(f_lo, f_hi + 1))
            n_subwords = int(rng.integers(s_lo, s_hi + 1))
            char_lengths = [int(x) for x in rng.integers(c_lo, c_hi + 1, size=n_subwords)]
            h_p = (spec.mu_p[c] + spec.sigma * rng.standard_normal((n_frames, spec.d_p))).astype(
                np.float32
            )
            h_s = (spec.mu_s[c] + spec.sigma * rng.standard_normal((n_subwords, spec.d_s))).astype(
                np.float32
            )
            records.append(
                SegmentRecord(
                    id=f"seg{counter:05d}",
                    speaker_id=f"spk_{label}_{i % spec.n_speakers_per_class:03d}",
                    dialogue_id=f"dlg{counter // 4:04d}",
                    label=label,
                    char_lengths=char_lengths,
                    h_p=h_p,
                    h_s=h_s,
                )
            )
            counter += 1
    return records
