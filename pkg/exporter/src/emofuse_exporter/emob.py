"""Writer for the EMOB bundle container, implemented against the documented
byte layout (docs/emob_format.md in the consumer project): little-endian
magic + u16 version + u32 manifest length, sorted-keys JSON manifest, then
raw float32 row-major payloads at 8-aligned offsets relative to the
8-aligned payload base."""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

MAGIC = b"EMOB"
VERSION = 1
_HEADER = struct.Struct("<4sHI")

LABELS = ("ANG", "FEA", "NEU", "POS")


@dataclass
class BundleSegment:
    id: str
    speaker_id: str
    dialogue_id: str
    label: str
    char_lengths: list[int]
    h_p: np.ndarray
    h_s: np.ndarray


def _align8(n: int) -> int:
    return (n + 7) & ~7


def write_emob(segments: list[BundleSegment], path) -> None:
    """Serialize segments bit-exactly; atomic and byte-deterministic."""
    seen = set()
    for seg in segments:
        if seg.id in seen:
            raise ValueError(f"duplicate segment id {seg.id!r}")
        seen.add(seg.id)
        if seg.label not in LABELS:
            raise ValueError(f"segment {seg.id}: unknown label {seg.label!r}")
        if seg.h_p.ndim != 2 or seg.h_s.ndim != 2 or not len(seg.h_p) or not len(seg.h_s):
            raise ValueError(f"segment {seg.id}: matrices must be non-empty and 2-D")
        if len(seg.char_lengths) != seg.h_s.shape[0] or any(c < 1 for c in seg.char_lengths):
            raise ValueError(f"segment {seg.id}: char_lengths must be one positive int per subword")
        if not np.all(np.isfinite(seg.h_p)) or not np.all(np.isfinite(seg.h_s)):
            raise ValueError(f"segment {seg.id}: non-finite embedding values")
    if segments:
        d_p = segments[0].h_p.shape[1]
        d_s = segments[0].h_s.shape[1]
        for seg in segments:
            if seg.h_p.shape[1] != d_p or seg.h_s.shape[1] != d_s:
                raise ValueError(f"segment {seg.id}: width differs from the bundle's")
    else:
        d_p = d_s = 0

    entries = []
    payloads = []
    cursor = 0
    for seg in segments:
        h_p_bytes = np.ascontiguousarray(seg.h_p, dtype="<f4").tobytes()
        h_s_bytes = np.ascontiguousarray(seg.h_s, dtype="<f4").tobytes()
        h_p_off = cursor
        cursor = _align8(cursor + len(h_p_bytes))
        h_s_off = cursor
        cursor = _align8(cursor + len(h_s_bytes))
        payloads.append((h_p_off, h_p_bytes))
        payloads.append((h_s_off, h_s_bytes))
        entries.append(
            {
                "id": seg.id,
                "speaker_id": seg.speaker_id,
                "dialogue_id": seg.dialogue_id,
                "label": seg.label,
                "n_frames": int(seg.h_p.shape[0]),
                "n_subwords": int(seg.h_s.shape[0]),
                "char_lengths": [int(c) for c in seg.char_lengths],
                "h_p_offset": h_p_off,
                "h_s_offset": h_s_off,
            }
        )
    manifest = {"d_p": int(d_p), "d_s": int(d_s), "segments": entries}
    manifest_bytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    header = _HEADER.pack(MAGIC, VERSION, len(manifest_bytes))
    base = _align8(len(header) + len(manifest_bytes))
    blob = bytearray(base + cursor)
    blob[: len(header)] = header
    blob[len(header) : len(header) + len(manifest_bytes)] = manifest_bytes
    for offset, data in payloads:
        blob[base + offset : base + offset + len(data)] = data

    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".emob-export-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(bytes(blob))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
