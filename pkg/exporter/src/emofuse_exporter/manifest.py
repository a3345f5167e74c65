"""Export manifest: which audio files and transcripts become which segments."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

LABELS = ("ANG", "FEA", "NEU", "POS")

# Segment durations in seconds accepted without a warning; the corpus this
# mirrors ranges from 0.4 to 7.5 seconds per segment.
DURATION_RANGE = (0.4, 7.5)


@dataclass
class ExportSegment:
    id: str
    audio: str
    transcript: str
    label: str
    speaker_id: str
    dialogue_id: str

    def validate(self) -> None:
        if self.label not in LABELS:
            raise ValueError(f"segment {self.id}: unknown label {self.label!r}")
        if not self.id:
            raise ValueError("segment id must be non-empty")


@dataclass
class ExportManifest:
    speech_model: str
    text_model: str
    segments: list[ExportSegment]
    device: str = "cpu"

    def validate(self) -> None:
        if not self.segments:
            raise ValueError("manifest has no segments")
        seen = set()
        for seg in self.segments:
            seg.validate()
            if seg.id in seen:
                raise ValueError(f"duplicate segment id {seg.id!r}")
            seen.add(seg.id)


def load_manifest(path) -> ExportManifest:
    """Read and validate a JSON export manifest."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    for key in ("speech_model", "text_model", "segments"):
        if key not in raw:
            raise ValueError(f"manifest missing {key!r}")
    segments = [
        ExportSegment(
            id=s["id"],
            audio=s["audio"],
            transcript=s["transcript"],
            label=s["label"],
            speaker_id=s["speaker_id"],
            dialogue_id=s["dialogue_id"],
        )
        for s in raw["segments"]
    ]
    manifest = ExportManifest(
        speech_model=raw["speech_model"],
        text_model=raw["text_model"],
        segments=segments,
        device=raw.get("device", "cpu"),
    )
    manifest.validate()
    return manifest
