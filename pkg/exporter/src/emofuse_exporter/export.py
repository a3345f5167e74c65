"""Drive the export: manifest in, EMOB bundle of encoder outputs out."""

from __future__ import annotations

import warnings

from . import audio
from .emob import BundleSegment, write_emob
from .encoders import load_speech_encoder, load_text_encoder, speech_embed, text_embed
from .manifest import DURATION_RANGE, ExportManifest


def export_embeddings(manifest: ExportManifest, out_path, device: str | None = None) -> list[dict]:
    """Run both frozen encoders over every segment and write the bundle.

    Returns one summary dict per segment (id, duration, n_frames,
    n_subwords). Durations outside the accepted range are exported anyway
    but raise a UserWarning.
    """
    manifest.validate()
    device = device or manifest.device
    speech = load_speech_encoder(manifest.speech_model, device)
    text = load_text_encoder(manifest.text_model, device)

    segments = []
    summaries = []
    lo, hi = DURATION_RANGE
    for seg in manifest.segments:
        waveform, rate = audio.read_wav(seg.audio)
        audio.require_rate(seg.audio, rate)
        duration = waveform.shape[0] / rate
        if not lo <= duration <= hi:
            warnings.warn(
                f"segment {seg.id}: duration {duration:.2f}s outside [{lo}, {hi}]s",
                stacklevel=2,
            )
        h_p = speech_embed(speech, waveform)
        h_s, char_lengths = text_embed(text, seg.transcript)
        segments.append(
            BundleSegment(
                id=seg.id,
                speaker_id=seg.speaker_id,
                dialogue_id=seg.dialogue_id,
                label=seg.label,
                char_lengths=char_lengths,
                h_p=h_p,
                h_s=h_s,
            )
        )
        summaries.append(
            {
                "id": seg.id,
                "duration": duration,
                "n_frames": int(h_p.shape[0]),
                "n_subwords": int(h_s.shape[0]),
            }
        )
    write_emob(segments, out_path)
    return summaries
