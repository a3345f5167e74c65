"""Frozen pre-trained encoders: waveform -> frame embeddings, text -> subword
embeddings.

Models are loaded through the generic transformers auto classes, so any
local directory or hub identifier with a compatible architecture works.
Both encoders run in eval mode with gradients disabled; nothing here is
fine-tuned, so exported embeddings are pre-trained, not emotion-adapted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

# Subword markers stripped before counting characters: end-of-word suffix
# (BPE), continuation prefix (WordPiece) and word-start glyphs (sentencepiece
# and byte-level BPE).
_END_MARKERS = ("</w>",)
_PREFIX_MARKERS = ("##", "▁", "Ġ", "@@")


@dataclass
class SpeechEncoder:
    model: object
    device: str

    @property
    def hidden_size(self) -> int:
        return self.model.config.hidden_size


@dataclass
class TextEncoder:
    model: object
    tokenizer: object
    device: str

    @property
    def hidden_size(self) -> int:
        config = self.model.config
        return getattr(config, "hidden_size", None) or config.emb_dim


def _freeze(model, device):
    model = model.to(device)
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


def load_speech_encoder(name_or_path: str, device: str = "cpu") -> SpeechEncoder:
    model = AutoModel.from_pretrained(name_or_path)
    return SpeechEncoder(model=_freeze(model, device), device=device)


def load_text_encoder(name_or_path: str, device: str = "cpu") -> TextEncoder:
    model = AutoModel.from_pretrained(name_or_path)
    tokenizer = AutoTokenizer.from_pretrained(name_or_path)
    return TextEncoder(model=_freeze(model, device), tokenizer=tokenizer, device=device)


def expected_frame_count(config, n_samples: int) -> int:
    """Frame count after the encoder's convolutional frontend.

    Derived from the configured kernel/stride ladder, so it stays correct
    for any model revision.
    """
    length = n_samples
    for kernel, stride in zip(config.conv_kernel, config.conv_stride):
        if length < kernel:
            return 0
        length = (length - kernel) // stride + 1
    return length


def speech_embed(enc: SpeechEncoder, waveform: np.ndarray) -> np.ndarray:
    """Last-hidden-state frames for one utterance, (n_frames, hidden) float32.

    The waveform is normalized to zero mean and unit variance, the standard
    preprocessing for these encoders.
    """
    if expected_frame_count(enc.model.config, waveform.shape[0]) < 1:
        raise ValueError(
            f"audio of {waveform.shape[0]} samples is shorter than one encoder frame"
        )
    wave = np.asarray(waveform, dtype=np.float32)
    wave = (wave - wave.mean()) / np.sqrt(wave.var() + 1e-7)
    batch = torch.from_numpy(wave).unsqueeze(0).to(enc.device)
    with torch.no_grad():
        hidden = enc.model(input_values=batch).last_hidden_state
    return hidden[0].cpu().numpy().astype(np.float32)


def visible_length(token: str) -> int:
    """Character count of a subword unit with marker characters stripped."""
    for marker in _END_MARKERS:
        if token.endswith(marker):
            token = token[: -len(marker)]
    for marker in _PREFIX_MARKERS:
        if token.startswith(marker):
            token = token[len(marker) :]
    return max(len(token), 1)


def text_embed(enc: TextEncoder, transcript: str) -> tuple[np.ndarray, list[int]]:
    """Subword rows of the text encoder plus per-subword character counts.

    Special tokens (sentence delimiters, padding) are dropped from both the
    matrix and the counts; only the transcript's own subword units remain.
    """
    if not transcript or not transcript.strip():
        raise ValueError("empty transcript")
    encoding = enc.tokenizer(transcript, return_special_tokens_mask=True)
    ids = encoding["input_ids"]
    special = encoding["special_tokens_mask"]
    keep = [i for i, flag in enumerate(special) if not flag]
    if not keep:
        raise ValueError(f"transcript {transcript!r} produced no subword tokens")
    tokens = enc.tokenizer.convert_ids_to_tokens(ids)
    char_lengths = [visible_length(tokens[i]) for i in keep]
    batch = torch.tensor([ids], dtype=torch.long, device=enc.device)
    with torch.no_grad():
        hidden = enc.model(input_ids=batch).last_hidden_state
    rows = hidden[0].cpu().numpy().astype(np.float32)[keep]
    return rows, char_lengths
