"""Session fixtures: tiny frozen encoders built locally from fixed seeds,
short PCM16 audio files, and an export manifest tying them together.

The encoder directories mimic the published checkpoints' layout (config +
weights + tokenizer files), so the exporter exercises the exact
from_pretrained path that a real model id would take; only the weights are
random. Hidden size stays 768 and the convolutional frontend keeps the
standard 20 ms frame rate so the geometry matches the real encoders.
"""

import json
import wave

import numpy as np
import pytest
import torch

SAMPLE_RATE = 16_000

TRANSCRIPTS = {
    "fix-0": "allô le monde",
    "fix-1": "un grand merci à vous",
    "fix-2": "la situation est urgente",
}

DURATIONS = {"fix-0": 0.5, "fix-1": 1.0, "fix-2": 2.0}
LABELS_BY_ID = {"fix-0": "NEU", "fix-1": "POS", "fix-2": "FEA"}


def write_sine_wav(path, seconds, freq=220.0, seed=0, rate=SAMPLE_RATE, channels=1):
    n = int(seconds * rate)
    t = np.arange(n) / rate
    rng = np.random.default_rng(seed)
    signal = 0.5 * np.sin(2 * np.pi * freq * t) + 0.05 * rng.standard_normal(n)
    pcm = np.clip(signal * 32767, -32768, 32767).astype("<i2")
    if channels > 1:
        pcm = np.repeat(pcm[:, None], channels, axis=1).reshape(-1)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(channels)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(pcm.tobytes())
    return path


@pytest.fixture(scope="session")
def speech_model_dir(tmp_path_factory):
    from transformers import Wav2Vec2Config, Wav2Vec2Model

    config = Wav2Vec2Config(
        hidden_size=768,
        num_hidden_layers=1,
        num_attention_heads=8,
        intermediate_size=128,
        conv_dim=[32] * 7,
        num_conv_pos_embeddings=16,
        num_conv_pos_embedding_groups=2,
        apply_spec_augment=False,
        vocab_size=40,
    )
    torch.manual_seed(0)
    model = Wav2Vec2Model(config)
    out = tmp_path_factory.mktemp("models") / "tiny-speech"
    model.save_pretrained(out)
    return str(out)


@pytest.fixture(scope="session")
def text_model_dir(tmp_path_factory):
    from tokenizers import Tokenizer, models, pre_tokenizers
    from transformers import FlaubertConfig, FlaubertModel, PreTrainedTokenizerFast

    vocab = {}
    for ch in "abcdefghijklmnopqrstuvwxyzàâçéèêëîïôùûüÿœ'-.,?!0123456789":
        vocab.setdefault(ch, len(vocab))
        vocab.setdefault(ch + "</w>", len(vocab))
    for tok in ("<s>", "</s>", "<pad>", "<unk>", "le</w>", "la</w>", "un</w>", "re", "ou", "on"):
        vocab.setdefault(tok, len(vocab))
    merges = [("l", "e</w>"), ("l", "a</w>"), ("u", "n</w>"), ("r", "e"), ("o", "u"), ("o", "n")]
    bpe = Tokenizer(
        models.BPE(vocab=vocab, merges=merges, unk_token="<unk>", end_of_word_suffix="</w>")
    )
    bpe.pre_tokenizer = pre_tokenizers.Whitespace()
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=bpe,
        unk_token="<unk>",
        pad_token="<pad>",
        bos_token="<s>",
        eos_token="</s>",
    )
    config = FlaubertConfig(
        vocab_size=len(vocab), emb_dim=768, n_layers=1, n_heads=8, layerdrop=0.0
    )
    torch.manual_seed(1)
    model = FlaubertModel(config)
    out = tmp_path_factory.mktemp("models") / "tiny-text"
    model.save_pretrained(out)
    tokenizer.save_pretrained(out)
    return str(out)


@pytest.fixture(scope="session")
def audio_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("audio")
    for i, (seg_id, seconds) in enumerate(DURATIONS.items()):
        write_sine_wav(out / f"{seg_id}.wav", seconds, freq=180.0 + 60 * i, seed=i)
    return out


@pytest.fixture(scope="session")
def manifest_path(tmp_path_factory, speech_model_dir, text_model_dir, audio_dir):
    segments = [
        {
            "id": seg_id,
            "audio": str(audio_dir / f"{seg_id}.wav"),
            "transcript": TRANSCRIPTS[seg_id],
            "label": LABELS_BY_ID[seg_id],
            "speaker_id": f"spk-{i % 2}",
            "dialogue_id": "dlg-0",
        }
        for i, seg_id in enumerate(DURATIONS)
    ]
    payload = {
        "speech_model": speech_model_dir,
        "text_model": text_model_dir,
        "device": "cpu",
        "segments": segments,
    }
    path = tmp_path_factory.mktemp("manifest") / "export.json"
    path.write_text(json.dumps(payload, indent=2))
    return path
