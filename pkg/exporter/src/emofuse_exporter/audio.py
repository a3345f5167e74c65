"""Minimal WAV decoding: 16-bit PCM in, float32 mono waveform out."""

from __future__ import annotations

import wave

import numpy as np

EXPECTED_RATE = 16_000


def read_wav(path) -> tuple[np.ndarray, int]:
    """Decode a PCM16 WAV file to a float32 waveform in [-1, 1].

    Multi-channel audio is averaged down to mono. Returns (waveform, rate).
    """
    with wave.open(str(path), "rb") as fh:
        n_channels = fh.getnchannels()
        sample_width = fh.getsampwidth()
        rate = fh.getframerate()
        n_frames = fh.getnframes()
        raw = fh.readframes(n_frames)
    if sample_width != 2:
        raise ValueError(f"{path}: expected 16-bit PCM, got {8 * sample_width}-bit")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    if n_channels > 1:
        samples = samples.reshape(-1, n_channels).mean(axis=1)
    return samples, rate


def require_rate(path, rate: int) -> None:
    if rate != EXPECTED_RATE:
        raise ValueError(
            f"{path}: sample rate {rate} Hz, the speech encoders expect {EXPECTED_RATE} Hz "
            "(resample the audio first)"
        )
