"""Compress a frame-level matrix to one row per subword.

Two methods: "subwords" partitions frames into equal contiguous groups and
averages them; "characters" apportions frames proportionally to subword
character counts and sums them, which weights longer subwords more heavily.
Both produce exactly one output row per subword, so cross-attention outputs
from either direction share a sequence length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

METHOD_SUBWORDS = "subwords"
METHOD_CHARACTERS = "characters"
METHODS = (METHOD_SUBWORDS, METHOD_CHARACTERS)


@dataclass
class AlignmentSpec:
    """Alignment method plus, for the characters method, per-subword character counts."""

    method: str
    char_lengths: list[int] | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown alignment method {self.method!r}")
        if self.method == METHOD_CHARACTERS:
            if not self.char_lengths:
                raise ValueError("characters alignment requires non-empty char_lengths")
            if any(c < 1 for c in self.char_lengths):
                raise ValueError("char_lengths entries must be >= 1")


def _check_input(h_p: np.ndarray) -> np.ndarray:
    h_p = np.asarray(h_p)
    if h_p.ndim != 2 or h_p.shape[0] < 1:
        raise ValueError(f"expected a matrix with >= 1 frame, got shape {h_p.shape}")
    return h_p


def subword_group_sizes(n_frames: int, n_subwords: int) -> list[int]:
    """Contiguous group sizes for the subwords method; remainder goes to the front."""
    base, extra = divmod(n_frames, n_subwords)
    return [base + 1 if j < extra else base for j in range(n_subwords)]


def align_subwords(h_p: np.ndarray, n_subwords: int) -> np.ndarray:
    """Average contiguous frame groups, one group per subword.

    When there are fewer frames than subwords, output row j samples frame
    floor(j * n_frames / n_subwords), repeating frames as needed.
    """
    h_p = _check_input(h_p)
    if n_subwords < 1:
        raise ValueError("n_subwords must be >= 1")
    n_frames = h_p.shape[0]
    if n_frames < n_subwords:
        idx = [(j * n_frames) // n_subwords for j in range(n_subwords)]
        return h_p[idx].copy()
    out = np.empty((n_subwords, h_p.shape[1]), dtype=h_p.dtype)
    start = 0
    for j, size in enumerate(subword_group_sizes(n_frames, n_subwords)):
        out[j] = h_p[start : start + size].mean(axis=0)
        start += size
    return out


def character_frame_counts(n_frames: int, char_lengths: list[int]) -> list[int]:
    """Largest-remainder apportionment of frames proportional to character counts.

    Every subword gets at least one frame; requires n_frames >= len(char_lengths).
    Ties in the remainder ranking break toward lower subword index, and the
    minimum-one fixup takes frames from the currently largest count.
    """
    n = len(char_lengths)
    if n == 0:
        raise ValueError("char_lengths must be non-empty")
    if any(c < 1 for c in char_lengths):
        raise ValueError("char_lengths entries must be >= 1")
    if n_frames < n:
        raise ValueError("need at least one frame per subword")
    total = float(sum(char_lengths))
    quotas = [n_frames * c / total for c in char_lengths]
    counts = [int(q) for q in quotas]
    remainder = n_frames - sum(counts)
    order = sorted(range(n), key=lambda j: (-(quotas[j] - counts[j]), j))
    for j in order[:remainder]:
        counts[j] += 1
    # Largest remainder can starve a short subword entirely; give it one frame
    # from the largest group (which must hold > 1 by pigeonhole).
    while min(counts) == 0:
        j_zero = counts.index(0)
        j_max = max(range(n), key=lambda j: (counts[j], -j))
        counts[j_max] -= 1
        counts[j_zero] += 1
    return counts


def align_characters(h_p: np.ndarray, char_lengths: list[int]) -> np.ndarray:
    """Sum contiguous frame groups sized proportionally to subword character counts.

    Falls back to align_subwords sampling when there are fewer frames than
    subwords (the sum over a single sampled frame is that frame).
    """
    h_p = _check_input(h_p)
    n = len(char_lengths) if char_lengths is not None else 0
    if n == 0:
        raise ValueError("char_lengths must be non-empty")
    n_frames = h_p.shape[0]
    if n_frames < n:
        return align_subwords(h_p, n)
    out = np.empty((n, h_p.shape[1]), dtype=h_p.dtype)
    start = 0
    for j, size in enumerate(character_frame_counts(n_frames, char_lengths)):
        out[j] = h_p[start : start + size].sum(axis=0)
        start += size
    return out


def apply_alignment(h_p: np.ndarray, n_subwords: int, spec: AlignmentSpec) -> np.ndarray:
    """Dispatch to the method named by `spec`, producing n_subwords rows."""
    if spec.method == METHOD_SUBWORDS:
        return align_subwords(h_p, n_subwords)
    lengths = spec.char_lengths
    if lengths is None or len(lengths) != n_subwords:
        raise ValueError("char_lengths must have one entry per subword")
    return align_characters(h_p, list(lengths))
