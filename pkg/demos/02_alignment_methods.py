"""The two frame-to-subword alignment methods, on a matrix small enough
to eyeball: equal groups averaged vs character-proportional groups summed."""

import numpy as np

from emofuse.alignment import (
    align_characters,
    align_subwords,
    character_frame_counts,
    subword_group_sizes,
)

# Ten frames, one feature per frame so every group is easy to follow.
h_p = np.arange(10.0).reshape(10, 1)
print("frames:", h_p.ravel().tolist())

print("\n=== subwords method: equal contiguous groups, averaged ===")
for n_subwords in (2, 3, 4):
    sizes = subword_group_sizes(10, n_subwords)
    out = align_subwords(h_p, n_subwords)
    print(f"{n_subwords} subwords -> group sizes {sizes}, rows {out.ravel().tolist()}")

print("\n=== characters method: proportional groups, summed ===")
for lengths in ([5, 5], [8, 1, 1], [1, 2, 3, 4]):
    counts = character_frame_counts(10, lengths)
    out = align_characters(h_p, lengths)
    print(f"char lengths {lengths} -> frame counts {counts}, rows {out.ravel().tolist()}")
    print(f"  column sum preserved: {out.sum():.1f} == {h_p.sum():.1f}")

print("\n=== fewer frames than subwords: sampling with repetition ===")
short = np.array([[10.0], [20.0]])
print("2 frames, 3 subwords ->", align_subwords(short, 3).ravel().tolist())
