"""Cross-attention fusion from the inside: the scaled-dot kernel, multiple
heads, the three directional variants, and their parameter budgets."""

import numpy as np

from emofuse import fusion
from emofuse.fusion import ModelConfig, count_params, init_params, scaled_dot_attention

rng = np.random.default_rng(1)

print("=== scaled dot-product attention ===")
q = rng.normal(size=(2, 4))
k = rng.normal(size=(5, 4))
v = rng.normal(size=(5, 3))
out = scaled_dot_attention(q, k, v)
print("Q (2x4), K (5x4), V (5x3) -> output", out.shape)
print("zero queries give the column mean of V:",
      np.allclose(scaled_dot_attention(np.zeros((2, 4)), k, v)[0], v.mean(axis=0)))

print("\n=== the three cross-attention fusions (d_model=16, h=4) ===")
h_p_aligned = rng.normal(size=(6, 16)).astype(np.float32)  # aligned to 6 subwords
h_s = rng.normal(size=(6, 16)).astype(np.float32)
for arch in ("para_xattn", "sem_xattn", "symmetric"):
    config = ModelConfig(architecture=arch, d_model=16, n_heads=4)
    model = init_params(config, seed=2)
    probs = fusion.cross_attention_forward(h_p_aligned, h_s, model)
    print(f"{arch:12s} probs {np.round(probs, 3).tolist()}  sum {probs.sum():.6f}")

print("\n=== symmetric = average of the two directions before pooling ===")
config = ModelConfig(architecture="symmetric", d_model=16, n_heads=4)
model = init_params(config, seed=3)
z, caches = fusion._xattn_pooled(model, h_p_aligned, h_s)
print("fused sequence shape:", z.shape, "(one row per subword)")

print("\n=== trainable-parameter budgets ===")
for arch in ("score", "concat", "para_xattn", "symmetric"):
    for size in ("base", "large"):
        n = count_params(ModelConfig.from_size(arch, size))
        print(f"{arch:12s} {size:5s} {n:>12,}")
