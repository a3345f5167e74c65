"""Fusion architectures over a paralinguistic and a semantic embedding matrix.

Seven classifiers share one parameter convention (a flat dict of named
arrays): two unimodal pooled-head baselines, score averaging of two
parallel heads, a single head over concatenated pooled features, and three
multi-head cross-attention fusions (paralinguistic, semantic, symmetric).
Gradients are hand-derived per architecture and validated against central
finite differences, not produced by an autodiff tape.

Sequence convention: cross-attention consumes a paralinguistic matrix that
was already aligned to the subword grid, so both directions produce outputs
with one row per subword.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .alignment import METHOD_SUBWORDS, METHODS
from .numkit import (
    N_CLASSES,
    CROSS_ENTROPY_EPS,
    HeadParams,
    ParamSet,
    cross_entropy_from_scores,
    mean_over_positions,
    softmax_rows,
    softmax_vec,
)

ARCH_UNIMODAL_PARA = "unimodal_para"
ARCH_UNIMODAL_SEM = "unimodal_sem"
ARCH_SCORE = "score"
ARCH_CONCAT = "concat"
ARCH_PARA_XATTN = "para_xattn"
ARCH_SEM_XATTN = "sem_xattn"
ARCH_SYMMETRIC = "symmetric"

ARCHITECTURES = (
    ARCH_UNIMODAL_PARA,
    ARCH_UNIMODAL_SEM,
    ARCH_SCORE,
    ARCH_CONCAT,
    ARCH_PARA_XATTN,
    ARCH_SEM_XATTN,
    ARCH_SYMMETRIC,
)

ATTENTION_ARCHS = (ARCH_PARA_XATTN, ARCH_SEM_XATTN, ARCH_SYMMETRIC)

# Encoder size ladder: name -> (d_model, n_heads).
SIZE_PRESETS = {"base": (768, 16), "large": (1024, 32)}


@dataclass
class ModelConfig:
    """Architecture, widths, head count and alignment method for one model."""

    architecture: str
    d_model: int
    n_heads: int
    n_classes: int = N_CLASSES
    alignment: str = METHOD_SUBWORDS

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.alignment not in METHODS:
            raise ValueError(f"unknown alignment method {self.alignment!r}")
        if self.d_model < 1 or self.n_heads < 1:
            raise ValueError("d_model and n_heads must be positive")
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )

    @property
    def d_k(self) -> int:
        return self.d_model // self.n_heads

    @classmethod
    def from_size(cls, architecture: str, size: str, alignment: str = METHOD_SUBWORDS) -> "ModelConfig":
        if size not in SIZE_PRESETS:
            raise ValueError(f"unknown size preset {size!r}")
        d_model, n_heads = SIZE_PRESETS[size]
        return cls(architecture=architecture, d_model=d_model, n_heads=n_heads, alignment=alignment)

    def to_dict(self) -> dict:
        return {
            "architecture": self.architecture,
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "n_classes": self.n_classes,
            "alignment": self.alignment,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class MultiHeadAttentionParams:
    """Projection matrices for one attention block, h per-head column blocks each.

    W_Q, W_K, W_V and W_O are all (d_model, d_model); columns i*d_k..(i+1)*d_k
    of the first three hold head i's projection. No biases.
    """

    W_Q: np.ndarray
    W_K: np.ndarray
    W_V: np.ndarray
    W_O: np.ndarray
    n_heads: int

    def __post_init__(self):
        d = self.W_Q.shape[0]
        for name in ("W_Q", "W_K", "W_V", "W_O"):
            w = getattr(self, name)
            if w.shape != (d, d):
                raise ValueError(f"{name} must be square with width {d}, got {w.shape}")
        if d % self.n_heads != 0:
            raise ValueError(f"d_model {d} not divisible by n_heads {self.n_heads}")

    @classmethod
    def from_params(cls, params: ParamSet, prefix: str, n_heads: int) -> "MultiHeadAttentionParams":
        return cls(
            W_Q=params[f"{prefix}.W_Q"],
            W_K=params[f"{prefix}.W_K"],
            W_V=params[f"{prefix}.W_V"],
            W_O=params[f"{prefix}.W_O"],
            n_heads=n_heads,
        )


@dataclass
class FusionModel:
    """One fusion architecture plus every trainable parameter it owns."""

    config: ModelConfig
    params: ParamSet

    def head(self, prefix: str = "head") -> HeadParams:
        return HeadParams(W=self.params[f"{prefix}.W"], b=self.params[f"{prefix}.b"])


# ---------------------------------------------------------------------------
# Attention kernels
# ---------------------------------------------------------------------------


def scaled_dot_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """softmax(Q K^T / sqrt(d_k)) V for single-head 2-D inputs."""
    q, k, v = np.asarray(q), np.asarray(k), np.asarray(v)
    if k.shape[0] != v.shape[0]:
        raise ValueError(f"K rows {k.shape[0]} != V rows {v.shape[0]}")
    if q.shape[1] != k.shape[1]:
        raise ValueError(f"Q width {q.shape[1]} != K width {k.shape[1]}")
    weights = attention_weights(q, k)
    return weights @ v


def attention_weights(q: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Row-stochastic attention map softmax(Q K^T / sqrt(d_k))."""
    d_k = q.shape[1]
    return softmax_rows((q @ k.T) / math.sqrt(d_k))


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    """(L, d) -> (h, L, d/h), slicing the width into per-head blocks."""
    length, d = x.shape
    return x.reshape(length, n_heads, d // n_heads).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    """(h, L, d_k) -> (L, h*d_k), inverse of _split_heads."""
    h, length, d_k = x.shape
    return x.transpose(1, 0, 2).reshape(length, h * d_k)


def mha_forward(
    p: MultiHeadAttentionParams,
    q_in: np.ndarray,
    k_in: np.ndarray,
    v_in: np.ndarray,
) -> tuple[np.ndarray, tuple]:
    """Multi-head attention with a cache for the backward pass.

    Returns (output, cache); output has shape (rows of q_in, d_model).
    """
    if k_in.shape[0] != v_in.shape[0]:
        raise ValueError(f"K rows {k_in.shape[0]} != V rows {v_in.shape[0]}")
    d = p.W_Q.shape[0]
    for name, x in (("Q", q_in), ("K", k_in), ("V", v_in)):
        if x.shape[1] != d:
            raise ValueError(f"{name} width {x.shape[1]} != d_model {d}")
    d_k = d // p.n_heads
    qh = _split_heads(q_in @ p.W_Q, p.n_heads)  # (h, L_q, d_k)
    kh = _split_heads(k_in @ p.W_K, p.n_heads)  # (h, L_k, d_k)
    vh = _split_heads(v_in @ p.W_V, p.n_heads)
    scores = qh @ kh.transpose(0, 2, 1) / math.sqrt(d_k)
    attn = softmax_rows(scores)  # (h, L_q, L_k), rows sum to 1
    heads = attn @ vh  # (h, L_q, d_k)
    concat = _merge_heads(heads)  # (L_q, d)
    out = concat @ p.W_O
    cache = (q_in, k_in, v_in, qh, kh, vh, attn, concat)
    return out, cache


def mha_backward(p: MultiHeadAttentionParams, cache: tuple, d_out: np.ndarray) -> ParamSet:
    """Gradients of the four projection matrices given d(loss)/d(output).

    Input gradients are not computed: the embedding matrices are data, not
    trainable parameters.
    """
    q_in, k_in, v_in, qh, kh, vh, attn, concat = cache
    d_k = qh.shape[2]
    d_w_o = concat.T @ d_out
    d_concat = d_out @ p.W_O.T
    d_heads = _split_heads(d_concat, p.n_heads)  # (h, L_q, d_k)
    d_attn = d_heads @ vh.transpose(0, 2, 1)  # (h, L_q, L_k)
    d_vh = attn.transpose(0, 2, 1) @ d_heads  # (h, L_k, d_k)
    # Softmax rows: dS = A * (dA - rowsum(dA * A)), then undo the 1/sqrt(d_k) scale.
    inner = (d_attn * attn).sum(axis=-1, keepdims=True)
    d_scores = attn * (d_attn - inner) / math.sqrt(d_k)
    d_qh = d_scores @ kh  # (h, L_q, d_k)
    d_kh = d_scores.transpose(0, 2, 1) @ qh  # (h, L_k, d_k)
    return {
        "W_Q": q_in.T @ _merge_heads(d_qh),
        "W_K": k_in.T @ _merge_heads(d_kh),
        "W_V": v_in.T @ _merge_heads(d_vh),
        "W_O": d_w_o,
    }


def multi_head_attention(
    p: MultiHeadAttentionParams,
    q_in: np.ndarray,
    k_in: np.ndarray,
    v_in: np.ndarray,
) -> np.ndarray:
    """Multi-head attention output only; see mha_forward for the cached variant."""
    out, _ = mha_forward(p, q_in, k_in, v_in)
    return out


# ---------------------------------------------------------------------------
# Parameter initialization and counting
# ---------------------------------------------------------------------------


def _attn_prefixes(architecture: str) -> tuple[str, ...]:
    if architecture in (ARCH_PARA_XATTN, ARCH_SEM_XATTN):
        return ("attn",)
    if architecture == ARCH_SYMMETRIC:
        return ("attn_para", "attn_sem")
    return ()


def _head_specs(config: ModelConfig) -> tuple[tuple[str, int], ...]:
    """(prefix, in_dim) for every classifier head of the architecture."""
    d = config.d_model
    if config.architecture == ARCH_SCORE:
        return (("head_p", d), ("head_s", d))
    if config.architecture == ARCH_CONCAT:
        return (("head", 2 * d),)
    return (("head", d),)


def init_params(config: ModelConfig, seed, dtype=np.float32) -> FusionModel:
    """Seeded uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) weights, zero biases."""
    rng = np.random.default_rng(seed)
    d = config.d_model
    params: ParamSet = {}
    bound = math.sqrt(1.0 / d)
    for prefix in _attn_prefixes(config.architecture):
        for w_name in ("W_Q", "W_K", "W_V", "W_O"):
            params[f"{prefix}.{w_name}"] = rng.uniform(-bound, bound, size=(d, d)).astype(dtype)
    for prefix, in_dim in _head_specs(config):
        hb = math.sqrt(1.0 / in_dim)
        params[f"{prefix}.W"] = rng.uniform(-hb, hb, size=(config.n_classes, in_dim)).astype(dtype)
        params[f"{prefix}.b"] = np.zeros(config.n_classes, dtype=dtype)
    return FusionModel(config=config, params=params)


def count_params(config: ModelConfig) -> int:
    """Exact trainable-parameter count: 4*d_model^2 per attention block,
    n_classes*in_dim + n_classes per head."""
    d = config.d_model
    total = len(_attn_prefixes(config.architecture)) * 4 * d * d
    for _, in_dim in _head_specs(config):
        total += config.n_classes * in_dim + config.n_classes
    return total


# ---------------------------------------------------------------------------
# Forward passes and hand-derived gradients
# ---------------------------------------------------------------------------


def _check_width(name: str, m: np.ndarray, d_model: int) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[1] != d_model:
        raise ValueError(f"{name} must be (rows, {d_model}), got {m.shape}")
    return m


def _head_path(params: ParamSet, prefix: str, x: np.ndarray):
    """Linear-tanh-softmax stack; returns (probs, tanh scores)."""
    w = params[f"{prefix}.W"]
    b = params[f"{prefix}.b"]
    t = np.tanh(w @ x + b)
    return softmax_vec(t), t


def _head_path_backward(params, prefix, x, probs, t, d_t, grads):
    """Accumulate head gradients given dL/d(tanh scores); returns dL/dx."""
    d_z = d_t * (1.0 - t * t)
    grads[f"{prefix}.W"] += np.outer(d_z, x)
    grads[f"{prefix}.b"] += d_z
    return params[f"{prefix}.W"].T @ d_z


def unimodal_forward(h: np.ndarray, m: FusionModel) -> np.ndarray:
    """Pooled-mean classifier head over a single modality."""
    if m.config.architecture not in (ARCH_UNIMODAL_PARA, ARCH_UNIMODAL_SEM):
        raise ValueError(f"not a unimodal architecture: {m.config.architecture}")
    h = _check_width("input", h, m.config.d_model)
    probs, _ = _head_path(m.params, "head", mean_over_positions(h))
    return probs


def score_fusion_forward(h_p: np.ndarray, h_s: np.ndarray, m: FusionModel) -> np.ndarray:
    """Class-wise average of the two branch heads' softmax outputs."""
    if m.config.architecture != ARCH_SCORE:
        raise ValueError(f"not a score-fusion model: {m.config.architecture}")
    h_p = _check_width("H_p", h_p, m.config.d_model)
    h_s = _check_width("H_s", h_s, m.config.d_model)
    probs_p, _ = _head_path(m.params, "head_p", mean_over_positions(h_p))
    probs_s, _ = _head_path(m.params, "head_s", mean_over_positions(h_s))
    return 0.5 * (probs_p + probs_s)


def concat_fusion_forward(h_p: np.ndarray, h_s: np.ndarray, m: FusionModel) -> np.ndarray:
    """One classifier head over the concatenated pooled features of both modalities."""
    if m.config.architecture != ARCH_CONCAT:
        raise ValueError(f"not a concatenation-fusion model: {m.config.architecture}")
    h_p = _check_width("H_p", h_p, m.config.d_model)
    h_s = _check_width("H_s", h_s, m.config.d_model)
    x = np.concatenate([mean_over_positions(h_p), mean_over_positions(h_s)])
    probs, _ = _head_path(m.params, "head", x)
    return probs


def _xattn_pooled(m: FusionModel, h_p_aligned: np.ndarray, h_s: np.ndarray):
    """Attention output(s), pooled vector and caches for the three attention archs."""
    arch = m.config.architecture
    h = m.config.n_heads
    if h_p_aligned.shape[0] != h_s.shape[0]:
        raise ValueError(
            f"aligned sequence lengths differ: {h_p_aligned.shape[0]} vs {h_s.shape[0]}"
        )
    if arch == ARCH_PARA_XATTN:
        p = MultiHeadAttentionParams.from_params(m.params, "attn", h)
        z, cache = mha_forward(p, q_in=h_s, k_in=h_p_aligned, v_in=h_p_aligned)
        return z, {"attn": (p, cache)}
    if arch == ARCH_SEM_XATTN:
        p = MultiHeadAttentionParams.from_params(m.params, "attn", h)
        z, cache = mha_forward(p, q_in=h_p_aligned, k_in=h_s, v_in=h_s)
        return z, {"attn": (p, cache)}
    p_para = MultiHeadAttentionParams.from_params(m.params, "attn_para", h)
    p_sem = MultiHeadAttentionParams.from_params(m.params, "attn_sem", h)
    z_para, cache_para = mha_forward(p_para, q_in=h_s, k_in=h_p_aligned, v_in=h_p_aligned)
    z_sem, cache_sem = mha_forward(p_sem, q_in=h_p_aligned, k_in=h_s, v_in=h_s)
    z = 0.5 * (z_para + z_sem)
    return z, {"attn_para": (p_para, cache_para), "attn_sem": (p_sem, cache_sem)}


def cross_attention_forward(h_p_aligned: np.ndarray, h_s: np.ndarray, m: FusionModel) -> np.ndarray:
    """Cross-attention fusion head; both inputs must share the subword row count."""
    if m.config.architecture not in ATTENTION_ARCHS:
        raise ValueError(f"not a cross-attention model: {m.config.architecture}")
    h_p_aligned = _check_width("aligned H_p", h_p_aligned, m.config.d_model)
    h_s = _check_width("H_s", h_s, m.config.d_model)
    z, _ = _xattn_pooled(m, h_p_aligned, h_s)
    probs, _ = _head_path(m.params, "head", mean_over_positions(z))
    return probs


def model_forward(m: FusionModel, h_p: np.ndarray, h_s: np.ndarray) -> np.ndarray:
    """Dispatch to the architecture's forward pass.

    For the attention architectures, h_p must already be aligned to the
    subword grid (same row count as h_s).
    """
    arch = m.config.architecture
    if arch == ARCH_UNIMODAL_PARA:
        return unimodal_forward(h_p, m)
    if arch == ARCH_UNIMODAL_SEM:
        return unimodal_forward(h_s, m)
    if arch == ARCH_SCORE:
        return score_fusion_forward(h_p, h_s, m)
    if arch == ARCH_CONCAT:
        return concat_fusion_forward(h_p, h_s, m)
    return cross_attention_forward(h_p, h_s, m)


def _segment_grad(m: FusionModel, h_p, h_s, label: int, grads: ParamSet | None):
    """Loss for one segment; accumulates parameter gradients in-place when asked."""
    arch = m.config.architecture
    d = m.config.d_model
    params = m.params

    if arch in (ARCH_UNIMODAL_PARA, ARCH_UNIMODAL_SEM, ARCH_CONCAT):
        if arch == ARCH_UNIMODAL_PARA:
            x = mean_over_positions(_check_width("H_p", h_p, d))
        elif arch == ARCH_UNIMODAL_SEM:
            x = mean_over_positions(_check_width("H_s", h_s, d))
        else:
            x = np.concatenate(
                [
                    mean_over_positions(_check_width("H_p", h_p, d)),
                    mean_over_positions(_check_width("H_s", h_s, d)),
                ]
            )
        probs, t = _head_path(params, "head", x)
        loss = cross_entropy_from_scores(t, label)
        if grads is not None:
            d_t = probs.copy()
            d_t[label] -= 1.0
            _head_path_backward(params, "head", x, probs, t, d_t, grads)
        return loss

    if arch == ARCH_SCORE:
        x_p = mean_over_positions(_check_width("H_p", h_p, d))
        x_s = mean_over_positions(_check_width("H_s", h_s, d))
        probs_p, t_p = _head_path(params, "head_p", x_p)
        probs_s, t_s = _head_path(params, "head_s", x_s)
        avg = 0.5 * (probs_p + probs_s)
        p_label = max(float(avg[label]), CROSS_ENTROPY_EPS)
        loss = -math.log(p_label)
        if grads is not None:
            d_avg = np.zeros_like(avg)
            d_avg[label] = -1.0 / p_label
            for prefix, probs_b, t_b, x_b in (
                ("head_p", probs_p, t_p, x_p),
                ("head_s", probs_s, t_s, x_s),
            ):
                g_b = 0.5 * d_avg
                # Softmax VJP: dt = p * (g - <g, p>).
                d_t = probs_b * (g_b - float(g_b @ probs_b))
                _head_path_backward(params, prefix, x_b, probs_b, t_b, d_t, grads)
        return loss

    # Cross-attention architectures; h_p must be pre-aligned.
    h_p = _check_width("aligned H_p", h_p, d)
    h_s = _check_width("H_s", h_s, d)
    z, attn_caches = _xattn_pooled(m, h_p, h_s)
    pooled = mean_over_positions(z)
    probs, t = _head_path(params, "head", pooled)
    loss = cross_entropy_from_scores(t, label)
    if grads is not None:
        d_t = probs.copy()
        d_t[label] -= 1.0
        d_pooled = _head_path_backward(params, "head", pooled, probs, t, d_t, grads)
        rows = z.shape[0]
        d_z = np.tile(d_pooled / rows, (rows, 1))
        if arch == ARCH_SYMMETRIC:
            d_z = 0.5 * d_z
        for prefix, (p_attn, cache) in attn_caches.items():
            attn_grads = mha_backward(p_attn, cache, d_z)
            for w_name, g in attn_grads.items():
                grads[f"{prefix}.{w_name}"] += g
    return loss


def model_loss(m: FusionModel, batch) -> float:
    """Mean cross-entropy over a batch of (H_p, H_s, label) triples."""
    if not batch:
        raise ValueError("empty batch")
    total = 0.0
    for h_p, h_s, label in batch:
        total += _segment_grad(m, h_p, h_s, int(label), None)
    return total / len(batch)


def model_grad(m: FusionModel, batch) -> tuple[float, ParamSet]:
    """Mean loss plus analytic gradients w.r.t. every trainable parameter."""
    if not batch:
        raise ValueError("empty batch")
    grads = {k: np.zeros_like(v) for k, v in m.params.items()}
    total = 0.0
    for h_p, h_s, label in batch:
        total += _segment_grad(m, h_p, h_s, int(label), grads)
    n = len(batch)
    loss = total / n
    if not math.isfinite(loss):
        raise ValueError("non-finite loss")
    inv = 1.0 / n
    for k in grads:
        grads[k] *= np.asarray(inv, dtype=grads[k].dtype)
    return loss, grads
