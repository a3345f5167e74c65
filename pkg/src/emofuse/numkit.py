"""Dense-matrix kernels and hand-differentiated training primitives.

Everything operates on plain numpy arrays: float32 for training runs,
float64 when gradients are being checked against finite differences.
All functions are pure and deterministic; parameter collections are
plain dicts mapping names to arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_CLASSES = 4

# Floor inside cross-entropy, guards log(0) on saturated softmax outputs.
CROSS_ENTROPY_EPS = 1e-12

ParamSet = dict[str, np.ndarray]


def require_finite(name: str, a: np.ndarray) -> None:
    """Raise ValueError if `a` contains NaN or Inf."""
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Softmax along the last axis, stabilized by per-row max subtraction.

    Accepts a matrix (or any array treated as a stack of rows); each row of
    the result is positive and sums to 1.
    """
    m = np.asarray(m)
    require_finite("softmax input", m)
    shifted = m - m.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_vec(v: np.ndarray) -> np.ndarray:
    """Softmax of a single vector."""
    v = np.asarray(v)
    require_finite("softmax input", v)
    shifted = v - v.max()
    e = np.exp(shifted)
    return e / e.sum()


def mean_over_positions(m: np.ndarray) -> np.ndarray:
    """Mean over sequence positions (rows): (n, d) -> (d,)."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] < 1:
        raise ValueError(f"expected a matrix with >= 1 row, got shape {m.shape}")
    return m.mean(axis=0)


@dataclass
class HeadParams:
    """Dense classifier head: probs = softmax(tanh(W x + b))."""

    W: np.ndarray  # (n_classes, in_dim)
    b: np.ndarray  # (n_classes,)

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]


def head_scores(x: np.ndarray, p: HeadParams) -> np.ndarray:
    """Pre-softmax scores tanh(W x + b), each in (-1, 1)."""
    x = np.asarray(x)
    if x.shape != (p.in_dim,):
        raise ValueError(f"input length {x.shape} does not match head in_dim {p.in_dim}")
    return np.tanh(p.W @ x + p.b)


def head_forward(x: np.ndarray, p: HeadParams) -> np.ndarray:
    """Class probabilities softmax(tanh(W x + b)); sums to 1."""
    return softmax_vec(head_scores(x, p))


def cross_entropy(probs: np.ndarray, label: int) -> float:
    """-ln(probs[label]), floored at CROSS_ENTROPY_EPS; probs must sum to 1."""
    probs = np.asarray(probs)
    if not 0 <= label < probs.shape[0]:
        raise ValueError(f"label {label} out of range for {probs.shape[0]} classes")
    if abs(float(probs.sum()) - 1.0) > 1e-5:
        raise ValueError("probabilities do not sum to 1")
    return float(-np.log(max(float(probs[label]), CROSS_ENTROPY_EPS)))


def cross_entropy_from_scores(scores: np.ndarray, label: int) -> float:
    """Cross-entropy of softmax(scores) at `label` via log-sum-exp.

    Equals cross_entropy(softmax_vec(scores), label) but never forms the
    probabilities, so it cannot underflow.
    """
    scores = np.asarray(scores)
    if not 0 <= label < scores.shape[0]:
        raise ValueError(f"label {label} out of range for {scores.shape[0]} classes")
    m = float(scores.max())
    lse = m + float(np.log(np.exp(scores - m).sum()))
    return lse - float(scores[label])


def global_norm(arrays: ParamSet) -> float:
    """Global L2 norm over every entry of every array, accumulated in float64."""
    total = 0.0
    for a in arrays.values():
        a64 = np.asarray(a, dtype=np.float64)
        total += float(np.sum(a64 * a64))
    return float(np.sqrt(total))


def clip_global_norm(grads: ParamSet, max_norm: float = 1.0) -> ParamSet:
    """Scale all gradients by max_norm/g when the global L2 norm g exceeds max_norm."""
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    for name, g in grads.items():
        require_finite(f"gradient {name}", g)
    norm = global_norm(grads)
    if norm <= max_norm:
        return dict(grads)
    scale = max_norm / norm
    return {name: (g * np.asarray(scale, dtype=g.dtype)) for name, g in grads.items()}


@dataclass
class AdamState:
    """Per-parameter moment estimates; step_count increments once per update."""

    step_count: int
    first_moment: ParamSet
    second_moment: ParamSet

    @classmethod
    def zeros_like(cls, params: ParamSet) -> "AdamState":
        return cls(
            step_count=0,
            first_moment={k: np.zeros_like(v) for k, v in params.items()},
            second_moment={k: np.zeros_like(v) for k, v in params.items()},
        )


def adam_step(
    params: ParamSet,
    grads: ParamSet,
    state: AdamState,
    lr: float = 1e-5,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[ParamSet, AdamState]:
    """One bias-corrected Adam update; returns new params and new state."""
    if set(params) != set(grads):
        raise ValueError("params and grads have different keys")
    t = state.step_count + 1
    new_params: ParamSet = {}
    new_m: ParamSet = {}
    new_v: ParamSet = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"shape mismatch for {name}: {p.shape} vs {g.shape}")
        require_finite(f"gradient {name}", g)
        m = beta1 * state.first_moment[name] + (1.0 - beta1) * g
        v = beta2 * state.second_moment[name] + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        new_params[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(step_count=t, first_moment=new_m, second_moment=new_v)


def finite_diff_grad(f, params: ParamSet, h: float = 1e-5) -> ParamSet:
    """Central-difference gradient of a scalar function of a parameter set.

    `f` must be deterministic and must not mutate its argument. Parameters
    must be float64; central differences at this step size are meaningless
    in single precision.
    """
    for name, p in params.items():
        if p.dtype != np.float64:
            raise ValueError(f"finite differences require float64 params, {name} is {p.dtype}")
    work = {k: v.copy() for k, v in params.items()}
    grads: ParamSet = {}
    for name in params:
        flat = work[name].ravel()
        g = np.zeros(flat.shape[0], dtype=np.float64)
        for i in range(flat.shape[0]):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = f(work)
            flat[i] = orig - h
            f_minus = f(work)
            flat[i] = orig
            g[i] = (f_plus - f_minus) / (2.0 * h)
        grads[name] = g.reshape(params[name].shape)
    return grads


def max_rel_error(a: ParamSet, b: ParamSet, floor: float = 1e-5) -> float:
    """Max elementwise |a-b| / max(|a|, |b|, floor) over matching param sets.

    The floor makes near-zero entries compare on an absolute scale instead
    of blowing up the ratio.
    """
    if set(a) != set(b):
        raise ValueError("param sets have different keys")
    worst = 0.0
    for name in a:
        x = np.asarray(a[name], dtype=np.float64)
        y = np.asarray(b[name], dtype=np.float64)
        denom = np.maximum(np.maximum(np.abs(x), np.abs(y)), floor)
        worst = max(worst, float((np.abs(x - y) / denom).max()))
    return worst
