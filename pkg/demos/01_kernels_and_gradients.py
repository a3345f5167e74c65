"""Tour of the numeric kernels: softmax, the tanh classifier head,
cross-entropy, Adam, and the finite-difference gradient oracle."""

import numpy as np

from emofuse.numkit import (
    AdamState,
    HeadParams,
    adam_step,
    cross_entropy,
    finite_diff_grad,
    head_forward,
    max_rel_error,
    softmax_rows,
    softmax_vec,
)

print("=== softmax ===")
m = np.array([[0.0, 0.0, 0.0, 0.0], [0.0, np.log(3.0), 0.0, 0.0]])
print("input rows:", m.tolist())
print("softmax rows:", np.round(softmax_rows(m), 4).tolist())
print("row sums:", softmax_rows(m).sum(axis=1))

print("\n=== classifier head: softmax(tanh(Wx + b)) ===")
rng = np.random.default_rng(0)
head = HeadParams(W=rng.normal(size=(4, 8)) * 0.3, b=np.zeros(4))
x = rng.normal(size=8)
probs = head_forward(x, head)
print("probs:", np.round(probs, 4), " sum:", probs.sum())
print("cross-entropy at label 2:", round(cross_entropy(probs, 2), 4))

print("\n=== Adam on f(w) = w^2 ===")
params = {"w": np.array([1.0])}
state = AdamState.zeros_like(params)
for step in range(1, 61):
    grads = {"w": 2.0 * params["w"]}
    params, state = adam_step(params, grads, state, lr=0.1)
    if step in (1, 5, 10, 20, 40, 60):
        print(f"step {step:3d}: w = {params['w'][0]:+.6f}  loss = {params['w'][0] ** 2:.2e}")

print("\n=== finite differences vs analytic gradient ===")
label = 1
p64 = {"W": rng.normal(size=(4, 8)) * 0.3, "b": rng.normal(size=4) * 0.1}


def loss_fn(ps):
    t = np.tanh(ps["W"] @ x + ps["b"])
    return float(-np.log(softmax_vec(t)[label]))


numeric = finite_diff_grad(loss_fn, p64)
t = np.tanh(p64["W"] @ x + p64["b"])
probs = softmax_vec(t)
d_t = probs.copy()
d_t[label] -= 1.0
d_z = d_t * (1.0 - t * t)
analytic = {"W": np.outer(d_z, x), "b": d_z}
print("max relative error:", f"{max_rel_error(analytic, numeric):.2e}")
