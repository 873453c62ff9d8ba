"""Adam optimizer over named parameter dicts.

m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
theta <- theta - lr * mhat / (sqrt(vhat) + eps)  with bias-corrected moments.
"""

from __future__ import annotations

import numpy as np

from ..numerics import ShapeError


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def init(self, params: dict[str, np.ndarray]) -> None:
        self.t = 0
        self.m = {k: np.zeros_like(p) for k, p in params.items()}
        self.v = {k: np.zeros_like(p) for k, p in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Update params in place from one gradient table."""
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ShapeError(f"grad shape {g.shape} != param shape {p.shape} for {name}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    # checkpoint plumbing ---------------------------------------------------

    def state_blocks(self) -> dict[str, np.ndarray]:
        blocks = {"opt.t": np.array([[float(self.t)]])}
        for k, m in self.m.items():
            blocks[f"opt.m.{k}"] = m
        for k, v in self.v.items():
            blocks[f"opt.v.{k}"] = v
        return blocks

    def load_state_blocks(self, blocks: dict[str, np.ndarray]) -> None:
        self.t = int(blocks["opt.t"][0, 0])
        self.m = {
            k[len("opt.m.") :]: np.array(v) for k, v in blocks.items() if k.startswith("opt.m.")
        }
        self.v = {
            k[len("opt.v.") :]: np.array(v) for k, v in blocks.items() if k.startswith("opt.v.")
        }


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if total > max_norm > 0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total
