"""Recurrent cells: the fast-weights cell plus IRNN and LSTM baselines.

The fast-weights cell keeps a per-sequence associative memory updated every
step by decay plus a Hebbian outer product:

    A(t) = lam * A(t-1) + eta * h(t) h(t)^T

Two interchangeable backends realize the memory term A(t) h:

    * ``materialized``: keep A as an explicit HxH matrix (single sequence).
    * ``attention``: keep the decayed history of hidden vectors and compute
      eta * sum_tau lam^(t-tau) h(tau) [h(tau) . h], which is algebraically
      the same quantity and supports mini-batches.

Hidden vectors are rows; a weight matrix stored as (in, out) acts by
right-multiplication ``h @ W``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Var
from .numerics import ShapeError, scaled_identity, uniform_fanout_init


def layer_norm(z: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Numeric layer norm on plain arrays; same math as the autodiff op."""
    tape = Tape()
    out = ad.layer_norm(
        tape.leaf(np.atleast_2d(z)),
        tape.leaf(np.atleast_2d(gain)),
        tape.leaf(np.atleast_2d(bias)),
    )
    return out.value.reshape(np.asarray(z).shape)


# ---------------------------------------------------------------------------
# fast associative memory backends


class MaterializedMemory:
    """Explicit fast-weight matrix A; valid for single-sequence batches only."""

    def __init__(self, A: Var, eta: float, lam: float):
        self.A = A
        self.eta = eta
        self.lam = lam

    def apply(self, query: Var) -> Var:
        return ad.matmul(query, ad.transpose(self.A))

    def updated(self, h: Var) -> "MaterializedMemory":
        if h.value.shape[0] != 1:
            raise ShapeError(
                f"materialized backend is single-sequence, got batch {h.value.shape[0]}"
            )
        A2 = ad.add(ad.smul(self.lam, self.A), ad.smul(self.eta, ad.outer(h, h)))
        return MaterializedMemory(A2, self.eta, self.lam)


class AttentionMemory:
    """Decayed hidden-state history; batch-friendly form of the same memory."""

    def __init__(self, history: tuple[Var, ...], eta: float, lam: float):
        self.history = history
        self.eta = eta
        self.lam = lam

    def apply(self, query: Var) -> Var:
        if not self.history:
            return query.tape.leaf(np.zeros_like(query.value))
        t = len(self.history)
        acc = None
        for i, h in enumerate(self.history):
            w = self.eta * self.lam ** (t - 1 - i)
            term = ad.smul(w, ad.scale_rows(ad.row_dot(h, query), h))
            acc = term if acc is None else ad.add(acc, term)
        return acc

    def updated(self, h: Var) -> "AttentionMemory":
        return AttentionMemory(self.history + (h,), self.eta, self.lam)


# ---------------------------------------------------------------------------
# cells


@dataclass
class FastWeightsConfig:
    hidden: int
    input_dim: int
    eta: float = 0.5
    lam: float = 0.95
    inner_steps: int = 1
    boundary: str = "sustained"  # "sustained" | "identity"
    backend: str = "attention"  # "attention" | "materialized"
    layer_norm: bool = True  # exact unnormalized mode used by algebra tests

    def __post_init__(self):
        if not (0.0 <= self.lam < 1.0):
            raise ValueError(f"decay rate must be in [0,1), got {self.lam}")
        if self.eta < 0.0:
            raise ValueError(f"fast learning rate must be >= 0, got {self.eta}")
        if self.inner_steps < 1:
            raise ValueError(f"inner_steps must be >= 1, got {self.inner_steps}")
        if self.boundary not in ("sustained", "identity"):
            raise ValueError(f"unknown boundary method {self.boundary!r}")
        if self.backend not in ("attention", "materialized"):
            raise ValueError(f"unknown memory backend {self.backend!r}")


class FastWeightsCell:
    """ReLU RNN augmented with a decaying Hebbian fast-weight memory.

    Each step computes the boundary input b = W h(t) + C x(t) once, takes the
    preliminary vector h0 = f(LN[b]), then settles for S inner iterations:

        sustained: h_{s+1} = f(LN[b + A h_s])
        identity:  h_{s+1} = f(LN[(A + I) h_s])

    and finally writes h(t+1) into the memory (unless the caller gates the
    write with store=False).
    """

    def __init__(self, cfg: FastWeightsConfig):
        self.cfg = cfg

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        H, I = self.cfg.hidden, self.cfg.input_dim
        return {
            "W": scaled_identity(H, 0.05),
            "C": uniform_fanout_init(rng, I, H),
            "ln_gain": np.ones((1, H)),
            "ln_bias": np.zeros((1, H)),
        }

    def initial_state(self, tape: Tape, batch: int):
        H = self.cfg.hidden
        h0 = tape.leaf(np.zeros((batch, H)))
        if self.cfg.backend == "materialized":
            mem = MaterializedMemory(tape.leaf(np.zeros((H, H))), self.cfg.eta, self.cfg.lam)
        else:
            mem = AttentionMemory((), self.cfg.eta, self.cfg.lam)
        return (h0, mem)

    def _activate(self, p: dict[str, Var], pre: Var) -> Var:
        if self.cfg.layer_norm:
            pre = ad.layer_norm(pre, p["ln_gain"], p["ln_bias"])
        return ad.relu(pre)

    def step(self, p: dict[str, Var], state, x: Var, store: bool = True):
        h_prev, mem = state
        b = ad.add(ad.matmul(h_prev, p["W"]), ad.matmul(x, p["C"]))
        h = self._activate(p, b)
        for _ in range(self.cfg.inner_steps):
            mem_term = mem.apply(h)
            if self.cfg.boundary == "sustained":
                pre = ad.add(b, mem_term)
            else:
                pre = ad.add(mem_term, h)  # (A + I) h_s
            h = self._activate(p, pre)
        if store:
            mem = mem.updated(h)
        return h, (h, mem)


@dataclass
class IRNNConfig:
    hidden: int
    input_dim: int
    layer_norm: bool = False


class IRNNCell:
    """ReLU RNN with recurrent weights initialized to a 0.5-scaled identity."""

    def __init__(self, cfg: IRNNConfig):
        self.cfg = cfg

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        H, I = self.cfg.hidden, self.cfg.input_dim
        params = {
            "W_rec": scaled_identity(H, 0.5),
            "C_in": uniform_fanout_init(rng, I, H),
            "bias": np.zeros((1, H)),
        }
        if self.cfg.layer_norm:
            params["ln_gain"] = np.ones((1, H))
            params["ln_bias"] = np.zeros((1, H))
        return params

    def initial_state(self, tape: Tape, batch: int):
        return tape.leaf(np.zeros((batch, self.cfg.hidden)))

    def step(self, p: dict[str, Var], state, x: Var, store: bool = True):
        pre = ad.add_bias(
            ad.add(ad.matmul(state, p["W_rec"]), ad.matmul(x, p["C_in"])), p["bias"]
        )
        if self.cfg.layer_norm:
            pre = ad.layer_norm(pre, p["ln_gain"], p["ln_bias"])
        h = ad.relu(pre)
        return h, h


@dataclass
class LSTMConfig:
    hidden: int
    input_dim: int


class LSTMCell:
    """Standard LSTM: logistic input/forget/output gates, tanh candidate and
    output squashing, forget-gate bias started at 1."""

    def __init__(self, cfg: LSTMConfig):
        self.cfg = cfg

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        H, I = self.cfg.hidden, self.cfg.input_dim
        bias = np.zeros((1, 4 * H))
        bias[0, H : 2 * H] = 1.0  # forget gate
        return {
            "W_x": uniform_fanout_init(rng, I, 4 * H),
            "W_h": uniform_fanout_init(rng, H, 4 * H),
            "bias": bias,
        }

    def initial_state(self, tape: Tape, batch: int):
        H = self.cfg.hidden
        return (tape.leaf(np.zeros((batch, H))), tape.leaf(np.zeros((batch, H))))

    def step(self, p: dict[str, Var], state, x: Var, store: bool = True):
        h_prev, c_prev = state
        H = self.cfg.hidden
        z = ad.add_bias(
            ad.add(ad.matmul(x, p["W_x"]), ad.matmul(h_prev, p["W_h"])), p["bias"]
        )
        i = ad.sigmoid(ad.slice_cols(z, 0, H))
        f = ad.sigmoid(ad.slice_cols(z, H, 2 * H))
        g = ad.tanh(ad.slice_cols(z, 2 * H, 3 * H))
        o = ad.sigmoid(ad.slice_cols(z, 3 * H, 4 * H))
        c = ad.add(ad.mul(f, c_prev), ad.mul(i, g))
        h = ad.mul(o, ad.tanh(c))
        return h, (h, c)


CELL_KINDS = ("fast", "lstm", "irnn")


def make_cell(kind: str, hidden: int, input_dim: int, **overrides):
    """Factory used by models and the CLI; overrides go to the cell config."""
    if kind == "fast":
        return FastWeightsCell(FastWeightsConfig(hidden, input_dim, **overrides))
    if kind == "lstm":
        return LSTMCell(LSTMConfig(hidden, input_dim))
    if kind == "irnn":
        return IRNNCell(IRNNConfig(hidden, input_dim, **overrides))
    raise ValueError(f"unknown cell kind {kind!r}, expected one of {CELL_KINDS}")
