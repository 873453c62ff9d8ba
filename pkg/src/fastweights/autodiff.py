"""Reverse-mode automatic differentiation on a per-forward-pass tape.

Define-by-run: every primitive appends a node to the active :class:`Tape`,
so the record is rebuilt on each forward pass and naturally handles
variable sequence lengths and inner-loop iteration counts. A backward pass
walks the tape once in reverse, accumulating (never overwriting) adjoints.

All values are 2-D float64 arrays; vectors are single-row matrices. The
relu subgradient at exactly 0 is taken to be 0.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .numerics import ShapeError, as_f64


class ContractError(ValueError):
    """An operation was called outside its contract (non-shape violation)."""


class Tape:
    """Ordered record of forward operations; inputs always precede users."""

    def __init__(self):
        self.nodes: list[Var] = []

    def var(self, value, parents=()) -> "Var":
        v = Var(self, as_f64(value), parents)
        self.nodes.append(v)
        return v

    def leaf(self, value) -> "Var":
        return self.var(value)

    def wrap(self, params: dict[str, np.ndarray]) -> dict[str, "Var"]:
        """Wrap a named parameter dict into leaf Vars on this tape."""
        return {name: self.leaf(p) for name, p in params.items()}


class Var:
    """A tape node: forward value plus links to parents with their vjp rules."""

    __slots__ = ("tape", "value", "grad", "parents")

    def __init__(self, tape: Tape, value: np.ndarray, parents):
        if value.ndim != 2:
            value = value.reshape(1, -1)
        self.tape = tape
        self.value = value
        self.grad: np.ndarray | None = None
        # parents: tuple of (Var, vjp) where vjp maps this node's adjoint to
        # a contribution to the parent's adjoint.
        self.parents: tuple[tuple["Var", Callable[[np.ndarray], np.ndarray]], ...] = tuple(parents)

    @property
    def shape(self):
        return self.value.shape


def backward(tape: Tape, loss: Var) -> None:
    """Accumulate d(loss)/d(node) into .grad for every node reachable from loss."""
    if loss.value.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.value.shape}")
    for n in tape.nodes:
        n.grad = None
    loss.grad = np.ones_like(loss.value)
    for node in reversed(tape.nodes):
        if node.grad is None:
            continue
        for parent, vjp in node.parents:
            g = vjp(node.grad)
            if parent.grad is None:
                parent.grad = g
            else:
                parent.grad = parent.grad + g


def grads_of(params: dict[str, Var]) -> dict[str, np.ndarray]:
    """Gradient table for a wrapped parameter dict after a backward pass."""
    return {
        name: (v.grad if v.grad is not None else np.zeros_like(v.value))
        for name, v in params.items()
    }


# ---------------------------------------------------------------------------
# primitives


def _same_shape(a: Var, b: Var, op: str):
    if a.value.shape != b.value.shape:
        raise ShapeError(f"{op} shape mismatch: {a.value.shape} vs {b.value.shape}")


def add(a: Var, b: Var) -> Var:
    _same_shape(a, b, "add")
    return a.tape.var(a.value + b.value, [(a, lambda g: g), (b, lambda g: g)])


def sub(a: Var, b: Var) -> Var:
    _same_shape(a, b, "sub")
    return a.tape.var(a.value - b.value, [(a, lambda g: g), (b, lambda g: -g)])


def mul(a: Var, b: Var) -> Var:
    """Elementwise product, shapes must match exactly."""
    _same_shape(a, b, "mul")
    av, bv = a.value, b.value
    return a.tape.var(av * bv, [(a, lambda g: g * bv), (b, lambda g: g * av)])


def smul(c: float, x: Var) -> Var:
    """Scale by a constant (not differentiated through)."""
    c = float(c)
    return x.tape.var(c * x.value, [(x, lambda g: c * g)])


def add_bias(m: Var, b: Var) -> Var:
    """Add a single-row bias to every row of a batch."""
    if b.value.shape != (1, m.value.shape[1]):
        raise ShapeError(f"add_bias: bias {b.value.shape} does not fit {m.value.shape}")
    return m.tape.var(
        m.value + b.value,
        [(m, lambda g: g), (b, lambda g: g.sum(axis=0, keepdims=True))],
    )


def matmul(a: Var, b: Var) -> Var:
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.value.shape} x {b.value.shape}")
    av, bv = a.value, b.value
    return a.tape.var(av @ bv, [(a, lambda g: g @ bv.T), (b, lambda g: av.T @ g)])


def transpose(x: Var) -> Var:
    return x.tape.var(x.value.T, [(x, lambda g: g.T)])


def outer(u: Var, v: Var) -> Var:
    """u^T v for single-row u (1,m) and v (1,n), giving (m,n)."""
    if u.value.shape[0] != 1 or v.value.shape[0] != 1:
        raise ShapeError(f"outer expects row vectors, got {u.value.shape}, {v.value.shape}")
    uv, vv = u.value, v.value
    return u.tape.var(
        uv.T @ vv,
        [(u, lambda g: (g @ vv.T).T), (v, lambda g: uv @ g)],
    )


def relu(x: Var) -> Var:
    mask = x.value > 0
    return x.tape.var(np.maximum(x.value, 0.0), [(x, lambda g: g * mask)])


def tanh(x: Var) -> Var:
    y = np.tanh(x.value)
    return x.tape.var(y, [(x, lambda g: g * (1.0 - y * y))])


def sigmoid(x: Var) -> Var:
    y = 1.0 / (1.0 + np.exp(-x.value))
    return x.tape.var(y, [(x, lambda g: g * y * (1.0 - y))])


def exp(x: Var) -> Var:
    y = np.exp(x.value)
    return x.tape.var(y, [(x, lambda g: g * y)])


LN_EPS = 1e-5


def layer_norm(x: Var, gain: Var, bias: Var, eps: float = LN_EPS) -> Var:
    """Row-wise standardization then learned gain and bias.

    y = gain * (x - mean) / sqrt(var + eps) + bias, mean/var per row
    (population variance). Requires at least 2 columns.
    """
    if x.value.shape[1] < 2:
        raise ContractError("layer_norm needs at least 2 features for a defined variance")
    if gain.value.shape != (1, x.value.shape[1]) or bias.value.shape != (1, x.value.shape[1]):
        raise ShapeError(
            f"layer_norm gain/bias {gain.value.shape}/{bias.value.shape} "
            f"do not fit input {x.value.shape}"
        )
    mu = x.value.mean(axis=1, keepdims=True)
    var = x.value.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.value - mu) * inv_std
    y = gain.value * xhat + bias.value
    gv = gain.value

    def vjp_x(g):
        dxhat = g * gv
        m1 = dxhat.mean(axis=1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
        return (dxhat - m1 - xhat * m2) * inv_std

    return x.tape.var(
        y,
        [
            (x, vjp_x),
            (gain, lambda g: (g * xhat).sum(axis=0, keepdims=True)),
            (bias, lambda g: g.sum(axis=0, keepdims=True)),
        ],
    )


def softmax(x: Var) -> Var:
    shifted = x.value - x.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)
    return x.tape.var(
        y, [(x, lambda g: y * (g - (g * y).sum(axis=1, keepdims=True)))]
    )


def log_softmax(x: Var) -> Var:
    shifted = x.value - x.value.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    y = shifted - lse
    p = np.exp(y)
    return x.tape.var(
        y, [(x, lambda g: g - p * g.sum(axis=1, keepdims=True))]
    )


def row_dot(a: Var, b: Var) -> Var:
    """Per-row scalar product, result shape (rows, 1)."""
    _same_shape(a, b, "row_dot")
    av, bv = a.value, b.value
    return a.tape.var(
        (av * bv).sum(axis=1, keepdims=True),
        [(a, lambda g: g * bv), (b, lambda g: g * av)],
    )


def scale_rows(s: Var, m: Var) -> Var:
    """Multiply each row of m by the matching scalar in s (rows, 1)."""
    if s.value.shape != (m.value.shape[0], 1):
        raise ShapeError(f"scale_rows: scales {s.value.shape} do not fit {m.value.shape}")
    sv, mv = s.value, m.value
    return m.tape.var(
        sv * mv,
        [(s, lambda g: (g * mv).sum(axis=1, keepdims=True)), (m, lambda g: g * sv)],
    )


def concat_cols(a: Var, b: Var) -> Var:
    if a.value.shape[0] != b.value.shape[0]:
        raise ShapeError(f"concat_cols row mismatch: {a.value.shape} vs {b.value.shape}")
    na = a.value.shape[1]
    return a.tape.var(
        np.concatenate([a.value, b.value], axis=1),
        [(a, lambda g: g[:, :na]), (b, lambda g: g[:, na:])],
    )


def slice_cols(x: Var, lo: int, hi: int) -> Var:
    if not (0 <= lo < hi <= x.value.shape[1]):
        raise ShapeError(f"slice_cols [{lo}:{hi}] out of range for {x.value.shape}")

    def vjp(g):
        out = np.zeros_like(x.value)
        out[:, lo:hi] = g
        return out

    return x.tape.var(x.value[:, lo:hi], [(x, vjp)])


def vsum(x: Var) -> Var:
    """Sum of all elements, as a 1x1 Var."""
    shape = x.value.shape
    return x.tape.var(
        np.array([[x.value.sum()]]), [(x, lambda g: np.full(shape, g[0, 0]))]
    )


# ---------------------------------------------------------------------------
# finite-difference oracle


def finite_diff_grad(f: Callable[[np.ndarray], float], theta: np.ndarray, eps: float) -> np.ndarray:
    """Central-difference gradient of a scalar function, coordinate by coordinate."""
    if eps <= 0:
        raise ContractError("finite_diff_grad needs eps > 0")
    theta = as_f64(theta).copy()
    g = np.zeros_like(theta.reshape(-1))
    flat = theta.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(theta)
        flat[i] = orig - eps
        fm = f(theta)
        flat[i] = orig
        g[i] = (fp - fm) / (2.0 * eps)
    return g.reshape(theta.shape)


def grad_check(
    build_loss: Callable[[Tape, dict[str, Var]], Var],
    params: dict[str, np.ndarray],
    eps: float = 1e-5,
    tol: float = 1e-4,
) -> dict:
    """Compare tape gradients against central differences, block by block.

    ``build_loss`` must be deterministic in its inputs; it gets a fresh tape
    and wrapped parameters and returns the scalar loss Var. Returns a report
    with the max relative error per parameter block and an overall verdict.
    """
    tape = Tape()
    wrapped = tape.wrap(params)
    loss = build_loss(tape, wrapped)
    backward(tape, loss)
    analytic = grads_of(wrapped)

    errors: dict[str, float] = {}
    for name in params:

        def f(theta, _name=name):
            trial = dict(params)
            trial[_name] = theta
            t = Tape()
            return float(build_loss(t, t.wrap(trial)).value[0, 0])

        fd = finite_diff_grad(f, params[name], eps)
        ga = analytic[name].reshape(fd.shape)
        denom = np.abs(ga).max() + np.abs(fd).max() + 1e-12
        errors[name] = float(np.abs(ga - fd).max() / denom)

    return {
        "per_block": errors,
        "max_rel_error": max(errors.values()) if errors else 0.0,
        "passed": all(e < tol for e in errors.values()),
        "tol": tol,
        "eps": eps,
    }
