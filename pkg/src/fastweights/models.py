"""Task networks: retrieval classifier, glimpse classifier, actor-critic.

Parameters live in flat name->array dicts (cell parameters under a
"cell." prefix) so the optimizer and checkpointing can treat every model
uniformly. Forward functions take a fresh tape plus the wrapped parameters
and return Vars; per-sequence recurrent state is created inside the
forward call, so sequences are always isolated from each other.
"""

from __future__ import annotations

import json

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, Tape, Var
from .cells import make_cell
from .numerics import uniform_fanout_init


def linear(x: Var, w: Var, b: Var) -> Var:
    return ad.add_bias(ad.matmul(x, w), b)


def one_hot(ids: np.ndarray, depth: int) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.min() < 0 or ids.max() >= depth:
        raise ContractError(f"ids out of range [0, {depth})")
    out = np.zeros((ids.size, depth))
    out[np.arange(ids.size), ids] = 1.0
    return out


def cell_params(pv: dict[str, Var]) -> dict[str, Var]:
    return {k.split(".", 1)[1]: v for k, v in pv.items() if k.startswith("cell.")}


def param_count(params: dict[str, np.ndarray]) -> int:
    return sum(int(np.asarray(v).size) for v in params.values())


def cross_entropy_loss(logits: Var, targets: np.ndarray) -> Var:
    """Mean negative log-likelihood of the target classes (max-shifted)."""
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    n, k = logits.value.shape
    if targets.size != n:
        raise ContractError(f"{targets.size} targets for {n} rows of logits")
    if targets.min() < 0 or targets.max() >= k:
        raise ContractError(f"target class out of range [0, {k})")
    logp = ad.log_softmax(logits)
    mask = logits.tape.leaf(one_hot(targets, k))
    return ad.smul(-1.0 / n, ad.vsum(ad.mul(logp, mask)))


class RetrievalNet:
    """Embed 37 tokens to 50 dims, expand to 100, run the recurrent cell,
    then a 100-unit relu layer and a 10-way softmax over digits."""

    VOCAB = 37
    EMBED = 50
    EXPANDED = 100
    HEAD = 100
    CLASSES = 10

    def __init__(self, cell_kind: str = "fast", hidden: int = 50, **cell_overrides):
        self.hidden = hidden
        self.cell = make_cell(cell_kind, hidden, self.EXPANDED, **cell_overrides)

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        # The embedding table starts at unit scale rather than fanout scale:
        # the layer-normalized memory term inside the recurrent cell has
        # magnitude independent of the input drive, and with fanout-scale
        # embeddings the input signal is too weak for any cell to escape the
        # memoryless error plateau on this task.
        p = {
            "embed": rng.normal(0.0, 1.0, size=(self.VOCAB, self.EMBED)),
            "expand.W": uniform_fanout_init(rng, self.EMBED, self.EXPANDED),
            "expand.b": np.zeros((1, self.EXPANDED)),
            "head.W": uniform_fanout_init(rng, self.hidden, self.HEAD),
            "head.b": np.zeros((1, self.HEAD)),
            "out.W": uniform_fanout_init(rng, self.HEAD, self.CLASSES),
            "out.b": np.zeros((1, self.CLASSES)),
        }
        p.update({f"cell.{k}": v for k, v in self.cell.init_params(rng).items()})
        return p

    def forward(self, tape: Tape, pv: dict[str, Var], tokens: np.ndarray) -> Var:
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.ndim == 1:
            tokens = tokens[None, :]
        batch, length = tokens.shape
        cp = cell_params(pv)
        state = self.cell.initial_state(tape, batch)
        h = None
        for t in range(length):
            emb = ad.matmul(tape.leaf(one_hot(tokens[:, t], self.VOCAB)), pv["embed"])
            x = linear(emb, pv["expand.W"], pv["expand.b"])
            h, state = self.cell.step(cp, state, x)
        hidden = ad.relu(linear(h, pv["head.W"], pv["head.b"]))
        return linear(hidden, pv["out.W"], pv["out.b"])


class GlimpseNet:
    """Recurrent classifier over a fixed glimpse program; store bits gate
    the fast-memory writes (other cell kinds just ignore them)."""

    CLASSES = 10

    def __init__(self, cell_kind: str = "fast", hidden: int = 100, input_dim: int = 53, **cell_overrides):
        self.hidden = hidden
        self.input_dim = input_dim
        self.cell = make_cell(cell_kind, hidden, input_dim, **cell_overrides)

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        p = {
            "out.W": uniform_fanout_init(rng, self.hidden, self.CLASSES),
            "out.b": np.zeros((1, self.CLASSES)),
        }
        p.update({f"cell.{k}": v for k, v in self.cell.init_params(rng).items()})
        return p

    def forward(
        self,
        tape: Tape,
        pv: dict[str, Var],
        glimpses: np.ndarray,
        store_bits: np.ndarray,
    ) -> Var:
        glimpses = np.asarray(glimpses, dtype=np.float64)
        if glimpses.ndim == 2:
            glimpses = glimpses[None, :, :]
        batch, length, dim = glimpses.shape
        if dim != self.input_dim:
            raise ContractError(f"glimpse dim {dim}, model expects {self.input_dim}")
        if len(store_bits) != length:
            raise ContractError(f"{len(store_bits)} store bits for {length} glimpses")
        cp = cell_params(pv)
        state = self.cell.initial_state(tape, batch)
        h = None
        for t in range(length):
            x = tape.leaf(glimpses[:, t, :])
            h, state = self.cell.step(cp, state, x, store=bool(store_bits[t]))
        return linear(h, pv["out.W"], pv["out.b"])


class ActorCriticNet:
    """Shared recurrent core with a 3-action policy head and a value head."""

    ACTIONS = 3

    def __init__(self, obs_dim: int, cell_kind: str = "fast", hidden: int = 128, dense: int = 128, **cell_overrides):
        self.obs_dim = obs_dim
        self.hidden = hidden
        self.dense = dense
        self.cell = make_cell(cell_kind, hidden, dense, **cell_overrides)

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        p = {
            "enc.W": uniform_fanout_init(rng, self.obs_dim, self.dense),
            "enc.b": np.zeros((1, self.dense)),
            "pol.W": uniform_fanout_init(rng, self.hidden, self.ACTIONS),
            "pol.b": np.zeros((1, self.ACTIONS)),
            "val.W": uniform_fanout_init(rng, self.hidden, 1),
            "val.b": np.zeros((1, 1)),
        }
        p.update({f"cell.{k}": v for k, v in self.cell.init_params(rng).items()})
        return p

    def initial_state(self, tape: Tape, batch: int):
        return self.cell.initial_state(tape, batch)

    def step(self, tape: Tape, pv: dict[str, Var], obs: np.ndarray, state):
        """One policy step: (log-probs [B,3], value [B,1], next state)."""
        obs = np.asarray(obs, dtype=np.float64)
        if obs.ndim == 1:
            obs = obs[None, :]
        if obs.shape[1] != self.obs_dim:
            raise ContractError(f"observation dim {obs.shape[1]}, expected {self.obs_dim}")
        x = ad.relu(linear(tape.leaf(obs), pv["enc.W"], pv["enc.b"]))
        h, state = self.cell.step(cell_params(pv), state, x)
        logp = ad.log_softmax(linear(h, pv["pol.W"], pv["pol.b"]))
        value = linear(h, pv["val.W"], pv["val.b"])
        return logp, value, state


# ---------------------------------------------------------------------------
# model specs: a canonical JSON description that rebuilds a network, used as
# the checkpoint model identifier.

FAST_CELL_KEYS = ("eta", "lam", "inner_steps", "boundary", "backend")


def _cell_overrides(spec: dict) -> dict:
    if spec.get("cell", "fast") != "fast":
        return {}
    return {k: spec[k] for k in FAST_CELL_KEYS if k in spec}


def build_model(spec: dict):
    """Construct the network described by a model spec dict."""
    task = spec["task"]
    cell = spec.get("cell", "fast")
    hidden = int(spec["hidden"])
    overrides = _cell_overrides(spec)
    if task == "retrieval":
        return RetrievalNet(cell, hidden, **overrides)
    if task == "glimpse":
        return GlimpseNet(cell, hidden, int(spec.get("input_dim", 53)), **overrides)
    if task == "catch":
        return ActorCriticNet(
            int(spec["obs_dim"]), cell, hidden, int(spec.get("dense", 128)), **overrides
        )
    raise ContractError(f"unknown task {task!r}")


def model_spec_id(spec: dict) -> str:
    return json.dumps(spec, sort_keys=True, separators=(",", ":"))


def parse_model_id(model_id: str) -> dict:
    return json.loads(model_id)
