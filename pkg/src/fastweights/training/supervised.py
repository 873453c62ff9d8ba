"""Supervised training loop shared by the retrieval and glimpse tasks.

The loop is single-threaded and fully determined by (seed, config, data):
seeded shuffling, forward/loss/backward/Adam steps, periodic validation,
and best-on-validation checkpointing.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..autodiff import Tape, backward, grads_of
from ..models import cross_entropy_loss
from ..numerics import make_rng
from .adam import Adam
from .checkpoint import Checkpoint, checkpoint_save, rng_state_blocks
from .metrics import MetricsWriter

# forward adapter: (tape, wrapped params, raw input batch) -> logits Var
ForwardFn = Callable[[Tape, dict, np.ndarray], "object"]


@dataclass
class SupervisedConfig:
    lr: float = 1e-3
    batch_size: int = 128
    epochs: int = 10
    max_steps: int | None = None
    eval_every: int = 500
    log_every: int = 50
    seed: int = 0


def evaluate(
    forward: ForwardFn,
    params: dict[str, np.ndarray],
    inputs: np.ndarray,
    targets: np.ndarray,
    batch_size: int = 256,
) -> float:
    """Argmax classification error rate in [0, 1]."""
    wrong = 0
    n = len(targets)
    for lo in range(0, n, batch_size):
        hi = min(lo + batch_size, n)
        tape = Tape()
        logits = forward(tape, tape.wrap(params), inputs[lo:hi])
        wrong += int((logits.value.argmax(axis=1) != targets[lo:hi]).sum())
    return wrong / n


def train_supervised(
    init_params: dict[str, np.ndarray],
    forward: ForwardFn,
    datasets: dict[str, tuple[np.ndarray, np.ndarray]],
    cfg: SupervisedConfig,
    model_id: str = "{}",
    out_dir: str | None = None,
) -> dict:
    """Run the training loop; returns history plus the trained parameters.

    ``datasets`` maps split name to (inputs, targets); "train" and "valid"
    are required. Parameters are updated in place on a copy of
    ``init_params``.
    """
    params = {k: np.array(v) for k, v in init_params.items()}
    opt = Adam(lr=cfg.lr)
    opt.init(params)
    rng = make_rng(cfg.seed)

    train_x, train_y = datasets["train"]
    valid_x, valid_y = datasets["valid"]
    n_train = len(train_y)

    writer = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        writer = MetricsWriter(os.path.join(out_dir, "metrics.csv"))

    def emit(step, split, metric, value):
        history.append((step, split, metric, float(value)))
        if writer is not None:
            writer.write(step, split, metric, float(value))

    def save(step, name):
        if out_dir is None:
            return
        blocks = dict(params)
        blocks.update(opt.state_blocks())
        blocks.update(rng_state_blocks(rng))
        blocks["meta.step"] = np.array([[float(step)]])
        checkpoint_save(os.path.join(out_dir, name), Checkpoint(model_id, blocks))

    history: list[tuple[int, str, str, float]] = []
    best_val = float("inf")
    step = 0
    loss_accum, loss_count = 0.0, 0

    def run_validation():
        nonlocal best_val
        err = evaluate(forward, params, valid_x, valid_y)
        emit(step, "valid", "error", err)
        if err < best_val:
            best_val = err
            save(step, "best.ckpt")

    emit(step, "valid", "error", evaluate(forward, params, valid_x, valid_y))
    done = False
    for _epoch in range(cfg.epochs):
        if done:
            break
        perm = rng.permutation(n_train)
        for lo in range(0, n_train - cfg.batch_size + 1, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            tape = Tape()
            pv = tape.wrap(params)
            logits = forward(tape, pv, train_x[idx])
            loss = cross_entropy_loss(logits, train_y[idx])
            backward(tape, loss)
            opt.step(params, grads_of(pv))
            step += 1
            loss_accum += float(loss.value[0, 0])
            loss_count += 1
            if step % cfg.log_every == 0:
                emit(step, "train", "loss", loss_accum / loss_count)
                loss_accum, loss_count = 0.0, 0
            if step % cfg.eval_every == 0:
                run_validation()
            if cfg.max_steps is not None and step >= cfg.max_steps:
                done = True
                break

    run_validation()
    save(step, "final.ckpt")
    if "test" in datasets:
        test_x, test_y = datasets["test"]
        emit(step, "test", "error", evaluate(forward, params, test_x, test_y))
    if writer is not None:
        writer.close()
    return {
        "history": history,
        "best_valid_error": best_val,
        "params": params,
        "steps": step,
    }
