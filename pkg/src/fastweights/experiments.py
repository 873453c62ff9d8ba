"""Wiring between validated configs, datasets, models, and the trainers.

These functions are the CLI's workhorses but take plain dicts and paths so
tests can drive them directly.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .config import ConfigError
from .models import build_model, model_spec_id, parse_model_id
from .numerics import make_rng
from .tasks import glimpse as glimpse_task
from .tasks import mnist as mnist_task
from .tasks import retrieval as retrieval_task
from .training.a2c import A2CConfig, a2c_train, eval_policy
from .training.checkpoint import checkpoint_load, split_blocks
from .training.metrics import MetricsWriter
from .training.supervised import SupervisedConfig, evaluate, train_supervised


def model_spec_from_config(cfg: dict) -> dict:
    spec = {"task": cfg["task"], "cell": cfg["cell"], "hidden": cfg["hidden"]}
    if cfg["cell"] == "fast":
        for k in ("eta", "lam", "inner_steps", "boundary", "backend"):
            spec[k] = cfg[k]
    if cfg["task"] == "glimpse":
        spec["input_dim"] = cfg["patch"] * cfg["patch"] + 4
    if cfg["task"] == "catch":
        spec["obs_dim"] = cfg["n"] * cfg["n"]
        spec["dense"] = cfg["dense"]
        spec["n"] = cfg["n"]
        spec["m"] = cfg["m"]
    return spec


def _supervised_cfg(cfg: dict) -> SupervisedConfig:
    return SupervisedConfig(
        lr=cfg["lr"],
        batch_size=cfg["batch_size"],
        epochs=cfg["epochs"],
        max_steps=cfg.get("max_steps"),
        eval_every=cfg["eval_every"],
        log_every=cfg["log_every"],
        seed=cfg["seed"],
    )


# --------------------------------------------------------------------------
# retrieval


def load_retrieval_datasets(data_dir: str) -> dict:
    out = {}
    for split in ("train", "valid", "test"):
        path = os.path.join(data_dir, f"{split}.txt")
        if not os.path.exists(path):
            if split == "test":
                continue
            raise FileNotFoundError(f"missing dataset file {path}")
        out[split] = retrieval_task.load_dataset(path)
    return out


def retrieval_forward(model):
    def forward(tape, pv, tokens):
        return model.forward(tape, pv, tokens)

    return forward


def run_retrieval_training(cfg: dict, out_dir: str) -> dict:
    if "data_dir" not in cfg:
        raise ConfigError("$.data_dir: required to train the retrieval task")
    datasets = load_retrieval_datasets(cfg["data_dir"])
    spec = model_spec_from_config(cfg)
    model = build_model(spec)
    params = model.init_params(make_rng(cfg["seed"]))
    return train_supervised(
        params,
        retrieval_forward(model),
        datasets,
        _supervised_cfg(cfg),
        model_id=model_spec_id(spec),
        out_dir=out_dir,
    )


# --------------------------------------------------------------------------
# glimpse / MNIST


def load_mnist_splits(mnist_dir: str, valid_count: int) -> dict:
    def load(kind):
        return mnist_task.load_mnist_idx(
            os.path.join(mnist_dir, f"{kind}-images-idx3-ubyte"),
            os.path.join(mnist_dir, f"{kind}-labels-idx1-ubyte"),
        )

    train_images, train_labels = load("train")
    test_images, test_labels = load("t10k")
    n_valid = min(valid_count, len(train_labels) // 6)
    return {
        "train": (train_images[:-n_valid], train_labels[:-n_valid].astype(np.int64)),
        "valid": (train_images[-n_valid:], train_labels[-n_valid:].astype(np.int64)),
        "test": (test_images, test_labels.astype(np.int64)),
    }


def glimpse_forward(model, program):
    bits = program.store_bits

    def forward(tape, pv, images):
        batch = glimpse_task.glimpse_batch(np.asarray(images, dtype=np.float64) / 255.0, program)
        return model.forward(tape, pv, batch, bits)

    return forward


def build_program(cfg: dict) -> glimpse_task.GlimpseProgram:
    if cfg["program"] not in ("repeat24", "plain20"):
        raise ConfigError(f"$.program: unknown glimpse program {cfg['program']!r}")
    return glimpse_task.two_level_program(
        cfg["image_size"], cfg["patch"], repeat_coarse=cfg["program"] == "repeat24"
    )


def run_glimpse_training(cfg: dict, out_dir: str) -> dict:
    if "mnist_dir" not in cfg:
        raise ConfigError("$.mnist_dir: required to train the glimpse task")
    datasets = load_mnist_splits(cfg["mnist_dir"], cfg["valid_count"])
    program = build_program(cfg)
    spec = model_spec_from_config(cfg)
    model = build_model(spec)
    params = model.init_params(make_rng(cfg["seed"]))
    return train_supervised(
        params,
        glimpse_forward(model, program),
        datasets,
        _supervised_cfg(cfg),
        model_id=model_spec_id(spec),
        out_dir=out_dir,
    )


# --------------------------------------------------------------------------
# catch


def run_catch_training(cfg: dict, out_dir: str) -> dict:
    spec = model_spec_from_config(cfg)
    model = build_model(spec)
    a2c_cfg = A2CConfig(
        n=cfg["n"],
        m=cfg["m"],
        episodes_per_update=cfg["episodes_per_update"],
        max_env_steps=cfg["max_env_steps"],
        lr=cfg["lr"],
        beta2=cfg["beta2"],
        lr_half_every=cfg["lr_half_every"],
        value_coef=cfg["value_coef"],
        entropy_coef=cfg["entropy_coef"],
        clip_norm=cfg["clip_norm"],
        seed=cfg["seed"],
        eval_every=cfg["eval_every_updates"],
        eval_episodes=cfg["eval_episodes"],
    )
    return a2c_train(model, a2c_cfg, model_id=model_spec_id(spec), out_dir=out_dir)


# --------------------------------------------------------------------------
# evaluation from a checkpoint


def evaluate_checkpoint(
    checkpoint_path: str,
    data_path: str | None = None,
    mnist_dir: str | None = None,
    split: str = "test",
    episodes: int = 1000,
    seed: int = 0,
    patch_cfg: dict | None = None,
) -> dict:
    """Evaluate a trained checkpoint; returns a dict with the headline metric."""
    ckpt = checkpoint_load(checkpoint_path)
    spec = parse_model_id(ckpt.model_id)
    model = build_model(spec)
    params, _, _ = split_blocks(ckpt)

    task = spec["task"]
    if task == "retrieval":
        if data_path is None:
            raise ConfigError("$.data: retrieval evaluation needs a dataset file")
        tokens, targets = retrieval_task.load_dataset(data_path)
        err = evaluate(retrieval_forward(model), params, tokens, targets)
        return {"task": task, "metric": "error_percent", "value": 100.0 * err}
    if task == "glimpse":
        if mnist_dir is None:
            raise ConfigError("$.mnist_dir: glimpse evaluation needs the MNIST directory")
        cfg = dict(patch_cfg or {})
        cfg.setdefault("program", "repeat24")
        cfg.setdefault("image_size", 28)
        cfg.setdefault("patch", 7)
        program = build_program(cfg)
        splits = load_mnist_splits(mnist_dir, valid_count=10000)
        images, labels = splits[split]
        err = evaluate(glimpse_forward(model, program), params, images, labels)
        return {"task": task, "metric": "error_percent", "value": 100.0 * err}
    if task == "catch":
        rng = make_rng(seed)
        reward = eval_policy(model, params, int(spec["n"]), int(spec["m"]), episodes, rng)
        return {"task": task, "metric": "mean_episode_reward", "value": reward}
    raise ConfigError(f"$.task: cannot evaluate task {task!r}")


def append_eval_metrics(metrics_path: str, result: dict, step: int = 0) -> None:
    writer = MetricsWriter(metrics_path)
    writer.write(step, "eval", result["metric"], result["value"])
    writer.close()


def write_run_provenance(out_dir: str, resolved_cfg: dict, build_hash: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as f:
        json.dump(resolved_cfg, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(os.path.join(out_dir, "build.json"), "w", encoding="utf-8") as f:
        json.dump({"build_hash": build_hash}, f, indent=2)
        f.write("\n")
