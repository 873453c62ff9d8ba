"""Synchronous advantage actor-critic on the Catch environment.

Each update rolls out E complete episodes in lockstep with the current
policy, computes full-episode Monte-Carlo returns (gamma = 1, single
terminal reward), and takes one Adam step on

    loss = -sum log pi(a_t) * (G - V(s_t))
           + c_v * sum (G - V(s_t))^2
           - c_e * sum entropy(pi(.|s_t))

with the advantage treated as a constant in the policy term and gradients
clipped by global norm.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tape, backward, grads_of
from ..models import ActorCriticNet, one_hot
from ..numerics import make_rng
from ..tasks import catch
from .adam import Adam, clip_global_norm
from .checkpoint import Checkpoint, checkpoint_save, rng_state_blocks
from .metrics import MetricsWriter


@dataclass
class A2CConfig:
    n: int = 16
    m: int = 3
    episodes_per_update: int = 16
    max_env_steps: int = 200_000
    lr: float = 3e-3
    beta2: float = 0.999
    lr_half_every: int = 0  # optimizer steps between lr halvings; 0 disables
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    clip_norm: float = 1.0
    seed: int = 0
    eval_every: int = 100  # updates
    eval_episodes: int = 200


def _rollout(model, tape, pv, n, m, episodes, rng, greedy=False):
    """Play E episodes in lockstep; returns (logps, values, actions, G)."""
    pairs = [catch.catch_reset(n, m, rng) for _ in range(episodes)]
    states = [s for s, _ in pairs]
    obs = np.stack([o for _, o in pairs])
    core = model.initial_state(tape, episodes)
    logps, values, action_rows = [], [], []
    returns = np.zeros(episodes)
    for _t in range(n - 1):
        logp, value, core = model.step(tape, pv, obs, core)
        probs = np.exp(logp.value)
        if greedy:
            actions = probs.argmax(axis=1)
        else:
            u = rng.random(episodes)
            actions = (probs.cumsum(axis=1) < u[:, None]).sum(axis=1)
            actions = np.minimum(actions, probs.shape[1] - 1)
        next_obs = np.empty_like(obs)
        for e in range(episodes):
            states[e], next_obs[e], r, done = catch.catch_step(states[e], int(actions[e]))
            if done:
                returns[e] = r
        logps.append(logp)
        values.append(value)
        action_rows.append(actions)
        obs = next_obs
    return logps, values, action_rows, returns


def rollout_loss(model, tape, pv, cfg: A2CConfig, rng):
    """Build the actor-critic objective for one batch of rollouts."""
    logps, values, action_rows, returns = _rollout(
        model, tape, pv, cfg.n, cfg.m, cfg.episodes_per_update, rng
    )
    g_col = returns[:, None]
    loss = None
    for logp, value, actions in zip(logps, values, action_rows):
        adv = tape.leaf(g_col - value.value)  # constant for the policy term
        picked = ad.mul(logp, tape.leaf(one_hot(actions, model.ACTIONS)))
        policy_term = ad.smul(-1.0, ad.vsum(ad.scale_rows(adv, picked)))
        diff = ad.sub(tape.leaf(g_col), value)
        value_term = ad.smul(cfg.value_coef, ad.vsum(ad.mul(diff, diff)))
        probs = ad.exp(logp)
        entropy_term = ad.smul(cfg.entropy_coef, ad.vsum(ad.mul(probs, logp)))
        step_loss = ad.add(ad.add(policy_term, value_term), entropy_term)
        loss = step_loss if loss is None else ad.add(loss, step_loss)
    return ad.smul(1.0 / cfg.episodes_per_update, loss), returns


def eval_policy(model, params, n, m, episodes, rng, greedy=True) -> float:
    """Mean episode reward of the (default greedy) policy."""
    total = 0.0
    chunk = 200
    remaining = episodes
    while remaining > 0:
        e = min(chunk, remaining)
        tape = Tape()
        pv = tape.wrap(params)
        *_, returns = _rollout(model, tape, pv, n, m, e, rng, greedy=greedy)
        total += returns.sum()
        remaining -= e
    return total / episodes


def a2c_train(model: ActorCriticNet, cfg: A2CConfig, model_id: str = "{}", out_dir: str | None = None) -> dict:
    rng = make_rng(cfg.seed)
    params = model.init_params(rng)
    opt = Adam(lr=cfg.lr, beta2=cfg.beta2)
    opt.init(params)

    writer = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        writer = MetricsWriter(os.path.join(out_dir, "metrics.csv"))

    history: list[tuple[int, str, str, float]] = []

    def emit(env_steps, split, metric, value):
        history.append((env_steps, split, metric, float(value)))
        if writer is not None:
            writer.write(env_steps, split, metric, float(value))

    def save(env_steps, name):
        if out_dir is None:
            return
        blocks = dict(params)
        blocks.update(opt.state_blocks())
        blocks.update(rng_state_blocks(rng))
        blocks["meta.step"] = np.array([[float(env_steps)]])
        checkpoint_save(os.path.join(out_dir, name), Checkpoint(model_id, blocks))

    env_steps = 0
    update = 0
    best_eval = -float("inf")
    steps_per_update = cfg.episodes_per_update * (cfg.n - 1)
    while env_steps < cfg.max_env_steps:
        tape = Tape()
        pv = tape.wrap(params)
        loss, returns = rollout_loss(model, tape, pv, cfg, rng)
        backward(tape, loss)
        grads = grads_of(pv)
        clip_global_norm(grads, cfg.clip_norm)
        opt.step(params, grads)
        if cfg.lr_half_every and opt.t % cfg.lr_half_every == 0:
            opt.lr *= 0.5
        env_steps += steps_per_update
        update += 1
        emit(env_steps, "train", "mean_episode_reward", returns.mean())
        if update % cfg.eval_every == 0:
            eval_rng = make_rng(cfg.seed + 1_000_003)
            score = eval_policy(model, params, cfg.n, cfg.m, cfg.eval_episodes, eval_rng)
            emit(env_steps, "eval", "mean_episode_reward", score)
            if score > best_eval:
                best_eval = score
                save(env_steps, "best.ckpt")

    save(env_steps, "final.ckpt")
    if writer is not None:
        writer.close()
    return {
        "history": history,
        "params": params,
        "env_steps": env_steps,
        "best_eval_reward": best_eval,
    }
