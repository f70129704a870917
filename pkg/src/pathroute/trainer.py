"""Two-stage training.

Stage 1 supervises the multi-path CNN under uniformly random routes,
with an intermediate loss that decodes every block's input through the
end conv so features stay consistent across blocks.  Stage 2 trains the
pathfinder by policy gradient (sampled routes, per-image all-bypass
baseline) while the CNN keeps training on the final loss alone; both
updates reuse the same sampled trajectories.

All randomness at iteration t derives from (seed, stage, t), and data
samples are addressed by global index, so an interrupted run resumed
from a checkpoint replays bit-identically.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint, ops
from .autograd import Tensor, no_grad
from .errors import NumericError, UsageError
from .metrics import psnr
from .model import ModelConfig, MultiPathRestorer, count_flops
from .optim import adam_step, gradient_ascent_step
from .reward import RewardConfig, bypass_baseline, trajectory_rewards

METRICS_HEADER = ["iter", "stage", "loss", "mean_reward", "mean_flops", "psnr"]


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.1          # intermediate-loss weight (stage 1)
    lr0: float = 2e-4           # initial learning rate, halved each quarter
    iters_stage1: int = 20000
    iters_stage2: int = 20000
    batch: int = 32
    seed: int = 0
    reward: RewardConfig = field(default_factory=RewardConfig)
    log_interval: int = 100
    ckpt_interval: int = 5000
    pf_lr_scale: float = 1.0    # pathfinder lr multiplier in stage 2

    def __post_init__(self):
        if self.batch < 1:
            raise UsageError("batch must be >= 1")
        if self.lr0 <= 0:
            raise UsageError("lr0 must be > 0")
        if self.alpha < 0:
            raise UsageError("alpha must be >= 0")


@dataclass
class TrainState:
    model: MultiPathRestorer
    stage: int
    iteration: int
    seed: int


def lr_schedule(it: int, lr0: float, stage_len: int) -> float:
    """Halve the rate after each quarter of the stage (three halvings)."""
    return lr0 * 0.5 ** min(3, 4 * it // stage_len)


def _iter_rng(seed: int, stage: int, it: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stage, it]))


def stage1_loss(final, intermediates, alpha: float):
    """Final loss plus alpha times the summed intermediate losses, as a
    graph node.  ``final`` and ``intermediates`` are mse nodes."""
    loss = final
    if alpha > 0:
        for node in intermediates:
            loss = loss + node * alpha
    return loss


def stage1_step(model: MultiPathRestorer, batch, lr: float, alpha: float,
                rng: np.random.Generator, reward_cfg: RewardConfig):
    """One supervised step under per-sample uniform random routes.
    Updates the CNN only; pathfinder parameters are untouched."""
    model.zero_grad()
    k = len(batch)
    cfg = model.cfg
    loss_sum = 0.0
    reward_sum = 0.0
    flops_sum = 0
    for x, y in batch:
        route = [int(a) for a in rng.integers(1, cfg.paths + 1, size=cfg.blocks)]
        xt, yt = Tensor(x[None]), Tensor(y[None])
        restored, inters = model.forward_routed(xt, route)
        final = ops.mse(restored, yt)
        mids = [ops.mse(model.decode(h, xt), yt) for h in inters] if alpha > 0 else []
        loss = stage1_loss(final, mids, alpha) * (1.0 / k)
        loss.backward()
        loss_sum += loss.item() * k
        reward_sum += trajectory_rewards(route, x, restored.data[0], y, reward_cfg).total
        flops_sum += count_flops(route, cfg)
    if not np.isfinite(loss_sum):
        raise NumericError("stage 1: non-finite loss")
    adam_step(model.cnn_parameters(), lr)
    return loss_sum / k, reward_sum / k, flops_sum / k


def policy_surrogate(trajectories, batch_k: int | None = None):
    """REINFORCE surrogate whose gradient is the update direction:
    (1/K) * sum over samples and blocks of log pi(a_i|s_i) * (R_i - b).

    ``trajectories`` is a list of (RouteTrace, TrajectoryReward); traces
    must carry live log-prob nodes (train-mode forward).
    """
    k = batch_k if batch_k is not None else len(trajectories)
    surrogate = None
    for trace, tr in trajectories:
        if trace.logprob_nodes is None:
            raise UsageError("policy_surrogate: trace has no recorded log-prob nodes")
        if len(trace.logprob_nodes) != len(tr.returns):
            raise UsageError(f"policy_surrogate: {len(trace.logprob_nodes)} log-probs "
                             f"vs {len(tr.returns)} returns")
        for lp, ret in zip(trace.logprob_nodes, tr.returns):
            term = lp.sum() * ((ret - tr.baseline) / k)
            surrogate = term if surrogate is None else surrogate + term
    return surrogate


def policy_gradient(params, trajectories, batch_k: int | None = None):
    """The raw estimator: populates ``.grad`` on the policy parameters
    with the ascent direction and returns {name: gradient copy}."""
    for p in params:
        p.zero_grad()
    policy_surrogate(trajectories, batch_k).backward()
    return {p.name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
            for p in params}


def reinforce_update(params, trajectories, lr: float, method: str = "adam"):
    """Apply one policy-gradient ascent step to the given parameters.
    Touches nothing else: the surrogate graph reaches the pathfinder
    only (block inputs are gradient-stopped at its boundary)."""
    for p in params:
        p.zero_grad()
    policy_surrogate(trajectories).backward()
    if method == "adam":
        adam_step(params, lr, ascent=True)
    elif method == "sgd":
        gradient_ascent_step(params, lr)
    else:
        raise UsageError(f"reinforce_update: unknown method {method!r}")


def stage2_step(model: MultiPathRestorer, batch, lr_cnn: float, lr_pf: float,
                reward_cfg: RewardConfig, rng: np.random.Generator,
                pf_method: str = "adam"):
    """One joint step: sample a route per image from the live policy,
    score it against the per-image bypass baseline, ascend the policy,
    and descend the CNN on the final loss — all from the same
    trajectories.  Baselines are recomputed every call."""
    model.zero_grad()
    k = len(batch)
    cfg = model.cfg
    loss_sum = 0.0
    reward_sum = 0.0
    flops_sum = 0
    trajectories = []
    for x, y in batch:
        xt, yt = Tensor(x[None]), Tensor(y[None])
        restored, trace = model.forward(xt, mode="train", rng=rng)
        tr = trajectory_rewards(trace, x, restored.data[0], y, reward_cfg)
        tr.baseline = bypass_baseline(x, y, model, reward_cfg)
        trajectories.append((trace, tr))
        loss = ops.mse(restored, yt) * (1.0 / k)
        loss.backward()
        loss_sum += loss.item() * k
        reward_sum += tr.total
        flops_sum += count_flops(trace, cfg)
    if not np.isfinite(loss_sum):
        raise NumericError("stage 2: non-finite loss")
    if lr_pf > 0:
        reinforce_update(model.pathfinder_parameters(), trajectories, lr_pf, method=pf_method)
    if lr_cnn > 0:
        adam_step(model.cnn_parameters(), lr_cnn)
    return loss_sum / k, reward_sum / k, flops_sum / k


def _holdout_psnr(model: MultiPathRestorer, holdout) -> float:
    if not holdout:
        return float("nan")
    vals = []
    with no_grad():
        for x, y in holdout:
            restored, _ = model.forward(Tensor(x[None]), mode="test")
            vals.append(psnr(np.clip(restored.data[0], 0.0, 1.0), y))
    return float(np.mean(vals))


def train(model: MultiPathRestorer, data, cfg: TrainConfig, stage: int, out_dir,
          holdout=None, start_iter: int = 0) -> TrainState:
    """Run one training stage, appending metrics rows and writing
    checkpoints.  ``data`` provides ``sample(i) -> Sample`` addressed by
    global index; resuming with ``start_iter`` replays identically."""
    if stage not in (1, 2):
        raise UsageError(f"stage must be 1 or 2, got {stage}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    iters = cfg.iters_stage1 if stage == 1 else cfg.iters_stage2
    metrics_path = out_dir / f"metrics_stage{stage}.csv"
    new_file = not metrics_path.exists() or metrics_path.stat().st_size == 0

    with open(metrics_path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(METRICS_HEADER)
        for it in range(start_iter, iters):
            rng = _iter_rng(cfg.seed, stage, it)
            batch = []
            for j in range(cfg.batch):
                s = data.sample(it * cfg.batch + j)
                batch.append((s.degraded, s.clean))
            lr = lr_schedule(it, cfg.lr0, iters)
            if stage == 1:
                loss, mean_reward, mean_flops = stage1_step(
                    model, batch, lr, cfg.alpha, rng, cfg.reward)
            else:
                loss, mean_reward, mean_flops = stage2_step(
                    model, batch, lr, lr * cfg.pf_lr_scale, cfg.reward, rng)
            done = it + 1
            if done % cfg.log_interval == 0 or done == iters:
                writer.writerow([done, stage, f"{loss:.9g}", f"{mean_reward:.9g}",
                                 f"{mean_flops:.1f}", f"{_holdout_psnr(model, holdout):.6f}"])
                fh.flush()
            if (cfg.ckpt_interval and done % cfg.ckpt_interval == 0) or done == iters:
                save_checkpoint(out_dir / f"ckpt_stage{stage}_{done:06d}.bin",
                                model, cfg.seed, stage, done)
    final = out_dir / f"ckpt_stage{stage}_{iters:06d}.bin"
    final_copy = out_dir / f"final_stage{stage}.bin"
    final_copy.write_bytes(final.read_bytes())
    return TrainState(model=model, stage=stage, iteration=iters, seed=cfg.seed)


def save_checkpoint(path, model: MultiPathRestorer, seed: int, stage: int, iteration: int):
    config = model.cfg.to_dict()
    config.update({"seed": str(seed), "stage": str(stage), "iteration": str(iteration)})
    checkpoint.save(path, model.parameters(), config)


def load_checkpoint(path) -> tuple[MultiPathRestorer, dict]:
    """Rebuild a model (weights + optimizer state) from a checkpoint."""
    entries, config = checkpoint.load(path)
    cfg = ModelConfig.from_dict(config)
    model = MultiPathRestorer(cfg, seed=int(config.get("seed", "0")))
    checkpoint.apply_to(model.parameters(), entries)
    return model, config


def reset_optimizer(model: MultiPathRestorer):
    """Fresh Adam state, e.g. when a new stage starts from loaded weights."""
    for p in model.parameters():
        p.reset_optimizer()
