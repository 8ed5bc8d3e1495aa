"""Conditional diffusion training loop.

Deterministic by construction: all randomness flows from one torch
Generator seeded by the config, and test mode pins torch to a single
thread so checkpoint bytes reproduce exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, field

import numpy as np
import torch

from .diffusion import NoiseSchedule, make_schedule


@dataclass(frozen=True)
class TrainConfig:
    seed: int
    steps: int = 20000
    batch_size: int = 16
    learning_rate: float = 1e-4
    resolution: int = 32
    condition_mode: str = "downsampled-pairs"  # | "crops" | "warped+mask"
    schedule_T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    deterministic: bool = True

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("steps, batch_size, learning_rate must be positive")
        if self.condition_mode not in ("downsampled-pairs", "crops", "warped+mask"):
            raise ValueError(f"unknown condition_mode {self.condition_mode!r}")

    def schedule(self) -> NoiseSchedule:
        return make_schedule(self.schedule_T, self.beta_start, self.beta_end)

    def to_json(self) -> dict:
        return asdict(self)


def train_step(model, optimizer, schedule: NoiseSchedule,
               target: torch.Tensor, cond: torch.Tensor,
               generator: torch.Generator) -> float:
    """One SGD update of || eps - eps_theta(x_t, t, cond) ||^2."""
    if target.shape[0] != cond.shape[0] or target.shape[-2:] != cond.shape[-2:]:
        raise ValueError(f"batch shape mismatch: target {tuple(target.shape)} "
                         f"vs cond {tuple(cond.shape)}")
    b = target.shape[0]
    t = torch.randint(1, schedule.T + 1, (b,), generator=generator)
    ab = torch.from_numpy(schedule.alpha_bar.astype(np.float32))[t - 1]
    ab = ab[:, None, None, None]
    eps = torch.randn(target.shape, generator=generator)
    x_t = torch.sqrt(ab) * target + torch.sqrt(1.0 - ab) * eps
    pred = model(torch.cat([x_t, cond], dim=1), t.float())
    loss = torch.mean((eps - pred) ** 2)
    if not torch.isfinite(loss):
        raise FloatingPointError(
            f"non-finite training loss at batch of {b}; "
            f"|target|max={target.abs().max().item():.3g}")
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    optimizer.step()
    return float(loss.item())


def train_model(model, batch_fn, config: TrainConfig,
                progress_every: int = 0) -> list:
    """Run the full loop; batch_fn(generator) -> (target, cond) in [-1,1].

    Returns the per-step loss history. The optimizer is Adam with
    standard defaults.
    """
    if config.deterministic:
        torch.set_num_threads(1)
    torch.manual_seed(config.seed)
    generator = torch.Generator().manual_seed(config.seed)
    schedule = config.schedule()
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    model.train()
    losses = []
    for step in range(config.steps):
        target, cond = batch_fn(generator)
        loss = train_step(model, optimizer, schedule, target, cond, generator)
        losses.append(loss)
        if progress_every and (step + 1) % progress_every == 0:
            recent = float(np.mean(losses[-progress_every:]))
            print(f"step {step + 1}/{config.steps} loss {recent:.4f}", flush=True)
    model.eval()
    model._last_optimizer = optimizer  # kept for checkpoint resumability
    return losses
