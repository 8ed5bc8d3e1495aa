"""DDPM noise schedule, forward process, and ancestral sampling.

The schedule stores per-step variances beta_t and the cumulative
products alpha_bar_t = prod(1 - beta_s). Sampling is plain ancestral
DDPM (epsilon-prediction, no guidance); a step budget smaller than T
runs on an evenly respaced subsequence of timesteps. Partial noising
(noise a given initialization to an intermediate timestep, then denoise)
implements SDEdit-style refinement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import torch


@dataclass(frozen=True)
class NoiseSchedule:
    beta: np.ndarray       # (T,), beta[t-1] is the step-t variance
    alpha_bar: np.ndarray  # (T,), cumulative products

    @property
    def T(self) -> int:
        return len(self.beta)

    def ab(self, t: int) -> float:
        """alpha_bar at integer timestep t, with ab(0) = 1."""
        if not 0 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [0, {self.T}]")
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])


def make_schedule(T: int = 1000, beta_start: float = 1e-4,
                  beta_end: float = 0.02) -> NoiseSchedule:
    if T < 2:
        raise ValueError("T must be >= 2")
    if not 0 < beta_start <= beta_end < 1:
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got "
                         f"({beta_start}, {beta_end})")
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha_bar = np.cumprod(1.0 - beta)
    return NoiseSchedule(beta=beta, alpha_bar=alpha_bar)


def q_sample(x0, t: int, eps, schedule: NoiseSchedule):
    """x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps; works on numpy or torch."""
    if x0.shape != eps.shape:
        raise ValueError(f"x0/eps shape mismatch: {x0.shape} vs {eps.shape}")
    if not 1 <= t <= schedule.T:
        raise ValueError(f"timestep {t} outside [1, {schedule.T}]")
    ab = schedule.ab(t)
    return float(np.sqrt(ab)) * x0 + float(np.sqrt(1.0 - ab)) * eps


def respaced_timesteps(t_hi: int, steps: int) -> list:
    """Descending subsequence of [1, t_hi] with at most `steps` entries."""
    if steps < 1 or t_hi < 1:
        return []
    ts = np.unique(np.round(np.linspace(1, t_hi, min(steps, t_hi))).astype(int))
    return list(ts[::-1])


def normalize(x):
    """Image [0,1] -> diffusion domain [-1,1]."""
    return 2.0 * x - 1.0


def denormalize(x):
    return np.clip((np.asarray(x) + 1.0) / 2.0, 0.0, 1.0)


def _denoise_from(model, schedule, x, cond, timesteps, generator,
                  x0_transform=None):
    device = x.device
    for i, t in enumerate(timesteps):
        t_prev = timesteps[i + 1] if i + 1 < len(timesteps) else 0
        ab_t = schedule.ab(t)
        ab_prev = schedule.ab(t_prev)
        t_vec = torch.full((x.shape[0],), float(t), device=device)
        eps_hat = model(torch.cat([x, cond], dim=1), t_vec)
        x0_hat = (x - np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(ab_t)
        x0_hat = x0_hat.clamp(-1.0, 1.0)
        if x0_transform is not None:
            x0_hat = x0_transform(x0_hat)
        alpha_ratio = ab_t / ab_prev
        beta_t = 1.0 - alpha_ratio
        mean = (np.sqrt(ab_prev) * beta_t / (1.0 - ab_t) * x0_hat
                + np.sqrt(alpha_ratio) * (1.0 - ab_prev) / (1.0 - ab_t) * x)
        if t_prev > 0:
            var = (1.0 - ab_prev) / (1.0 - ab_t) * beta_t
            noise = torch.randn(x.shape, generator=generator, device=device)
            x = mean + np.sqrt(var) * noise
        else:
            x = mean
    return x


@torch.no_grad()
def sample(model, schedule: NoiseSchedule, condition: torch.Tensor,
           steps: int, seed: int,
           x0_transform: Optional[Callable] = None) -> torch.Tensor:
    """Ancestral sampling from pure noise, conditioned by concatenation.

    `condition` is (B, Cc, H, W) in the [-1,1] domain (masks stay 0/1);
    the output has the model's target channel count. Deterministic for a
    fixed seed.
    """
    if steps > schedule.T:
        raise ValueError(f"steps {steps} exceeds schedule length {schedule.T}")
    generator = torch.Generator(device="cpu").manual_seed(int(seed))
    b, _, h, w = condition.shape
    x = torch.randn((b, model.target_channels, h, w), generator=generator)
    timesteps = respaced_timesteps(schedule.T, steps)
    return _denoise_from(model, schedule, x, condition, timesteps,
                         generator, x0_transform)


@torch.no_grad()
def sde_edit(model, schedule: NoiseSchedule, init: torch.Tensor,
             t_start: float, condition: torch.Tensor, steps: int, seed: int,
             x0_transform: Optional[Callable] = None) -> torch.Tensor:
    """Partially noise `init` to fraction t_start of the schedule, then denoise.

    t_start -> 0 returns init unchanged; t_start = 1 is full sampling from
    noise (init only sets the shape).
    """
    if not 0 < t_start <= 1:
        raise ValueError(f"t_start must lie in (0, 1], got {t_start}")
    generator = torch.Generator(device="cpu").manual_seed(int(seed))
    t_hi = int(round(t_start * schedule.T))
    if t_hi < 1:
        return init.clone()
    eps = torch.randn(init.shape, generator=generator)
    if t_hi == schedule.T:
        x = eps  # full noising: exactly the sample() prior, same seed stream
    else:
        x = q_sample(init, t_hi, eps, schedule)
    timesteps = respaced_timesteps(t_hi, steps)
    return _denoise_from(model, schedule, x, condition, timesteps,
                         generator, x0_transform)
