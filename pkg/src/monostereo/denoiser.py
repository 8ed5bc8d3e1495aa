"""Small convolutional denoiser with timestep conditioning.

A 3-scale encoder-decoder with skip connections; the condition enters by
channel concatenation at the first convolution, and a sinusoidal
timestep embedding is projected per scale and added to the features.
Fully convolutional, so a model trained at one resolution runs at any
other.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, asdict

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class DenoiserConfig:
    target_channels: int = 3
    cond_channels: int = 3
    widths: tuple = (32, 64, 128)
    time_dim: int = 64
    groups: int = 8

    def arch_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    dtype = t.dtype if t.is_floating_point() else torch.float32
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=dtype,
                                                        device=t.device) / (half - 1))
    angles = t[:, None].to(dtype) * freqs[None, :]
    return torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)


class ResBlock(nn.Module):
    def __init__(self, in_ch, out_ch, time_dim, groups):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.norm1 = nn.GroupNorm(min(groups, out_ch), out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.norm2 = nn.GroupNorm(min(groups, out_ch), out_ch)
        self.time_proj = nn.Linear(time_dim, out_ch)
        self.skip = (nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch
                     else nn.Identity())

    def forward(self, x, t_emb):
        h = F.silu(self.norm1(self.conv1(x)))
        h = h + self.time_proj(t_emb)[:, :, None, None]
        h = F.silu(self.norm2(self.conv2(h)))
        return h + self.skip(x)


class ConditionalDenoiser(nn.Module):
    """Predicts the noise in the target channels of a concatenated input."""

    def __init__(self, config: DenoiserConfig = DenoiserConfig()):
        super().__init__()
        self.config = config
        w = config.widths
        td = config.time_dim
        g = config.groups
        in_ch = config.target_channels + config.cond_channels

        self.time_mlp = nn.Sequential(
            nn.Linear(td, td), nn.SiLU(), nn.Linear(td, td))

        self.enc = nn.ModuleList()
        ch = in_ch
        for width in w:
            self.enc.append(nn.ModuleList([ResBlock(ch, width, td, g),
                                           ResBlock(width, width, td, g)]))
            ch = width
        self.down = nn.AvgPool2d(2)
        self.mid = ResBlock(w[-1], w[-1], td, g)
        self.dec = nn.ModuleList()
        for i, width in enumerate(reversed(w)):
            skip_ch = width
            self.dec.append(nn.ModuleList([ResBlock(ch + skip_ch, width, td, g),
                                           ResBlock(width, width, td, g)]))
            ch = width
        self.out = nn.Conv2d(ch, config.target_channels, 3, padding=1)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    @property
    def target_channels(self) -> int:
        return self.config.target_channels

    def forward(self, x: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        t_emb = self.time_mlp(sinusoidal_embedding(t, self.config.time_dim))
        skips = []
        h = x
        for i, (block1, block2) in enumerate(self.enc):
            h = block2(block1(h, t_emb), t_emb)
            skips.append(h)
            if i < len(self.enc) - 1:
                h = self.down(h)
        h = self.mid(h, t_emb)
        for i, (block1, block2) in enumerate(self.dec):
            skip = skips[-(i + 1)]
            if h.shape[-2:] != skip.shape[-2:]:
                h = F.interpolate(h, size=skip.shape[-2:], mode="nearest")
            h = block2(block1(torch.cat([h, skip], dim=1), t_emb), t_emb)
        return self.out(h)
