"""Small spatiotemporal window classifier: per-frame conv encoder + LSTM."""

from __future__ import annotations

import torch
from torch import nn

CHANNELS = (8, 16, 32, 32)


class WindowClassifier(nn.Module):
    """4-layer conv encoder applied per frame, LSTM over time, linear head.

    Input is (batch, frames, 3, s, s) with s divisible by 16 (four 2x2
    average pools).  The forward pass returns logits; apply a sigmoid for
    probabilities.
    """

    def __init__(self, input_size: int, hidden: int = 32):
        super().__init__()
        if input_size % 16 != 0 or input_size < 16:
            raise ValueError(f"input_size must be a positive multiple of 16, got {input_size}")
        self.input_size = input_size
        self.hidden = hidden
        blocks = []
        c_in = 3
        for c_out in CHANNELS:
            blocks += [nn.Conv2d(c_in, c_out, 3, padding=1), nn.ReLU(), nn.AvgPool2d(2)]
            c_in = c_out
        self.encoder = nn.Sequential(*blocks)
        self.lstm = nn.LSTM(CHANNELS[-1], hidden)
        self.head = nn.Linear(hidden, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t = x.shape[:2]
        feats = self.encoder(x.reshape(b * t, *x.shape[2:]))
        feats = feats.mean(dim=(2, 3)).reshape(b, t, -1).transpose(0, 1)
        _, (h_n, _) = self.lstm(feats)
        return self.head(h_n[-1]).squeeze(-1)
