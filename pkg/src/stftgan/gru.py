"""Gated recurrent units written out gate by gate.

The update gate drives the candidate state and ``1 - z`` retains the
previous hidden state, with the reset gate applied to the previous state
before the candidate projection:

    z_t = sigmoid(W_z x_t + U_z h_{t-1} + b_z)
    r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
    c_t = tanh(W_c x_t + U_c (r_t * h_{t-1}) + b_c)
    h_t = (1 - z_t) * h_{t-1} + z_t * c_t

This gate wiring is the contract the rest of the package builds on, so the
cell is explicit rather than a wrapper around a fused library kernel.
"""

from __future__ import annotations

import torch
from torch import nn

from .exceptions import InputError, ShapeError


class GruCell(nn.Module):
    def __init__(self, input_size: int, hidden_size: int):
        super().__init__()
        if input_size < 1 or hidden_size < 1:
            raise InputError("input_size and hidden_size must be positive")
        self.input_size = input_size
        self.hidden_size = hidden_size
        for gate in ("z", "r", "c"):
            w = nn.Parameter(torch.empty(hidden_size, input_size))
            u = nn.Parameter(torch.empty(hidden_size, hidden_size))
            b = nn.Parameter(torch.zeros(hidden_size))
            nn.init.xavier_uniform_(w)
            nn.init.xavier_uniform_(u)
            setattr(self, f"w_{gate}", w)
            setattr(self, f"u_{gate}", u)
            setattr(self, f"b_{gate}", b)

    def step(self, x_t: torch.Tensor, h_prev: torch.Tensor) -> torch.Tensor:
        if x_t.shape[-1] != self.input_size:
            raise ShapeError(
                f"expected input features {self.input_size}, got {x_t.shape[-1]}"
            )
        if h_prev.shape[-1] != self.hidden_size:
            raise ShapeError(
                f"expected hidden size {self.hidden_size}, got {h_prev.shape[-1]}"
            )
        z = torch.sigmoid(x_t @ self.w_z.T + h_prev @ self.u_z.T + self.b_z)
        r = torch.sigmoid(x_t @ self.w_r.T + h_prev @ self.u_r.T + self.b_r)
        c = torch.tanh(x_t @ self.w_c.T + (r * h_prev) @ self.u_c.T + self.b_c)
        return (1.0 - z) * h_prev + z * c

    def forward(self, x_t: torch.Tensor, h_prev: torch.Tensor) -> torch.Tensor:
        return self.step(x_t, h_prev)


def gru_step(cell: GruCell, x_t: torch.Tensor, h_prev: torch.Tensor) -> torch.Tensor:
    """One recurrence step; shape checks live in the cell."""
    return cell.step(x_t, h_prev)


class BiGru(nn.Module):
    """Two independent cells scan the sequence in opposite directions; their
    per-step states are concatenated, so the output width is twice the
    hidden size."""

    def __init__(self, input_size: int, hidden_size: int):
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.forward_cell = GruCell(input_size, hidden_size)
        self.backward_cell = GruCell(input_size, hidden_size)

    def forward(self, sequence: torch.Tensor) -> torch.Tensor:
        squeeze = sequence.dim() == 2
        if squeeze:
            sequence = sequence.unsqueeze(0)
        if sequence.dim() != 3:
            raise ShapeError(
                f"expected (batch, time, features) input, got shape {tuple(sequence.shape)}"
            )
        batch, steps, feats = sequence.shape
        if steps == 0:
            raise InputError("cannot run a recurrence over an empty sequence")
        if feats != self.input_size:
            raise ShapeError(
                f"expected input features {self.input_size}, got {feats}"
            )
        h_fwd = sequence.new_zeros(batch, self.hidden_size)
        h_bwd = sequence.new_zeros(batch, self.hidden_size)
        fwd_states = []
        bwd_states = []
        for t in range(steps):
            h_fwd = self.forward_cell.step(sequence[:, t], h_fwd)
            fwd_states.append(h_fwd)
        for t in reversed(range(steps)):
            h_bwd = self.backward_cell.step(sequence[:, t], h_bwd)
            bwd_states.append(h_bwd)
        bwd_states.reverse()
        out = torch.cat([torch.stack(fwd_states, dim=1), torch.stack(bwd_states, dim=1)], dim=-1)
        return out.squeeze(0) if squeeze else out


def bigru_layer(layer: BiGru, sequence: torch.Tensor) -> torch.Tensor:
    """Run a bidirectional pass; returns (batch, time, 2 * hidden)."""
    return layer(sequence)
