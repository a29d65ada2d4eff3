# Licensed under the Apache License: http://www.apache.org/licenses/LICENSE-2.0
# For details: see the NOTICE file at the root of the eegfuse source tree


from __future__ import annotations

import contextlib
import dataclasses
import math
from collections.abc import Iterable, Iterator, Sequence

import torch
import torch.nn.functional as F
from torch import nn

from .errors import CtcInfeasibleError, FrozenModelError, ParameterError
from .types import DropoutMode

DTYPE = torch.float64
CE_FLOOR = 1e-12
IMPROVEMENT = 1e-6


def as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x.to(DTYPE)
    return torch.as_tensor(x, dtype=DTYPE)


class Dense(nn.Module):
    """Affine map applied to every row of a ``T x in_dim`` input."""

    def __init__(self, in_dim: int, out_dim: int, generator: torch.Generator | None = None):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(out_dim, in_dim, dtype=DTYPE))
        self.bias = nn.Parameter(torch.zeros(out_dim, dtype=DTYPE))
        nn.init.xavier_uniform_(self.weight, generator=generator)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.in_dim:
            raise ParameterError(f"dense layer expects dim {self.in_dim}, got {x.shape[-1]}")
        return x @ self.weight.T + self.bias


class GruLayer(nn.Module):
    """
    Single GRU layer with the reset gate applied before the recurrent
    candidate weights::

        z = sigmoid(W_z x + U_z h + b_z)
        r = sigmoid(W_r x + U_r h + b_r)
        c = tanh(W_h x + U_h (r * h) + b_h)
        h = (1 - z) * h + z * c
    """

    def __init__(
        self, input_dim: int, hidden_dim: int, generator: torch.Generator | None = None
    ):
        super().__init__()
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        for gate in ("z", "r", "h"):
            W = nn.Parameter(torch.empty(hidden_dim, input_dim, dtype=DTYPE))
            U = nn.Parameter(torch.empty(hidden_dim, hidden_dim, dtype=DTYPE))
            nn.init.xavier_uniform_(W, generator=generator)
            nn.init.xavier_uniform_(U, generator=generator)
            setattr(self, f"W_{gate}", W)
            setattr(self, f"U_{gate}", U)
            setattr(self, f"b_{gate}", nn.Parameter(torch.zeros(hidden_dim, dtype=DTYPE)))

    def forward(self, x_seq: torch.Tensor, h0: torch.Tensor | None = None) -> torch.Tensor:
        return gru_forward(self, x_seq, h0)


def gru_forward(
    layer: GruLayer, x_seq: torch.Tensor, h0: torch.Tensor | None = None
) -> torch.Tensor:
    """Run the recurrence over ``T x input_dim`` and return all ``T`` hidden states."""
    x_seq = as_tensor(x_seq)
    if x_seq.ndim != 2 or x_seq.shape[0] < 1 or x_seq.shape[1] != layer.input_dim:
        raise ParameterError(
            f"GRU expects a T x {layer.input_dim} input with T >= 1, got {tuple(x_seq.shape)}"
        )
    if h0 is None:
        h = torch.zeros(layer.hidden_dim, dtype=DTYPE)
    else:
        h = as_tensor(h0)
        if h.shape != (layer.hidden_dim,):
            raise ParameterError(f"h0 must have shape ({layer.hidden_dim},)")

    # input projections for every step at once
    xz = x_seq @ layer.W_z.T + layer.b_z
    xr = x_seq @ layer.W_r.T + layer.b_r
    xh = x_seq @ layer.W_h.T + layer.b_h

    states = []
    for t in range(x_seq.shape[0]):
        z = torch.sigmoid(xz[t] + layer.U_z @ h)
        r = torch.sigmoid(xr[t] + layer.U_r @ h)
        candidate = torch.tanh(xh[t] + layer.U_h @ (r * h))
        h = (1 - z) * h + z * candidate
        states.append(h)
    return torch.stack(states)


def gradients(loss: torch.Tensor, params: Sequence[torch.Tensor]) -> list[torch.Tensor]:
    """Reverse-mode gradients of a scalar loss; unused parameters get zeros."""
    grads = torch.autograd.grad(loss, list(params), allow_unused=True)
    return [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]


def dropout(
    x: torch.Tensor,
    rate: float,
    mode: DropoutMode,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    if not 0 <= rate < 1:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if mode is DropoutMode.EVAL or rate == 0:
        return x
    keep = torch.rand(x.shape, generator=generator, dtype=DTYPE) >= rate
    return x * keep / (1 - rate)


def softmax(logits: torch.Tensor) -> torch.Tensor:
    return torch.softmax(as_tensor(logits), dim=-1)


def cross_entropy(probs: torch.Tensor, target: int | torch.Tensor) -> torch.Tensor:
    """``-log p[target]`` with the probability floored at 1e-12."""
    probs = as_tensor(probs)
    if isinstance(target, torch.Tensor) and target.ndim == 1 and target.numel() > 1:
        # one-hot
        target = int(torch.argmax(target))
    return -torch.log(torch.clamp(probs[..., int(target)], min=CE_FLOOR))


def mse(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    return F.mse_loss(as_tensor(pred), as_tensor(target), reduction="mean")


def ctc_min_frames(label: Sequence[int]) -> int:
    repeats = sum(1 for a, b in zip(label, label[1:]) if a == b)
    return len(label) + repeats


def ctc_loss(log_probs: torch.Tensor, label: Sequence[int], blank: int = 0) -> torch.Tensor:
    """Negative log-likelihood of ``label`` under ``T x V`` per-frame log-probabilities."""
    log_probs = as_tensor(log_probs)
    T, V = log_probs.shape
    if not 0 <= blank < V:
        raise ParameterError(f"blank index {blank} outside vocabulary of size {V}")
    label = list(label)
    if any(s == blank or not 0 <= s < V for s in label):
        raise ParameterError("label symbols must be non-blank vocabulary indices")
    if T < ctc_min_frames(label):
        raise CtcInfeasibleError(
            f"label needs at least {ctc_min_frames(label)} frames, got {T}"
        )
    return F.ctc_loss(
        log_probs[:, None, :],
        torch.tensor(label, dtype=torch.long),
        input_lengths=torch.tensor([T]),
        target_lengths=torch.tensor([len(label)]),
        blank=blank,
        reduction="sum",
        zero_infinity=False,
    )


@dataclasses.dataclass(frozen=True)
class AdamConfig:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class AdamState:
    """Adam over a fixed parameter list; ``t`` counts completed steps."""

    def __init__(self, params: Iterable[torch.Tensor], config: AdamConfig = AdamConfig()):
        self.params = list(params)
        self.config = config
        self.optimizer = torch.optim.Adam(
            self.params,
            lr=config.lr,
            betas=(config.beta1, config.beta2),
            eps=config.eps,
        )

    @property
    def t(self) -> int:
        states = [self.optimizer.state[p] for p in self.params if p in self.optimizer.state]
        return int(states[0]["step"]) if states else 0

    def step(self, grads: Sequence[torch.Tensor] | None = None, clip_norm: float | None = None):
        if grads is not None:
            if len(grads) != len(self.params):
                raise ParameterError("one gradient per parameter is required")
            for p, g in zip(self.params, grads):
                if g.shape != p.shape:
                    raise ParameterError(f"gradient shape {g.shape} != parameter {p.shape}")
                p.grad = g.detach().clone()
        if clip_norm is not None:
            nn.utils.clip_grad_norm_(self.params, clip_norm)
        self.optimizer.step()
        self.optimizer.zero_grad(set_to_none=True)


def adam_step(
    state: AdamState,
    params: Sequence[torch.Tensor],
    grads: Sequence[torch.Tensor],
) -> list[torch.Tensor]:
    if [id(p) for p in params] != [id(p) for p in state.params]:
        raise ParameterError("parameters do not match the optimizer state")
    with torch.no_grad():
        state.step(grads)
    return list(params)


def early_stop(history: Sequence[float], patience: int) -> bool:
    """
    True once the best loss has not improved by at least 1e-6 for ``patience``
    consecutive epochs.
    """
    if not history:
        raise ParameterError("early stopping needs at least one epoch of history")
    best = math.inf
    since_best = 0
    for loss in history:
        if loss < best - IMPROVEMENT:
            best = loss
            since_best = 0
        else:
            since_best += 1
    return since_best >= patience


def snapshot(module: nn.Module) -> dict[str, torch.Tensor]:
    return {name: p.detach().clone() for name, p in module.named_parameters()}


@contextlib.contextmanager
def frozen(module: nn.Module) -> Iterator[nn.Module]:
    """
    Disable gradients on ``module`` for the duration of the block and verify on
    exit that no parameter changed.
    """
    before = snapshot(module)
    flags = {name: p.requires_grad for name, p in module.named_parameters()}
    for p in module.parameters():
        p.requires_grad_(False)
    try:
        yield module
    finally:
        for name, p in module.named_parameters():
            p.requires_grad_(flags[name])
    for name, p in module.named_parameters():
        if not torch.equal(before[name], p.detach()):
            raise FrozenModelError(f"parameter {name} changed while frozen")
