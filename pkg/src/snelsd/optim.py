"""Loss, dropout and the two first-order optimizers used for training."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractError
from .tensor import Tensor, hadamard, nll

__all__ = [
    "cross_entropy",
    "dropout",
    "AdamState",
    "AdadeltaState",
    "adam_step",
    "adadelta_step",
    "Adam",
    "Adadelta",
]


def cross_entropy(probs: Tensor, label) -> Tensor:
    """``-log p[label]`` (batch mean for ``[B, k]`` input), clamped at 1e-12."""
    total = probs.data.sum(axis=-1)
    if not np.allclose(total, 1.0, atol=1e-6):
        raise ContractError("cross_entropy expects probabilities summing to 1")
    return nll(probs, label)


def dropout(x: Tensor, rate: float, mode: str, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1 / (1 - rate)`` in training."""
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate must lie in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ContractError(f"unknown dropout mode {mode!r}")
    if mode == "eval" or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return hadamard(x, Tensor(keep))


@dataclass
class AdamState:
    lr: float = 0.0004
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


@dataclass
class AdadeltaState:
    rho: float = 0.95
    eps: float = 1e-6
    lr: float = 1.0
    sq_grad: list[np.ndarray] = field(default_factory=list)
    sq_update: list[np.ndarray] = field(default_factory=list)


def _check(params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
    if len(params) != len(grads):
        raise ContractError("params and grads differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ContractError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.isfinite(g).all():
            raise ContractError("non-finite gradient")


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState) -> None:
    """Bias-corrected Adam update, in place on ``params``."""
    _check(params, grads)
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    elif len(state.m) != len(params):
        raise ContractError("optimizer state does not match the parameter list")
    state.step += 1
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def adadelta_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdadeltaState) -> None:
    """Adadelta update, in place: step = RMS(previous updates) / RMS(gradients) * g."""
    _check(params, grads)
    if not state.sq_grad:
        state.sq_grad = [np.zeros_like(p) for p in params]
        state.sq_update = [np.zeros_like(p) for p in params]
    elif len(state.sq_grad) != len(params):
        raise ContractError("optimizer state does not match the parameter list")
    rho, eps = state.rho, state.eps
    for p, g, eg, ex in zip(params, grads, state.sq_grad, state.sq_update):
        eg *= rho
        eg += (1.0 - rho) * g * g
        delta = np.sqrt(ex + eps) / np.sqrt(eg + eps) * g
        ex *= rho
        ex += (1.0 - rho) * delta * delta
        p -= state.lr * delta


class _Optimizer:
    def __init__(self, params: Sequence[Tensor]):
        self.params = list(params)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def _grads(self) -> list[np.ndarray]:
        return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]


class Adam(_Optimizer):
    def __init__(self, params, lr=0.0004, beta1=0.9, beta2=0.999, eps=1e-8):
        super().__init__(params)
        self.state = AdamState(lr, beta1, beta2, eps)

    def step(self) -> None:
        adam_step([p.data for p in self.params], self._grads(), self.state)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"step": np.array([float(self.state.step)])}
        for i, (m, v) in enumerate(zip(self.state.m, self.state.v)):
            out[f"m.{i}"], out[f"v.{i}"] = m, v
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.state.step = int(arrays["step"][0])
        n = len(self.params) if "m.0" in arrays else 0
        self.state.m = [arrays[f"m.{i}"].copy() for i in range(n)]
        self.state.v = [arrays[f"v.{i}"].copy() for i in range(n)]


class Adadelta(_Optimizer):
    def __init__(self, params, rho=0.95, eps=1e-6, lr=1.0):
        super().__init__(params)
        self.state = AdadeltaState(rho, eps, lr)

    def step(self) -> None:
        adadelta_step([p.data for p in self.params], self._grads(), self.state)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (eg, ex) in enumerate(zip(self.state.sq_grad, self.state.sq_update)):
            out[f"sq_grad.{i}"], out[f"sq_update.{i}"] = eg, ex
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        n = len(self.params) if "sq_grad.0" in arrays else 0
        self.state.sq_grad = [arrays[f"sq_grad.{i}"].copy() for i in range(n)]
        self.state.sq_update = [arrays[f"sq_update.{i}"].copy() for i in range(n)]
