"""Dense float64 numeric core: products, softmax, BCE, Adam and gradient checking.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. Parameters carry
their own gradient and Adam moments so every trainable block can be updated
with the same optimizer code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import kernels

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class EmptyLossError(ValueError):
    """Raised when a loss mask selects no cells."""


class NonFiniteGradientError(FloatingPointError):
    """Raised when an optimizer step sees a NaN or Inf gradient."""


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator (PCG64); identical seeds give identical streams."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def as_tensor(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Softmax over the last axis with row-max subtraction."""
    return kernels.softmax_rows(as_tensor(x))


def softmax_rows_backward(p: np.ndarray, grad_out: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """Gradient w.r.t. the (scaled) softmax input given the softmax output ``p``."""
    return kernels.softmax_rows_backward(p, grad_out, scale)


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = as_tensor(z)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_with_logits(
    logits: np.ndarray, targets: np.ndarray, mask: np.ndarray | None = None
) -> tuple[float, np.ndarray]:
    """Masked mean binary cross-entropy computed from logits.

    Targets may be soft (anything in [0, 1]). Returns the loss and its
    gradient with respect to ``logits``.
    """
    z = as_tensor(logits)
    y = as_tensor(targets)
    if z.shape != y.shape:
        raise ShapeError(f"bce: logits {z.shape} vs targets {y.shape}")
    m = np.ones_like(z) if mask is None else as_tensor(np.broadcast_to(mask, z.shape))
    count = float(m.sum())
    if count <= 0.0:
        raise EmptyLossError("bce: mask selects no cells (empty loss)")
    # -[y ln s(z) + (1-y) ln(1-s(z))] = softplus(z) - y z
    softplus = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    cell = softplus - y * z
    loss = float((cell * m).sum() / count)
    grad = (sigmoid(z) - y) * m / count
    return loss, grad


def bce_loss(p: np.ndarray, y: np.ndarray, mask: np.ndarray | None = None) -> float:
    """BCE on probabilities; clipped away from 0 and 1. Prefer :func:`bce_with_logits`."""
    p = np.clip(as_tensor(p), 1e-300, 1.0)
    q = np.clip(1.0 - as_tensor(p), 1e-300, 1.0)
    y = as_tensor(y)
    m = np.ones_like(p) if mask is None else as_tensor(np.broadcast_to(mask, p.shape))
    count = float(m.sum())
    if count <= 0.0:
        raise EmptyLossError("bce: mask selects no cells (empty loss)")
    cell = -(y * np.log(p) + (1.0 - y) * np.log(q))
    cell = np.where(m > 0, cell, 0.0)
    return float(cell.sum() / count)


@dataclass
class Parameter:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False)
    m: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)
    step: int = 0

    def __post_init__(self) -> None:
        self.value = as_tensor(self.value).copy()
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


def adam_step(param: Parameter, lr: float) -> Parameter:
    """One bias-corrected Adam update in place. The gradient is left untouched."""
    g = param.grad
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradientError(f"non-finite gradient in parameter {param.name!r}")
    param.step += 1
    param.m = ADAM_BETA1 * param.m + (1.0 - ADAM_BETA1) * g
    param.v = ADAM_BETA2 * param.v + (1.0 - ADAM_BETA2) * (g * g)
    m_hat = param.m / (1.0 - ADAM_BETA1**param.step)
    v_hat = param.v / (1.0 - ADAM_BETA2**param.step)
    param.value = param.value - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return param


class Adam:
    """Adam over a fixed list of parameters."""

    def __init__(self, params: Iterable[Parameter], lr: float = 1e-4):
        self.params = list(params)
        self.lr = lr

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        for p in self.params:
            adam_step(p, self.lr)


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


@dataclass
class GradCheckReport:
    name: str
    max_rel_error: float
    passed: bool


class NonDeterministicClosureError(RuntimeError):
    pass


def finite_diff_check(
    closure: Callable[[], float],
    params: Iterable[Parameter],
    eps: float = 1e-5,
    tol: float = 1e-4,
    max_elements: int | None = None,
    floor: float = 1e-6,
    rng: np.random.Generator | None = None,
) -> list[GradCheckReport]:
    """Compare ``param.grad`` against central differences of ``closure``.

    ``closure`` must recompute the loss from the current parameter values.
    Gradients must already be populated (typically by one analytic backward
    pass at the unperturbed point). Relative error per element is
    ``|a - n| / max(|a| + |n|, floor)``; the floor keeps round-off in the
    differences of exactly-zero gradients from counting as failures.
    ``max_elements`` subsamples large parameters.
    """
    base = closure()
    if closure() != base:
        raise NonDeterministicClosureError("closure returned different values on repeated evaluation")
    reports = []
    for p in params:
        flat = p.value.reshape(-1)
        idx = np.arange(flat.size)
        if max_elements is not None and flat.size > max_elements:
            rng = rng or make_rng(0)
            idx = np.sort(rng.choice(flat.size, size=max_elements, replace=False))
        analytic = p.grad.reshape(-1)
        worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            up = closure()
            flat[i] = orig - eps
            down = closure()
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            a = analytic[i]
            err = abs(a - numeric) / max(abs(a) + abs(numeric), floor)
            worst = max(worst, err)
        reports.append(GradCheckReport(p.name, worst, worst <= tol))
    return reports
