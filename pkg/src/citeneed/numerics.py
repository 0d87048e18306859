"""Small deterministic numeric kernel.

Tensors are plain ``numpy.ndarray`` objects of dtype float64.  Every public
operation validates that its inputs are finite and raises
:class:`NonFiniteError` otherwise, so NaN/Inf never propagate silently.
Gradients elsewhere in the package are derived by hand and verified with
:func:`grad_check`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

PROB_FLOOR = 1e-12


class NonFiniteError(ValueError):
    pass


class ShapeError(ValueError):
    pass


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; the only RNG used anywhere in the package."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def as_tensor(x, name: str = "input") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    check_finite(arr, name)
    return arr


def check_finite(arr: np.ndarray, name: str = "tensor") -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains NaN or Inf")


def matmul(a, b) -> np.ndarray:
    a = as_tensor(a, "a")
    b = as_tensor(b, "b")
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def sigmoid(x) -> np.ndarray:
    x = as_tensor(x)
    return _sigmoid(x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x) -> np.ndarray:
    return np.tanh(as_tensor(x))


def softmax(x, mask=None, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax; masked (False) entries are exactly zero."""
    x = as_tensor(x)
    if mask is None:
        mask = np.ones(x.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ShapeError(f"mask shape {mask.shape} != input shape {x.shape}")
    if not np.all(mask.any(axis=axis)):
        raise ValueError("softmax over an all-masked input")
    return _masked_softmax(x, mask, axis)


def _masked_softmax(x: np.ndarray, mask: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = np.where(mask, x, -np.inf)
    shifted = shifted - shifted.max(axis=axis, keepdims=True)
    e = np.where(mask, np.exp(shifted), 0.0)
    return e / e.sum(axis=axis, keepdims=True)


def cross_entropy(pred, target: int) -> tuple[float, np.ndarray]:
    """Loss ``-log pred[target]`` and its gradient with respect to ``pred``.

    ``pred`` must be a normalized probability vector.  A binary problem can
    pass ``[1 - p, p]`` with target 0 or 1.
    """
    pred = as_tensor(pred, "pred")
    if pred.ndim != 1:
        raise ShapeError("pred must be a vector")
    if np.any(pred < 0) or abs(pred.sum() - 1.0) > 1e-9:
        raise ValueError(f"pred is not normalized (sum={pred.sum():.12g})")
    if not 0 <= target < pred.size:
        raise IndexError(f"target {target} out of range for {pred.size} classes")
    p = max(pred[target], PROB_FLOOR)
    grad = np.zeros_like(pred)
    grad[target] = -1.0 / p
    return float(-np.log(p)), grad


@dataclass
class ParamSlot:
    name: str
    value: np.ndarray
    grad: np.ndarray = None
    # rows (first axis) excluded from updates; None means all trainable
    frozen_rows: np.ndarray | None = None

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape:
            raise ShapeError(f"grad shape {self.grad.shape} != value shape {self.value.shape} for {self.name}")

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")


_T_MAX = 2**62


def adam_step(state: AdamState, slots: Sequence[ParamSlot]) -> None:
    """One bias-corrected Adam update in place; gradients are zeroed after."""
    if state.t >= _T_MAX:
        raise OverflowError("Adam step counter overflow")
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for slot in slots:
        g = slot.grad
        check_finite(g, f"grad of {slot.name}")
        if slot.frozen_rows is not None:
            g = g.copy()
            g[slot.frozen_rows] = 0.0
        m = state.m.get(slot.name)
        if m is None:
            m = state.m[slot.name] = np.zeros_like(slot.value)
            state.v[slot.name] = np.zeros_like(slot.value)
        v = state.v[slot.name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        slot.value -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        slot.zero_grad()


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_slot: dict
    tol: float
    n_checked: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def grad_check(
    f: Callable[[], float],
    slots: Sequence[ParamSlot],
    h: float = 1e-5,
    tol: float = 1e-4,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare ``slot.grad`` against central differences of ``f``.

    ``f`` reads the current slot values; gradients must already be populated.
    The relative error per coordinate is ``|a - n| / max(|a| + |n|, floor)``;
    the floor keeps round-off on near-zero gradients from reading as failure.
    With ``max_coords`` only a random subset of each slot is perturbed.
    """
    per_slot = {}
    worst = 0.0
    n_checked = 0
    for slot in slots:
        flat = slot.value.reshape(-1)
        analytic = slot.grad.reshape(-1).copy()
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = (rng or make_rng(0)).choice(flat.size, size=max_coords, replace=False)
        slot_worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NonFiniteError(f"objective not finite while perturbing {slot.name}[{i}]")
            numeric = (fp - fm) / (2.0 * h)
            err = abs(analytic[i] - numeric) / max(abs(analytic[i]) + abs(numeric), floor)
            slot_worst = max(slot_worst, err)
        per_slot[slot.name] = slot_worst
        worst = max(worst, slot_worst)
        n_checked += len(idx)
    return GradCheckReport(max_rel_error=worst, per_slot=per_slot, tol=tol, n_checked=n_checked)


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_out, fan_in = (shape[0], shape[1]) if len(shape) == 2 else (1, shape[0])
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)
