"""Central finite-difference checks for analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad, record_kinks

# Smallest step tried when a kink-safe probe keeps crossing an activation kink.
MIN_STEP = 1e-8


def _same_piece(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def _evaluate(loss_fn, watch: bool):
    if not watch:
        return loss_fn().item(), None
    with record_kinks() as masks:
        value = loss_fn().item()
    return value, masks


@dataclass
class NumericGrad:
    values: dict
    # entries whose step had to shrink below h, and entries left on a kink
    shrunk: int = 0
    on_kink: int = 0


def numeric_gradient(loss_fn: Callable[[], Tensor], x: Tensor, h: float = 1e-4,
                     indices: Sequence[tuple[int, ...]] | None = None,
                     kink_safe: bool = False) -> NumericGrad:
    """Central differences of ``loss_fn()`` w.r.t. entries of ``x.data``.

    ``loss_fn`` must read ``x`` by reference so in-place perturbation of
    ``x.data`` changes its value. With ``kink_safe`` the step for an entry is
    divided by 10 until neither x+h nor x-h flips the sign of any relu-family
    input, since a difference across a kink does not estimate the derivative.
    Entries still straddling a kink at ``MIN_STEP`` are omitted and counted.
    """
    if indices is None:
        indices = list(np.ndindex(*x.shape))
    result = NumericGrad({})
    with no_grad():
        base = _evaluate(loss_fn, kink_safe)[1]
        for idx in indices:
            orig = x.data[idx]
            step = h
            while True:
                x.data[idx] = orig + step
                fp, mp = _evaluate(loss_fn, kink_safe)
                x.data[idx] = orig - step
                fm, mm = _evaluate(loss_fn, kink_safe)
                x.data[idx] = orig
                if not kink_safe or (_same_piece(base, mp) and _same_piece(base, mm)):
                    break
                step /= 10.0
                if step < MIN_STEP:
                    break
            if step < MIN_STEP:
                result.on_kink += 1
                continue
            result.shrunk += step < h
            result.values[idx] = (fp - fm) / (2.0 * step)
    return result


def numerical_grad(loss_fn: Callable[[], Tensor], x: Tensor, h: float = 1e-4,
                   indices: Sequence[tuple[int, ...]] | None = None) -> dict:
    """Plain central differences keyed by entry index."""
    return numeric_gradient(loss_fn, x, h, indices).values


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


@dataclass
class GradcheckResult:
    worst: float
    probed: int
    shrunk: int
    on_kink: int


def check_gradients(loss_fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-4,
                    max_entries: int | None = None, seed: int = 0, floor: float = 1e-6,
                    kink_safe: bool = False) -> GradcheckResult:
    """Compare backprop with finite differences over ``inputs``.

    With ``max_entries`` set, a fixed random subset of entries per input is
    probed instead of every entry.
    """
    for t in inputs:
        t.grad = None
    loss = loss_fn()
    loss.backward()
    rng = np.random.default_rng(seed)
    res = GradcheckResult(0.0, 0, 0, 0)
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros(t.shape)
        all_idx = list(np.ndindex(*t.shape))
        if max_entries is not None and len(all_idx) > max_entries:
            pick = rng.choice(len(all_idx), size=max_entries, replace=False)
            all_idx = [all_idx[i] for i in sorted(pick)]
        numeric = numeric_gradient(loss_fn, t, h, all_idx, kink_safe)
        res.shrunk += numeric.shrunk
        res.on_kink += numeric.on_kink
        for idx, n in numeric.values.items():
            res.probed += 1
            res.worst = max(res.worst, relative_error(float(analytic[idx]), n, floor))
    return res


def gradcheck(loss_fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-4,
              max_entries: int | None = None, seed: int = 0, floor: float = 1e-6,
              kink_safe: bool = False) -> float:
    """Largest relative error between backprop and finite differences."""
    return check_gradients(loss_fn, inputs, h, max_entries, seed, floor, kink_safe).worst
