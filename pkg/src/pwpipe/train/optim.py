"""ADAM with bias correction and the piecewise-constant learning-rate
schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")
        if self.step < 0:
            raise ValueError("step must be >= 0")


def adam_step(state: AdamState, weights: dict, gradients: dict, lr: float) -> None:
    """One bias-corrected ADAM update, in place on the weight store.

    Only tensors present in ``gradients`` move; moments are allocated lazily
    per tensor.  A single shared step counter is advanced once per call.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, g in gradients.items():
        if name not in weights:
            raise KeyError(f"gradient for unknown weight {name!r}")
        w = weights[name]
        g = np.asarray(g, dtype=w.dtype)
        if g.shape != w.shape:
            raise ValueError(f"gradient shape {g.shape} != weight shape {w.shape} for {name!r}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(w, dtype=np.float64)
            state.m[name] = m
        v = state.v.get(name)
        if v is None:
            v = np.zeros_like(w, dtype=np.float64)
            state.v[name] = v
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        weights[name] = (w - update).astype(w.dtype)


@dataclass(frozen=True)
class LrSchedule:
    """Right-continuous piecewise-constant rate: rates[i] applies on
    [boundaries[i-1], boundaries[i])."""

    boundaries: tuple[int, ...]
    rates: tuple[float, ...]

    def __post_init__(self):
        if len(self.rates) != len(self.boundaries) + 1:
            raise ValueError(
                f"need {len(self.boundaries) + 1} rates for {len(self.boundaries)} boundaries"
            )
        if any(b2 <= b1 for b1, b2 in zip(self.boundaries, self.boundaries[1:])):
            raise ValueError("boundaries must be strictly increasing")
        if any(r <= 0 for r in self.rates):
            raise ValueError("rates must be > 0")

    def rate(self, step: int) -> float:
        return self.rates[int(np.searchsorted(self.boundaries, step, side="right"))]

    def scaled(self, factor: float) -> "LrSchedule":
        """Compress the boundary steps for desk-scale runs; rates unchanged."""
        if factor <= 0:
            raise ValueError("factor must be > 0")
        b = tuple(max(1, int(round(x * factor))) for x in self.boundaries)
        if any(b2 <= b1 for b1, b2 in zip(b, b[1:])):
            raise ValueError(f"scale factor {factor} collapses boundaries {self.boundaries}")
        return LrSchedule(b, self.rates)


def default_cyclegan_schedule() -> LrSchedule:
    """1e-4 until step 10000, 5e-5 until 30000, then 1e-5."""
    return LrSchedule((10000, 30000), (1e-4, 5e-5, 1e-5))
