"""Loss functions and their gradients.

Generator losses follow the two-term symmetric layout: an adversarial MSE
term weighted by lambda, a cycle-consistency L1 term, and an identity L1
term at half weight.  Discriminators use least-squares targets real=1,
fake=0, halved per side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import forward


def _pair(pred: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    return pred, target


def l1_loss(pred: np.ndarray, target: np.ndarray) -> float:
    pred, target = _pair(pred, target)
    return float(np.mean(np.abs(pred - target)))


def l1_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """d l1 / d pred with the sign(0) = 0 convention."""
    pred, target = _pair(pred, target)
    return np.sign(pred - target) / pred.size


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    pred, target = _pair(pred, target)
    d = pred - target
    return float(np.mean(d * d))


def mse_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    pred, target = _pair(pred, target)
    return 2.0 * (pred - target) / pred.size


def mse_to_const(pred: np.ndarray, value: float) -> float:
    d = np.asarray(pred) - value
    return float(np.mean(d * d))


def mse_to_const_grad(pred: np.ndarray, value: float) -> np.ndarray:
    pred = np.asarray(pred)
    return 2.0 * (pred - value) / pred.size


@dataclass(frozen=True)
class LossWeights:
    """lambda_g/lambda_f weight the adversarial terms; the identity term is
    fixed at half weight."""

    lambda_g: float = 1.0
    lambda_f: float = 0.1
    identity_weight: float = 0.5

    def __post_init__(self):
        if self.lambda_g < 0 or self.lambda_f < 0 or self.identity_weight < 0:
            raise ValueError("loss weights must be >= 0")


def cyclegan_losses(G, F, D_X, D_Y, x: np.ndarray, y: np.ndarray, w: LossWeights) -> dict:
    """Evaluate every logged loss component for one unpaired batch.

    x is a research-domain batch, y a clinical-domain batch, both NHWC.
    Returns weighted components, so each total equals the sum of its three
    parts exactly.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise ValueError(f"domain batch shapes differ: {x.shape} vs {y.shape}")
    a = forward(G, x)          # G(x), fake clinical
    b = forward(F, a)          # F(G(x)), cycle back to research
    c = forward(F, y)          # F(y), fake research
    d = forward(G, c)          # G(F(y)), cycle back to clinical
    out = {
        "gen_G_gan": w.lambda_g * mse_to_const(forward(D_Y, a), 1.0),
        "gen_G_cyc": l1_loss(b, x),
        "gen_G_id": w.identity_weight * l1_loss(forward(G, y), y),
        "gen_F_gan": w.lambda_f * mse_to_const(forward(D_X, c), 1.0),
        "gen_F_cyc": l1_loss(d, y),
        "gen_F_id": w.identity_weight * l1_loss(forward(F, x), x),
        "disc_X": 0.5 * (mse_to_const(forward(D_X, x), 1.0) + mse_to_const(forward(D_X, c), 0.0)),
        "disc_Y": 0.5 * (mse_to_const(forward(D_Y, y), 1.0) + mse_to_const(forward(D_Y, a), 0.0)),
    }
    out["gen_G"] = out["gen_G_gan"] + out["gen_G_cyc"] + out["gen_G_id"]
    out["gen_F"] = out["gen_F_gan"] + out["gen_F_cyc"] + out["gen_F_id"]
    return out
