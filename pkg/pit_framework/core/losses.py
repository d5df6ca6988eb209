"""
Performance losses, the size regularizer and the combined PIT objective
"""
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import tensor as T
from .config import LossKind
from .layers import Network
from .masks import slice_weights
from .tensor import ShapeError, Tensor


@dataclass
class RegularizerConfig:
    """Strength of the size regularizer"""
    lambda_: float = 0.0

    def __post_init__(self):
        if self.lambda_ < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lambda_}")


def size_regularizer(net: Network, cfg: RegularizerConfig) -> Tensor:
    """
    lambda * sum_l C_in * C_out * sum_{i>=1} slice_weight(i) * |g_hat_i|

    Acts on the float gamma (not the binarized view); the pinned gamma_0 has
    weight 0. Frozen layers contribute constants.
    """
    pit = net.pit_layers()
    if not pit:
        raise ValueError("size_regularizer needs at least one pit_conv layer")
    total: Optional[Tensor] = None
    for layer in pit:
        weights = Tensor(slice_weights(layer.gamma.spec))
        term = T.sum_(T.mul(T.abs_(layer.gamma.g_hat), weights))
        term = T.scalar_mul(term, cfg.lambda_ * layer.spec.c_in * layer.spec.c_out)
        total = term if total is None else T.add(total, term)
    return total


def performance_loss(pred: Tensor, target: Union[Tensor, np.ndarray], kind: Union[LossKind, str]) -> Tensor:
    """Mean-reduced mse, mae or bce (on logits)"""
    target = target if isinstance(target, Tensor) else Tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"Prediction {pred.shape} and target {target.shape} differ")
    kind = LossKind(kind)
    if kind == LossKind.MSE:
        diff = T.sub(pred, target)
        return T.mean(T.mul(diff, diff))
    if kind == LossKind.MAE:
        return T.mean(T.abs_(T.sub(pred, target)))
    if np.any((target.data != 0.0) & (target.data != 1.0)):
        raise ValueError("bce targets must be 0 or 1")
    return T.bce_with_logits(pred, target)


def weight_decay_loss(net: Network, coefficient: float) -> Optional[Tensor]:
    """coefficient * sum of squared conv and linear weights; None when disabled"""
    if coefficient <= 0:
        return None
    total: Optional[Tensor] = None
    for name, tensor in net.parameters().items():
        if not name.endswith(".weight"):
            continue
        term = T.sum_(T.mul(tensor, tensor))
        total = term if total is None else T.add(total, term)
    return T.scalar_mul(total, coefficient) if total is not None else None


def total_loss(perf: Tensor, reg: Tensor) -> Tensor:
    """L_PIT = L_perf + L_size"""
    return T.add(perf, reg)
