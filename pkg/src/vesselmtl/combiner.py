"""Weighting of the segmentation (BCE) and distance-map (MSE) losses.

The adaptive weight is the ratio of running mean loss magnitudes,
``alpha = mean_bce / max(mean_mse, epsilon)``, applied to the MSE term:
``L = L_bce + alpha * L_mse``. Alpha is a plain float, so no gradient flows
through it.
"""
import math
from dataclasses import dataclass

from .errors import ContractError, DivergenceError
from .ops import add, scale
from .tensor import Tensor


@dataclass
class AdaptiveState:
    mean_bce: float = 0.0
    mean_mse: float = 0.0
    count: int = 0
    gamma: float = 0.9
    epsilon: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ContractError(f"EMA decay must lie in [0, 1), got {self.gamma}")
        if not self.epsilon > 0:
            raise ContractError("epsilon must be positive")


def update(state, l_bce, l_mse):
    """Fold one batch's loss values into the running means, in place.

    The first update seeds both means with the observed values; later updates
    apply ``mean <- gamma * mean + (1 - gamma) * value``.
    """
    l_bce, l_mse = float(l_bce), float(l_mse)
    if not (math.isfinite(l_bce) and math.isfinite(l_mse)):
        raise DivergenceError(f"non-finite loss fed to the combiner (bce={l_bce}, mse={l_mse})")
    b, m = abs(l_bce), abs(l_mse)
    if state.count == 0:
        state.mean_bce, state.mean_mse = b, m
    else:
        g = state.gamma
        state.mean_bce = g * state.mean_bce + (1 - g) * b
        state.mean_mse = g * state.mean_mse + (1 - g) * m
    state.count += 1
    return state


def compute_alpha(state):
    if state.count == 0:
        return 1.0
    return state.mean_bce / max(state.mean_mse, state.epsilon)


def _check_scalar(*losses):
    for t in losses:
        if not isinstance(t, Tensor) or t.data.ndim != 0:
            raise ContractError("loss terms must be scalar tensors")


def total_loss(l_bce, l_mse, alpha):
    """``l_bce + alpha * l_mse`` with ``alpha`` treated as a constant."""
    _check_scalar(l_bce, l_mse)
    return add(l_bce, scale(l_mse, float(alpha)))


def fixed_combiner(l_bce, l_mse, weight=1.0):
    """Fixed-weight sum used by the ``multitask-fixed`` baseline."""
    _check_scalar(l_bce, l_mse)
    return add(l_bce, scale(l_mse, float(weight)))


class EpochAlpha:
    """Per-epoch variant: alpha for epoch ``e`` comes from the plain loss means of epoch ``e - 1``."""

    def __init__(self, epsilon=1e-8):
        self.epsilon = epsilon
        self.alpha = 1.0
        self._sum_bce = self._sum_mse = 0.0
        self._n = 0

    def observe(self, l_bce, l_mse):
        l_bce, l_mse = float(l_bce), float(l_mse)
        if not (math.isfinite(l_bce) and math.isfinite(l_mse)):
            raise DivergenceError(f"non-finite loss fed to the combiner (bce={l_bce}, mse={l_mse})")
        self._sum_bce += abs(l_bce)
        self._sum_mse += abs(l_mse)
        self._n += 1

    def end_epoch(self):
        if self._n:
            self.alpha = (self._sum_bce / self._n) / max(self._sum_mse / self._n, self.epsilon)
        self._sum_bce = self._sum_mse = 0.0
        self._n = 0
