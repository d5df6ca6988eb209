"""
Dilation mask algebra: gamma binarization, Gamma products, the constant
matrices T and K, the differentiable mask transform and dilation extraction
"""
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, NamedTuple, Optional, Sequence, Tuple

import logging
import numpy as np

from . import tensor as T
from .tensor import Tensor

logger = logging.getLogger(__name__)


class MaskError(ValueError):
    """Invalid mask specification or gamma vector"""


# ============== Specification ==============

def compute_L(rf_max: int) -> int:
    """Number of gamma entries for a maximum receptive field: floor(log2(rf_max - 1)) + 1"""
    if not isinstance(rf_max, (int, np.integer)) or rf_max < 2:
        raise MaskError(f"rf_max must be an integer >= 2, got {rf_max!r}")
    return (int(rf_max) - 1).bit_length()


@dataclass(frozen=True)
class MaskSpec:
    """Maximum receptive field of a layer and the derived gamma length"""
    rf_max: int
    L: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "L", compute_L(self.rf_max))

    @property
    def max_dilation(self) -> int:
        return 2 ** (self.L - 1)


def v2(p: int, cap: int) -> int:
    """2-adic valuation of p capped at `cap`; v2(0) := cap"""
    if p == 0:
        return cap
    return min((p & -p).bit_length() - 1, cap)


def gamma_products(gamma_bin: Sequence[float]) -> np.ndarray:
    """Gamma_i = prod_{k=0}^{L-1-i} gamma_k"""
    gamma = np.asarray(gamma_bin, dtype=np.float64)
    if gamma.ndim != 1 or gamma.size == 0:
        raise MaskError(f"gamma must be a non-empty vector, got shape {gamma.shape}")
    if gamma[0] != 1.0:
        raise MaskError(f"gamma[0] is pinned to 1, got {gamma[0]}")
    L = gamma.size
    prefix = np.cumprod(gamma)
    return np.array([prefix[L - 1 - i] for i in range(L)])


@dataclass(frozen=True)
class ConstantMatrices:
    """The constant 0/1 matrices of the mask transform"""
    T: np.ndarray  # L x L
    K: np.ndarray  # L x rf_max

    @property
    def L(self) -> int:
        return self.T.shape[0]

    @property
    def rf_max(self) -> int:
        return self.K.shape[1]


@lru_cache(maxsize=None)
def _constant_matrices(rf_max: int) -> ConstantMatrices:
    L = compute_L(rf_max)
    rows, cols = np.indices((L, L))
    t = (rows + cols <= L - 1).astype(np.float64)
    k = np.zeros((L, rf_max))
    for p in range(rf_max):
        k[v2(p, L - 1), p] = 1.0
    t.setflags(write=False)
    k.setflags(write=False)
    return ConstantMatrices(T=t, K=k)


def build_constant_matrices(spec: MaskSpec) -> ConstantMatrices:
    """
    T[j, c] = 1 iff j + c <= L - 1 (upper triangular, columns reversed).
    K[c, p] = 1 iff c = min(v2(p), L - 1): column p selects the Gamma level
    that keeps time position p alive.
    """
    return _constant_matrices(spec.rf_max)


# ============== Mask construction ==============

def build_mask_tensor(g_bin: Tensor, mats: ConstantMatrices) -> Tensor:
    """
    M = prod_columns{[(gamma . 1_{1xL}) (.) T + (1_{LxL} - T)] . K}

    Differentiable in `g_bin`; when `g_bin` is the output of heaviside_ste
    gradients reach the float gamma through the straight-through path.
    """
    L = mats.L
    if g_bin.shape != (L,):
        raise MaskError(f"gamma has shape {g_bin.shape} but the constant matrices expect ({L},)")
    spread = T.matmul(T.reshape(g_bin, (L, 1)), Tensor(np.ones((1, L))))
    gated = T.add(T.mul(spread, Tensor(mats.T)), Tensor(1.0 - mats.T))
    return T.column_product(T.matmul(gated, Tensor(mats.K)))


def mask_oracle(g_bin: Sequence[float], rf_max: int) -> np.ndarray:
    """
    Constructive reference mask: every live Gamma level i switches on the
    time positions that are multiples of 2^i.
    """
    L = compute_L(rf_max)
    gamma = np.asarray(g_bin, dtype=np.float64)
    if gamma.shape != (L,):
        raise MaskError(f"gamma has {gamma.size} entries, rf_max={rf_max} needs {L}")
    levels = gamma_products(gamma)
    mask = np.zeros(rf_max)
    for i in range(L - 1, -1, -1):
        if levels[i]:
            mask[:: 2 ** i] = 1.0
    return mask


# ============== Extraction ==============

class Dilation(NamedTuple):
    d: int
    n_taps: int


def _ones_prefix(g_bin: Sequence[float]) -> int:
    count = 0
    for value in list(g_bin)[1:]:
        if value < 0.5:
            break
        count += 1
    return count


def extract_dilation(g_bin: Sequence[float], rf_max: int) -> Dilation:
    """
    Dilation encoded by a binary gamma: with m the length of the all-ones
    prefix of gamma_1..gamma_{L-1}, d = 2^(L-1-m). Entries after the first
    zero are dead and ignored.
    """
    L = compute_L(rf_max)
    gamma = list(g_bin)
    if len(gamma) != L:
        raise MaskError(f"gamma has {len(gamma)} entries, rf_max={rf_max} needs {L}")
    if gamma[0] != 1:
        raise MaskError(f"gamma[0] is pinned to 1, got {gamma[0]}")
    m = _ones_prefix(gamma)
    if m < L - 1 and any(v >= 0.5 for v in gamma[m + 2:]):
        logger.debug(f"Ignoring dead gamma entries after index {m + 1}: {gamma}")
    d = 2 ** (L - 1 - m)
    return Dilation(d=d, n_taps=(rf_max - 1) // d + 1)


def alive_positions(d: int, rf_max: int) -> List[int]:
    return list(range(0, rf_max, d))


def supported_dilations(spec: MaskSpec) -> Tuple[int, ...]:
    return tuple(2 ** i for i in range(spec.L))


def gamma_for_dilation(spec: MaskSpec, d: int) -> np.ndarray:
    """Canonical binary gamma encoding a power-of-two dilation"""
    if d not in supported_dilations(spec):
        raise MaskError(
            f"Dilation {d} is not a power of two <= {spec.max_dilation} (rf_max={spec.rf_max})"
        )
    m = spec.L - 1 - (d.bit_length() - 1)
    gamma = np.zeros(spec.L)
    gamma[: m + 1] = 1.0
    return gamma


def slice_weight(spec: MaskSpec, i: int) -> int:
    """
    Time slices switched on by gamma_i: round((rf_max - 1) / 2^(L-i)),
    rounding halves away from zero.
    """
    if not 1 <= i <= spec.L - 1:
        raise MaskError(f"Slice index must lie in 1..{spec.L - 1}, got {i}")
    n, denom = spec.rf_max - 1, 2 ** (spec.L - i)
    q, r = divmod(n, denom)
    return q + (1 if 2 * r >= denom else 0)


def slice_weights(spec: MaskSpec) -> np.ndarray:
    """Vector of slice weights aligned with gamma; entry 0 (the pinned gamma_0) is 0"""
    weights = np.zeros(spec.L)
    for i in range(1, spec.L):
        weights[i] = slice_weight(spec, i)
    return weights


# ============== Gamma parameters ==============

@dataclass
class GammaSet:
    """Trainable dilation parameters of one layer"""
    spec: MaskSpec
    g_hat: Tensor = None
    delta: float = 0.5
    frozen: bool = False
    frozen_bits: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.g_hat is None:
            self.g_hat = Tensor(np.ones(self.spec.L), name="gamma")
        if self.g_hat.shape != (self.spec.L,):
            raise MaskError(f"g_hat has shape {self.g_hat.shape}, expected ({self.spec.L},)")
        if not 0.0 < self.delta < 1.0:
            raise MaskError(f"delta must lie in (0, 1), got {self.delta}")

    @property
    def matrices(self) -> ConstantMatrices:
        return build_constant_matrices(self.spec)

    def binarized(self) -> np.ndarray:
        """Current binary gamma (the frozen bits once frozen)"""
        if self.frozen:
            return self.frozen_bits.copy()
        return (self.g_hat.data >= self.delta).astype(np.float64)

    def mask(self) -> Tensor:
        """Mask tensor M; a constant when frozen or when gamma is not trainable"""
        if self.frozen:
            return Tensor(mask_oracle(self.frozen_bits, self.spec.rf_max))
        return build_mask_tensor(T.heaviside_ste(self.g_hat, self.delta), self.matrices)

    def dilation(self) -> Dilation:
        return extract_dilation(self.binarized(), self.spec.rf_max)

    def alive_taps(self) -> List[int]:
        return alive_positions(self.dilation().d, self.spec.rf_max)

    def freeze(self) -> None:
        """Freeze at the latest binarized values; gamma stops receiving gradients"""
        self.frozen_bits = self.binarized()
        self.frozen = True
        self.g_hat.set_requires_grad(False)

    def set_trainable(self, flag: bool) -> None:
        if flag and self.frozen:
            raise MaskError("Cannot train a frozen gamma set")
        self.g_hat.set_requires_grad(flag)

    def project(self) -> None:
        """Clamp g_hat to [0, 1] and restore the pinned gamma_0"""
        np.clip(self.g_hat.data, 0.0, 1.0, out=self.g_hat.data)
        self.g_hat.data[0] = 1.0

    def set_dilation(self, d: int) -> None:
        """Set gamma to the canonical pattern of `d` and freeze it"""
        bits = gamma_for_dilation(self.spec, d)
        self.g_hat.data[:] = bits
        self.frozen_bits = bits
        self.frozen = True
        self.g_hat.set_requires_grad(False)


def reachable_configurations(specs: Sequence[MaskSpec]) -> int:
    """Number of distinct dilation assignments: product of L over layers"""
    total = 1
    for spec in specs:
        total *= spec.L
    return total
