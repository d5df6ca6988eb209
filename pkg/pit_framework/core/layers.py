"""
TCN building blocks, seed-network construction and extraction of the
compact dilated network
"""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Type, Union

import numpy as np

from . import tensor as T
from .config import (
    Activation,
    ActivationSpec,
    ConvSpec,
    LinearSpec,
    NetworkConfig,
    NetworkConfigError,
    PitConvSpec,
    PoolSpec,
)
from .masks import GammaSet, MaskError, MaskSpec, alive_positions, supported_dilations
from .seeding import Component, generator
from .tensor import Tensor

logger = logging.getLogger(__name__)


class ExtractionError(RuntimeError):
    """Network cannot be exported in its current state"""


def _activate(x: Tensor, activation: Activation) -> Tensor:
    return T.relu(x) if activation == Activation.RELU else x


def _uniform(rng: np.random.Generator, fan_in: int, shape: Tuple[int, ...]) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


# ============== Layers ==============

class Layer(ABC):
    """Base interface for network layers"""

    kind: str

    def __init__(self, spec):
        self.spec = spec

    @abstractmethod
    def forward(self, x: Tensor) -> Tensor:
        """Apply the layer"""
        pass

    def parameters(self) -> Dict[str, Tensor]:
        """Trainable weight tensors (gamma excluded)"""
        return {}

    def param_count(self) -> int:
        return 0


class ConvLayer(Layer):
    """Standard dilated causal convolution"""

    kind = "conv"

    def __init__(self, spec: ConvSpec, rng: np.random.Generator):
        super().__init__(spec)
        fan_in = spec.c_in * spec.kernel_size
        self.weight = Tensor(_uniform(rng, fan_in, (spec.c_out, spec.c_in, spec.kernel_size)), name="weight")
        self.bias = Tensor(_uniform(rng, fan_in, (spec.c_out,)), name="bias") if spec.bias else None

    def forward(self, x: Tensor) -> Tensor:
        y = T.conv1d_causal(x, self.weight, self.bias, self.spec.dilation)
        return _activate(y, self.spec.activation)

    def parameters(self) -> Dict[str, Tensor]:
        params = {"weight": self.weight}
        if self.bias is not None:
            params["bias"] = self.bias
        return params

    def param_count(self) -> int:
        spec = self.spec
        return spec.c_in * spec.c_out * spec.kernel_size + (spec.c_out if spec.bias else 0)


class PitConvLayer(Layer):
    """
    Causal convolution with a maximally-sized filter whose time slices are
    masked by the layer's gamma parameters
    """

    kind = "pit_conv"

    def __init__(self, spec: PitConvSpec, rng: np.random.Generator, delta: float = 0.5):
        super().__init__(spec)
        fan_in = spec.c_in * spec.rf_max
        self.weight = Tensor(_uniform(rng, fan_in, (spec.c_out, spec.c_in, spec.rf_max)), name="weight")
        self.bias = Tensor(_uniform(rng, fan_in, (spec.c_out,)), name="bias") if spec.bias else None
        self.gamma = GammaSet(MaskSpec(spec.rf_max), delta=delta)

    @property
    def rf_max(self) -> int:
        return self.spec.rf_max

    def masked_weight(self) -> Tensor:
        """M (.) W, with M broadcast over output and input channels"""
        c_out, c_in, rf_max = self.weight.shape
        mask = T.reshape(self.gamma.mask(), (1, rf_max))
        spread = T.matmul(Tensor(np.ones((c_out * c_in, 1))), mask)
        return T.mul(self.weight, T.reshape(spread, (c_out, c_in, rf_max)))

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-2] != self.spec.c_in:
            raise T.ShapeError(f"pit_conv expects {self.spec.c_in} input channels, got input {x.shape}")
        y = T.conv1d_causal(x, self.masked_weight(), self.bias, 1)
        return _activate(y, self.spec.activation)

    def parameters(self) -> Dict[str, Tensor]:
        params = {"weight": self.weight}
        if self.bias is not None:
            params["bias"] = self.bias
        return params

    def alive_taps(self) -> List[int]:
        return self.gamma.alive_taps()

    def param_count(self) -> int:
        spec = self.spec
        return spec.c_in * spec.c_out * len(self.alive_taps()) + (spec.c_out if spec.bias else 0)

    def extracted(self) -> Tuple[ConvSpec, Dict[str, np.ndarray]]:
        """Equivalent standard conv keeping only the surviving slices, time order preserved"""
        if not self.gamma.frozen:
            raise ExtractionError("gamma must be frozen before extraction")
        d, n_taps = self.gamma.dilation()
        taps = alive_positions(d, self.rf_max)
        spec = self.spec
        conv = ConvSpec(
            c_in=spec.c_in,
            c_out=spec.c_out,
            kernel_size=n_taps,
            dilation=d,
            activation=spec.activation,
            bias=spec.bias,
        )
        weights = {"weight": self.weight.data[:, :, taps].copy()}
        if self.bias is not None:
            weights["bias"] = self.bias.data.copy()
        return conv, weights


class LinearLayer(Layer):
    kind = "linear"

    def __init__(self, spec: LinearSpec, rng: np.random.Generator):
        super().__init__(spec)
        self.weight = Tensor(_uniform(rng, spec.c_in, (spec.c_out, spec.c_in)), name="weight")
        self.bias = Tensor(_uniform(rng, spec.c_in, (spec.c_out,)), name="bias") if spec.bias else None

    def forward(self, x: Tensor) -> Tensor:
        return _activate(T.linear(x, self.weight, self.bias), self.spec.activation)

    def parameters(self) -> Dict[str, Tensor]:
        params = {"weight": self.weight}
        if self.bias is not None:
            params["bias"] = self.bias
        return params

    def param_count(self) -> int:
        return self.spec.c_in * self.spec.c_out + (self.spec.c_out if self.spec.bias else 0)


class PoolLayer(Layer):
    kind = "pool"

    def __init__(self, spec: PoolSpec, rng: Optional[np.random.Generator] = None):
        super().__init__(spec)

    def forward(self, x: Tensor) -> Tensor:
        return T.pool_time(x, self.spec.mode)


class ActivationLayer(Layer):
    kind = "activation"

    def __init__(self, spec: ActivationSpec, rng: Optional[np.random.Generator] = None):
        super().__init__(spec)

    def forward(self, x: Tensor) -> Tensor:
        return _activate(x, self.spec.fn)


LAYER_MAP: Dict[str, Type[Layer]] = {
    "pit_conv": PitConvLayer,
    "conv": ConvLayer,
    "linear": LinearLayer,
    "pool": PoolLayer,
    "activation": ActivationLayer,
}


# ============== Network ==============

class Network:
    """Ordered stack of layers built from a NetworkConfig"""

    def __init__(self, config: NetworkConfig, layers: List[Layer], seed: int):
        self.config = config
        self.layers = layers
        self.seed = seed

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def pit_layers(self) -> List[PitConvLayer]:
        return [layer for layer in self.layers if isinstance(layer, PitConvLayer)]

    def gamma_sets(self) -> List[GammaSet]:
        return [layer.gamma for layer in self.pit_layers()]

    def parameters(self) -> Dict[str, Tensor]:
        """Named weights and biases in layer order"""
        named = {}
        for index, layer in enumerate(self.layers):
            for name, tensor in layer.parameters().items():
                named[f"layers.{index}.{name}"] = tensor
        return named

    def gamma_parameters(self) -> Dict[str, Tensor]:
        return {
            f"layers.{index}.gamma": layer.gamma.g_hat
            for index, layer in enumerate(self.layers)
            if isinstance(layer, PitConvLayer)
        }

    def set_weights_trainable(self, flag: bool) -> None:
        for tensor in self.parameters().values():
            tensor.set_requires_grad(flag)

    def set_gamma_trainable(self, flag: bool) -> None:
        for gamma in self.gamma_sets():
            if not gamma.frozen:
                gamma.set_trainable(flag)

    def dilations(self) -> Tuple[int, ...]:
        return tuple(gamma.dilation().d for gamma in self.gamma_sets())

    # ---- state ----

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Copies of every weight, bias and gamma vector, keyed by name"""
        state = {name: tensor.data.copy() for name, tensor in self.parameters().items()}
        state.update({name: tensor.data.copy() for name, tensor in self.gamma_parameters().items()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        targets = {**self.parameters(), **self.gamma_parameters()}
        missing = set(targets) - set(state)
        if missing:
            raise KeyError(f"State is missing entries: {sorted(missing)}")
        for name, tensor in targets.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise T.ShapeError(f"State entry {name} has shape {value.shape}, expected {tensor.shape}")
            tensor.data[...] = value


def build_network(config: NetworkConfig, rng_seed: int, delta: float = 0.5) -> Network:
    """
    Seed network: every gamma at 1.0 (d = 1), weights and biases drawn from
    U(-1/sqrt(fan_in), 1/sqrt(fan_in)) with one PCG64 stream per layer.
    """
    config.check()
    layers: List[Layer] = []
    for index, spec in enumerate(config.layers):
        layer_class = LAYER_MAP.get(spec.kind)
        if layer_class is None:
            raise NetworkConfigError(f"layer {index}: unknown kind {spec.kind!r}")
        rng = generator(rng_seed, Component.NETWORK_INIT, index)
        if layer_class is PitConvLayer:
            layers.append(PitConvLayer(spec, rng, delta=delta))
        else:
            layers.append(layer_class(spec, rng))
    logger.debug(f"Built network '{config.name}' with {len(layers)} layers (seed={rng_seed})")
    return Network(config, layers, rng_seed)


# ============== Extraction and counting ==============

@dataclass
class ExportedModel:
    """Compact network: config with standard dilated convs plus its weights"""
    config: NetworkConfig
    weights: Dict[str, np.ndarray]
    dilations: Tuple[int, ...]

    def to_network(self) -> Network:
        net = build_network(self.config, rng_seed=0)
        for name, tensor in net.parameters().items():
            tensor.data[...] = self.weights[name]
        return net


def export_extracted(net: Network) -> ExportedModel:
    """Replace every pit_conv with the standard dilated conv its frozen gamma encodes"""
    specs = []
    weights: Dict[str, np.ndarray] = {}
    for index, layer in enumerate(net.layers):
        if isinstance(layer, PitConvLayer):
            try:
                spec, layer_weights = layer.extracted()
            except ExtractionError as e:
                raise ExtractionError(f"layer {index}: {e}") from e
        else:
            spec = layer.spec
            layer_weights = {name: tensor.data.copy() for name, tensor in layer.parameters().items()}
        specs.append(spec)
        for name, value in layer_weights.items():
            weights[f"layers.{index}.{name}"] = value

    config = NetworkConfig(
        name=f"{net.config.name}-extracted",
        task=net.config.task,
        loss=net.config.loss,
        layers=specs,
    )
    return ExportedModel(config=config, weights=weights, dilations=net.dilations())


def _checked_dilation(spec: PitConvSpec, d: int) -> int:
    if d not in supported_dilations(MaskSpec(spec.rf_max)):
        raise MaskError(f"Dilation {d} is not supported by a pit_conv with rf_max={spec.rf_max}")
    return int(d)


def _spec_params(spec, dilation: Optional[int] = None) -> int:
    if isinstance(spec, PitConvSpec):
        taps = len(alive_positions(dilation or 1, spec.rf_max))
        return spec.c_in * spec.c_out * taps + (spec.c_out if spec.bias else 0)
    if isinstance(spec, ConvSpec):
        return spec.c_in * spec.c_out * spec.kernel_size + (spec.c_out if spec.bias else 0)
    if isinstance(spec, LinearSpec):
        return spec.c_in * spec.c_out + (spec.c_out if spec.bias else 0)
    return 0


def count_params(
    model: Union[Network, NetworkConfig, ExportedModel],
    dilations: Optional[Sequence[int]] = None,
) -> int:
    """
    Conv layers count C_in * C_out * taps + C_out, linear layers
    C_in * C_out + C_out. A masked layer counts its alive taps; a config
    counts pit_conv layers at `dilations` (d = 1 when omitted).
    """
    if isinstance(model, ExportedModel):
        model = model.config
    if isinstance(model, Network):
        return sum(layer.param_count() for layer in model.layers)

    pit_specs = model.pit_layers()
    if dilations is not None and len(dilations) != len(pit_specs):
        raise ValueError(f"Got {len(dilations)} dilations for {len(pit_specs)} pit_conv layers")
    remaining = list(dilations) if dilations is not None else [1] * len(pit_specs)
    total = 0
    for spec in model.layers:
        if isinstance(spec, PitConvSpec):
            total += _spec_params(spec, _checked_dilation(spec, remaining.pop(0)))
        else:
            total += _spec_params(spec)
    return total


def apply_dilations(net: Network, dilations: Sequence[int]) -> Network:
    """Set each pit_conv layer's gamma to the canonical pattern of a dilation tuple and freeze it"""
    pit = net.pit_layers()
    if len(dilations) != len(pit):
        raise ValueError(f"Got {len(dilations)} dilations for {len(pit)} pit_conv layers")
    for layer, d in zip(pit, dilations):
        layer.gamma.set_dilation(int(d))
    return net


def dilation_tuple(net: Network) -> Tuple[int, ...]:
    return net.dilations()


def conv_weight_count(config: NetworkConfig, dilations: Optional[Sequence[int]] = None) -> int:
    """Convolution weights only (no biases, no linear layers)"""
    remaining = list(dilations) if dilations is not None else None
    total = 0
    for spec in config.layers:
        if isinstance(spec, PitConvSpec):
            d = _checked_dilation(spec, remaining.pop(0)) if remaining is not None else 1
            total += spec.c_in * spec.c_out * len(alive_positions(d, spec.rf_max))
        elif isinstance(spec, ConvSpec):
            total += spec.c_in * spec.c_out * spec.kernel_size
    return total
