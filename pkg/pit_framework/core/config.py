"""
Network configuration documents: ordered layer descriptors, task and loss
"""
from enum import Enum
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Union

import orjson
from pydantic import BaseModel, ConfigDict, Field


class NetworkConfigError(ValueError):
    """Malformed network configuration"""


class Activation(str, Enum):
    RELU = "relu"
    NONE = "none"


class Task(str, Enum):
    REGRESSION = "regression"
    MULTILABEL = "multilabel"


class LossKind(str, Enum):
    MSE = "mse"
    MAE = "mae"
    BCE = "bce"


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PitConvSpec(_Spec):
    """Searchable causal convolution: maximally-sized filter, dilation learned"""
    kind: Literal["pit_conv"] = "pit_conv"
    c_in: int = Field(ge=1)
    c_out: int = Field(ge=1)
    rf_max: int = Field(ge=2)
    activation: Activation = Activation.NONE
    bias: bool = True


class ConvSpec(_Spec):
    """Standard dilated causal convolution"""
    kind: Literal["conv"] = "conv"
    c_in: int = Field(ge=1)
    c_out: int = Field(ge=1)
    kernel_size: int = Field(ge=1)
    dilation: int = Field(default=1, ge=1)
    activation: Activation = Activation.NONE
    bias: bool = True


class LinearSpec(_Spec):
    """Dense layer, applied per time-step when the input still has a time axis"""
    kind: Literal["linear"] = "linear"
    c_in: int = Field(ge=1)
    c_out: int = Field(ge=1)
    activation: Activation = Activation.NONE
    bias: bool = True


class PoolSpec(_Spec):
    """Collapse the time axis: mean over time or the last time-step"""
    kind: Literal["pool"] = "pool"
    mode: Literal["mean", "last"] = "mean"


class ActivationSpec(_Spec):
    kind: Literal["activation"] = "activation"
    fn: Activation = Activation.RELU


LayerSpec = Annotated[
    Union[PitConvSpec, ConvSpec, LinearSpec, PoolSpec, ActivationSpec],
    Field(discriminator="kind"),
]


class NetworkConfig(BaseModel):
    """Seed network description (schema in docs/FORMATS.md)"""
    model_config = ConfigDict(extra="forbid")

    name: str = "seed"
    task: Task = Task.REGRESSION
    loss: LossKind = LossKind.MSE
    layers: List[LayerSpec] = Field(default_factory=list)

    # ---- validation ----

    def check(self, require_pit: bool = False) -> None:
        """Channel chaining and task/loss consistency; errors name the layer index"""
        channels: Optional[int] = None
        has_time = True
        for index, layer in enumerate(self.layers):
            if isinstance(layer, (PitConvSpec, ConvSpec)) and not has_time:
                raise NetworkConfigError(f"layer {index}: {layer.kind} after pool has no time axis")
            if isinstance(layer, (PitConvSpec, ConvSpec, LinearSpec)):
                if channels is not None and layer.c_in != channels:
                    raise NetworkConfigError(
                        f"layer {index}: {layer.kind} expects {layer.c_in} input channels "
                        f"but the previous layer produces {channels}"
                    )
                channels = layer.c_out
            elif isinstance(layer, PoolSpec):
                if not has_time:
                    raise NetworkConfigError(f"layer {index}: pool applied twice")
                has_time = False

        if require_pit and not any(isinstance(layer, PitConvSpec) for layer in self.layers):
            raise NetworkConfigError("network has no pit_conv layer to search")
        if self.task == Task.MULTILABEL:
            if has_time and self.layers:
                raise NetworkConfigError("multilabel networks must pool the time axis")
            if self.loss != LossKind.BCE:
                raise NetworkConfigError(f"multilabel task needs the bce loss, got {self.loss.value}")
        else:
            if not has_time:
                raise NetworkConfigError("regression networks must keep the time axis (no pool)")
            if self.loss == LossKind.BCE:
                raise NetworkConfigError("bce loss needs a multilabel task")

    @property
    def input_channels(self) -> Optional[int]:
        for layer in self.layers:
            if hasattr(layer, "c_in"):
                return layer.c_in
        return None

    @property
    def output_channels(self) -> Optional[int]:
        for layer in reversed(self.layers):
            if hasattr(layer, "c_out"):
                return layer.c_out
        return None

    def pit_layers(self) -> List[PitConvSpec]:
        return [layer for layer in self.layers if isinstance(layer, PitConvSpec)]

    # ---- serialization ----

    def to_json(self) -> bytes:
        return orjson.dumps(self.model_dump(mode="json"), option=orjson.OPT_INDENT_2)

    @classmethod
    def from_json(cls, raw: Union[bytes, str]) -> "NetworkConfig":
        return cls.model_validate(orjson.loads(raw))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "NetworkConfig":
        return cls.from_json(Path(path).read_bytes())

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_json())
        return path


class TrainConfig(BaseModel):
    """
    Knobs of the three-phase search. The regularizer strength is read from
    the JSON key ``lambda``.
    """
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    steps_wu: int = Field(default=0, ge=0)
    steps_ft: Optional[int] = Field(default=None, ge=0)  # None: ten epochs' worth
    lambda_: float = Field(default=0.0, ge=0.0, alias="lambda")
    delta: float = Field(default=0.5, gt=0.0, lt=1.0)
    batch_size: int = Field(default=128, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0.0)
    patience_epochs: int = Field(default=50, ge=1)
    rng_seed: int = Field(default=0, ge=0)
    max_epochs: Optional[int] = Field(default=None, ge=1)
    weight_decay: float = Field(default=0.0, ge=0.0)
    checkpoint_dir: Optional[str] = None
    keep_all_checkpoints: bool = False

    def finetune_cap(self, steps_per_epoch: int) -> int:
        return self.steps_ft if self.steps_ft is not None else 10 * steps_per_epoch

    def to_dict(self) -> dict:
        return self.model_dump(mode="json", by_alias=True)

    def to_json(self) -> bytes:
        return orjson.dumps(self.to_dict(), option=orjson.OPT_INDENT_2)

    @classmethod
    def from_json(cls, raw: Union[bytes, str]) -> "TrainConfig":
        return cls.model_validate(orjson.loads(raw))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TrainConfig":
        return cls.from_json(Path(path).read_bytes())
