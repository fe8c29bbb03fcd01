from dataclasses import dataclass

import numpy as np

from data.datasets import NormalizationSpec
from diffcore.tensor import DTYPE
from utils.errors import ArchitectureError, ConfigError, ShapeError

LAYER_KINDS = ("conv", "relu", "maxpool2", "flatten", "dense")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out_channels: int = 0
    kernel: int = 0
    stride: int = 1
    pad: int = 0
    units: int = 0

    def to_dict(self):
        payload = {"kind": self.kind}
        if self.kind == "conv":
            payload.update(out_channels=self.out_channels, kernel=self.kernel, stride=self.stride, pad=self.pad)
        elif self.kind == "dense":
            payload.update(units=self.units)
        return payload

    @classmethod
    def from_dict(cls, payload):
        return cls(**payload)


def conv(out_channels, kernel=3, stride=1, pad=1):
    return LayerSpec("conv", out_channels=out_channels, kernel=kernel, stride=stride, pad=pad)


def dense(units):
    return LayerSpec("dense", units=units)


RELU = LayerSpec("relu")
MAXPOOL2 = LayerSpec("maxpool2")
FLATTEN = LayerSpec("flatten")


@dataclass(frozen=True)
class ArchitectureSpec:
    layers: tuple
    num_classes: int
    input_shape: tuple

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        self.output_shapes()

    def layer_name(self, index):
        return f"{self.layers[index].kind}{index}"

    def output_shapes(self):
        """Shape after each layer (batch dimension omitted); raises on the first inconsistent layer."""
        if self.num_classes < 1:
            raise ArchitectureError(f"num_classes must be positive, got {self.num_classes}")
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ArchitectureError(f"input_shape must be (C,H,W), got {self.input_shape}")
        shape = self.input_shape
        shapes = []
        for index, layer in enumerate(self.layers):
            shape = _chain(shape, layer, index)
            shapes.append(shape)
        if shape != (self.num_classes,):
            raise ArchitectureError(
                f"network output {shape} does not match num_classes={self.num_classes}",
                len(self.layers) - 1, self.layers[-1].kind if self.layers else None,
            )
        return shapes

    def parameter_shapes(self):
        """Ordered mapping of parameter name to shape."""
        shapes = {}
        previous = self.input_shape
        for index, (layer, out_shape) in enumerate(zip(self.layers, self.output_shapes())):
            name = self.layer_name(index)
            if layer.kind == "conv":
                shapes[f"{name}.kernel"] = (layer.out_channels, previous[0], layer.kernel, layer.kernel)
                shapes[f"{name}.bias"] = (layer.out_channels,)
            elif layer.kind == "dense":
                shapes[f"{name}.weights"] = (previous[0], layer.units)
                shapes[f"{name}.bias"] = (layer.units,)
            previous = out_shape
        return shapes

    def to_dict(self):
        return {
            "layers": [layer.to_dict() for layer in self.layers],
            "num_classes": self.num_classes,
            "input_shape": list(self.input_shape),
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(
            layers=tuple(LayerSpec.from_dict(layer) for layer in payload["layers"]),
            num_classes=int(payload["num_classes"]),
            input_shape=tuple(payload["input_shape"]),
        )


def _chain(shape, layer, index):
    kind = layer.kind
    if kind not in LAYER_KINDS:
        raise ArchitectureError(f"unknown layer kind {kind!r}", index, kind)
    if kind == "conv":
        if len(shape) != 3:
            raise ArchitectureError(f"conv needs a (C,H,W) input, got {shape}", index, kind)
        if layer.out_channels < 1 or layer.kernel < 1 or layer.stride < 1 or layer.pad < 0:
            raise ArchitectureError("conv needs positive out_channels, kernel and stride", index, kind)
        c, h, w = shape
        spans = [size + 2 * layer.pad - layer.kernel for size in (h, w)]
        if min(spans) < 0 or any(span % layer.stride for span in spans):
            raise ArchitectureError(f"kernel {layer.kernel}, stride {layer.stride} does not tile {shape}", index, kind)
        return (layer.out_channels, spans[0] // layer.stride + 1, spans[1] // layer.stride + 1)
    if kind == "relu":
        return shape
    if kind == "maxpool2":
        if len(shape) != 3 or shape[1] % 2 or shape[2] % 2:
            raise ArchitectureError(f"maxpool2 needs even spatial dims, got {shape}", index, kind)
        return (shape[0], shape[1] // 2, shape[2] // 2)
    if kind == "flatten":
        return (int(np.prod(shape)),)
    if len(shape) != 1:
        raise ArchitectureError(f"dense needs a flat input, got {shape}", index, kind)
    if layer.units < 1:
        raise ArchitectureError("dense needs positive units", index, kind)
    return (layer.units,)


def default_spec(input_shape=(1, 28, 28), num_classes=10):
    """conv16 -> relu -> pool -> conv32 -> relu -> pool -> flatten -> dense128 -> relu -> dense."""
    return ArchitectureSpec(
        layers=(conv(16), RELU, MAXPOOL2, conv(32), RELU, MAXPOOL2, FLATTEN, dense(128), RELU, dense(num_classes)),
        num_classes=num_classes,
        input_shape=tuple(input_shape),
    )


@dataclass(frozen=True, eq=False)
class Model:
    """Architecture, parameters, class names and the input normalization used in training."""

    spec: ArchitectureSpec
    params: dict
    class_names: tuple
    normalization: NormalizationSpec = None

    def __post_init__(self):
        expected = self.spec.parameter_shapes()
        params = {}
        for name, shape in expected.items():
            if name not in self.params:
                raise ArchitectureError(f"missing parameter {name}")
            value = np.array(self.params[name], dtype=DTYPE)
            if value.shape != shape:
                raise ShapeError(f"parameter {name} has the wrong shape", expected=shape, actual=value.shape)
            if not np.isfinite(value).all():
                raise ArchitectureError(f"parameter {name} is not finite")
            value.flags.writeable = False
            params[name] = value
        extra = set(self.params) - set(expected)
        if extra:
            raise ArchitectureError(f"unexpected parameters {sorted(extra)}")
        names = tuple(str(n) for n in self.class_names)
        if len(names) != self.spec.num_classes:
            raise ConfigError(f"{len(names)} class names for {self.spec.num_classes} classes")
        normalization = self.normalization or NormalizationSpec.identity(self.spec.input_shape[0])
        if normalization.channels != self.spec.input_shape[0]:
            raise ShapeError("normalization channels differ from model input channels",
                             expected=(self.spec.input_shape[0],), actual=(normalization.channels,))
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "class_names", names)
        object.__setattr__(self, "normalization", normalization)

    @property
    def num_classes(self):
        return self.spec.num_classes

    @property
    def num_parameters(self):
        return int(sum(p.size for p in self.params.values()))

    def with_params(self, params):
        return Model(self.spec, params, self.class_names, self.normalization)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 32
    learning_rate: float = 0.01
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError(f"epochs and batch_size must be positive, got {self.epochs}, {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
