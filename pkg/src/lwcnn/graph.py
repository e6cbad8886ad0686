"""Model graphs: layer declarations, shape inference, validation, and execution.

A graph is a linear chain of layer declarations over an HWC input. Weighted
layers (conv, dsc, bottleneck) own named weight tensors keyed
"<layer-name>.<role>"; pooling, dropout, flatten, and the classifier complete
the chain. Builders for the four bundled architectures live here too.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from . import ops, ops_direct
from .tensor import ShapeError, Tensor, fnv1a64, seeded_uniform, zeros

__all__ = [
    "CLASSIFIER_KINDS",
    "GraphError",
    "LayerSpec",
    "ModelGraph",
    "WEIGHTED_KINDS",
    "LAYER_KINDS",
    "apply_layer",
    "build_ablation",
    "build_lcnn",
    "build_mobilenet",
    "build_named",
    "build_proposed",
    "builder_names",
    "forward",
    "infer_shapes",
    "seeded_store",
    "validate",
    "weight_specs",
    "weighted_layer_count",
    "with_input_shape",
    "zero_store",
]

WEIGHTED_KINDS = frozenset({"conv", "dsc", "bottleneck"})
LAYER_KINDS = WEIGHTED_KINDS | {"maxpool", "avgpool", "dropout", "flatten", "classifier"}
CLASSIFIER_KINDS = ("sigmoid", "softmax")

_NAME_RE = re.compile(r"^[A-Za-z0-9_\-]+$")
_MASK64 = (1 << 64) - 1


class GraphError(ValueError):
    """A model graph violates a structural rule; the message names the layer."""


@dataclass(frozen=True)
class LayerSpec:
    """One layer declaration; semantic rules are checked by `validate`."""

    kind: str
    name: str
    kernel: int = 1
    stride: int = 1
    padding: str = "same"
    in_channels: int = 0
    out_channels: int = 0
    has_batchnorm: bool = False
    has_relu: bool = False
    classifier_kind: str = ""

    def __post_init__(self) -> None:
        if self.kind not in LAYER_KINDS:
            raise GraphError(f"unknown layer kind {self.kind!r}")
        if not _NAME_RE.match(self.name):
            raise GraphError(f"layer name {self.name!r} must match {_NAME_RE.pattern}")
        if self.kernel < 1 or self.stride < 1:
            raise GraphError(f"layer '{self.name}': kernel and stride must be >= 1")
        if self.padding not in ops.PADDINGS:
            raise GraphError(f"layer '{self.name}': padding must be one of {ops.PADDINGS}")
        if self.kind in WEIGHTED_KINDS or self.kind == "classifier":
            if self.in_channels < 1 or self.out_channels < 1:
                raise GraphError(f"layer '{self.name}': channel counts must be >= 1")
        if self.kind == "classifier" and self.classifier_kind not in CLASSIFIER_KINDS:
            raise GraphError(
                f"layer '{self.name}': classifier kind must be one of {CLASSIFIER_KINDS}"
            )
        if self.kind != "classifier" and self.classifier_kind:
            raise GraphError(f"layer '{self.name}': only classifiers take a classifier kind")
        if self.kind not in WEIGHTED_KINDS and (self.has_batchnorm or self.has_relu):
            raise GraphError(
                f"layer '{self.name}': batch norm and relu apply to weighted layers only"
            )


@dataclass(frozen=True)
class ModelGraph:
    name: str
    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]
    notes: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "notes", tuple(self.notes))
        if len(self.input_shape) != 3 or any(d < 1 for d in self.input_shape):
            raise GraphError(f"input shape must be three positive dims, got {self.input_shape}")
        if not self.layers:
            raise GraphError("graph must declare at least one layer")


def infer_shapes(g: ModelGraph) -> list[tuple[int, ...]]:
    """Output shape after each layer, in order; raises GraphError naming any misfit."""
    shapes: list[tuple[int, ...]] = []
    h, w, c = g.input_shape
    feat = 0  # rank-1 width once flattened
    flat = False
    for layer in g.layers:
        kind, name = layer.kind, layer.name
        if kind in WEIGHTED_KINDS:
            if flat:
                raise GraphError(f"layer '{name}': convolution after flatten")
            if layer.in_channels != c:
                raise GraphError(
                    f"layer '{name}': expects {layer.in_channels} input channels, gets {c}"
                )
            try:
                h = _spatial(h, layer.kernel, layer.stride, layer.padding)
                w = _spatial(w, layer.kernel, layer.stride, layer.padding)
            except ShapeError as exc:
                raise GraphError(f"layer '{name}': {exc}") from exc
            c = layer.out_channels
        elif kind in ("maxpool", "avgpool"):
            if flat:
                raise GraphError(f"layer '{name}': pooling after flatten")
            if layer.kernel > h or layer.kernel > w:
                raise GraphError(f"layer '{name}': pool kernel {layer.kernel} exceeds {h}x{w}")
            h = (h - layer.kernel) // layer.stride + 1
            w = (w - layer.kernel) // layer.stride + 1
        elif kind == "dropout":
            pass
        elif kind == "flatten":
            if flat:
                raise GraphError(f"layer '{name}': repeated flatten")
            feat = h * w * c
            flat = True
        elif kind == "classifier":
            if not flat:
                raise GraphError(f"layer '{name}': classifier requires a flattened input")
            if layer.in_channels != feat:
                raise GraphError(
                    f"layer '{name}': expects {layer.in_channels} features, gets {feat}"
                )
            feat = layer.out_channels
        shapes.append((feat,) if flat else (h, w, c))
    return shapes


def _spatial(size: int, kernel: int, stride: int, padding: str) -> int:
    if padding == "same":
        return (size + stride - 1) // stride
    if kernel > size:
        raise ShapeError(f"kernel {kernel} exceeds input extent {size} under valid padding")
    return (size - kernel) // stride + 1


def validate(g: ModelGraph) -> list[str]:
    """Structural rule check; returns a list of violations, empty when the graph is well formed."""
    problems: list[str] = []
    names = [layer.name for layer in g.layers]
    for name in sorted(set(n for n in names if names.count(n) > 1)):
        problems.append(f"duplicate layer name '{name}'")

    if g.layers[-1].kind != "classifier":
        problems.append("final layer must be a classifier")
    for layer in g.layers[:-1]:
        if layer.kind == "classifier":
            problems.append(f"classifier '{layer.name}' must be the final layer")

    flatten_idx = [i for i, layer in enumerate(g.layers) if layer.kind == "flatten"]
    if len(flatten_idx) != 1:
        problems.append(f"graph must contain exactly one flatten, found {len(flatten_idx)}")
    elif flatten_idx[0] != len(g.layers) - 2:
        problems.append("flatten must come immediately before the classifier")

    for i, layer in enumerate(g.layers):
        if layer.kind == "bottleneck":
            if layer.kernel != 1:
                problems.append(f"bottleneck '{layer.name}' must use a 1x1 kernel")
            if layer.has_batchnorm:
                problems.append(f"bottleneck '{layer.name}' must not carry batch norm")
            if i + 1 < len(g.layers) and g.layers[i + 1].kind in ("maxpool", "avgpool"):
                problems.append(f"no pooling may follow bottleneck '{layer.name}'")
        if layer.kind == "maxpool" and (layer.kernel != 2 or layer.stride != 2):
            problems.append(f"max pool '{layer.name}' only supports kernel 2, stride 2")

    problems.extend(_walk_shapes(g))
    return problems


def _walk_shapes(g: ModelGraph) -> list[str]:
    # Tolerant twin of infer_shapes used by validate: reports channel breaks by
    # naming both the producing and consuming layer instead of raising.
    problems: list[str] = []
    h, w, c = g.input_shape
    producer = "input"
    feat = 0
    flat = False
    for layer in g.layers:
        kind, name = layer.kind, layer.name
        if kind in WEIGHTED_KINDS:
            if flat:
                problems.append(f"layer '{name}': convolution after flatten")
                break
            if layer.in_channels != c:
                problems.append(
                    f"layer '{name}' expects {layer.in_channels} input channels"
                    f" but '{producer}' produces {c}"
                )
            try:
                h = _spatial(h, layer.kernel, layer.stride, layer.padding)
                w = _spatial(w, layer.kernel, layer.stride, layer.padding)
            except ShapeError as exc:
                problems.append(f"layer '{name}': {exc}")
                break
            c = layer.out_channels
            producer = name
        elif kind in ("maxpool", "avgpool"):
            if flat:
                problems.append(f"layer '{name}': pooling after flatten")
                break
            if layer.kernel > h or layer.kernel > w:
                problems.append(f"layer '{name}': pool kernel {layer.kernel} exceeds {h}x{w}")
                break
            h = (h - layer.kernel) // layer.stride + 1
            w = (w - layer.kernel) // layer.stride + 1
        elif kind == "flatten":
            if flat:
                problems.append(f"layer '{name}': repeated flatten")
                break
            feat = h * w * c
            flat = True
            producer = name
        elif kind == "classifier":
            if not flat:
                problems.append(f"layer '{name}': classifier requires a flattened input")
            elif layer.in_channels != feat:
                problems.append(
                    f"layer '{name}' expects {layer.in_channels} features"
                    f" but '{producer}' produces {feat}"
                )
    return problems


def weighted_layer_count(g: ModelGraph) -> int:
    """Layers that own convolution weights; a dsc pair counts as one layer."""
    return sum(1 for layer in g.layers if layer.kind in WEIGHTED_KINDS)


def weight_specs(g: ModelGraph) -> dict[str, tuple[int, ...]]:
    """Required weight tensors as an ordered name -> shape map."""
    specs: dict[str, tuple[int, ...]] = {}
    for layer in g.layers:
        name, k = layer.name, layer.kernel
        cin, cout = layer.in_channels, layer.out_channels
        if layer.kind == "conv" or layer.kind == "bottleneck":
            specs[f"{name}.w"] = (k, k, cin, cout)
            specs[f"{name}.b"] = (cout,)
        elif layer.kind == "dsc":
            specs[f"{name}.dw_w"] = (k, k, cin)
            specs[f"{name}.dw_b"] = (cin,)
            specs[f"{name}.pw_w"] = (1, 1, cin, cout)
            specs[f"{name}.pw_b"] = (cout,)
        elif layer.kind == "classifier":
            specs[f"{name}.w"] = (cin, cout)
            specs[f"{name}.b"] = (cout,)
        else:
            continue
        if layer.has_batchnorm:
            for role in ("bn_gamma", "bn_beta", "bn_mean", "bn_var"):
                specs[f"{name}.{role}"] = (cout,)
    return specs


def seeded_store(g: ModelGraph, seed: int) -> dict[str, Tensor]:
    """Deterministic weight store: every tensor drawn from its own named stream.

    Tensor seeds mix the base seed with an FNV-1a hash of the tensor name, so
    renaming or reordering layers cannot silently shift values between
    tensors. Variance tensors are drawn from [0.5, 1.5) to keep them valid;
    everything else uses [-0.05, 0.05).
    """
    store: dict[str, Tensor] = {}
    for name, shape in weight_specs(g).items():
        lo, hi = (0.5, 1.5) if name.endswith(".bn_var") else (-0.05, 0.05)
        store[name] = seeded_uniform(shape, (fnv1a64(name) ^ seed) & _MASK64, lo, hi)
    return store


def zero_store(g: ModelGraph) -> dict[str, Tensor]:
    return {name: zeros(shape) for name, shape in weight_specs(g).items()}


def _fetch(weights: Mapping[str, Tensor], name: str, role: str) -> Tensor:
    key = f"{name}.{role}"
    try:
        return weights[key]
    except KeyError:
        raise KeyError(f"missing weight tensor '{key}'") from None


def apply_layer(
    layer: LayerSpec, weights: Mapping[str, Tensor], x: Tensor, engine: str = "fast"
) -> Tensor:
    """Run one layer. `engine` picks the lowered kernels or the direct loops."""
    kind, name = layer.kind, layer.name
    if kind == "conv" or kind == "bottleneck":
        w = ops.ConvWeights(_fetch(weights, name, "w"), _fetch(weights, name, "b"))
        if engine == "direct":
            x = ops_direct.conv2d_direct(x, w, layer.stride, layer.padding)
        elif kind == "bottleneck" and layer.stride == 1:
            x = ops.pointwise_conv2d(x, w)
        else:
            x = ops.conv2d(x, w, layer.stride, layer.padding)
    elif kind == "dsc":
        dw = ops.DepthwiseWeights(_fetch(weights, name, "dw_w"), _fetch(weights, name, "dw_b"))
        pw = ops.ConvWeights(_fetch(weights, name, "pw_w"), _fetch(weights, name, "pw_b"))
        if engine == "direct":
            x = ops_direct.dsc_direct(x, dw, pw, layer.stride, layer.padding)
        else:
            x = ops.dsc_layer(x, dw, pw, layer.stride, layer.padding)
    elif kind == "maxpool":
        if layer.kernel != 2 or layer.stride != 2:
            raise GraphError(f"max pool '{name}' only supports kernel 2, stride 2")
        x = ops.maxpool2(x)
    elif kind == "avgpool":
        x = ops.avg_pool(x, layer.kernel, layer.stride)
    elif kind == "dropout":
        pass  # identity at inference time
    elif kind == "flatten":
        x = ops.flatten(x)
    elif kind == "classifier":
        w = _fetch(weights, name, "w")
        b = _fetch(weights, name, "b")
        logits = Tensor(x.data @ w.data + b.data)
        x = ops.sigmoid(logits) if layer.classifier_kind == "sigmoid" else ops.softmax(logits)
    if layer.has_batchnorm:
        p = ops.BatchNormParams(
            _fetch(weights, name, "bn_gamma"),
            _fetch(weights, name, "bn_beta"),
            _fetch(weights, name, "bn_mean"),
            _fetch(weights, name, "bn_var"),
        )
        x = ops.batchnorm_infer(x, p)
    if layer.has_relu:
        x = ops.relu(x)
    return x


def forward(
    g: ModelGraph, weights: Mapping[str, Tensor], image: Tensor, engine: str = "fast"
) -> Tensor:
    """Run the whole graph on one image; no preprocessing is applied here."""
    if engine not in ("fast", "direct"):
        raise ValueError(f"engine must be 'fast' or 'direct', got {engine!r}")
    if image.shape != g.input_shape:
        raise ShapeError(f"graph expects input {g.input_shape}, image has {image.shape}")
    for tname, tshape in weight_specs(g).items():
        t = weights.get(tname)
        if t is None:
            raise KeyError(f"missing weight tensor '{tname}'")
        if t.shape != tshape:
            raise ShapeError(f"weight tensor '{tname}' has shape {t.shape}, expected {tshape}")
    x = image
    for layer in g.layers:
        x = apply_layer(layer, weights, x, engine)
    return x


def _conv(name: str, cin: int, cout: int, k: int = 3, **kw) -> LayerSpec:
    return LayerSpec(
        kind="conv", name=name, kernel=k, in_channels=cin, out_channels=cout,
        has_batchnorm=True, has_relu=True, **kw,
    )


def _dsc(name: str, cin: int, cout: int, k: int = 3, **kw) -> LayerSpec:
    return LayerSpec(
        kind="dsc", name=name, kernel=k, in_channels=cin, out_channels=cout,
        has_batchnorm=True, has_relu=True, **kw,
    )


def _pool(name: str) -> LayerSpec:
    return LayerSpec(kind="maxpool", name=name, kernel=2, stride=2)


def _drop(name: str) -> LayerSpec:
    return LayerSpec(kind="dropout", name=name)


def build_proposed() -> ModelGraph:
    """The bundled 10-layer human-detection net: 3 conv, 5 dsc, bottleneck, final dsc.

    Downsampling happens only through 2x2 max pooling after layers 3, 5, 6, 7
    and 8 (224 -> 112 -> 56 -> 28 -> 14 -> 7). The bottleneck compresses
    512 -> 128 channels with a 1x1 kernel and no batch norm, and the last
    layer's 7x7 valid depthwise collapses the map to 1x1 before a 512-wide
    pointwise, a flatten, and a single sigmoid output. Dropout (an identity
    at inference) sits after layers 1-8.
    """
    layers = [
        _conv("layer1", 3, 64), _drop("drop1"),
        _conv("layer2", 64, 64), _drop("drop2"),
        _conv("layer3", 64, 64), _pool("pool3"), _drop("drop3"),
        _dsc("layer4", 64, 64), _drop("drop4"),
        _dsc("layer5", 64, 64), _pool("pool5"), _drop("drop5"),
        _dsc("layer6", 64, 128), _pool("pool6"), _drop("drop6"),
        _dsc("layer7", 128, 128), _pool("pool7"), _drop("drop7"),
        _dsc("layer8", 128, 512), _pool("pool8"), _drop("drop8"),
        LayerSpec(kind="bottleneck", name="layer9", kernel=1, in_channels=512,
                  out_channels=128, has_relu=True),
        _dsc("layer10", 128, 512, k=7, padding="valid"),
        LayerSpec(kind="flatten", name="flatten"),
        LayerSpec(kind="classifier", name="classifier", in_channels=512, out_channels=1,
                  classifier_kind="sigmoid"),
    ]
    return ModelGraph(name="proposed", input_shape=(224, 224, 3), layers=tuple(layers))


def build_ablation() -> ModelGraph:
    """Seven-layer variant: each stack of small kernels folded into one larger kernel.

    Layer 1 is a 7x7 conv (standing in for three 3x3 layers) and layer 2 a
    5x5 depthwise stage (standing in for two 3x3 layers); pooling follows
    each of the first five layers, then bottleneck and final 7x7 valid dsc as
    in the 10-layer net.
    """
    layers = [
        _conv("layer1", 3, 64, k=7), _pool("pool1"), _drop("drop1"),
        _dsc("layer2", 64, 64, k=5), _pool("pool2"), _drop("drop2"),
        _dsc("layer3", 64, 128), _pool("pool3"), _drop("drop3"),
        _dsc("layer4", 128, 128), _pool("pool4"), _drop("drop4"),
        _dsc("layer5", 128, 512), _pool("pool5"), _drop("drop5"),
        LayerSpec(kind="bottleneck", name="layer6", kernel=1, in_channels=512,
                  out_channels=128, has_relu=True),
        _dsc("layer7", 128, 512, k=7, padding="valid"),
        LayerSpec(kind="flatten", name="flatten"),
        LayerSpec(kind="classifier", name="classifier", in_channels=512, out_channels=1,
                  classifier_kind="sigmoid"),
    ]
    return ModelGraph(name="ablation", input_shape=(224, 224, 3), layers=tuple(layers))


def build_mobilenet() -> ModelGraph:
    """MobileNet body (width 1.0, 224 input) with its 1000-way softmax head.

    The published table marks the last depthwise stage stride 2 while listing
    its input and output both as 7x7; the layer is encoded stride 1 here so
    the declared sizes chain. Included for cost comparison; the head is a
    7x7 average pool into a 1024 -> 1000 classifier.
    """
    chain = [
        # (cin, cout, dw stride)
        (32, 64, 1),
        (64, 128, 2),
        (128, 128, 1),
        (128, 256, 2),
        (256, 256, 1),
        (256, 512, 2),
        (512, 512, 1),
        (512, 512, 1),
        (512, 512, 1),
        (512, 512, 1),
        (512, 512, 1),
        (512, 1024, 2),
        (1024, 1024, 1),
    ]
    layers: list[LayerSpec] = [_conv("layer1", 3, 32, stride=2)]
    for i, (cin, cout, stride) in enumerate(chain, start=2):
        layers.append(_dsc(f"layer{i}", cin, cout, stride=stride))
    layers += [
        LayerSpec(kind="avgpool", name="avgpool", kernel=7, stride=1),
        LayerSpec(kind="flatten", name="flatten"),
        LayerSpec(kind="classifier", name="classifier", in_channels=1024, out_channels=1000,
                  classifier_kind="softmax"),
    ]
    return ModelGraph(name="mobilenet", input_shape=(224, 224, 3), layers=tuple(layers))


def build_lcnn() -> ModelGraph:
    """L-CNN body with its regression head approximated as a 256 -> 2 classifier."""
    chain = [
        (16, 16, 1),
        (16, 32, 2),
        (32, 32, 1),
        (32, 64, 2),
        (64, 64, 1),
        (64, 128, 2),
        (128, 128, 1),
        (128, 128, 1),
        (128, 128, 1),
        (128, 128, 1),
        (128, 128, 1),
        (128, 256, 2),
        (256, 256, 1),
    ]
    layers: list[LayerSpec] = [_conv("layer1", 3, 16, stride=2)]
    for i, (cin, cout, stride) in enumerate(chain, start=2):
        layers.append(_dsc(f"layer{i}", cin, cout, stride=stride))
    layers += [
        LayerSpec(kind="avgpool", name="avgpool", kernel=7, stride=1),
        LayerSpec(kind="flatten", name="flatten"),
        LayerSpec(kind="classifier", name="classifier", in_channels=256, out_channels=2,
                  classifier_kind="softmax"),
    ]
    return ModelGraph(
        name="lcnn",
        input_shape=(224, 224, 3),
        layers=tuple(layers),
        notes=("regression head approximated as a 256->2 classifier for counting",),
    )


_BUILDERS = {
    "proposed": build_proposed,
    "ablation": build_ablation,
    "mobilenet": build_mobilenet,
    "lcnn": build_lcnn,
}


def builder_names() -> tuple[str, ...]:
    return tuple(_BUILDERS)


def build_named(name: str) -> ModelGraph:
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise GraphError(
            f"unknown architecture {name!r}; choose from {', '.join(_BUILDERS)}"
        ) from None


def with_input_shape(g: ModelGraph, shape: tuple[int, int, int]) -> ModelGraph:
    return replace(g, input_shape=tuple(int(d) for d in shape))
