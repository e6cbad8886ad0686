"""Architecture cost accounting: MACs, parameters, and receptive fields.

Cost functions count multiply-accumulates (MACs), never doubled into FLOPs.
The conventional and depthwise-separable counts share one closed form whose
ratio reduces to 1/N + 1/Dk^2 independent of spatial size and stride; the
identity holds exactly in rational arithmetic. Whole-model reports reuse the
graph's shape inference so strided and valid-padded layers are charged for
the outputs they actually produce.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .graph import WEIGHTED_KINDS, LayerSpec, ModelGraph, infer_shapes

__all__ = [
    "ConvCost",
    "CostReport",
    "LayerCost",
    "RF_MODES",
    "analyze_model",
    "compare_models",
    "conv_macs",
    "dsc_macs",
    "dsc_ratio",
    "layer_params",
    "param_breakdown",
    "receptive_field",
    "render_csv",
    "render_table",
    "rf_chain",
]

RF_MODES = ("with-pool", "conv-only")

# (f, s) pairs, applied in order
RFChain = Sequence[tuple[int, int]]


@dataclass(frozen=True)
class ConvCost:
    """One convolution's cost inputs: square kernel and square input map."""

    kernel: int
    in_channels: int
    out_channels: int
    size: int
    stride: int = 1

    def __post_init__(self) -> None:
        for field in ("kernel", "in_channels", "out_channels", "size", "stride"):
            if getattr(self, field) < 1:
                raise ValueError(f"ConvCost.{field} must be positive")

    @property
    def out_size(self) -> int:
        return -(-self.size // self.stride)


def conv_macs(c: ConvCost) -> int:
    """Multiplies in a conventional convolution, one per kernel tap per output."""
    return c.kernel * c.kernel * c.in_channels * c.out_channels * c.out_size ** 2


def dsc_macs(c: ConvCost) -> int:
    """Multiplies in a depthwise stage plus its pointwise projection."""
    positions = c.out_size ** 2
    depthwise = c.kernel * c.kernel * c.in_channels * positions
    pointwise = c.in_channels * c.out_channels * positions
    return depthwise + pointwise


def dsc_ratio(kernel: int, out_channels: int) -> Fraction:
    """Exact dsc_macs/conv_macs for any matching config: 1/N + 1/Dk^2.

    Note the ratio exceeds 1 for a 1x1 kernel (separation only pays off when
    the kernel has spatial extent).
    """
    if kernel < 1 or out_channels < 1:
        raise ValueError("kernel and out_channels must be positive")
    return Fraction(1, out_channels) + Fraction(1, kernel * kernel)


def receptive_field(chain: RFChain) -> int:
    """Accumulated receptive field of a kernel/stride chain, applied in order."""
    rf = 1
    jump = 1
    for f, s in chain:
        if f < 1 or s < 1:
            raise ValueError(f"kernel and stride must be >= 1, got ({f}, {s})")
        rf += (f - 1) * jump
        jump *= s
    return rf


def rf_chain(g: ModelGraph, mode: str = "with-pool") -> list[tuple[int, int]]:
    """Kernel/stride pairs feeding receptive_field.

    "with-pool" counts weighted layers and pooling; "conv-only" counts
    weighted layers alone, reproducing the kernel-stacking equivalences.
    """
    if mode not in RF_MODES:
        raise ValueError(f"rf mode must be one of {RF_MODES}, got {mode!r}")
    pairs: list[tuple[int, int]] = []
    for layer in g.layers:
        if layer.kind in WEIGHTED_KINDS:
            pairs.append((layer.kernel, layer.stride))
        elif layer.kind in ("maxpool", "avgpool") and mode == "with-pool":
            pairs.append((layer.kernel, layer.stride))
    return pairs


def param_breakdown(spec: LayerSpec) -> tuple[int, int, int]:
    """(weight, bias, batch-norm) element counts for one layer."""
    k, cin, cout = spec.kernel, spec.in_channels, spec.out_channels
    if spec.kind in ("conv", "bottleneck"):
        weights, biases = k * k * cin * cout, cout
    elif spec.kind == "dsc":
        weights, biases = k * k * cin + cin * cout, cin + cout
    elif spec.kind == "classifier":
        weights, biases = cin * cout, cout
    else:
        weights, biases = 0, 0
    batchnorm = 4 * cout if spec.has_batchnorm else 0
    return weights, biases, batchnorm


def layer_params(spec: LayerSpec) -> int:
    """Total learned elements in one layer, batch norm included."""
    return sum(param_breakdown(spec))


def _layer_macs(spec: LayerSpec, out_shape: tuple[int, ...]) -> int:
    if spec.kind == "classifier":
        return spec.in_channels * spec.out_channels
    if spec.kind not in WEIGHTED_KINDS:
        return 0
    oh, ow = out_shape[0], out_shape[1]
    k, cin, cout = spec.kernel, spec.in_channels, spec.out_channels
    if spec.kind == "dsc":
        return (k * k * cin + cin * cout) * oh * ow
    return k * k * cin * cout * oh * ow


@dataclass(frozen=True)
class LayerCost:
    """One report row; rf is the cumulative receptive field after this layer."""

    name: str
    kind: str
    out_shape: tuple[int, ...]
    weights: int
    biases: int
    batchnorm: int
    macs: int
    rf: int

    @property
    def params(self) -> int:
        return self.weights + self.biases + self.batchnorm


@dataclass(frozen=True)
class CostReport:
    model: str
    rf_mode: str
    rows: tuple[LayerCost, ...]
    notes: tuple[str, ...] = ()

    @property
    def weights_total(self) -> int:
        return sum(r.weights for r in self.rows)

    @property
    def biases_total(self) -> int:
        return sum(r.biases for r in self.rows)

    @property
    def batchnorm_total(self) -> int:
        return sum(r.batchnorm for r in self.rows)

    @property
    def params_total(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def macs_total(self) -> int:
        return sum(r.macs for r in self.rows)

    @property
    def weight_bytes(self) -> int:
        return 4 * self.params_total

    @property
    def receptive_field(self) -> int:
        return self.rows[-1].rf if self.rows else 1


def analyze_model(g: ModelGraph, rf_mode: str = "with-pool") -> CostReport:
    """Per-layer cost rows plus totals; raises GraphError if shapes do not chain."""
    if rf_mode not in RF_MODES:
        raise ValueError(f"rf mode must be one of {RF_MODES}, got {rf_mode!r}")
    shapes = infer_shapes(g)
    rows: list[LayerCost] = []
    rf = 1
    jump = 1
    for layer, out_shape in zip(g.layers, shapes):
        counts_rf = layer.kind in WEIGHTED_KINDS or (
            rf_mode == "with-pool" and layer.kind in ("maxpool", "avgpool")
        )
        if counts_rf:
            rf += (layer.kernel - 1) * jump
            jump *= layer.stride
        weights, biases, batchnorm = param_breakdown(layer)
        rows.append(
            LayerCost(
                name=layer.name,
                kind=layer.kind,
                out_shape=out_shape,
                weights=weights,
                biases=biases,
                batchnorm=batchnorm,
                macs=_layer_macs(layer, out_shape),
                rf=rf,
            )
        )
    return CostReport(model=g.name, rf_mode=rf_mode, rows=tuple(rows), notes=g.notes)


def _shape_str(shape: tuple[int, ...]) -> str:
    return "x".join(str(d) for d in shape)


def render_table(report: CostReport) -> str:
    """Aligned plain-text cost table with totals and footer notes."""
    headers = ("layer", "kind", "out_shape", "weights", "bias", "bn", "params", "macs", "rf")
    body = [
        (
            r.name, r.kind, _shape_str(r.out_shape), f"{r.weights:,}", f"{r.biases:,}",
            f"{r.batchnorm:,}", f"{r.params:,}", f"{r.macs:,}", str(r.rf),
        )
        for r in report.rows
    ]
    total = (
        "total", "", "", f"{report.weights_total:,}", f"{report.biases_total:,}",
        f"{report.batchnorm_total:,}", f"{report.params_total:,}",
        f"{report.macs_total:,}", str(report.receptive_field),
    )
    widths = [
        max(len(headers[i]), *(len(row[i]) for row in body + [total]))
        for i in range(len(headers))
    ]

    def fmt(cells: tuple[str, ...]) -> str:
        padded = [
            cells[i].ljust(widths[i]) if i < 3 else cells[i].rjust(widths[i])
            for i in range(len(cells))
        ]
        return "  ".join(padded).rstrip()

    rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
    lines = [f"model: {report.model}", fmt(headers), rule]
    lines += [fmt(row) for row in body]
    lines += [rule, fmt(total)]
    lines.append(f"weight bytes: {report.weight_bytes:,} (4 B per element)")
    lines.append(f"rf mode: {report.rf_mode}")
    lines.append("macs charge strided and valid-padded layers by actual output size")
    lines += [f"note: {note}" for note in report.notes]
    return "\n".join(lines) + "\n"


def render_csv(report: CostReport) -> str:
    """Machine-readable export: layer,kind,out_shape,params,macs,rf."""
    lines = ["layer,kind,out_shape,params,macs,rf"]
    lines += [
        f"{r.name},{r.kind},{_shape_str(r.out_shape)},{r.params},{r.macs},{r.rf}"
        for r in report.rows
    ]
    return "\n".join(lines) + "\n"


def compare_models(reports: Iterable[CostReport]) -> str:
    """Side-by-side totals, one column per model."""
    reports = list(reports)
    if not reports:
        raise ValueError("compare_models needs at least one report")
    metrics = [
        ("params", lambda r: f"{r.params_total:,}"),
        ("macs", lambda r: f"{r.macs_total:,}"),
        ("weight MB", lambda r: f"{r.weight_bytes / 1e6:.2f}"),
        ("rf", lambda r: str(r.receptive_field)),
    ]
    headers = ["metric"] + [r.model for r in reports]
    rows = [[label] + [value(r) for r in reports] for label, value in metrics]
    widths = [
        max(len(headers[i]), *(len(row[i]) for row in rows))
        for i in range(len(headers))
    ]
    lines = [
        "  ".join(
            (cell.ljust(widths[i]) if i == 0 else cell.rjust(widths[i]))
            for i, cell in enumerate(line)
        ).rstrip()
        for line in [headers] + rows
    ]
    lines.insert(1, "-" * max(len(line) for line in lines))
    return "\n".join(lines) + "\n"
