"""Command-line front end: analyze, demo, infer, bench, compare, convert.

Exit codes are stable across subcommands: 0 success, 1 unreadable or missing
files, 2 validation or graph failures (argparse uses 2 for bad flags too).
Results go to standard output, errors to standard error.
"""

from __future__ import annotations

import argparse
import statistics
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import ops
from .analysis import RF_MODES, analyze_model, compare_models, render_csv, render_table
from .archfile import parse_arch
from .graph import (
    GraphError,
    ModelGraph,
    apply_layer,
    build_named,
    builder_names,
    forward,
    seeded_store,
    validate,
    with_input_shape,
)
from .image_io import PnmError, RawTensorError, read_pnm, write_raw
from .model_format import BlobError, open_inplace, serialize
from .tensor import ShapeError, Tensor, seeded_uniform

__all__ = ["BenchResult", "main"]

_STRETCH_NOTE = (
    "inference pipeline: decode PNM, contrast-stretch each channel to 0..255 "
    "(disable with --no-stretch), bilinear-resize to the model's input size, "
    "scale pixels to [0, 1], then run the graph"
)


@dataclass(frozen=True)
class BenchResult:
    """Wall-clock timings for one benched subject, milliseconds."""

    label: str
    times_ms: tuple[float, ...]
    layers: tuple[tuple[str, float], ...] = field(default=())

    def __post_init__(self) -> None:
        if not self.times_ms:
            raise ValueError("a bench needs at least one iteration")

    @property
    def iterations(self) -> int:
        return len(self.times_ms)

    @property
    def median_ms(self) -> float:
        return statistics.median(self.times_ms)

    @property
    def min_ms(self) -> float:
        return min(self.times_ms)

    @property
    def mean_ms(self) -> float:
        return statistics.fmean(self.times_ms)


def _time_ms(fn: Callable[[], object]) -> float:
    start = time.perf_counter_ns()
    fn()
    return (time.perf_counter_ns() - start) / 1e6


def bench_callable(label: str, fn: Callable[[], object], iters: int, warmup: int) -> BenchResult:
    if iters < 1:
        raise ValueError("--iters must be >= 1")
    if warmup < 0:
        raise ValueError("--warmup must be >= 0")
    for _ in range(warmup):
        fn()
    return BenchResult(label, tuple(_time_ms(fn) for _ in range(iters)))


def _parse_dims(text: str, expect: int, what: str) -> tuple[int, ...]:
    parts = text.lower().split("x")
    if len(parts) != expect:
        raise ValueError(f"{what} must have {expect} x-separated integers, got {text!r}")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError:
        raise ValueError(f"{what} must be integers, got {text!r}") from None
    if any(d < 1 for d in dims):
        raise ValueError(f"{what} must be positive, got {text!r}")
    return dims


def _load_graph(arch: Sequence[str]) -> ModelGraph:
    if arch[0] == "file":
        if len(arch) != 2:
            raise GraphError("usage: file <path>")
        text = Path(arch[1]).read_text(encoding="utf-8")
        return parse_arch(text)
    if len(arch) != 1:
        raise GraphError(f"expected one architecture name or 'file <path>', got {arch}")
    return build_named(arch[0])


def _check_graph(g: ModelGraph) -> None:
    problems = validate(g)
    if problems:
        raise GraphError("; ".join(problems))


def _read_file(path: str) -> bytes:
    return Path(path).read_bytes()


def _probability(output: Tensor) -> float:
    values = output.flat
    if values.shape[0] >= 2:
        return float(values[1])
    return float(values[0])


def _prepare_image(raw: bytes, g: ModelGraph, stretch: bool) -> Tensor:
    image = read_pnm(raw)
    if stretch:
        image = ops.contrast_stretch(image)
    h, w, c = g.input_shape
    image = ops.bilinear_resize(image, h, w)
    have = image.shape[2]
    if have != c:
        if have == 1:
            image = Tensor(np.repeat(image.data, c, axis=2))
        elif c == 1:
            image = Tensor(image.data.mean(axis=2, keepdims=True, dtype=np.float64))
        else:
            raise ShapeError(f"model expects {c} channels, image has {have}")
    return Tensor(image.data.astype(np.float64) / 255.0)


def _cmd_analyze(args: argparse.Namespace) -> int:
    g = _load_graph(args.arch)
    if args.input_size:
        g = with_input_shape(g, _parse_dims(args.input_size, 3, "--input-size"))
    _check_graph(g)
    report = analyze_model(g, rf_mode=args.rf_mode)
    sys.stdout.write(render_csv(report) if args.format == "csv" else render_table(report))
    return 0


def _cmd_demo(args: argparse.Namespace) -> int:
    g = _load_graph(args.arch)
    _check_graph(g)
    store = seeded_store(g, args.seed)
    out = args.out or f"{g.name}.lwcm"
    with open(out, "wb") as sink:
        written = serialize(g, store, sink)
    print(f"wrote {out}: {written} bytes, {len(store)} tensors, seed {args.seed}")
    return 0


def _cmd_infer(args: argparse.Namespace) -> int:
    g_view = open_inplace(_read_file(args.model))
    image = _prepare_image(_read_file(args.image), g_view.graph, stretch=not args.no_stretch)
    output = forward(g_view.graph, g_view, image, engine=args.engine)
    print(f"human_prob={_probability(output):.6f}")
    return 0


def _print_bench(result: BenchResult) -> None:
    print(f"{result.label}: {result.iterations} iterations")
    print(
        f"  median {result.median_ms:.3f} ms   min {result.min_ms:.3f} ms"
        f"   mean {result.mean_ms:.3f} ms"
    )
    for name, median in result.layers:
        print(f"  {name:<16} {median:.3f} ms")


def _bench_kernel(args: argparse.Namespace) -> BenchResult:
    dk, m, n, df = args.dk, args.m, args.n, args.df
    image = seeded_uniform((df, df, m), seed=7, lo=0.0, hi=1.0)
    if args.kernel == "conv":
        w = ops.ConvWeights(
            seeded_uniform((dk, dk, m, n), seed=11), seeded_uniform((n,), seed=13)
        )
        subject = lambda: ops.conv2d(image, w)
        label = f"conv dk={dk} m={m} n={n} df={df}"
    else:
        dw = ops.DepthwiseWeights(
            seeded_uniform((dk, dk, m), seed=11), seeded_uniform((m,), seed=13)
        )
        pw = ops.ConvWeights(
            seeded_uniform((1, 1, m, n), seed=17), seeded_uniform((n,), seed=19)
        )
        subject = lambda: ops.dsc_layer(image, dw, pw)
        label = f"dsc dk={dk} m={m} n={n} df={df}"
    return bench_callable(label, subject, args.iters, args.warmup)


def _bench_model(args: argparse.Namespace) -> BenchResult:
    view = open_inplace(_read_file(args.model))
    g = view.graph
    image = seeded_uniform(g.input_shape, seed=7, lo=0.0, hi=1.0)
    whole = bench_callable(
        f"model {g.name}", lambda: forward(g, view, image), args.iters, args.warmup
    )

    # separate pass for the per-layer breakdown
    per_layer: dict[str, list[float]] = {layer.name: [] for layer in g.layers}
    for _ in range(args.iters):
        x = image
        for layer in g.layers:
            start = time.perf_counter_ns()
            x = apply_layer(layer, view, x)
            per_layer[layer.name].append((time.perf_counter_ns() - start) / 1e6)
    layers = tuple(
        (name, statistics.median(times)) for name, times in per_layer.items()
    )
    return BenchResult(whole.label, whole.times_ms, layers)


def _cmd_bench(args: argparse.Namespace) -> int:
    if bool(args.model) == bool(args.kernel):
        raise ValueError("bench needs exactly one of --model or --kernel")
    if args.kernel:
        for flag in ("dk", "m", "n", "df"):
            if getattr(args, flag) is None:
                raise ValueError(f"--kernel mode requires --{flag}")
            if getattr(args, flag) < 1:
                raise ValueError(f"--{flag} must be >= 1")
        result = _bench_kernel(args)
    else:
        result = _bench_model(args)
    _print_bench(result)
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    reports = [analyze_model(build_named(name), rf_mode=args.rf_mode) for name in args.arch]
    sys.stdout.write(compare_models(reports))
    return 0


def _cmd_convert(args: argparse.Namespace) -> int:
    image = read_pnm(_read_file(args.image))
    if args.stretch:
        image = ops.contrast_stretch(image)
    if args.resize:
        rh, rw = _parse_dims(args.resize, 2, "--resize")
        image = ops.bilinear_resize(image, rh, rw)
    with open(args.out, "wb") as sink:
        written = write_raw(image, sink)
    h, w, c = image.shape
    print(f"wrote {args.out}: {written} bytes, {h}x{w}x{c}")
    return 0


def _add_arch_argument(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "arch",
        nargs="+",
        help=f"one of {', '.join(builder_names())}, or: file <path>",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lwcnn",
        description="CNN inference runtime and architecture cost analyzer",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="per-layer cost report for an architecture")
    _add_arch_argument(p)
    p.add_argument("--input-size", help="override input as HxWxC, e.g. 128x64x3")
    p.add_argument("--rf-mode", choices=RF_MODES, default="with-pool")
    p.add_argument("--format", choices=("table", "csv"), default="table")
    p.set_defaults(run=_cmd_analyze)

    p = sub.add_parser("demo", help="write a deterministically seeded model file")
    _add_arch_argument(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path (default <arch>.lwcm)")
    p.set_defaults(run=_cmd_demo)

    p = sub.add_parser("infer", help="run one image through a model file", epilog=_STRETCH_NOTE)
    p.add_argument("--model", required=True, help="path to a .lwcm file")
    p.add_argument("--image", required=True, help="path to a P5/P6 PNM image")
    p.add_argument("--no-stretch", action="store_true", help="skip contrast stretching")
    p.add_argument("--engine", choices=("fast", "direct"), default="fast")
    p.set_defaults(run=_cmd_infer)

    p = sub.add_parser("bench", help="time a model file or a single kernel config")
    p.add_argument("--model", help="path to a .lwcm file")
    p.add_argument("--kernel", choices=("conv", "dsc"))
    p.add_argument("--dk", type=int, help="kernel size")
    p.add_argument("--m", type=int, help="input channels")
    p.add_argument("--n", type=int, help="output channels")
    p.add_argument("--df", type=int, help="square input size")
    p.add_argument("--iters", type=int, default=30)
    p.add_argument("--warmup", type=int, default=5)
    p.set_defaults(run=_cmd_bench)

    p = sub.add_parser("compare", help="side-by-side totals for bundled architectures")
    p.add_argument("arch", nargs="+", help=f"names from: {', '.join(builder_names())}")
    p.add_argument("--rf-mode", choices=RF_MODES, default="with-pool")
    p.set_defaults(run=_cmd_compare)

    p = sub.add_parser("convert", help="PNM image to raw .lwt tensor, optionally preprocessed")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stretch", action="store_true", help="contrast-stretch before writing")
    p.add_argument("--resize", help="bilinear-resize to HxW")
    p.set_defaults(run=_cmd_convert)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.run(args)
    except (PnmError, RawTensorError, BlobError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (GraphError, ShapeError, KeyError, ValueError) as exc:
        message = exc.args[0] if exc.args else exc
        print(f"error: {message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
