"""Acceptance gate: nine analytic and property-based checks over the package.

Each test prints one `[criterion N] PASS/FAIL` line; run with `-s` to see
them. Tolerances and case counts are pinned inside each test on purpose;
loosening them is a behavior change, not a test fix.
"""

from __future__ import annotations

import contextlib
import io
import json
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from lwcnn.analysis import (
    ConvCost,
    analyze_model,
    compare_models,
    conv_macs,
    dsc_macs,
    receptive_field,
    rf_chain,
)
from lwcnn.cli import bench_callable, main
from lwcnn.graph import (
    LayerSpec,
    ModelGraph,
    build_ablation,
    build_mobilenet,
    build_proposed,
    forward,
    infer_shapes,
    seeded_store,
    validate,
    weight_specs,
    zero_store,
)
from lwcnn.model_format import ChecksumError, deserialize, open_inplace, serialize_bytes
from lwcnn.ops import ConvWeights, DepthwiseWeights, conv2d, dsc_layer
from lwcnn.ops_direct import conv2d_direct, conv2d_direct_counted, depthwise_direct
from lwcnn.tensor import Prng, Tensor, seeded_uniform

DATA = Path(__file__).parent / "data"


@contextlib.contextmanager
def criterion(n: int, description: str):
    try:
        yield
    except BaseException:
        print(f"[criterion {n}] FAIL: {description}")
        raise
    print(f"[criterion {n}] PASS: {description}")


def _rel_error(a: Tensor, b: Tensor) -> float:
    scale = max(float(np.abs(b.data).max()), 1e-12)
    return float(np.abs(a.data.astype(np.float64) - b.data.astype(np.float64)).max()) / scale


def test_criterion_1_cost_ratio_identity():
    with criterion(1, "dsc/conv MAC ratio equals 1/N + 1/Dk^2, exactly and in float"):
        for dk in (1, 3, 5, 7):
            for m in (1, 3, 16, 64):
                for n in (1, 3, 16, 64):
                    for df in (7, 28, 224):
                        c = ConvCost(kernel=dk, in_channels=m, out_channels=n, size=df)
                        exact = Fraction(dsc_macs(c), conv_macs(c))
                        assert exact == Fraction(1, n) + Fraction(1, dk * dk)
                        assert abs(dsc_macs(c) / conv_macs(c) - (1 / n + 1 / dk**2)) <= 1e-12


def test_criterion_2_mac_spot_values_recounted():
    with criterion(2, "MAC spot values re-derived by the instrumented multiply counter"):
        start = time.perf_counter()
        big = ConvCost(kernel=3, in_channels=3, out_channels=32, size=224)
        assert conv_macs(big) == 43_352_064
        assert dsc_macs(big) == 6_171_648

        # count actual multiplies on the 28x28 instance, then scale by (224/28)^2
        image = seeded_uniform((28, 28, 3), 101, -1.0, 1.0)
        w = ConvWeights(seeded_uniform((3, 3, 3, 32), 102), seeded_uniform((32,), 103))
        _, conv_counted = conv2d_direct_counted(image, w)
        assert conv_counted * 64 == 43_352_064

        dw = DepthwiseWeights(seeded_uniform((3, 3, 3), 104), seeded_uniform((3,), 105))
        depthwise_counted = 0
        for ch in range(3):
            single = Tensor(image.data[:, :, ch:ch + 1])
            cw = ConvWeights(
                Tensor(dw.kernels.data[:, :, ch].reshape(3, 3, 1, 1)),
                Tensor(dw.bias.data[ch:ch + 1]),
            )
            _, macs = conv2d_direct_counted(single, cw)
            depthwise_counted += macs
        pw = ConvWeights(seeded_uniform((1, 1, 3, 32), 106), seeded_uniform((32,), 107))
        _, pointwise_counted = conv2d_direct_counted(image, pw)
        assert (depthwise_counted + pointwise_counted) * 64 == 6_171_648
        assert time.perf_counter() - start < 10


def test_criterion_3_receptive_field_claims():
    with criterion(3, "kernel stacking equivalences and matched-prefix RF equality"):
        assert receptive_field([(3, 1)] * 3) == 7
        assert receptive_field([(3, 1)] * 2) == 5

        proposed = rf_chain(build_proposed(), "conv-only")
        ablation = rf_chain(build_ablation(), "conv-only")
        # layers 1-3 fold into ablation layer 1, layers 4-5 into layer 2;
        # everything after matches one to one
        matched = [(3, 1), (5, 2), (6, 3), (7, 4), (8, 5), (9, 6), (10, 7)]
        for p_len, a_len in matched:
            assert receptive_field(proposed[:p_len]) == receptive_field(ablation[:a_len])
        for mode in ("conv-only", "with-pool"):
            assert receptive_field(rf_chain(build_proposed(), mode)) == receptive_field(
                rf_chain(build_ablation(), mode)
            )


def test_criterion_4_oracle_equivalence():
    with criterion(4, "lowered kernels match the direct loops over 220 seeded configs"):
        start = time.perf_counter()
        prng = Prng(2024)
        checked = 0
        for case in range(220):
            k = prng.choice((1, 3, 5))
            h = k + prng.randrange(14)
            w = k + prng.randrange(14)
            cin = 1 + prng.randrange(8)
            cout = 1 + prng.randrange(8)
            stride = 1 + prng.randrange(3)
            padding = prng.choice(("same", "valid"))
            base = case * 10 + 1

            image = seeded_uniform((h, w, cin), base, -1.0, 1.0)
            cw = ConvWeights(
                seeded_uniform((k, k, cin, cout), base + 1, -0.5, 0.5),
                seeded_uniform((cout,), base + 2, -0.5, 0.5),
            )
            fast = conv2d(image, cw, stride, padding)
            direct = conv2d_direct(image, cw, stride, padding)
            assert fast.shape == direct.shape
            assert _rel_error(fast, direct) <= 1e-5

            dw = DepthwiseWeights(
                seeded_uniform((k, k, cin), base + 3, -0.5, 0.5),
                seeded_uniform((cin,), base + 4, -0.5, 0.5),
            )
            pw = ConvWeights(
                seeded_uniform((1, 1, cin, cout), base + 5, -0.5, 0.5),
                seeded_uniform((cout,), base + 6, -0.5, 0.5),
            )
            fused = dsc_layer(image, dw, pw, stride, padding)
            composed = conv2d_direct(depthwise_direct(image, dw, stride, padding), pw)
            assert fused.shape == composed.shape
            assert _rel_error(fused, composed) <= 1e-5
            checked += 1
        assert checked >= 200
        assert time.perf_counter() - start < 60


def test_criterion_5_architecture_fidelity():
    with criterion(5, "bundled 10-layer and 7-layer nets have the declared structure"):
        proposed = build_proposed()
        assert validate(proposed) == []
        weighted = [l for l in proposed.layers if l.kind in ("conv", "dsc", "bottleneck")]
        assert len(weighted) == 10

        bottleneck = weighted[8]
        assert bottleneck.kind == "bottleneck"
        assert bottleneck.kernel == 1
        assert not bottleneck.has_batchnorm

        final = weighted[9]
        assert final.kind == "dsc"
        assert final.kernel == 7
        assert final.padding == "valid"

        shapes = infer_shapes(proposed)
        by_layer = dict(zip((l.name for l in proposed.layers), shapes))
        assert by_layer["layer10"] == (1, 1, 512)
        assert by_layer["flatten"] == (512,)
        assert by_layer["classifier"] == (1,)
        head = proposed.layers[-1]
        assert head.classifier_kind == "sigmoid"
        assert head.out_channels == 1

        ablation = build_ablation()
        assert validate(ablation) == []
        assert sum(1 for l in ablation.layers if l.kind in ("conv", "dsc", "bottleneck")) == 7
        ashapes = infer_shapes(ablation)
        aby = dict(zip((l.name for l in ablation.layers), ashapes))
        assert aby["layer7"] == (1, 1, 512)
        assert aby["flatten"] == (512,)
        assert aby["classifier"] == (1,)


def test_criterion_6_parameter_count_oracle():
    with criterion(6, "weight totals match the hand-summed list and payload bytes"):
        # hand-summed convolution and classifier weight elements, layer by layer:
        #   layer1  3x3x3x64          = 1,728
        #   layer2  3x3x64x64         = 36,864
        #   layer3  3x3x64x64         = 36,864
        #   layer4  3x3x64 + 64x64    = 4,672
        #   layer5  3x3x64 + 64x64    = 4,672
        #   layer6  3x3x64 + 64x128   = 8,768
        #   layer7  3x3x128 + 128x128 = 17,536
        #   layer8  3x3x128 + 128x512 = 66,688
        #   layer9  1x1x512x128       = 65,536
        #   layer10 7x7x128 + 128x512 = 71,808
        #   classifier 512x1          = 512
        hand_summed = [
            1_728, 36_864, 36_864, 4_672, 4_672, 8_768, 17_536, 66_688,
            65_536, 71_808, 512,
        ]
        assert sum(hand_summed) == 315_648

        report = analyze_model(build_proposed())
        assert report.weights_total == 315_648
        per_layer = [r.weights for r in report.rows if r.weights]
        assert per_layer == hand_summed

        # serialized payload bytes: 4 bytes per element including biases and
        # batch norm tensors
        g = build_proposed()
        blob = serialize_bytes(g, seeded_store(g, 0))
        view = open_inplace(blob)
        payload_bytes = sum(view._entries[name][2] for name in view.names())
        assert report.params_total == 324_353
        assert payload_bytes == 4 * 324_353 == 1_297_412


def _random_store_case(prng: Prng):
    kind = prng.choice(("conv", "dsc", "bottleneck"))
    kernel = 1 if kind == "bottleneck" else prng.choice((1, 3, 5))
    cin = 1 + prng.randrange(4)
    cout = 1 + prng.randrange(4)
    layer = LayerSpec(
        kind=kind, name=f"stage{prng.randrange(90)}", kernel=kernel,
        stride=1 + prng.randrange(2), in_channels=cin, out_channels=cout,
        has_batchnorm=kind != "bottleneck" and prng.randrange(2) == 0,
        has_relu=prng.randrange(2) == 0,
    )
    g = ModelGraph(
        name=f"case{prng.randrange(1000)}",
        input_shape=(kernel + prng.randrange(6), kernel + prng.randrange(6), cin),
        layers=(layer,),
        notes=("roundtrip case",) if prng.randrange(3) == 0 else (),
    )
    store = seeded_store(g, prng.next_u64())
    for i in range(prng.randrange(3)):
        shape = tuple(1 + prng.randrange(5) for _ in range(1 + prng.randrange(3)))
        store[f"extra.{i}-{prng.randrange(50)}"] = seeded_uniform(shape, prng.next_u64())
    return g, store


def test_criterion_7_serialization_properties():
    with criterion(7, "1,000 bitwise roundtrips, corruption detection, zero-copy views"):
        start = time.perf_counter()
        prng = Prng(777)
        for _ in range(1000):
            g, store = _random_store_case(prng)
            blob = serialize_bytes(g, store)
            g2, store2 = deserialize(blob)
            assert g2 == g
            assert store2.keys() == store.keys()
            for name in store:
                assert store2[name].shape == store[name].shape
                assert store2[name].tobytes() == store[name].tobytes()

        # single-byte corruption in the index or payload must fail the checksum
        g, store = _random_store_case(prng)
        blob = serialize_bytes(g, store)
        index_off, index_len, payload_off, payload_len = np.frombuffer(
            blob[32:64], dtype="<u8"
        )
        assert payload_len > 0
        for _ in range(150):
            corrupt = bytearray(blob)
            if prng.randrange(2):
                pos = int(index_off) + prng.randrange(int(index_len))
            else:
                pos = int(payload_off) + prng.randrange(int(payload_len))
            corrupt[pos] ^= 1 << prng.randrange(8)
            try:
                deserialize(bytes(corrupt))
            except ChecksumError:
                pass
            else:
                raise AssertionError(f"corruption at byte {pos} went undetected")

        # in-place views equal the copies and share memory with the blob
        g = build_proposed()
        blob = serialize_bytes(g, seeded_store(g, 1))
        view = open_inplace(blob)
        _, copies = deserialize(blob)
        raw = np.frombuffer(blob, dtype=np.uint8)
        for name in copies:
            t = view[name]
            assert t == copies[name]
            assert np.shares_memory(t.data, raw)
        assert time.perf_counter() - start < 60


def _run_cli(argv: list[str]) -> tuple[int, str]:
    out = io.StringIO()
    with contextlib.redirect_stdout(out):
        code = main(argv)
    return code, out.getvalue()


def test_criterion_8_end_to_end_determinism(tmp_path):
    with criterion(8, "seeded demo + fixed image reproduce the golden probability"):
        golden = json.loads((DATA / "golden_infer.json").read_text())
        image = DATA / golden["image"]
        model = tmp_path / "proposed.lwcm"

        code, _ = _run_cli(["demo", "proposed", "--seed", str(golden["seed"]),
                            "--out", str(model)])
        assert code == 0

        code, out = _run_cli(["infer", "--model", str(model), "--image", str(image)])
        assert code == 0
        prob = float(out.strip().split("=")[1])
        assert abs(prob - golden["human_prob"]) <= golden["tolerance"]

        code, out = _run_cli(["infer", "--model", str(model), "--image", str(image),
                              "--engine", "direct"])
        assert code == 0
        direct_prob = float(out.strip().split("=")[1])
        assert abs(direct_prob - prob) <= golden["tolerance"]

        g = build_proposed()
        x = Tensor(np.zeros(g.input_shape, dtype=np.float32) + 0.5)
        out = forward(g, zero_store(g), x)
        assert float(out.flat[0]) == 0.5


def test_criterion_9_directional_costs():
    with criterion(9, "dsc beats conv at the reference config; weight payloads order"):
        df, m, n, dk = 56, 32, 64, 3
        image = seeded_uniform((df, df, m), 7, 0.0, 1.0)
        cw = ConvWeights(seeded_uniform((dk, dk, m, n), 11), seeded_uniform((n,), 13))
        dw = DepthwiseWeights(seeded_uniform((dk, dk, m), 11), seeded_uniform((m,), 13))
        pw = ConvWeights(seeded_uniform((1, 1, m, n), 17), seeded_uniform((n,), 19))

        conv_bench = bench_callable("conv", lambda: conv2d(image, cw), iters=30, warmup=5)
        dsc_bench = bench_callable("dsc", lambda: dsc_layer(image, dw, pw), iters=30, warmup=5)
        assert dsc_bench.median_ms < conv_bench.median_ms, (
            f"dsc median {dsc_bench.median_ms:.3f} ms not below "
            f"conv median {conv_bench.median_ms:.3f} ms"
        )

        proposed = analyze_model(build_proposed())
        mobilenet = analyze_model(build_mobilenet())
        assert proposed.weight_bytes < mobilenet.weight_bytes
        table = compare_models([proposed, mobilenet])
        row = next(line for line in table.splitlines() if line.startswith("weight MB"))
        first, second = (float(v) for v in row.split()[2:])
        assert first < second
