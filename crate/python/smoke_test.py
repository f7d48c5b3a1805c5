#!/usr/bin/env python3
"""Smoke test for the daccn_py extension module.

Builds nothing itself: it locates the compiled cdylib under target/, copies
it next to a temp directory under the importable name, and exercises the
exported surface against small hand-computed oracles.

Usage:
    cargo build --release -p daccn-py
    python3 python/smoke_test.py
"""

import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def locate_module():
    candidates = [
        os.path.join(ROOT, "target", "release", "libdaccn_py.so"),
        os.path.join(ROOT, "target", "debug", "libdaccn_py.so"),
        os.path.join(ROOT, "target", "release", "libdaccn_py.dylib"),
        os.path.join(ROOT, "target", "debug", "libdaccn_py.dylib"),
    ]
    for path in candidates:
        if os.path.exists(path):
            return path
    sys.exit("build the extension first: cargo build --release -p daccn-py")


def import_daccn():
    src = locate_module()
    stage = tempfile.mkdtemp(prefix="daccn-py-")
    dst = os.path.join(stage, "daccn_py" + (".so" if src.endswith(".so") else ".dylib"))
    shutil.copyfile(src, dst)
    sys.path.insert(0, stage)
    import daccn_py

    return daccn_py


def approx(a, b, tol=1e-9):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    d = import_daccn()

    # tensor round trip
    t = d.Tensor([1.0, 2.0, 3.0, 4.0, 5.0, 6.0], [1, 1, 2, 3])
    assert t.shape == [1, 1, 2, 3]
    assert t.values() == [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]

    # cumulative convolution vs a brute-force loop with an identity kernel:
    # weight picks out the center pixel, so the operator reduces to the
    # activated running mean of each column from the bottom up.
    h, w = 4, 3
    col = [float(i * w + j + 1) for i in range(h) for j in range(w)]
    x = d.Tensor(col, [1, 1, h, w])
    ident = [0.0] * 9
    ident[4] = 1.0
    weight = d.Tensor(ident, [1, 1, 3, 3])
    bias = d.Tensor([0.0], [1])
    out = d.cumulative_convolution(x, weight, bias)
    got = out.values()
    for p in range(h):
        for q in range(w):
            mean = sum(col[i * w + q] for i in range(p, h)) / (h - p)
            expect = mean if mean >= 0 else math.exp(mean) - 1.0
            approx(got[p * w + q], expect, 1e-12)
    print("ok cumulative_convolution matches brute force")

    # direction-aware block at unit scales is exactly the bare block; verify
    # the constant-input fixed point on the interior instead (bit-identity is
    # covered by the Rust acceptance suite)
    n = 12
    const = d.Tensor([0.5] * (2 * n * n), [1, 2, n, n])
    k = 1.0 / math.sqrt(2 * 9)
    wvals = [((i * 37) % 11 - 5) / 11.0 * k for i in range(2 * 2 * 9)]
    w0 = d.Tensor(wvals, [2, 2, 3, 3])
    b0 = d.Tensor([0.01, -0.02], [2])
    out_unit = d.direction_aware_block(const, 1.0, 1.0, w0, b0, w0, b0)
    out_scaled = d.direction_aware_block(const, 1.25, 0.9, w0, b0, w0, b0)
    assert out_unit.shape == out_scaled.shape == [1, 2, n, n]
    ou, os_ = out_unit.values(), out_scaled.values()
    # a pixel whose resampled windows stay clear of the conv borders
    centre = 6 * n + 6
    approx(ou[centre], os_[centre], 1e-6)
    print("ok direction_aware_block constant fixed point")

    # affine grid dimensions
    _, oh, ow = d.affine_grid(1.0, 2.0, 4, 6, False)
    assert (oh, ow) == (8, 6)
    _, oh, ow = d.affine_grid(0.5, 1.0, 4, 6, False)
    assert (oh, ow) == (4, 3)
    print("ok affine_grid dimension arithmetic")

    # SSIM of an image with itself is 1 everywhere
    img = d.Tensor([((i * 13) % 7) / 7.0 for i in range(3 * 25)], [1, 3, 5, 5])
    s = d.ssim(img, img)
    assert all(abs(v - 1.0) < 1e-12 for v in s.values())
    print("ok ssim self-similarity")

    # smoothness of constant disparity is zero
    flat = d.Tensor([0.4] * 30, [1, 1, 5, 6])
    rgb = d.Tensor([0.3] * (3 * 30), [1, 3, 5, 6])
    approx(d.smoothness_loss(flat, rgb), 0.0, 1e-12)
    print("ok smoothness fixed point")

    # metric unit values: pred = 1.1 * gt
    gt = d.Tensor([2.0, 4.0, 8.0, 5.0], [1, 1, 2, 2])
    pred = d.Tensor([2.2, 4.4, 8.8, 5.5], [1, 1, 2, 2])
    m = d.metrics(pred, gt, median_scaling=False)
    approx(m["abs_rel"], 0.1, 1e-9)
    assert m["delta1"] == 1.0
    m = d.metrics(gt, gt, median_scaling=False)
    assert m["abs_rel"] == 0.0 and m["delta3"] == 1.0
    print("ok depth metrics")

    # scene generation is deterministic and photometrically consistent
    sc = d.scene(7, 48, 64)
    sc2 = d.scene(7, 48, 64)
    assert sc["target"].values() == sc2["target"].values()
    target = sc["target"]
    depth = sc["depth"]
    fx, fy, ox, oy = sc["intrinsics"]
    pose = sc["poses"][0]
    # recover axis-angle is not exposed; warp with identity instead and
    # confirm the identity warp reproduces the source
    src = d.Tensor(target.values(), [1] + target.shape)
    syn, mask = d.warp_image(src, depth, [0.0, 0.0, 0.0], [0.0, 0.0, 0.0], fx, fy, ox, oy)
    diffs = [abs(a - b) for a, b in zip(syn.values(), src.values())]
    assert max(diffs) < 1e-9, max(diffs)
    assert all(v == 1.0 for v in mask.values())
    print("ok scene generation and identity warp")

    # gradient checks
    checks = d.gradcheck()
    failing = [c for c in checks if not c["pass"]]
    assert not failing, failing
    print(f"ok gradcheck suite ({len(checks)} operations)")

    # a short training run end to end
    cfg = """
iterations = 3
batch_size = 1
num_samples = 4
out_dir = "{out}"

[model]
branch_channels = [3, 4, 5, 6]
input_h = 32
input_w = 48
d_min = 1.5
d_max = 16.0

[scene]
image_h = 32
image_w = 48
""".format(out=os.path.join(tempfile.mkdtemp(prefix="daccn-train-"), "run"))
    summary = d.train(cfg)
    assert math.isfinite(summary["final_loss"])
    assert os.path.exists(summary["checkpoint"])
    print("ok training smoke run (loss {:.4f} -> {:.4f})".format(summary["initial_loss"], summary["final_loss"]))

    print("all smoke tests passed")


if __name__ == "__main__":
    main()
