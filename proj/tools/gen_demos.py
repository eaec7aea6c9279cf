#!/usr/bin/env python3
"""Builds the demo workloads under fixtures/demo/: manifests with weight blobs, input tensors
and few-shot samples. Thresholds are tuned with `--tune` against the npu-deploy binary and then
frozen in THRESHOLDS below."""
import argparse
import json
import math
import pathlib
import struct
import subprocess
import tempfile

import numpy as np

T = 4

# (kind, out_channels, kernel, stride, bit_par)
ARCH = {
    "image": {
        "name": "akidanet_like_demo", "input": (128, 128, 3), "accuracy": 0.80,
        "layers": [("input_conv", 32, (3, 3), 2, 8), ("depthwise_conv", 0, (3, 3), 1, 4),
                   ("pointwise_conv", 32, None, 1, 4), ("depthwise_conv", 0, (3, 3), 2, 4),
                   ("pointwise_conv", 64, None, 1, 4), ("depthwise_conv", 0, (3, 3), 2, 4),
                   ("pointwise_conv", 128, None, 1, 4), ("fully_connected", 10, None, 1, 4)],
    },
    "video": {
        "name": "yolo_like_demo", "input": (160, 160, 3), "accuracy": None,
        "layers": [("input_conv", 16, (3, 3), 1, 8), ("conv", 32, (3, 3), 2, 4),
                   ("depthwise_conv", 0, (3, 3), 1, 4), ("pointwise_conv", 64, None, 1, 4),
                   ("depthwise_conv", 0, (3, 3), 2, 4), ("pointwise_conv", 128, None, 1, 4),
                   ("depthwise_conv", 0, (3, 3), 1, 4), ("pointwise_conv", 128, None, 1, 4),
                   ("depthwise_conv", 0, (3, 3), 2, 4), ("pointwise_conv", 256, None, 1, 4),
                   ("pointwise_conv", 30, None, 1, 8)],
    },
    "keyword": {
        "name": "dscnn_tiny_demo", "input": (49, 10, 1), "accuracy": 0.9173,
        "layers": [("input_conv", 4, (10, 4), 2, 8), ("depthwise_conv", 0, (3, 3), 1, 8),
                   ("pointwise_conv", 4, None, 1, 8), ("depthwise_conv", 0, (3, 3), 2, 8),
                   ("fully_connected", 12, None, 1, 8)],
    },
    "keyword_learn": {
        "name": "dscnn_learn_demo", "input": (49, 10, 1), "accuracy": None,
        "layers": [("input_conv", 32, (10, 4), 2, 8), ("depthwise_conv", 0, (3, 3), 1, 4),
                   ("pointwise_conv", 24, None, 1, 4), ("depthwise_conv", 0, (3, 3), 2, 4),
                   ("fully_connected", 12, None, 1, 4)],
    },
}

# Per-layer (weight density, positive share) and the spike rate targeted by --tune.
KNOBS = {
    "image": {"input_density": 0.12, "density": 0.5, "rates": [0.15, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2]},
    "video": {"input_density": 0.015, "density": 0.5, "rates": [0.03] * 10 + [0.05]},
    "keyword": {"input_density": 0.5, "density": 0.7, "rates": [0.2, 0.2, 0.2, 0.2, 0.3]},
    "keyword_learn": {"input_density": 0.04, "density": 0.5, "rates": [0.008, 0.015, 0.015, 0.02, 0.3]},
}

THRESHOLDS = {
    'image': [11, 4, 20, 5, 19, 4, 33, 24916],
    'video': [7, 40, 6, 13, 7, 22, 6, 40, 6, 40, 47],
    'keyword': [41, 6, 1, 3, 97],
    'keyword_learn': [28, 4, 11, 4, 35],
}


def layers_for(arch):
    h, w, c = arch["input"]
    out = []
    for i, (kind, oc, k, s, bp) in enumerate(arch["layers"]):
        layer = {"name": f"{kind.split('_')[0]}{i}", "kind": kind, "in_shape": [h, w, c], "bit_par": bp, "bit_dat": 1}
        if kind == "fully_connected":
            layer["out_shape"] = [1, 1, oc]
            layer["n_weights"] = h * w * c * oc
            nb = oc
        else:
            if kind == "pointwise_conv":
                k = (1, 1)
            if kind == "depthwise_conv":
                oc = c
            oh, ow = math.ceil(h / s), math.ceil(w / s)
            layer.update({"out_shape": [oh, ow, oc], "kernel": list(k), "stride": s, "padding": "same"})
            layer["n_weights"] = k[0] * k[1] * (1 if kind == "depthwise_conv" else c) * oc
            nb = oc
        layer["n_bias"] = nb
        out.append(layer)
        h, w, c = layer["out_shape"]
    return out


def pack(values, bits):
    out = bytearray()
    acc = 0
    nbits = 0
    mask = (1 << bits) - 1
    for v in values:
        acc |= (int(v) & mask) << nbits
        nbits += bits
        while nbits >= 8:
            out.append(acc & 0xFF)
            acc >>= 8
            nbits -= 8
    if nbits:
        out.append(acc & 0xFF)
    return bytes(out)


def draw_weights(rng, layer, density):
    bp = layer["bit_par"]
    hi = min(7, (1 << (bp - 1)) - 1)
    n = layer["n_weights"]
    w = rng.integers(1, hi + 1, size=n)
    w = np.where(rng.random(n) < 0.25, -w, w)
    w = np.where(rng.random(n) < density, w, 0)
    return w.astype(np.int64), np.zeros(layer["n_bias"], dtype=np.int64)


def write_tensor(path, shape, values):
    h, w, c = shape
    with open(path, "wb") as f:
        f.write(b"NPUT" + struct.pack("<IIHH", h, w, c, 1) + bytes(int(v) for v in values))


def sparse_input(rng, shape, density):
    n = shape[0] * shape[1] * shape[2]
    v = rng.integers(64, 256, size=n)
    return np.where(rng.random(n) < density, v, 0)


def build(key, out_dir, thresholds):
    arch = ARCH[key]
    knobs = KNOBS[key]
    rng = np.random.default_rng(sum(map(ord, key)))
    layers = layers_for(arch)
    blob = bytearray()
    for i, layer in enumerate(layers):
        w, b = draw_weights(rng, layer, knobs["density"])
        blob += pack(list(w) + list(b), layer["bit_par"])
        if thresholds and thresholds[i] is not None:
            layer["u_thr"] = int(thresholds[i])
    total = sum(-(-(l["n_weights"] + l["n_bias"]) * l["bit_par"] // 8) for l in layers)
    doc = {"name": arch["name"], "alpha": None, "input_resolution": list(arch["input"][:2]),
           "total_param_bytes": total, "weight_blob": f"{key}.bin", "layers": layers}
    if arch["accuracy"] is not None:
        doc["accuracy"] = arch["accuracy"]
    (out_dir / f"{key}.bin").write_bytes(bytes(blob))
    (out_dir / f"{key}.json").write_text(json.dumps(doc, indent=1) + "\n")
    if key != "keyword_learn":
        write_tensor(out_dir / f"{key}_input.bin", arch["input"], sparse_input(rng, arch["input"], knobs["input_density"]))
    else:
        samples = out_dir / "keyword_learn_samples"
        samples.mkdir(exist_ok=True)
        proto = sparse_input(rng, arch["input"], knobs["input_density"])
        for s in range(5):
            keep = rng.random(proto.size) < 0.98
            write_tensor(samples / f"sample_{s:02d}.bin", arch["input"], np.where(keep, proto, 0))
        keep = rng.random(proto.size) < 0.98
        write_tensor(out_dir / f"{key}_input.bin", arch["input"], np.where(keep, proto, 0))
    return doc


def run_stats(tool, out_dir, key):
    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        subprocess.run([tool, "map", "--model", str(out_dir / f"{key}.json"), "--out", str(tmp / "plan.json")],
                       check=True, capture_output=True)
        subprocess.run([tool, "run", "--model", str(out_dir / f"{key}.json"), "--plan", str(tmp / "plan.json"),
                        "--input", str(out_dir / f"{key}_input.bin"), "--steps", str(T), "--out", str(tmp / "s.json")],
                       check=True, capture_output=True)
        return json.loads((tmp / "s.json").read_text())


def tune(tool, key, out_dir):
    """Layer by layer, bisect u_thr until the spike rate reaches the target."""
    layers = layers_for(ARCH[key])
    rates = KNOBS[key]["rates"]
    thr = [None] * len(layers)
    for i, layer in enumerate(layers):
        neurons = layer["out_shape"][0] * layer["out_shape"][1] * layer["out_shape"][2]
        lo, hi = 1, 1 << 16
        while lo < hi:
            mid = (lo + hi) // 2
            thr[i] = mid
            for j in range(i + 1, len(layers)):
                thr[j] = 1 << 30
            build(key, out_dir, thr)
            rate = run_stats(tool, out_dir, key)["layer_spikes"][i] / (neurons * T)
            if rate > rates[i]:
                lo = mid + 1
            else:
                hi = mid
        thr[i] = lo
        print(f"{key} layer {i}: u_thr={lo}", flush=True)
    return thr


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="fixtures/demo")
    ap.add_argument("--tune", metavar="NPU_DEPLOY")
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for key in ARCH:
        thr = tune(args.tune, key, out) if args.tune else THRESHOLDS.get(key)
        if args.tune:
            print(f"    {key!r}: {thr},")
        build(key, out, thr)


if __name__ == "__main__":
    main()
