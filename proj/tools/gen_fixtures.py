#!/usr/bin/env python3
"""Writes the analysis-only manifests under fixtures/."""
import json
import math
import pathlib
import sys

B_NET, B_DAT = 40960, 61440


def out_extent(n, k, s, pad):
    return math.ceil(n / s) if pad == "same" else (n - k) // s + 1


class Builder:
    def __init__(self, name, in_shape, alpha=None, res=None, accuracy=None):
        self.doc = {"name": name, "alpha": alpha, "input_resolution": res, "layers": []}
        if accuracy is not None:
            self.doc["accuracy"] = accuracy
        self.shape = list(in_shape)

    def conv(self, name, kind, c_out, k=(3, 3), s=1, pad="same", bp=4, bd=4, bias=True):
        h, w, c = self.shape
        if kind == "pointwise_conv":
            k = (1, 1)
        if kind == "depthwise_conv":
            c_out = c
        oh, ow = out_extent(h, k[0], s, pad), out_extent(w, k[1], s, pad)
        nw = k[0] * k[1] * (c if kind != "depthwise_conv" else 1) * c_out
        layer = {"name": name, "kind": kind, "in_shape": [h, w, c], "out_shape": [oh, ow, c_out],
                 "kernel": list(k), "stride": s, "padding": pad,
                 "n_weights": nw, "n_bias": c_out if bias else 0, "bit_par": bp, "bit_dat": bd}
        self.doc["layers"].append(layer)
        self.shape = [oh, ow, c_out]
        return self

    def fc(self, name, n_out, bp=4, bd=4, bias=True):
        h, w, c = self.shape
        n_in = h * w * c
        self.doc["layers"].append({"name": name, "kind": "fully_connected", "in_shape": [h, w, c],
                                   "out_shape": [1, 1, n_out], "n_weights": n_in * n_out,
                                   "n_bias": n_out if bias else 0, "bit_par": bp, "bit_dat": bd})
        self.shape = [1, 1, n_out]
        return self

    def finish(self):
        total = 0
        npus = 0
        for l in self.doc["layers"]:
            m_net = -(-(l["n_weights"] + l["n_bias"]) * l["bit_par"] // 8)
            oh, ow, oc = l["out_shape"]
            m_dat = -(-oh * ow * oc * l["bit_dat"] // 8)
            total += m_net
            npus += max(-(-m_net // B_NET), -(-m_dat // B_DAT))
        self.doc["total_param_bytes"] = total
        return self.doc, npus, total


def yolo_like():
    b = Builder("yolo_like_224", (224, 224, 3), res=[224, 224], accuracy=0.0)
    del b.doc["accuracy"]
    b.conv("conv0", "input_conv", 16, s=2, bp=8, bd=2)
    b.conv("conv1", "conv", 32, s=2, bd=2)
    b.conv("conv2", "conv", 64, s=2, bd=2)
    b.conv("conv3", "conv", 128, s=2)
    b.conv("conv4", "conv", 256)
    b.conv("conv5", "conv", 256, s=2)
    b.conv("conv6", "conv", 512)
    b.conv("conv7", "conv", 512)
    b.conv("conv8", "pointwise_conv", 1116)
    b.conv("head", "pointwise_conv", 146, bp=8)
    return b.finish()


def dscnn_like():
    b = Builder("dscnn_like_kws", (49, 10, 1), res=[49, 10], accuracy=0.911)
    b.conv("conv0", "input_conv", 64, k=(10, 4), s=2, bp=8)
    b.conv("dw1", "depthwise_conv", 64, s=2, bp=8)
    b.conv("pw1", "pointwise_conv", 80, bp=8)
    b.conv("dw2", "depthwise_conv", 80, s=2, bp=8)
    b.fc("fc", 12, bp=8)
    return b.finish()


def heavy(name, n_conv, tail_out):
    b = Builder(name, (8, 8, 256))
    for i in range(n_conv):
        b.conv(f"conv{i}", "conv" if i else "input_conv", 256, bp=8)
    if tail_out:
        b.fc("fc", tail_out, bp=8)
    return b.finish()


def four_layer():
    b = Builder("four_layer", (64, 64, 3), res=[64, 64])
    b.conv("stem", "input_conv", 32, bp=8)
    b.conv("conv1", "conv", 64, s=2)
    b.conv("conv2", "conv", 128, s=2, bp=8)
    b.fc("fc", 10, bp=8)
    return b.finish()


def two_layer(out):
    """Hand-enumerable 4 -> 3 -> 2 network with an 8-bit blob."""
    w1 = [1, 0, 2, 0, 0, 1, 0, 0, 1, 1, 1, 1]
    w2 = [1, 1, 0, 0, 0, 3]
    doc = {"name": "two_layer", "weight_blob": "two_layer.bin", "layers": [
        {"name": "fc1", "kind": "fully_connected", "in_shape": [1, 1, 4], "out_shape": [1, 1, 3],
         "n_weights": 12, "n_bias": 0, "bit_par": 8, "bit_dat": 1, "u_thr": 2},
        {"name": "fc2", "kind": "fully_connected", "in_shape": [1, 1, 3], "out_shape": [1, 1, 2],
         "n_weights": 6, "n_bias": 0, "bit_par": 8, "bit_dat": 1, "u_thr": 2}]}
    (out / "two_layer.bin").write_bytes(bytes(v & 0xFF for v in w1 + w2))
    (out / "two_layer.json").write_text(json.dumps(doc, indent=1) + "\n")


def main():
    out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "fixtures")
    out.mkdir(parents=True, exist_ok=True)
    for fname, (doc, npus, total) in {
        "yolo_like_71.json": yolo_like(),
        "dscnn_like_5.json": dscnn_like(),
        "over_90npu.json": heavy("over_90npu", 6, 0),
        "over_9mb.json": heavy("over_9mb", 15, 9),
        "four_layer.json": four_layer(),
    }.items():
        (out / fname).write_text(json.dumps(doc, indent=1) + "\n")
        print(f"{fname}: npu_total={npus} param_bytes={total}")
    two_layer(out)


if __name__ == "__main__":
    main()
