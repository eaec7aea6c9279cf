#!/usr/bin/env python3
"""Fits data/akida_calibration.json to the demo workloads.

Runs `npu-deploy pipeline` on each demo, then fits latency = fixed + passes * per_pass and
power = static + (e_syn * S + e_neu * N + e_pass * Q) / latency by non-negative least squares
on relative error."""
import argparse
import json
import pathlib
import subprocess
import tempfile

import numpy as np
from scipy.optimize import nnls

# Reference figures the demos are fitted to: latency [s], power [W].
TARGETS = {
    "image": (41e-3, 0.215),
    "video": (160e-3, 0.078),
    "keyword": (0.72e-3, 0.068),
    "keyword_learn": (1.5e-3, 0.041),
}


def pipeline(tool, demo, key, out):
    cmd = [tool, "pipeline", "--model", str(demo / f"{key}.json"), "--input", str(demo / f"{key}_input.bin"),
           "--workload", key, "--out-dir", str(out)]
    if key == "keyword_learn":
        cmd += ["--learn", "--samples", str(demo / "keyword_learn_samples"), "--class-name", "new_keyword"]
    subprocess.run(cmd, check=True, capture_output=True)
    plan = json.loads((out / ("plan_learned.json" if key == "keyword_learn" else "plan.json")).read_text())
    stats = json.loads((out / "stats.json").read_text())
    passes = sum(l["passes"] for l in plan["layers"])
    npu_passes = sum(l["passes"] * l["npu_alloc"] for l in plan["layers"])
    return passes, stats["synaptic_events"], stats["neuron_updates"], npu_passes


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("tool")
    ap.add_argument("--demo", default="fixtures/demo")
    ap.add_argument("--calibration", default="data/akida_calibration.json")
    args = ap.parse_args()
    demo = pathlib.Path(args.demo)
    rows = {}
    with tempfile.TemporaryDirectory() as tmp:
        for key in TARGETS:
            rows[key] = pipeline(args.tool, demo, key, pathlib.Path(tmp) / key)

    keys = list(TARGETS)
    lat = np.array([TARGETS[k][0] for k in keys])
    pw = np.array([TARGETS[k][1] for k in keys])
    P = np.array([rows[k][0] for k in keys], dtype=float)
    A = np.stack([np.ones_like(P), P], axis=1) / lat[:, None]
    (fixed, per_pass), _ = nnls(A, np.ones_like(lat))
    lat_model = fixed + per_pass * P

    S = np.array([rows[k][1] for k in keys], dtype=float)
    N = np.array([rows[k][2] for k in keys], dtype=float)
    Q = np.array([rows[k][3] for k in keys], dtype=float)
    B = np.stack([np.ones_like(S), S / lat_model, N / lat_model, Q / lat_model], axis=1) / pw[:, None]
    scale = B.max(axis=0)
    coef, _ = nnls(B / scale, np.ones_like(pw))
    static, e_syn, e_neu, e_pass = coef / scale
    pw_model = static + (e_syn * S + e_neu * N + e_pass * Q) / lat_model

    for i, k in enumerate(keys):
        print(f"{k:14s} passes={int(P[i]):5d} S={int(S[i]):9d} N={int(N[i]):9d} Q={int(Q[i]):5d}  "
              f"lat {lat_model[i]*1e3:8.3f} ms ({(lat_model[i]/lat[i]-1)*100:+6.1f}%)  "
              f"power {pw_model[i]*1e3:7.1f} mW ({(pw_model[i]/pw[i]-1)*100:+6.1f}%)")

    path = pathlib.Path(args.calibration)
    doc = json.loads(path.read_text())
    doc["cost_model"] = {
        "energy_per_synaptic_event": float(f"{e_syn:.4g}"),
        "energy_per_neuron_update": float(f"{e_neu:.4g}"),
        "energy_per_npu_pass": float(f"{e_pass:.4g}"),
        "static_power": float(f"{static:.4g}"),
        "latency_per_pass": float(f"{per_pass:.4g}"),
        "latency_fixed": float(f"{fixed:.4g}"),
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


if __name__ == "__main__":
    main()
