#!/usr/bin/env python3
# Copyright (c) 2026, The pmq authors
# SPDX-License-Identifier: Apache-2.0
"""Straight-line forward pass: reads <ckpt>.safetensors + manifest and an
input file holding tensor "x" [d_in, n]; prints the output row-major, one
value per line, as float.hex."""
import json
import math
import struct
import sys

import numpy as np


def read_st(path):
    with open(path, "rb") as f:
        raw = f.read()
    (n,) = struct.unpack("<Q", raw[:8])
    header = json.loads(raw[8:8 + n])
    base = 8 + n
    out = {}
    for name, info in header.items():
        if name == "__metadata__":
            continue
        dt = {"F64": "<f8", "F32": "<f4"}[info["dtype"]]
        a, b = info["data_offsets"]
        out[name] = np.frombuffer(raw[base + a:base + b], dtype=dt).astype(np.float64).reshape(info["shape"])
    return out


def act(name, z):
    if name == "relu":
        return np.where(z > 0, z, 0.0)
    if name == "gelu":
        c = 0.7978845608028654
        return np.vectorize(lambda v: 0.5 * v * (1.0 + math.tanh(c * (v + 0.044715 * v * v * v))))(z)
    return z


def main(ckpt, manifest, inputs):
    tensors = read_st(ckpt)
    with open(manifest) as f:
        layers = json.load(f)["layers"]
    x = read_st(inputs)["x"]
    for layer in layers:
        w = tensors[layer["id"] + ".weight"]
        z = np.zeros((w.shape[0], x.shape[1]))
        for i in range(w.shape[0]):
            for j in range(x.shape[1]):
                s = 0.0
                for k in range(w.shape[1]):
                    s += w[i, k] * x[k, j]
                z[i, j] = s
        if layer["has_bias"]:
            z = z + tensors[layer["id"] + ".bias"][:, None]
        x = act(layer["activation"], z)
    for v in x.reshape(-1):
        print(float(v).hex())


if __name__ == "__main__":
    main(*sys.argv[1:4])
