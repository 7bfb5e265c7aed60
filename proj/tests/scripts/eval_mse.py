#!/usr/bin/env python3
# Copyright (c) 2026, The pmq authors
# SPDX-License-Identifier: Apache-2.0
"""Reads a tensor file holding out<i>/target<i> pairs (i = 1..K) and prints the
per-task mean squared error followed by the macro mean, one per line (float.hex)."""
import json
import struct
import sys

import numpy as np

raw = open(sys.argv[1], "rb").read()
n = struct.unpack("<Q", raw[:8])[0]
header = json.loads(raw[8:8 + n])
t = {k: np.frombuffer(raw[8 + n + v["data_offsets"][0]:8 + n + v["data_offsets"][1]], "<f8").reshape(v["shape"])
     for k, v in header.items() if k != "__metadata__"}
k = len([name for name in t if name.startswith("out")])
mse = [float(np.mean((t[f"out{i}"] - t[f"target{i}"]) ** 2)) for i in range(1, k + 1)]
for v in mse + [sum(mse) / k]:
    print(v.hex())
