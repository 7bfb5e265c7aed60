#!/usr/bin/env python3
# Copyright (c) 2026, The pmq authors
# SPDX-License-Identifier: Apache-2.0
"""Independent code packer: codes c[r][k] = (r * 5 + k * 3 + 1) % 2**bits,
flattened row-major, lowest bits first, each row padded to a byte boundary.
Prints the packed bytes as hex."""
import sys


def main(bits, rows, cols):
    out = bytearray()
    for r in range(rows):
        acc, nbits = 0, 0
        for k in range(cols):
            acc |= ((r * 5 + k * 3 + 1) % (1 << bits)) << nbits
            nbits += bits
        out += acc.to_bytes((nbits + 7) // 8, "little")
    print(out.hex())


if __name__ == "__main__":
    main(int(sys.argv[1]), int(sys.argv[2]), int(sys.argv[3]))
