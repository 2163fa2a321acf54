#!/usr/bin/env python3
"""Write a 5000-digit MNIST subset as IDX files.

The digits come from the mnist_5k table shipped inside the mlxtend wheel
(BSD-3), so no direct access to the MNIST mirrors is needed. Output:

    <out>/images-idx3-ubyte   (magic 0x00000803, 5000 x 28 x 28)
    <out>/labels-idx1-ubyte   (magic 0x00000801, 5000)
"""
import argparse
import gzip
import glob
import os
import struct
import subprocess
import sys
import tempfile
import zipfile

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def find_wheel(cache):
    wheels = glob.glob(os.path.join(cache, "mlxtend-*.whl"))
    if wheels:
        return sorted(wheels)[-1]
    subprocess.check_call([sys.executable, "-m", "pip", "download", "mlxtend",
                           "--no-deps", "-d", cache])
    return sorted(glob.glob(os.path.join(cache, "mlxtend-*.whl")))[-1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/mnist5k")
    ap.add_argument("--cache", default=os.path.join(tempfile.gettempdir(), "mlxtend-wheel"))
    args = ap.parse_args()
    os.makedirs(args.cache, exist_ok=True)
    os.makedirs(args.out, exist_ok=True)

    with zipfile.ZipFile(find_wheel(args.cache)) as z:
        rows = gzip.decompress(z.read(MEMBER)).decode().strip().split("\n")

    pixels = bytearray()
    labels = bytearray()
    for row in rows:
        values = [int(float(v)) for v in row.split(",")]
        pixels.extend(values[:784])
        labels.append(values[784])

    n = len(rows)
    with open(os.path.join(args.out, "images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(pixels)
    with open(os.path.join(args.out, "labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels)
    print(f"wrote {n} digits to {args.out}")


if __name__ == "__main__":
    main()
