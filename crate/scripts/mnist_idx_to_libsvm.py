#!/usr/bin/env python3
"""Convert the MNIST IDX files to LIBSVM text.

Usage: mnist_idx_to_libsvm.py IDX_DIR OUT_DIR [--digits 3 8]

Writes OUT_DIR/train.libsvm and OUT_DIR/test.libsvm with raw pixel values
(0-255); zero pixels are omitted.
"""

import argparse
import gzip
import struct
from pathlib import Path


def open_idx(path):
    if not path.exists() and path.with_suffix(path.suffix + ".gz").exists():
        return gzip.open(path.with_suffix(path.suffix + ".gz"), "rb")
    return open(path, "rb")


def read_images(path):
    with open_idx(path) as f:
        magic, n, rows, cols = struct.unpack(">IIII", f.read(16))
        if magic != 2051:
            raise ValueError(f"{path}: bad magic {magic}")
        size = rows * cols
        data = f.read(n * size)
    return [data[i * size:(i + 1) * size] for i in range(n)]


def read_labels(path):
    with open_idx(path) as f:
        magic, n = struct.unpack(">II", f.read(8))
        if magic != 2049:
            raise ValueError(f"{path}: bad magic {magic}")
        return list(f.read(n))


def convert(images, labels, digits, out):
    written = 0
    with open(out, "w") as f:
        for img, label in zip(images, labels):
            if digits and label not in digits:
                continue
            pairs = " ".join(f"{j + 1}:{v}" for j, v in enumerate(img) if v)
            f.write(f"{label} {pairs}\n" if pairs else f"{label}\n")
            written += 1
    return written


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("idx_dir", type=Path)
    parser.add_argument("out_dir", type=Path)
    parser.add_argument("--digits", type=int, nargs="*", default=[])
    args = parser.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    digits = set(args.digits)
    for split, prefix in (("train", "train"), ("test", "t10k")):
        images = read_images(args.idx_dir / f"{prefix}-images-idx3-ubyte")
        labels = read_labels(args.idx_dir / f"{prefix}-labels-idx1-ubyte")
        n = convert(images, labels, digits, args.out_dir / f"{split}.libsvm")
        print(f"{split}: {n} points")


if __name__ == "__main__":
    main()
