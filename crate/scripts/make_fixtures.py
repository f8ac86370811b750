#!/usr/bin/env python3
"""Builds the IDX fixtures used by the test suites.

* data/mnist5k/: the 5000-image MNIST subset bundled with mlxtend
  (mnist_5k.csv.gz, BSD-3), split per class into 400 train / 100 test
  images and written as gzipped IDX files.
* crates/core/tests/data/tiny-*: a hand-written 2-image 3x4 IDX pair plus
  the expected pixel bytes as plain text.

Usage: python3 scripts/make_fixtures.py path/to/mnist_5k.csv.gz
"""
import gzip
import struct
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def idx_images(images, rows, cols):
    out = struct.pack(">IIII", 2051, len(images), rows, cols)
    for img in images:
        out += bytes(img)
    return out


def idx_labels(labels):
    return struct.pack(">II", 2049, len(labels)) + bytes(labels)


def write_gz(path, payload):
    # mtime=0 keeps the archives byte-stable across regenerations
    with open(path, "wb") as raw:
        with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as f:
            f.write(payload)


def mnist(csv_gz):
    rows = []
    with gzip.open(csv_gz, "rt") as f:
        for line in f:
            vals = [int(float(v)) for v in line.strip().split(",")]
            rows.append((vals[:-1], vals[-1]))
    by_class = {c: [r for r in rows if r[1] == c] for c in range(10)}
    # interleave classes so prefixes stay balanced
    train = [by_class[c][i] for i in range(400) for c in range(10)]
    test = [by_class[c][i] for i in range(400, 500) for c in range(10)]
    out = ROOT / "data" / "mnist5k"
    out.mkdir(parents=True, exist_ok=True)
    for name, split in (("train", train), ("t10k", test)):
        write_gz(out / f"{name}-images-idx3-ubyte.gz", idx_images([r[0] for r in split], 28, 28))
        write_gz(out / f"{name}-labels-idx1-ubyte.gz", idx_labels([r[1] for r in split]))
    print(f"train={len(train)} test={len(test)}")


def tiny():
    out = ROOT / "crates" / "core" / "tests" / "data"
    out.mkdir(parents=True, exist_ok=True)
    a = [0, 17, 34, 51, 68, 85, 102, 119, 136, 153, 170, 255]
    b = [255, 0, 255, 0, 1, 2, 3, 4, 200, 100, 50, 25]
    (out / "tiny-images-idx3-ubyte").write_bytes(idx_images([a, b], 3, 4))
    (out / "tiny-labels-idx1-ubyte").write_bytes(idx_labels([7, 2]))
    (out / "tiny-expected.txt").write_text(
        "labels 7 2\n" + "image0 " + " ".join(map(str, a)) + "\n" + "image1 " + " ".join(map(str, b)) + "\n"
    )


if __name__ == "__main__":
    tiny()
    if len(sys.argv) > 1:
        mnist(sys.argv[1])
