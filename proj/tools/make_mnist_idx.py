#!/usr/bin/env python3
"""Builds IDX files from the 10k-digit MNIST subset bundled in the npm `mnist` package.

The canonical MNIST files are not reachable from every build host; this
script produces IDX files with the same layout (magic 0x803 / 0x801,
big-endian dims, raw bytes) from the npm package, then splits them into a
training and a held-out test set.

    python3 tools/make_mnist_idx.py --out data [--package DIR] [--test 500]

Without --package, `npm pack mnist` is run in a temporary directory.
"""
import argparse
import json
import pathlib
import random
import struct
import subprocess
import tarfile
import tempfile


def fetch_package(workdir: pathlib.Path) -> pathlib.Path:
    subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=workdir, check=True,
                   stdout=subprocess.DEVNULL)
    tgz = next(workdir.glob("mnist-*.tgz"))
    with tarfile.open(tgz) as tf:
        tf.extractall(workdir)
    return workdir / "package"


def load_digits(pkg: pathlib.Path):
    items = []
    for label in range(10):
        raw = json.loads((pkg / "src" / "digits" / f"{label}.json").read_text())["data"]
        count = len(raw) // 784
        for i in range(count):
            px = raw[i * 784:(i + 1) * 784]
            items.append((bytes(min(255, max(0, round(v * 255))) for v in px), label))
    return items


def write_images(path: pathlib.Path, items):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(items), 28, 28))
        for px, _ in items:
            f.write(px)


def write_labels(path: pathlib.Path, items):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(items)))
        f.write(bytes(label for _, label in items))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--package")
    ap.add_argument("--test", type=int, default=500)
    ap.add_argument("--seed", type=int, default=2017)
    args = ap.parse_args()

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        pkg = pathlib.Path(args.package) if args.package else fetch_package(pathlib.Path(tmp))
        items = load_digits(pkg)
    random.Random(args.seed).shuffle(items)
    test, train = items[:args.test], items[args.test:]
    write_images(out / "train-images-idx3-ubyte", train)
    write_labels(out / "train-labels-idx1-ubyte", train)
    write_images(out / "t10k-images-idx3-ubyte", test)
    write_labels(out / "t10k-labels-idx1-ubyte", test)
    print(f"train {len(train)}  test {len(test)}  -> {out}")


if __name__ == "__main__":
    main()
