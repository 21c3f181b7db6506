#!/usr/bin/env python3
"""Builds MNIST IDX files from the 10k digits bundled in the npm `mnist` package.

The package stores pixels as value/255 rounded to 3 decimals, so round(v*255) recovers the
original bytes. Within each class the first 80% of images go to train, the rest to test.

    python3 tools/fetch_mnist_npm.py data/mnist
"""
import argparse
import json
import pathlib
import struct
import subprocess
import tarfile
import tempfile

SIDE = 28


def write_idx(out_dir, prefix, images, labels):
    with open(out_dir / f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(labels), SIDE, SIDE))
        for img in images:
            f.write(bytes(img))
    with open(out_dir / f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir")
    ap.add_argument("--package", default="mnist@1.1.0")
    ap.add_argument("--train-fraction", type=float, default=0.8)
    args = ap.parse_args()
    out_dir = pathlib.Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    with tempfile.TemporaryDirectory() as tmp:
        name = subprocess.run(["npm", "pack", args.package, "--silent"], cwd=tmp, check=True,
                              capture_output=True, text=True).stdout.strip().splitlines()[-1]
        with tarfile.open(pathlib.Path(tmp) / name) as tar:
            tar.extractall(tmp, filter="data")
        digits = pathlib.Path(tmp) / "package" / "src" / "digits"
        train, test = ([], []), ([], [])
        for c in range(10):
            data = json.loads((digits / f"{c}.json").read_text())["data"]
            count = len(data) // (SIDE * SIDE)
            cut = int(round(count * args.train_fraction))
            for i in range(count):
                px = [min(255, max(0, round(v * 255))) for v in data[i * SIDE * SIDE:(i + 1) * SIDE * SIDE]]
                dst = train if i < cut else test
                dst[0].append(px)
                dst[1].append(c)

    # interleave classes so that prefixes of the files stay balanced
    for prefix, (imgs, labs) in (("train", train), ("t10k", test)):
        by_class = [[i for i in range(len(labs)) if labs[i] == c] for c in range(10)]
        merged = []
        for r in range(max(len(b) for b in by_class)):
            merged.extend(b[r] for b in by_class if r < len(b))
        write_idx(out_dir, prefix, [imgs[i] for i in merged], [labs[i] for i in merged])
        print(out_dir / f"{prefix}-images-idx3-ubyte", len(merged))


if __name__ == "__main__":
    main()
