#!/usr/bin/env python3
"""Write a small MNIST subset as canonical gzip IDX files.

The source is the 5000-sample MNIST CSV shipped inside the mlxtend package
(pixels 0..255 in 784 columns, label in the last column), sorted by
label. Rows are shuffled with a fixed seed; the first ``--train`` become
train-*, the rest t10k-*.

    pip download --no-deps mlxtend -d /tmp/mlx
    python3 tools/make_mnist_subset.py --wheel /tmp/mlx/mlxtend-*.whl --out data/mnist
"""
import argparse
import glob
import gzip
import io
import os
import random
import struct
import zipfile

CSV_MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def load_rows(args):
    if args.csv:
        raw = open(args.csv, "rb").read()
    else:
        wheels = glob.glob(args.wheel)
        if not wheels:
            raise SystemExit(f"no wheel matches {args.wheel}")
        raw = zipfile.ZipFile(wheels[0]).read(CSV_MEMBER)
    text = gzip.decompress(raw).decode()
    rows = []
    for line in text.splitlines():
        vals = [int(float(v)) for v in line.split(",")]
        rows.append((vals[:-1], vals[-1]))
    return rows


def write_idx(path, rows, images):
    buf = io.BytesIO()
    if images:
        buf.write(struct.pack(">IIII", 2051, len(rows), 28, 28))
        for pixels, _ in rows:
            buf.write(bytes(pixels))
    else:
        buf.write(struct.pack(">II", 2049, len(rows)))
        buf.write(bytes(label for _, label in rows))
    # mtime=0 keeps the output byte-identical across runs
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(buf.getvalue())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--wheel", default="/tmp/mlx/mlxtend-*.whl")
    ap.add_argument("--csv", help="path to mnist_5k.csv.gz (overrides --wheel)")
    ap.add_argument("--out", default="data/mnist")
    ap.add_argument("--train", type=int, default=4000)
    ap.add_argument("--seed", type=int, default=2051)
    args = ap.parse_args()

    rows = load_rows(args)
    random.Random(args.seed).shuffle(rows)
    os.makedirs(args.out, exist_ok=True)
    train, test = rows[: args.train], rows[args.train :]
    write_idx(os.path.join(args.out, "train-images-idx3-ubyte.gz"), train, True)
    write_idx(os.path.join(args.out, "train-labels-idx1-ubyte.gz"), train, False)
    write_idx(os.path.join(args.out, "t10k-images-idx3-ubyte.gz"), test, True)
    write_idx(os.path.join(args.out, "t10k-labels-idx1-ubyte.gz"), test, False)
    print(f"wrote {len(train)} train / {len(test)} test images to {args.out}")


if __name__ == "__main__":
    main()
