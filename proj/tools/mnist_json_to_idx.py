#!/usr/bin/env python3
"""Convert the digit JSON files of the npm `mnist` package to IDX files.

The package ships 10,000 MNIST digits as 784 floats with three decimals per
pixel (one file per class). round(x * 255) recovers the original bytes. The
digits are split into stratified train/test pools with a fixed seed and
written in the standard IDX layout so the C++ loader reads them like the
original distribution.
"""

import argparse
import json
import pathlib
import struct

import numpy as np


def load_digits(src: pathlib.Path):
    images, labels = [], []
    for digit in range(10):
        with open(src / f"{digit}.json") as f:
            flat = np.asarray(json.load(f)["data"], dtype=np.float64)
        if flat.size % 784:
            raise SystemExit(f"{digit}.json: {flat.size} values is not a multiple of 784")
        rows = flat.reshape(-1, 784)
        images.append(np.clip(np.rint(rows * 255.0), 0, 255).astype(np.uint8))
        labels.append(np.full(len(rows), digit, dtype=np.uint8))
    return np.concatenate(images), np.concatenate(labels)


def stratified_split(labels, test_fraction, seed):
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        rng.shuffle(idx)
        n_test = int(round(len(idx) * test_fraction))
        test.extend(idx[:n_test])
        train.extend(idx[n_test:])
    train, test = np.asarray(train), np.asarray(test)
    rng.shuffle(train)
    rng.shuffle(test)
    return train, test


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        f.write(images.tobytes())


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(labels.tobytes())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("src", type=pathlib.Path, help="directory holding 0.json .. 9.json")
    ap.add_argument("out", type=pathlib.Path, help="output directory")
    ap.add_argument("--test-fraction", type=float, default=0.2)
    ap.add_argument("--seed", type=int, default=20141)
    args = ap.parse_args()

    images, labels = load_digits(args.src)
    train, test = stratified_split(labels, args.test_fraction, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    write_images(args.out / "train-images-idx3-ubyte", images[train])
    write_labels(args.out / "train-labels-idx1-ubyte", labels[train])
    write_images(args.out / "t10k-images-idx3-ubyte", images[test])
    write_labels(args.out / "t10k-labels-idx1-ubyte", labels[test])
    print(f"{len(train)} train / {len(test)} test digits written to {args.out}")


if __name__ == "__main__":
    main()
