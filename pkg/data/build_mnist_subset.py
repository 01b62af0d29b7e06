"""Rebuild the bundled 10k MNIST subset from the `mnist` npm package.

The npm package (cazala/mnist 1.1.0) stores 10,000 MNIST training digits as
JSON arrays of pixel/255 rounded to three decimals.  Rounding back to bytes
is exact because 0.001 < 1/510.  Digits are interleaved with a fixed
permutation so that class order carries no information.

    npm pack mnist && tar xzf mnist-1.1.0.tgz
    python build_mnist_subset.py package/src/digits mnist-subset10k
"""
import gzip
import json
import struct
import sys
from pathlib import Path

import numpy as np


def main(src, dst):
    images, labels = [], []
    for digit in range(10):
        data = json.loads((Path(src) / f"{digit}.json").read_text())["data"]
        pix = np.asarray(data, dtype=np.float64).reshape(-1, 784)
        byte = np.rint(pix * 255.0)
        assert np.abs(pix * 255.0 - byte).max() < 0.5
        images.append(byte.astype(np.uint8))
        labels.append(np.full(len(byte), digit, dtype=np.uint8))
    x = np.concatenate(images)
    y = np.concatenate(labels)
    order = np.random.default_rng(20240101).permutation(len(y))
    x, y = x[order], y[order]

    out = Path(dst)
    out.mkdir(parents=True, exist_ok=True)
    with gzip.GzipFile(out / "train-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, len(y), 28, 28))
        f.write(x.tobytes())
    with gzip.GzipFile(out / "train-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, len(y)))
        f.write(y.tobytes())
    print(f"wrote {len(y)} digits to {out}")


if __name__ == "__main__":
    main(*sys.argv[1:3])
