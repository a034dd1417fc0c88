"""Rebuild data/mnist/ from the digit tables shipped in the npm ``mnist`` package.

The package (https://www.npmjs.com/package/mnist, v1.1.0) bundles 10000
MNIST digits as JSON arrays of 784 floats rounded to three decimals. Each
value times 255 is within 0.13 of the original byte, so rounding recovers
the bytes exactly.

    npm pack mnist && tar xzf mnist-1.1.0.tgz
    python tools/mnist_from_npm.py package/src/digits data/mnist
"""

import json
import sys
from pathlib import Path

import numpy as np

from glrnet.data import write_idx


def main(digits_dir, out_dir):
    digits_dir, out_dir = Path(digits_dir), Path(out_dir)
    images, labels = [], []
    for label in range(10):
        flat = np.array(json.loads((digits_dir / f"{label}.json").read_text())["data"])
        block = np.rint(flat * 255).astype(np.uint8).reshape(-1, 28, 28)
        images.append(block)
        labels.append(np.full(len(block), label, dtype=np.uint8))
    out_dir.mkdir(parents=True, exist_ok=True)
    write_idx(out_dir / "mnist10k-images-idx3-ubyte.gz", out_dir / "mnist10k-labels-idx1-ubyte.gz",
              np.concatenate(images), np.concatenate(labels))
    print(f"wrote {sum(len(b) for b in images)} images to {out_dir}")


if __name__ == "__main__":
    main(*sys.argv[1:3])
