#!/usr/bin/env python3
"""Export the scikit-learn 8x8 digits corpus as an IDX image/label pair.

Writes data/digits-images.idx and data/digits-labels.idx next to the
repository root. Pixels arrive in [0, 16] and are stretched by 15 so the
full unsigned-byte range is used the same way larger digit corpora use it.
"""

import pathlib
import struct
import sys

import numpy as np
from sklearn.datasets import load_digits


def main() -> int:
    out_dir = pathlib.Path(__file__).resolve().parent.parent / "data"
    out_dir.mkdir(exist_ok=True)

    digits = load_digits()
    images = digits.images.astype(np.uint16) * 15
    if images.max() > 255:
        raise SystemExit(f"pixel overflow: max {images.max()}")
    images = images.astype(np.uint8)
    labels = digits.target.astype(np.uint8)
    n, rows, cols = images.shape

    img_path = out_dir / "digits-images.idx"
    with open(img_path, "wb") as f:
        f.write(struct.pack(">IIII", 2051, n, rows, cols))
        f.write(images.tobytes())

    lab_path = out_dir / "digits-labels.idx"
    with open(lab_path, "wb") as f:
        f.write(struct.pack(">II", 2049, n))
        f.write(labels.tobytes())

    print(f"{img_path}: {n} images {rows}x{cols}")
    print(f"{lab_path}: {n} labels, classes {labels.min()}..{labels.max()}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
