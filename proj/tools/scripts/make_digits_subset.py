"""Write a class-balanced subset of scikit-learn's bundled 8x8 handwritten
digits (UCI optical recognition set) as IDX files.

    python3 make_digits_subset.py OUT_DIR [--per-class 50] [--seed 0]
"""

import argparse
import pathlib
import struct

import numpy as np
from sklearn.datasets import load_digits


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir", type=pathlib.Path)
    ap.add_argument("--per-class", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    digits = load_digits()
    rng = np.random.default_rng(args.seed)
    picked = []
    for c in range(10):
        members = np.flatnonzero(digits.target == c)
        picked.extend(sorted(rng.choice(members, args.per_class, replace=False)))
    picked = np.array(picked)

    # Source pixels are 0..16.
    images = np.round(digits.images[picked] / 16.0 * 255).astype(np.uint8)
    labels = digits.target[picked].astype(np.uint8)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    n = len(picked)
    with open(args.out_dir / "digits500-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, n, 8, 8))
        f.write(images.tobytes())
    with open(args.out_dir / "digits500-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(labels.tobytes())


if __name__ == "__main__":
    main()
