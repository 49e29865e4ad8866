#!/usr/bin/env python3
"""Regenerate the grayscale PGM test crops under tests/data from scikit-image samples."""
import pathlib

import numpy as np
import skimage.color
import skimage.data

ROOT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "data"


def gray(name):
    im = getattr(skimage.data, name)()
    if im.ndim == 3:
        im = skimage.color.rgb2gray(im[..., :3]) * 255.0
    return np.clip(np.round(im), 0, 255).astype(np.uint8)


def crop(im, row, col, size):
    return im[row:row + size, col:col + size]


def write_pgm(path, im):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (im.shape[1], im.shape[0]))
        f.write(im.tobytes())


def main():
    write_pgm(ROOT / "camera256.pgm", crop(gray("camera"), 60, 150, 256))

    train = [("astronaut", 40, 160), ("coffee", 100, 200), ("chelsea", 60, 120),
             ("rocket", 150, 250), ("brick", 100, 100), ("coins", 60, 100),
             ("moon", 200, 200), ("clock", 60, 110)]
    for name, r, c in train:
        write_pgm(ROOT / "train" / f"{name}.pgm", crop(gray(name), r, c, 180))

    heldout = [("camera", 300, 40), ("gravel", 150, 150), ("cell", 200, 200), ("page", 40, 150)]
    for name, r, c in heldout:
        write_pgm(ROOT / "heldout" / f"{name}.pgm", crop(gray(name), r, c, 128))


if __name__ == "__main__":
    main()
