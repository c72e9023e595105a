"""Synthetic datasets for demos and verification runs.

The digit corpus renders 28x28 grayscale digit glyphs (seven-segment
style) with random translation, per-pixel intensity jitter, and
salt-and-pepper corruption. It stands in for scanned-digit data when no
real corpus is on disk: bright strokes sit above a 128 binarization
threshold, background below, corrupted pixels land anywhere.
"""

import numpy as np

_SEED_MASK = (1 << 64) - 1

# seven-segment layout on a 28x28 canvas
_H_SEGMENTS = {"A": (4, 7), "G": (13, 16), "D": (22, 25)}
_V_SEGMENTS = {"F": (6, 9, 5, 15), "B": (19, 22, 5, 15),
               "E": (6, 9, 14, 24), "C": (19, 22, 14, 24)}
_H_SPAN = (8, 20)

_DIGIT_SEGMENTS = {
    0: "ABCDEF",
    1: "BC",
    2: "ABGED",
    3: "ABGCD",
    4: "FGBC",
    5: "AFGCD",
    6: "AFGECD",
    7: "ABC",
    8: "ABCDEFG",
    9: "ABCDFG",
}


def digit_glyph(digit):
    """28x28 0/1 stroke mask for one digit."""
    mask = np.zeros((28, 28), dtype=np.uint8)
    segs = _DIGIT_SEGMENTS[digit]
    for name, (r0, r1) in _H_SEGMENTS.items():
        if name in segs:
            mask[r0:r1, _H_SPAN[0]:_H_SPAN[1]] = 1
    for name, (c0, c1, r0, r1) in _V_SEGMENTS.items():
        if name in segs:
            mask[r0:r1, c0:c1] = 1
    return mask


def render_digit(digit, rng, max_shift=4, corruption=0.22):
    mask = digit_glyph(digit)
    dy, dx = rng.integers(-max_shift, max_shift + 1, size=2)
    mask = np.roll(np.roll(mask, dy, axis=0), dx, axis=1)
    img = rng.integers(0, 70, size=(28, 28)).astype(np.uint8)
    stroke = rng.integers(160, 256, size=(28, 28)).astype(np.uint8)
    img[mask == 1] = stroke[mask == 1]
    corrupt = rng.random((28, 28)) < corruption
    img[corrupt] = rng.integers(0, 256, size=int(corrupt.sum())).astype(np.uint8)
    return img


def make_digit_corpus(count, seed, max_shift=4, corruption=0.22):
    """(images (n, 28, 28) uint8, labels (n,) int64) with all ten digits."""
    rng = np.random.default_rng(np.random.SeedSequence(seed & _SEED_MASK))
    labels = rng.integers(0, 10, size=count).astype(np.int64)
    images = np.empty((count, 28, 28), dtype=np.uint8)
    for i, digit in enumerate(labels):
        images[i] = render_digit(int(digit), rng, max_shift=max_shift,
                                 corruption=corruption)
    return images, labels


def make_decisive_bits(count, noise_features, seed, flip_fraction=0.0):
    """Binary vectors where bit 0 alone decides the class.

    Returns (vectors (n, 1 + noise_features) uint8, labels (n,) int64);
    ``flip_fraction`` mislabels that share of instances to blunt perfect
    separability when wanted.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed & _SEED_MASK))
    vectors = rng.integers(0, 2, size=(count, 1 + noise_features)).astype(np.uint8)
    labels = vectors[:, 0].astype(np.int64)
    if flip_fraction > 0:
        flips = rng.random(count) < flip_fraction
        labels[flips] = 1 - labels[flips]
    return vectors, labels
