"""Bayer degradation simulator.

The camera forward model: a full RGB image is sampled through a 2x2 Bayer
color filter array, Gaussian read noise is added in the CFA domain, and the
single-plane mosaic is rearranged into a half-resolution 4-channel stack for
the reconstruction network. Everything here is plain numpy on float arrays
in [0, 1]; nothing is differentiable or needs to be.

Randomness is counter-based (Philox keyed by seed and image index), so a
degraded dataset is reproducible regardless of processing order.
"""

from dataclasses import dataclass

import numpy as np

R, G, B = 0, 1, 2

_LETTER = {"r": R, "g": G, "b": B}
_NAME = {R: "r", G: "g", B: "b"}

# rng stream tags, kept disjoint so seeds never collide across purposes
STREAM_DEGRADE = 0
STREAM_TRAIN = 1
STREAM_DROPOUT = 2


def make_rng(seed, index=0, stream=STREAM_DEGRADE):
    """Counter-based generator keyed by (seed, stream, index)."""
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64((stream << 48) + index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class BayerPattern:
    """2x2 arrangement of color channels with one R, one B and two G sites."""

    def __init__(self, cells):
        cells = tuple(tuple(row) for row in cells)
        flat = [c for row in cells for c in row]
        if len(flat) != 4 or sorted(flat) != [R, G, G, B]:
            raise ValueError("Bayer cell must contain exactly one R, two G, one B")
        self.cells = cells

    @classmethod
    def from_string(cls, s):
        s = s.lower()
        if len(s) != 4 or any(ch not in _LETTER for ch in s):
            raise ValueError(f"bad Bayer pattern {s!r}; expected e.g. 'rggb'")
        c = [_LETTER[ch] for ch in s]
        return cls(((c[0], c[1]), (c[2], c[3])))

    @property
    def name(self):
        return "".join(_NAME[self.cells[dy][dx]] for dy in (0, 1) for dx in (0, 1))

    def channel_at(self, dy, dx):
        return self.cells[dy % 2][dx % 2]

    def pack_offsets(self):
        """Cell offsets in packing order: R, then both G in raster order, then B."""
        pos = {0: [], 1: [], 2: []}
        for dy in (0, 1):
            for dx in (0, 1):
                pos[self.cells[dy][dx]].append((dy, dx))
        return [pos[R][0], pos[G][0], pos[G][1], pos[B][0]]

    def __eq__(self, other):
        return isinstance(other, BayerPattern) and self.cells == other.cells

    def __repr__(self):
        return f"BayerPattern({self.name!r})"


RGGB = BayerPattern.from_string("rggb")


@dataclass
class DegradationSpec:
    """Noise synthesis settings; sigma is a standard deviation on the 0-255 scale."""
    sigma: float
    seed: int = 0
    clip: bool = True

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


def _check_even(h, w):
    if h % 2 or w % 2:
        raise ValueError(f"image dimensions must be even, got {h}x{w}")


def mosaic(img, pattern=RGGB):
    """Sample a (3, H, W) color image through the CFA -> (1, H, W) mosaic."""
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"expected (3, H, W) image, got {img.shape}")
    _, h, w = img.shape
    _check_even(h, w)
    out = np.empty((1, h, w), dtype=img.dtype)
    for dy in (0, 1):
        for dx in (0, 1):
            c = pattern.channel_at(dy, dx)
            out[0, dy::2, dx::2] = img[c, dy::2, dx::2]
    return out


def add_gaussian_noise(m, spec, index=0):
    """Additive white Gaussian noise with std sigma/255; deterministic per (seed, index)."""
    if spec.sigma == 0:
        return m.copy()
    rng = make_rng(spec.seed, index, STREAM_DEGRADE)
    noisy = m + rng.normal(0.0, spec.sigma / 255.0, size=m.shape)
    if spec.clip:
        np.clip(noisy, 0.0, 1.0, out=noisy)
    return noisy.astype(m.dtype)


def pack_raw(m, pattern=RGGB):
    """Split a (1, H, W) mosaic into its four CFA phases: (4, H/2, W/2)."""
    if m.ndim != 3 or m.shape[0] != 1:
        raise ValueError(f"expected (1, H, W) mosaic, got {m.shape}")
    _, h, w = m.shape
    _check_even(h, w)
    out = np.empty((4, h // 2, w // 2), dtype=m.dtype)
    for k, (dy, dx) in enumerate(pattern.pack_offsets()):
        out[k] = m[0, dy::2, dx::2]
    return out


def unpack(p, pattern=RGGB):
    """Inverse of pack_raw: (4, H/2, W/2) -> (1, H, W)."""
    if p.ndim != 3 or p.shape[0] != 4:
        raise ValueError(f"expected (4, H/2, W/2) stack, got {p.shape}")
    _, hh, hw = p.shape
    out = np.empty((1, hh * 2, hw * 2), dtype=p.dtype)
    for k, (dy, dx) in enumerate(pattern.pack_offsets()):
        out[0, dy::2, dx::2] = p[k]
    return out


def degrade(img, spec, pattern=RGGB, index=0):
    """Full degradation of one image: returns (mosaic, packed)."""
    m = add_gaussian_noise(mosaic(img, pattern), spec, index)
    return m, pack_raw(m, pattern)


def augment8(img):
    """The 8 dihedral transforms of a square patch (identity, rotations, reflections)."""
    if img.ndim != 3 or img.shape[1] != img.shape[2]:
        raise ValueError(f"augment8 needs a square (C, H, H) patch, got {img.shape}")
    out = [img.copy()]
    for k in (1, 2, 3):
        out.append(np.ascontiguousarray(np.rot90(img, k, axes=(1, 2))))
    out.append(np.ascontiguousarray(img[:, :, ::-1]))          # left-right
    out.append(np.ascontiguousarray(img[:, ::-1, :]))          # up-down
    out.append(np.ascontiguousarray(img.transpose(0, 2, 1)))   # main diagonal
    out.append(np.ascontiguousarray(img.transpose(0, 2, 1)[:, ::-1, ::-1]))  # anti-diagonal
    return out
