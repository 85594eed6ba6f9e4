"""PNG image I/O and binary checkpoint serialization.

Images travel as float arrays in [0, 1] with channels first; on disk they are
plain 8-bit PNGs (truecolor for RGB, grayscale for raw mosaics). The header of
an incoming PNG is checked directly so unsupported encodings fail with a clear
error instead of being silently converted.

Checkpoints are a single little-endian binary blob: magic, format version, a
JSON metadata document, then each named float32 tensor with its shape. Loading
restores values in place so tensors that alias other state (batch-norm running
buffers) stay wired up.
"""

import json
import struct

import numpy as np
from PIL import Image

from .networks import GeneratorSpec, build_generator

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

MAGIC = b"BJDD"
VERSION = 1


class ImageFormatError(ValueError):
    """The file is not a PNG this tool accepts (8-bit RGB or grayscale)."""


class CheckpointError(Exception):
    """Base class for malformed checkpoint files."""


class BadMagicError(CheckpointError):
    """The file does not start with the checkpoint magic bytes."""


class VersionError(CheckpointError):
    """The checkpoint was written by an incompatible format version."""


class TruncatedError(CheckpointError):
    """The file ends before the declared contents do."""


def _read_ihdr(path):
    with open(path, "rb") as f:
        head = f.read(26)
    if len(head) < 26 or head[:8] != PNG_SIGNATURE or head[12:16] != b"IHDR":
        raise ImageFormatError(f"{path}: not a PNG file")
    bitdepth = head[24]
    colortype = head[25]
    return bitdepth, colortype


def load_png(path):
    """Read an 8-bit RGB PNG as a (3, H, W) float array in [0, 1]."""
    bitdepth, colortype = _read_ihdr(path)
    if bitdepth != 8 or colortype != 2:
        raise ImageFormatError(
            f"{path}: need an 8-bit RGB PNG (bit depth {bitdepth}, color type {colortype})")
    with Image.open(path) as im:
        arr = np.asarray(im, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ImageFormatError(f"{path}: decoded to unexpected shape {arr.shape}")
    return np.ascontiguousarray(arr.transpose(2, 0, 1)).astype(np.float32) / np.float32(255.0)


def _to_uint8(img):
    scaled = np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0)
    return scaled.astype(np.uint8)


def save_png(path, img):
    """Write a (3, H, W) float image in [0, 1] as an 8-bit RGB PNG."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"expected (3, H, W), got {img.shape}")
    Image.fromarray(_to_uint8(img).transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


def load_mosaic_png(path):
    """Read an 8-bit grayscale PNG as a (1, H, W) float array in [0, 1]."""
    bitdepth, colortype = _read_ihdr(path)
    if bitdepth != 8 or colortype != 0:
        raise ImageFormatError(
            f"{path}: need an 8-bit grayscale PNG (bit depth {bitdepth}, color type {colortype})")
    with Image.open(path) as im:
        arr = np.asarray(im, dtype=np.uint8)
    if arr.ndim != 2:
        raise ImageFormatError(f"{path}: decoded to unexpected shape {arr.shape}")
    return arr[None, :, :].astype(np.float32) / np.float32(255.0)


def save_mosaic_png(path, m):
    """Write a (1, H, W) float mosaic in [0, 1] as an 8-bit grayscale PNG."""
    m = np.asarray(m)
    if m.ndim != 3 or m.shape[0] != 1:
        raise ValueError(f"expected (1, H, W), got {m.shape}")
    Image.fromarray(_to_uint8(m[0]), mode="L").save(path, format="PNG")


def _u32(value):
    return struct.pack("<I", value)


def save_checkpoint(path, stores, metadata):
    """Serialize named parameter stores plus a metadata dict to one file.

    Tensors are written as float32; anything else in a store is a caller bug
    and raises. Name collisions are impossible because entries are keyed
    "store/param".
    """
    doc = json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
    entries = []
    for store_name, store in stores.items():
        for name, tensor in store.items():
            if tensor.data.dtype != np.float32:
                raise CheckpointError(
                    f"cannot serialize {store_name}/{name}: dtype {tensor.data.dtype} "
                    "(checkpoints hold float32 only)")
            entries.append((f"{store_name}/{name}", tensor.data))
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(_u32(VERSION))
        f.write(_u32(len(doc)))
        f.write(doc)
        f.write(_u32(len(entries)))
        for name, data in entries:
            encoded = name.encode("utf-8")
            f.write(_u32(len(encoded)))
            f.write(encoded)
            f.write(_u32(data.ndim))
            for dim in data.shape:
                f.write(_u32(dim))
            f.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


class _Cursor:
    def __init__(self, buf, path):
        self.buf = buf
        self.off = 0
        self.path = path

    def take(self, n):
        if self.off + n > len(self.buf):
            raise TruncatedError(
                f"{self.path}: file ends at byte {len(self.buf)}, "
                f"needed {self.off + n}")
        chunk = self.buf[self.off:self.off + n]
        self.off += n
        return chunk

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path):
    """Read a checkpoint; returns (metadata, {"store/param": float32 array})."""
    with open(path, "rb") as f:
        buf = f.read()
    cur = _Cursor(buf, path)
    if cur.take(4) != MAGIC:
        raise BadMagicError(f"{path}: not a checkpoint file")
    version = cur.u32()
    if version != VERSION:
        raise VersionError(f"{path}: format version {version}, expected {VERSION}")
    try:
        metadata = json.loads(cur.take(cur.u32()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: bad metadata block: {e}") from e
    arrays = {}
    for _ in range(cur.u32()):
        name = cur.take(cur.u32()).decode("utf-8")
        rank = cur.u32()
        if rank > 8:
            raise CheckpointError(f"{path}: tensor {name!r} claims rank {rank}")
        shape = tuple(cur.u32() for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        data = np.frombuffer(cur.take(4 * count), dtype="<f4").reshape(shape)
        if name in arrays:
            raise CheckpointError(f"{path}: duplicate tensor name {name!r}")
        arrays[name] = data.copy()
    if cur.off != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - cur.off} trailing bytes")
    return metadata, arrays


def load_into_store(store, arrays, prefix):
    """Copy checkpoint arrays into an existing store's tensors, in place.

    Both directions must match exactly: every store entry needs a checkpoint
    tensor of the same shape, and every checkpoint tensor under the prefix
    must land somewhere.
    """
    seen = set()
    for name, tensor in store.items():
        key = f"{prefix}/{name}"
        if key not in arrays:
            raise CheckpointError(f"checkpoint is missing tensor {key!r}")
        arr = arrays[key]
        if arr.shape != tensor.data.shape:
            raise CheckpointError(
                f"shape mismatch for {key!r}: checkpoint {arr.shape}, "
                f"model {tensor.data.shape}")
        tensor.data[...] = arr
        seen.add(key)
    stray = [k for k in arrays if k.startswith(prefix + "/") and k not in seen]
    if stray:
        raise CheckpointError(f"checkpoint tensors with no home: {stray[:3]}")


def load_generator(path):
    """Rebuild a generator from a checkpoint; returns (generator, metadata)."""
    metadata, arrays = load_checkpoint(path)
    spec_doc = metadata.get("generator_spec")
    if not isinstance(spec_doc, dict):
        raise CheckpointError(f"{path}: metadata lacks a generator description")
    try:
        spec = GeneratorSpec(**spec_doc)
    except (TypeError, ValueError) as e:
        raise CheckpointError(f"{path}: bad generator description: {e}") from e
    gen = build_generator(spec, init_seed=0, dtype=np.float32)
    load_into_store(gen.params, arrays, "generator")
    return gen, metadata
