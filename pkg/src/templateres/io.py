"""Dataset ingestion and result persistence.

Three on-disk formats are handled:

* IDX, the classic handwritten-digit container. Image files carry the
  big-endian layout ``magic 0x00000803 | count | rows | cols | u8 pixels``
  and label files ``magic 0x00000801 | count | u8 labels``. Pixel bytes
  are mapped to intensities in [0, 1] by dividing by 255.
* Field files: raw row-major little-endian float32 payload plus a
  human-readable key-value sidecar (``<payload>.hdr``) describing shape,
  encoding and a semantic label. 64-bit in memory, 32-bit on disk.
* Binary PGM (P5, 8 bit) for quick grayscale dumps of 2d fields.

Loaders reject malformed inputs with :class:`FormatError`; nothing is
read partially and silently.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidInputError
from .grid import ImageGrid, ImageStack

__all__ = [
    "IDX_IMAGE_MAGIC",
    "IDX_LABEL_MAGIC",
    "FIELD_LABELS",
    "load_idx_images",
    "load_idx_labels",
    "save_field",
    "load_field",
    "field_header_path",
    "save_pgm",
]

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

FIELD_LABELS = ("template", "sigma_star", "image")

_FIELD_FORMAT = "field-v1"


def load_idx_images(path, count_limit: int | None = None) -> ImageStack:
    """Read an IDX image file into a stack of [0, 1] intensity images.

    At most ``count_limit`` images are returned, in file order.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated IDX image header")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(
            f"{path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}"
        )
    take = count if count_limit is None else min(count_limit, count)
    if take <= 0:
        raise InvalidInputError(f"{path}: no images selected (file has {count})")
    need = take * rows * cols
    payload = raw[16 : 16 + need]
    if len(payload) < need:
        raise FormatError(f"{path}: truncated IDX payload ({len(payload)} < {need} bytes)")
    data = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / 255.0
    return ImageStack(data.reshape(take, rows, cols))


def load_idx_labels(path) -> np.ndarray:
    """Read an IDX label file into an array of small integers."""
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise FormatError(f"{path}: truncated IDX label header")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != IDX_LABEL_MAGIC:
        raise FormatError(
            f"{path}: bad magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}"
        )
    payload = raw[8 : 8 + count]
    if len(payload) < count:
        raise FormatError(f"{path}: truncated IDX labels ({len(payload)} < {count})")
    return np.frombuffer(payload, dtype=np.uint8).copy()


def field_header_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".hdr")


def save_field(field: ImageGrid, path, label: str = "image") -> None:
    """Persist a field as raw little-endian float32 plus a text sidecar."""
    if label not in FIELD_LABELS:
        raise InvalidInputError(f"label must be one of {FIELD_LABELS}, got {label!r}")
    path = Path(path)
    payload = field.data.astype("<f4").tobytes(order="C")
    header = "".join(
        [
            f"format: {_FIELD_FORMAT}\n",
            f"label: {label}\n",
            f"dim: {field.dim}\n",
            f"shape: {' '.join(str(s) for s in field.shape)}\n",
            "dtype: float32\n",
            "endian: little\n",
        ]
    )
    path.write_bytes(payload)
    field_header_path(path).write_text(header)


def _parse_header(text: str, path) -> dict:
    entries = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise FormatError(f"{path}: malformed header line {line!r}")
        key, value = line.split(":", 1)
        entries[key.strip()] = value.strip()
    return entries


def load_field(path) -> tuple[ImageGrid, str]:
    """Load a field file; returns the grid and its semantic label."""
    path = Path(path)
    header_file = field_header_path(path)
    if not header_file.exists():
        raise FormatError(f"{path}: missing header sidecar {header_file.name}")
    entries = _parse_header(header_file.read_text(), header_file)
    for key in ("format", "label", "dim", "shape", "dtype", "endian"):
        if key not in entries:
            raise FormatError(f"{header_file}: missing header key {key!r}")
    if entries["format"] != _FIELD_FORMAT:
        raise FormatError(f"{header_file}: unknown format {entries['format']!r}")
    if entries["dtype"] != "float32" or entries["endian"] != "little":
        raise FormatError(f"{header_file}: unsupported encoding")
    if entries["label"] not in FIELD_LABELS:
        raise FormatError(f"{header_file}: unknown label {entries['label']!r}")
    try:
        shape = tuple(int(tok) for tok in entries["shape"].split())
        dim = int(entries["dim"])
    except ValueError as exc:
        raise FormatError(f"{header_file}: malformed shape/dim") from exc
    if dim != len(shape) or dim not in (1, 2, 3) or any(s <= 0 for s in shape):
        raise FormatError(f"{header_file}: invalid shape {shape} for dim {dim}")
    payload = path.read_bytes()
    expected = int(np.prod(shape)) * 4
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(shape)
    return ImageGrid(data), entries["label"]


def save_pgm(image: ImageGrid, path) -> None:
    """Write a 2d field as binary PGM with linear min-max scaling."""
    if image.dim != 2:
        raise InvalidInputError(f"PGM export needs a 2d image, got dim {image.dim}")
    lo, hi = image.value_range()
    if hi > lo:
        levels = np.clip(np.rint((image.data - lo) / (hi - lo) * 255), 0, 255)
    else:
        levels = np.zeros(image.shape)
    h, w = image.shape
    Path(path).write_bytes(
        b"P5\n%d %d\n255\n" % (w, h) + levels.astype(np.uint8).tobytes()
    )
