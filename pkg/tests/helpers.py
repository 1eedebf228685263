"""Shared synthetic-image builders for the test suite."""

from __future__ import annotations

import struct

import numpy as np

from templateres import ImageGrid, sample_linear_many


def gaussian_blob(shape, centers, width=5.0, amps=None) -> np.ndarray:
    """Sum of analytic Gaussian bumps evaluated at pixel centers."""
    idx = np.indices(shape, dtype=np.float64)
    out = np.zeros(shape)
    amps = amps if amps is not None else [1.0] * len(centers)
    for center, amp in zip(centers, amps):
        d2 = sum((idx[k] - center[k]) ** 2 for k in range(len(shape)))
        out += amp * np.exp(-d2 / (2.0 * width**2))
    return out


def two_blob_rotated(shape, angle, width=4.0) -> np.ndarray:
    """An asymmetric two-bump image rotated by ``angle`` about the grid center.

    Built analytically (the rotation is applied to coordinates before
    evaluating the bumps), so rotated variants share no interpolation error.
    """
    center = (np.array(shape, dtype=np.float64) - 1.0) / 2.0
    rot = np.array(
        [[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]]
    )
    pts = np.indices(shape, dtype=np.float64).reshape(2, -1).T
    local = (pts - center) @ rot  # rot^T applied on the right rotates content
    bump_centers = [np.array([8.0, 0.0]), np.array([-6.0, 3.0])]
    out = np.zeros(len(pts))
    for bc in bump_centers:
        d2 = ((local - bc) ** 2).sum(axis=1)
        out += np.exp(-d2 / (2.0 * width**2))
    return out.reshape(shape)


def upsample_bilinear(image: np.ndarray, out_shape) -> np.ndarray:
    """Resize by sampling the input at linearly spaced source coordinates."""
    src_max = np.array(image.shape, dtype=np.float64) - 1.0
    out_max = np.array(out_shape, dtype=np.float64) - 1.0
    pts = np.indices(out_shape, dtype=np.float64).reshape(len(out_shape), -1).T
    pts = pts * (src_max / out_max)
    return sample_linear_many(ImageGrid(image), pts).reshape(out_shape)


def write_idx_images(path, images_uint8: np.ndarray) -> None:
    n, rows, cols = images_uint8.shape
    with open(path, "wb") as handle:
        handle.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        handle.write(images_uint8.astype(np.uint8).tobytes())


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as handle:
        handle.write(struct.pack(">II", 0x00000801, len(labels)))
        handle.write(labels.tobytes())


def dir_file_bytes(directory) -> dict:
    """name -> content for every regular file in a directory (for byte diffs)."""
    return {
        p.name: p.read_bytes()
        for p in sorted(directory.iterdir())
        if p.is_file()
    }
