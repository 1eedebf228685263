import os
from pathlib import Path

import numpy as np
import pytest

from helpers import upsample_bilinear, write_idx_images, write_idx_labels

DIGIT = 3
DIGIT_COUNT = 100


def _real_mnist_paths():
    """Raw IDX files of the real handwritten-digit corpus, if available.

    Point MNIST_DIR (or TEMPLATERES_MNIST) at a directory containing the
    uncompressed train-images-idx3-ubyte / train-labels-idx1-ubyte pair to
    run the desk-scale experiment on the original data.
    """
    root = os.environ.get("TEMPLATERES_MNIST") or os.environ.get("MNIST_DIR")
    if not root:
        return None
    images = Path(root) / "train-images-idx3-ubyte"
    labels = Path(root) / "train-labels-idx1-ubyte"
    if images.exists() and labels.exists():
        return images, labels
    return None


def _surrogate_digit_images() -> np.ndarray:
    """First 100 handwritten '3's from the bundled scikit-learn digit set,
    upsampled 8x8 -> 28x28. Real pen strokes, identical container format."""
    from sklearn.datasets import load_digits

    ds = load_digits()
    selected = ds.images[ds.target == DIGIT][:DIGIT_COUNT] / 16.0
    out = np.zeros((len(selected), 28, 28))
    for i, img in enumerate(selected):
        out[i] = upsample_bilinear(img, (28, 28))
    return np.clip(np.rint(out * 255), 0, 255).astype(np.uint8)


@pytest.fixture(scope="session")
def digit_idx_files(tmp_path_factory):
    """(images_path, labels_path) of an IDX pair with >= 100 digit-3 samples."""
    real = _real_mnist_paths()
    if real is not None:
        return real
    root = tmp_path_factory.mktemp("digits")
    images_path = root / "digits-images-idx3-ubyte"
    labels_path = root / "digits-labels-idx1-ubyte"
    images = _surrogate_digit_images()
    write_idx_images(images_path, images)
    write_idx_labels(labels_path, np.full(len(images), DIGIT))
    return images_path, labels_path
