"""Where the notebooks get their digits from.

$PHOTONLAB_MNIST_IDX may point at any IDX image file (for example the
official train-images-idx3-ubyte.gz); otherwise the 100 digits kept with the
test-suite are used.
"""
import os
from pathlib import Path

import numpy as np

from photonlab import dataset_io

HERE = Path(__file__).resolve().parent
OUT = HERE / "out"


def load_digits() -> np.ndarray:
    path = os.environ.get("PHOTONLAB_MNIST_IDX")
    if path:
        return dataset_io.read_idx(path).images()
    return np.load(HERE.parent / "tests" / "data" / "mnist_digits.npy") / 255.0
