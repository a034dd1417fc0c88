"""Natural-noise corruptions for 14x14 grayscale digits at five severities.

The four families follow the IMAGENET-C naming (Gaussian noise, impulse
noise, glass blur, contrast) with parameters rescaled for tiny images.
Inputs and outputs are bias-prefixed vectors (``x[..., 0] == 1``); only the
pixel part is touched and it is clipped back to [0, 1].
"""

from __future__ import annotations

import enum

import numpy as np
from scipy.ndimage import uniform_filter

from .errors import ConfigurationError, StructuralError

SIDE = 14


class Corruption(str, enum.Enum):
    GAUSSIAN_NOISE = "gaussian_noise"
    IMPULSE_NOISE = "impulse_noise"
    GLASS_BLUR = "glass_blur"
    CONTRAST = "contrast"


# one entry per severity 1..5
SEVERITY_TABLE = {
    Corruption.GAUSSIAN_NOISE: (0.08, 0.12, 0.18, 0.26, 0.38),   # noise std
    Corruption.IMPULSE_NOISE: (0.03, 0.06, 0.09, 0.17, 0.27),    # replacement probability
    Corruption.GLASS_BLUR: (1, 2, 3, 4, 5),                      # swap rounds
    Corruption.CONTRAST: (0.75, 0.5, 0.4, 0.3, 0.15),            # contrast factor
}
GLASS_BLUR_FROM = 3  # box blur applied at this severity and above


def severity_parameter(kind, severity: int):
    kind = Corruption(kind)
    if severity not in (1, 2, 3, 4, 5):
        raise ConfigurationError(f"severity must be 1..5, got {severity}")
    return SEVERITY_TABLE[kind][severity - 1]


def parameter_table() -> dict[str, list]:
    return {k.value: list(v) for k, v in SEVERITY_TABLE.items()}


def gaussian_noise(pixels, std: float, rng: np.random.Generator):
    return pixels + rng.normal(0.0, std, size=pixels.shape)


def impulse_noise(pixels, prob: float, rng: np.random.Generator):
    hit = rng.random(pixels.shape) < prob
    salt = rng.random(pixels.shape) < 0.5
    return np.where(hit, salt.astype(np.float64), pixels)


def contrast(pixels, factor: float):
    mean = pixels.mean(axis=-1, keepdims=True)
    return mean + (pixels - mean) * factor


def glass_blur(pixels, rounds: int, rng: np.random.Generator, blur: bool):
    """Swap every pixel with a random neighbour (offsets in {-1, 0, 1}) ``rounds`` times.

    Pixels are visited in raster order and swaps happen in place, so later
    visits see earlier swaps. Neighbours falling outside the image are
    clamped to the border.
    """
    img = pixels.reshape(-1, SIDE, SIDE).copy()
    n = img.shape[0]
    offsets = rng.integers(-1, 2, size=(rounds, n, SIDE, SIDE, 2))
    for r in range(rounds):
        for i in range(SIDE):
            for j in range(SIDE):
                di = np.clip(i + offsets[r, :, i, j, 0], 0, SIDE - 1)
                dj = np.clip(j + offsets[r, :, i, j, 1], 0, SIDE - 1)
                rows = np.arange(n)
                here = img[rows, i, j].copy()
                img[rows, i, j] = img[rows, di, dj]
                img[rows, di, dj] = here
    if blur:
        img = uniform_filter(img, size=(1, 3, 3), mode="nearest")
    return img.reshape(pixels.shape)


def corrupt(x, kind, severity: int, rng: np.random.Generator) -> np.ndarray:
    """Corrupt bias-prefixed image vector(s) ``x`` of shape ``(..., 197)``."""
    kind = Corruption(kind)
    param = severity_parameter(kind, severity)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != SIDE * SIDE + 1:
        raise StructuralError(f"expected {SIDE * SIDE + 1} entries per image, got {x.shape[-1]}")
    pixels = x[..., 1:]
    if kind is Corruption.GAUSSIAN_NOISE:
        out = gaussian_noise(pixels, param, rng)
    elif kind is Corruption.IMPULSE_NOISE:
        out = impulse_noise(pixels, param, rng)
    elif kind is Corruption.GLASS_BLUR:
        out = glass_blur(pixels, param, rng, blur=severity >= GLASS_BLUR_FROM)
    else:
        out = contrast(pixels, param)
    result = x.copy()
    result[..., 1:] = np.clip(out, 0.0, 1.0)
    return result


def severity_averaged_accuracy(accuracies) -> float:
    """Mean accuracy over the five severity levels of one corruption type."""
    acc = np.asarray(accuracies, dtype=np.float64)
    if acc.shape != (5,):
        raise StructuralError(f"need exactly five accuracies, got shape {acc.shape}")
    return float(np.mean(acc))
