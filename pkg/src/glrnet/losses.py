"""Losses between network outputs and one-hot observations.

Every function works on the last axis and broadcasts over leading batch
dimensions. ``o`` is always a one-hot array.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError


def softmax(x):
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(x - np.max(x, axis=-1, keepdims=True))
    return z / np.sum(z, axis=-1, keepdims=True)


def log_softmax(x):
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def cross_entropy(x, o):
    return -np.sum(np.asarray(o) * log_softmax(x), axis=-1)


def cross_entropy_grad(x, o):
    """Gradient of :func:`cross_entropy` with respect to ``x``: ``p(x) - o``."""
    return softmax(x) - np.asarray(o, dtype=np.float64)


def zero_one_loss(x, o):
    """0 when the arg-max of ``x`` hits the hot index of ``o``, 1 otherwise.

    Ties in ``x`` resolve to the lowest index; softmax does not change the
    arg-max so it is skipped.
    """
    hit = np.argmax(x, axis=-1) == np.argmax(o, axis=-1)
    return np.where(hit, 0.0, 1.0)


LOSSES = {
    "cross_entropy": cross_entropy,
    "zero_one": zero_one_loss,
}

LOSS_GRADS = {
    "cross_entropy": cross_entropy_grad,
}


def get_loss(name: str):
    try:
        return LOSSES[name]
    except KeyError:
        raise ConfigurationError(f"unknown loss {name!r}; choose from {sorted(LOSSES)}") from None


def get_loss_grad(name: str):
    try:
        return LOSS_GRADS[name]
    except KeyError:
        raise ConfigurationError(f"loss {name!r} is not differentiable") from None
