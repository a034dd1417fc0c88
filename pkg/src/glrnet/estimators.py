"""Gradient estimators for noisy networks.

``glr_gradient`` needs nothing but the loss value and the noise draws of a
forward pass, so it works for any activation and any loss. ``bp_gradient``
is ordinary back-propagation and needs a differentiable activation and
loss. ``fd_expected_gradient`` is a brute-force Monte Carlo finite
difference of the expected loss, used as an independent oracle for both.

Estimates are lists of arrays, one per weight layer, congruent with
:class:`~glrnet.network.ParameterSet`.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from . import seeding
from .errors import ConfigurationError, StructuralError
from .losses import get_loss
from .network import (
    ForwardTrace,
    NetworkSpec,
    NoiseSpec,
    ParameterSet,
    activation_derivative,
    draw_noise,
    forward,
    forward_with_noise,
)

GradientEstimate = list  # list[np.ndarray], one matrix per weight layer


def _sigma2(noise) -> float:
    sigma2 = noise.sigma2 if isinstance(noise, NoiseSpec) else float(noise)
    if not sigma2 > 0:
        raise ConfigurationError(f"noise variance must be positive, got {sigma2}")
    return sigma2


def _rows(a: np.ndarray) -> np.ndarray:
    return a.reshape(-1, a.shape[-1])


def _outer(left: Sequence[np.ndarray], right: Sequence[np.ndarray], reduce: bool):
    """Per-layer products ``left[l][a] * right[l][b]``, averaged over samples if asked."""
    out = []
    for s, x in zip(left, right):
        if s.ndim == 1:
            out.append(np.outer(s, x))
        elif reduce:
            S, X = _rows(s), _rows(x)
            out.append(S.T @ X / S.shape[0])
        else:
            out.append(s[..., :, None] * x[..., None, :])
    return out


def outer_stats(left: Sequence[np.ndarray], right: Sequence[np.ndarray]):
    """Sample mean and standard error of the per-sample products ``left ⊗ right``.

    Both are computed from first and second moments, so the per-sample
    matrices are never materialised.
    """
    means, errs = [], []
    for s, x in zip(left, right):
        S, X = _rows(s), _rows(x)
        n = S.shape[0]
        mean = S.T @ X / n
        second = (S * S).T @ (X * X) / n
        var = np.maximum(second - mean * mean, 0.0) * n / max(n - 1, 1)
        means.append(mean)
        errs.append(np.sqrt(var / n))
    return means, errs


def _check_loss(trace: ForwardTrace, loss_value) -> np.ndarray:
    loss = np.asarray(loss_value, dtype=np.float64)
    if loss.shape != trace.batch_shape:
        raise StructuralError(
            f"loss of shape {loss.shape} does not match trace batch {trace.batch_shape}"
        )
    return loss


def glr_scores(trace: ForwardTrace, loss_value, noise) -> list[np.ndarray]:
    """``L * r / sigma2`` per layer: the factor multiplying each input in the GLR estimate."""
    sigma2 = _sigma2(noise)
    loss = _check_loss(trace, loss_value)
    return [loss[..., None] * r / sigma2 for r in trace.noise]


def glr_gradient(trace: ForwardTrace, loss_value, noise, reduce: bool = True) -> GradientEstimate:
    """GLR estimate: entry ``(a, b)`` of layer ``l`` is ``L * x_b * r_a / sigma2``.

    For a batched trace the per-sample estimates are averaged unless
    ``reduce`` is false.
    """
    return _outer(glr_scores(trace, loss_value, noise), trace.inputs, reduce)


def glr_gradient_stats(trace: ForwardTrace, loss_value, noise):
    """Mean and standard error of the GLR estimate over a batched trace."""
    return outer_stats(glr_scores(trace, loss_value, noise), trace.inputs)


def replicate_blocks(K: int, block_size: int) -> list[int]:
    if K < 1:
        raise ConfigurationError(f"need at least one replicate, got {K}")
    full, rest = divmod(K, block_size)
    return [block_size] * full + ([rest] if rest else [])


def block_rng(entropy: int, block: int) -> np.random.Generator:
    """Noise stream of replicate block ``block`` under root ``entropy``."""
    return seeding.derive(entropy, block)


def glr_gradient_averaged(spec: NetworkSpec, params: ParameterSet, inputs, targets, K: int,
                          rng: np.random.Generator, loss: str = "cross_entropy",
                          block_size: int = 1000, workers: int = 1, with_loss: bool = False):
    """Average of ``K`` independent GLR estimates on the same input(s).

    ``inputs`` may be a single bias-prefixed vector or a mini-batch; in the
    latter case every replicate redraws the noise for the whole batch and the
    result is averaged with equal weights over replicates and batch items.

    Replicates are processed in blocks of ``block_size``. Block ``i`` draws its
    noise from a stream derived from one integer taken from ``rng`` and the
    block index, and block partial sums are combined in index order, so the
    result does not depend on ``workers``.
    """
    if spec.noise is None:
        raise ConfigurationError("GLR needs a noisy network")
    sigma2 = _sigma2(spec.noise)
    loss_fn = get_loss(loss)
    targets = np.asarray(targets, dtype=np.float64)
    root = seeding.entropy_from(rng)
    sizes = replicate_blocks(int(K), int(block_size))

    def run(i):
        trace = forward(spec, params, inputs, block_rng(root, i), replicates=sizes[i])
        L = loss_fn(trace.output, targets)
        scores = [L[..., None] * r / sigma2 for r in trace.noise]
        partial = [_rows(s).T @ _rows(x) for s, x in zip(scores, trace.inputs)]
        return partial, float(np.sum(L)), L.size

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]

    count = sum(n for _, _, n in parts)
    grads = [sum(p[0][l] for p in parts) / count for l in range(len(params.layers))]
    if with_loss:
        return grads, math.fsum(p[1] for p in parts) / count
    return grads


def backprop_deltas(trace: ForwardTrace, spec: NetworkSpec, params: ParameterSet,
                    loss_grad, wrt_pre: bool = False) -> list[np.ndarray]:
    """Error signals ``delta`` at every non-input layer, last layer last.

    ``loss_grad`` is the loss gradient with respect to the network output, or
    with respect to the last pre-activation when ``wrt_pre`` is true.
    """
    e = np.asarray(loss_grad, dtype=np.float64)
    if e.shape != trace.output.shape:
        raise StructuralError(f"loss gradient of shape {e.shape} for output {trace.output.shape}")
    act = spec.activation
    d = e if wrt_pre else e * activation_derivative(act, trace.pre[-1])
    deltas = [d]
    for l in range(len(params.layers) - 1, 0, -1):
        d = activation_derivative(act, trace.pre[l - 1]) * (d @ params.layers[l][:, 1:])
        deltas.append(d)
    return deltas[::-1]


def bp_gradient(trace: ForwardTrace, spec: NetworkSpec, params: ParameterSet, loss_grad,
                reduce: bool = True) -> GradientEstimate:
    """Back-propagation estimate ``delta_a * x_b``; requires the sigmoid activation."""
    return _outer(backprop_deltas(trace, spec, params, loss_grad), trace.inputs, reduce)


def bp_gradient_stats(trace: ForwardTrace, spec: NetworkSpec, params: ParameterSet, loss_grad):
    return outer_stats(backprop_deltas(trace, spec, params, loss_grad), trace.inputs)


def _entry(params: ParameterSet, entry) -> tuple[int, int, int]:
    if isinstance(entry, (int, np.integer)):
        return params.index(int(entry))
    layer, a, b = entry
    return int(layer), int(a), int(b)


def fd_expected_gradient_all(spec: NetworkSpec, params: ParameterSet, inputs, target,
                             h: float = 0.05, M: int = 200_000,
                             rng: np.random.Generator | None = None,
                             loss: str = "cross_entropy", entries=None,
                             chunk: int = 50_000):
    """Central finite differences of the Monte Carlo expected loss.

    Each entry's difference uses the same noise draws at ``theta + h`` and
    ``theta - h`` (common random numbers), and all entries share one set of
    draws. Returns ``(estimates, standard_errors)`` as flat arrays over
    ``entries`` (all parameters by default). A noise-free ``spec`` gives a
    plain deterministic central difference with zero standard error.
    """
    if not h > 0:
        raise ConfigurationError(f"step must be positive, got {h}")
    if M < 1:
        raise ConfigurationError(f"need at least one replicate, got {M}")
    params.check(spec)
    loss_fn = get_loss(loss)
    target = np.asarray(target, dtype=np.float64)
    x = np.asarray(inputs, dtype=np.float64)
    if entries is None:
        entries = range(spec.n_params)
    idx = [_entry(params, e) for e in entries]
    shifted = [(params.perturbed(*e, h), params.perturbed(*e, -h)) for e in idx]

    if spec.noise is None:
        zeros = [np.zeros(x.shape[:-1] + (m,)) for m in spec.widths[1:]]
        est = np.array([
            float(np.mean(loss_fn(forward_with_noise(spec, up, x, zeros).output, target)
                          - loss_fn(forward_with_noise(spec, dn, x, zeros).output, target)))
            / (2 * h)
            for up, dn in shifted
        ])
        return est, np.zeros_like(est)

    if rng is None:
        raise ConfigurationError("a noisy oracle needs a random stream")
    total = np.zeros(len(idx))
    total_sq = np.zeros(len(idx))
    for n in replicate_blocks(int(M), int(chunk)):
        noise = draw_noise(spec, (n,) + x.shape[:-1], rng)
        for k, (up, dn) in enumerate(shifted):
            diff = (loss_fn(forward_with_noise(spec, up, x, noise).output, target)
                    - loss_fn(forward_with_noise(spec, dn, x, noise).output, target)) / (2 * h)
            if diff.ndim > 1:
                diff = diff.reshape(n, -1).mean(axis=1)
            total[k] += diff.sum()
            total_sq[k] += (diff * diff).sum()
    mean = total / M
    var = np.maximum(total_sq / M - mean * mean, 0.0) * M / max(M - 1, 1)
    return mean, np.sqrt(var / M)


def fd_expected_gradient(spec: NetworkSpec, params: ParameterSet, inputs, target, entry,
                         h: float = 0.05, M: int = 200_000,
                         rng: np.random.Generator | None = None,
                         loss: str = "cross_entropy") -> tuple[float, float]:
    """Oracle derivative of the expected loss for a single parameter.

    ``entry`` is a flat index or a ``(layer, a, b)`` triple. Returns
    ``(estimate, standard_error)``.
    """
    est, err = fd_expected_gradient_all(spec, params, inputs, target, h, M, rng, loss, [entry])
    return float(est[0]), float(err[0])


def flatten(grads: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(g).ravel() for g in grads])
