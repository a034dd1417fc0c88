"""Gradient-check suites comparing the estimators against each other and the oracle."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import seeding
from .estimators import (
    bp_gradient,
    fd_expected_gradient_all,
    flatten,
    glr_scores,
    backprop_deltas,
)
from .io import write_csv
from .losses import cross_entropy_grad, get_loss
from .network import (
    ActivationSpec,
    NetworkSpec,
    NoiseSpec,
    ParameterSet,
    forward,
    forward_deterministic,
)

Z_COLUMNS = ("suite", "draw", "index", "layer", "row", "col",
             "glr_mean", "glr_stderr", "oracle", "oracle_stderr", "z")
BP_COLUMNS = ("suite", "draw", "index", "bp", "fd", "rel_error")


@dataclass
class Problem:
    spec: NetworkSpec
    params: ParameterSet
    x: np.ndarray
    target: np.ndarray


def random_problem(spec: NetworkSpec, rng: np.random.Generator, scale: float = 1.0) -> Problem:
    """Normal(0, scale^2) weights, a Uniform(0, 1) input and a random one-hot target."""
    params = ParameterSet([rng.normal(0.0, scale, size=s) for s in spec.shapes])
    x = np.concatenate([[1.0], rng.uniform(0.0, 1.0, spec.widths[0])])
    target = np.eye(spec.widths[-1])[rng.integers(spec.widths[-1])]
    return Problem(spec, params, x, target)


def _chunked_stats(p: Problem, n: int, rng, chunk: int, per_sample: Callable):
    """Mean and standard error of per-sample estimates ``left ⊗ right`` over ``n`` noisy passes."""
    total = total_sq = None
    done = 0
    while done < n:
        m = min(chunk, n - done)
        trace = forward(p.spec, p.params, p.x, rng, replicates=m)
        left = per_sample(trace)
        s1 = flatten([l.T @ x for l, x in zip(left, trace.inputs)])
        s2 = flatten([(l * l).T @ (x * x) for l, x in zip(left, trace.inputs)])
        total = s1 if total is None else total + s1
        total_sq = s2 if total_sq is None else total_sq + s2
        done += m
    mean = total / n
    var = np.maximum(total_sq / n - mean * mean, 0.0) * n / max(n - 1, 1)
    return mean, np.sqrt(var / n)


def glr_stats(p: Problem, loss: str, n: int, rng, chunk: int = 200_000):
    loss_fn = get_loss(loss)
    return _chunked_stats(
        p, n, rng, chunk,
        lambda tr: glr_scores(tr, loss_fn(tr.output, p.target), p.spec.noise),
    )


def bp_stats(p: Problem, n: int, rng, chunk: int = 200_000):
    return _chunked_stats(
        p, n, rng, chunk,
        lambda tr: backprop_deltas(tr, p.spec, p.params, cross_entropy_grad(tr.output, p.target)),
    )


def z_scores(mean_a, err_a, mean_b, err_b) -> np.ndarray:
    err = np.sqrt(err_a ** 2 + err_b ** 2)
    diff = mean_a - mean_b
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(err > 0, diff / err, np.where(diff == 0, 0.0, np.inf))
    return z


def glr_vs_oracle(widths=(4, 3, 2), activation: str = "sigmoid", loss: str = "cross_entropy",
                  sigma2: float = 4.0, draws: int = 5, n_glr: int = 1_000_000,
                  M: int = 200_000, h: float = 0.05, seed: int = 0,
                  estimator: Callable | None = None) -> list[tuple]:
    """z-scores of the mean GLR estimate against the finite-difference oracle.

    ``estimator(problem, loss, n, rng) -> (mean, stderr)`` replaces the GLR
    statistics when given; it exists so that a deliberately broken
    estimator can be shown to fail the check.
    """
    estimator = estimator or glr_stats
    spec = NetworkSpec(tuple(widths), ActivationSpec(activation), NoiseSpec(sigma2))
    suite = f"glr-{activation}-{loss}"
    rows = []
    for d in range(draws):
        p = random_problem(spec, seeding.derive(seed, seeding.GRADCHECK, 0, d))
        g_mean, g_err = estimator(p, loss, n_glr, seeding.derive(seed, seeding.GRADCHECK, 1, d))
        o_mean, o_err = fd_expected_gradient_all(
            spec, p.params, p.x, p.target, h=h, M=M, loss=loss,
            rng=seeding.derive(seed, seeding.GRADCHECK, 2, d),
        )
        z = z_scores(g_mean, g_err, o_mean, o_err)
        for i in range(spec.n_params):
            layer, a, b = p.params.index(i)
            rows.append((suite, d, i, layer, a, b, float(g_mean[i]), float(g_err[i]),
                         float(o_mean[i]), float(o_err[i]), float(z[i])))
    return rows


def bp_vs_glr(widths=(4, 3, 2), sigma2: float = 4.0, draws: int = 5, n: int = 100_000,
              seed: int = 0) -> list[tuple]:
    """Mean GLR against mean BP on the same noise draws (sigmoid net, cross-entropy)."""
    spec = NetworkSpec(tuple(widths), ActivationSpec("sigmoid"), NoiseSpec(sigma2))
    rows = []
    for d in range(draws):
        p = random_problem(spec, seeding.derive(seed, seeding.GRADCHECK, 0, d))
        trace = forward(spec, p.params, p.x, seeding.derive(seed, seeding.GRADCHECK, 3, d),
                        replicates=n)
        L = get_loss("cross_entropy")(trace.output, p.target)
        glr = [np.asarray(s) for s in glr_scores(trace, L, spec.noise)]
        bp = backprop_deltas(trace, spec, p.params, cross_entropy_grad(trace.output, p.target))
        g_mean, g_err = _pair_stats(glr, trace.inputs)
        b_mean, b_err = _pair_stats(bp, trace.inputs)
        # paired differences: both estimators see the same noise
        d_mean, d_err = _pair_diff_stats(glr, bp, trace.inputs)
        for i in range(spec.n_params):
            layer, a, b = p.params.index(i)
            z = d_mean[i] / d_err[i] if d_err[i] > 0 else 0.0
            rows.append(("bp-vs-glr", d, i, layer, a, b, float(g_mean[i]), float(g_err[i]),
                         float(b_mean[i]), float(b_err[i]), float(z)))
    return rows


def _pair_stats(left, inputs):
    n = left[0].shape[0]
    s1 = flatten([l.T @ x for l, x in zip(left, inputs)])
    s2 = flatten([(l * l).T @ (x * x) for l, x in zip(left, inputs)])
    mean = s1 / n
    var = np.maximum(s2 / n - mean * mean, 0.0) * n / (n - 1)
    return mean, np.sqrt(var / n)


def _pair_diff_stats(left_a, left_b, inputs):
    """Statistics of the per-sample difference ``(a - b) ⊗ x``, which is linear in the left factor."""
    return _pair_stats([a - b for a, b in zip(left_a, left_b)], inputs)


def bp_vs_fd(widths=(3, 4, 2), draws: int = 5, h: float = 1e-5, seed: int = 0,
             floor: float = 1e-6) -> list[tuple]:
    """BP on a noise-free sigmoid net against central differences of the loss.

    Relative error is ``|bp - fd| / max(|bp|, |fd|, floor)``.
    """
    spec = NetworkSpec(tuple(widths), ActivationSpec("sigmoid"), None)
    rows = []
    for d in range(draws):
        p = random_problem(spec, seeding.derive(seed, seeding.GRADCHECK, 4, d))
        trace = forward_deterministic(spec, p.params, p.x)
        bp = flatten(bp_gradient(trace, spec, p.params, cross_entropy_grad(trace.output, p.target)))
        fd, _ = fd_expected_gradient_all(spec, p.params, p.x, p.target, h=h)
        rel = np.abs(bp - fd) / np.maximum(np.maximum(np.abs(bp), np.abs(fd)), floor)
        rows.extend(("bp-vs-fd", d, i, float(bp[i]), float(fd[i]), float(rel[i]))
                    for i in range(spec.n_params))
    return rows


def write_z_report(path, rows, header_lines=()) -> None:
    write_csv(path, Z_COLUMNS, rows, header_lines)


def write_bp_report(path, rows, header_lines=()) -> None:
    write_csv(path, BP_COLUMNS, rows, header_lines)
