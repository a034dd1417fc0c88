"""Transfer attacks: adversarial images crafted on a BP-trained surrogate.

Generation functions only ever see the surrogate; victims are evaluated on
the finished images afterwards.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from .data import N_CLASSES, SampleSet, encode_target
from .errors import ConfigurationError
from .estimators import backprop_deltas
from .io import load_samples, save_samples
from .losses import cross_entropy, cross_entropy_grad
from .network import NetworkSpec, ParameterSet, forward_deterministic, predict
from .training import evaluate


class AttackMethod(str, enum.Enum):
    FGSM = "fgsm"
    LBFGS = "lbfgs"


@dataclass(frozen=True)
class AttackConfig:
    method: AttackMethod = AttackMethod.FGSM
    epsilon: float = 0.25
    target_selection: str = "next_label"
    c_min: float = 1e-3
    c_max: float = 10.0
    bisection_steps: int = 6
    max_inner_iters: int = 100
    objective: str = "pre_activation"

    def __post_init__(self):
        object.__setattr__(self, "method", AttackMethod(self.method))
        if self.epsilon < 0:
            raise ConfigurationError(f"epsilon must be non-negative, got {self.epsilon}")
        if not 0 < self.c_min < self.c_max:
            raise ConfigurationError(f"need 0 < c_min < c_max, got {self.c_min}, {self.c_max}")
        if self.objective not in ("pre_activation", "output"):
            raise ConfigurationError(f"unknown attack objective {self.objective!r}")
        if self.target_selection != "next_label":
            raise ConfigurationError(f"unknown target selection {self.target_selection!r}")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["method"] = self.method.value
        return d


@dataclass
class AdversarialSet:
    """Index-aligned originals, adversarial images (both bias-prefixed) and true labels."""

    originals: np.ndarray
    adversarial: np.ndarray
    labels: np.ndarray
    success: np.ndarray
    method: str
    params: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.labels)

    def samples(self) -> SampleSet:
        return SampleSet(self.adversarial, self.labels)

    def original_samples(self) -> SampleSet:
        return SampleSet(self.originals, self.labels)


def input_gradient(spec: NetworkSpec, params: ParameterSet, x, targets) -> np.ndarray:
    """Gradient of the noise-free cross-entropy with respect to the pixels (bias slot excluded)."""
    trace = forward_deterministic(spec, params, x)
    deltas = backprop_deltas(trace, spec, params, cross_entropy_grad(trace.output, targets))
    return deltas[0] @ params.layers[0][:, 1:]


def fgsm(x, spec: NetworkSpec, params: ParameterSet, labels, epsilon: float) -> np.ndarray:
    """``clip(x + epsilon * sign(grad), 0, 1)`` on the pixels; the bias slot is kept."""
    if epsilon < 0:
        raise ConfigurationError(f"epsilon must be non-negative, got {epsilon}")
    x = np.asarray(x, dtype=np.float64)
    g = input_gradient(spec, params, x, encode_target(labels, spec.widths[-1]))
    out = x.copy()
    out[..., 1:] = np.clip(x[..., 1:] + epsilon * np.sign(g), 0.0, 1.0)
    return out


def next_label(label: int, n_classes: int = N_CLASSES) -> int:
    return (int(label) + 1) % n_classes


@dataclass
class LBFGSResult:
    x: np.ndarray
    success: bool
    c: float
    distortion: float


def _minimise(x0, spec, params, target, c, max_iter, on_pre):
    """Box-constrained L-BFGS on ``c * |z - x0|^2 + CE(scores(z), target)`` over the pixels.

    ``scores`` are the surrogate's outputs, or its last pre-activations when
    ``on_pre`` is set.
    """
    px = x0[1:]
    t = encode_target(target, spec.widths[-1])
    buf = x0.copy()

    def f(z):
        buf[1:] = z
        d = z - px
        trace = forward_deterministic(spec, params, buf)
        scores = trace.pre[-1] if on_pre else trace.output
        e = cross_entropy_grad(scores, t)
        delta = backprop_deltas(trace, spec, params, e, wrt_pre=on_pre)[0]
        grad_in = delta @ params.layers[0][:, 1:]
        return c * d @ d + float(cross_entropy(scores, t)), 2 * c * d + grad_in

    res = minimize(f, px, jac=True, method="L-BFGS-B", bounds=[(0.0, 1.0)] * len(px),
                   options={"maxiter": max_iter})
    z = np.clip(res.x, 0.0, 1.0)
    if not np.all(np.isfinite(z)):
        return None
    out = x0.copy()
    out[1:] = z
    return out


def lbfgs_attack(x, label: int, spec: NetworkSpec, params: ParameterSet,
                 config: AttackConfig = AttackConfig(AttackMethod.LBFGS)) -> LBFGSResult:
    """Targeted minimal-perturbation attack toward the next label.

    Success means the surrogate's prediction moves off the true label. The
    penalty weight ``c`` is searched geometrically for the largest value that
    still succeeds, which gives the smallest perturbation. If even ``c_min``
    fails, the ``c_min`` result comes back flagged unsuccessful.
    """
    x = np.asarray(x, dtype=np.float64)
    target = next_label(label, spec.widths[-1])

    def fooled(z):
        return z is not None and int(predict(spec, params, z)) != int(label)

    def run(c):
        try:
            z = _minimise(x, spec, params, target, c, config.max_inner_iters,
                          config.objective == "pre_activation")
        except (FloatingPointError, ValueError, ArithmeticError):
            z = None
        return z

    def result(z, ok, c):
        z = x.copy() if z is None else z
        return LBFGSResult(z, ok, c, float(np.linalg.norm(z[1:] - x[1:])))

    if fooled(x):
        return result(x.copy(), True, config.c_max)
    z = run(config.c_max)
    if fooled(z):
        return result(z, True, config.c_max)
    z_lo = run(config.c_min)
    if not fooled(z_lo):
        return result(z_lo, False, config.c_min)
    lo, hi, best = config.c_min, config.c_max, z_lo
    for _ in range(config.bisection_steps):
        mid = math.sqrt(lo * hi)
        z = run(mid)
        if fooled(z):
            lo, best = mid, z
        else:
            hi = mid
    return result(best, True, lo)


def generate(spec: NetworkSpec, params: ParameterSet, samples: SampleSet,
             config: AttackConfig) -> AdversarialSet:
    """Attack every sample against the surrogate ``(spec, params)``."""
    if config.method is AttackMethod.FGSM:
        adv = fgsm(samples.x, spec, params, samples.labels, config.epsilon)
        success = predict(spec, params, adv) != samples.labels
        params_out = {"epsilon": config.epsilon}
    else:
        results = [lbfgs_attack(x, y, spec, params, config)
                   for x, y in zip(samples.x, samples.labels)]
        adv = np.stack([r.x for r in results]) if results else samples.x.copy()
        success = np.array([r.success for r in results], dtype=bool)
        params_out = {k: v for k, v in config.as_dict().items() if k not in ("method", "epsilon")}
    return AdversarialSet(samples.x.copy(), adv, samples.labels.copy(), success,
                          config.method.value, params_out)


def adversarial_test(adv_set: AdversarialSet, victim_spec: NetworkSpec,
                     victim_params: ParameterSet) -> float:
    """Noise-free accuracy of the victim on the adversarial images against the true labels."""
    return evaluate(victim_spec, victim_params, adv_set.samples())


def save_adversarial(path, adv_set: AdversarialSet, manifest: dict | None = None) -> None:
    save_samples(path, adv_set.adversarial, adv_set.labels, originals=adv_set.originals,
                 flags=adv_set.success, method=adv_set.method, params=adv_set.params,
                 manifest=manifest)


def load_adversarial(path) -> AdversarialSet:
    f = load_samples(path)
    if f.originals is None:
        raise ConfigurationError(f"{path} holds unpaired samples, not an adversarial set")
    flags = f.flags if f.flags is not None else np.zeros(len(f.labels), dtype=bool)
    return AdversarialSet(f.originals, f.x, f.labels, flags, f.method, f.params)


def save_pairs_png(path, adv_set: AdversarialSet, count: int = 10, scale: int = 4) -> None:
    """Grid image with one row per pair: original on the left, adversarial on the right."""
    from PIL import Image

    count = min(count, len(adv_set))
    side = int(round(math.sqrt(adv_set.originals.shape[1] - 1)))
    gap = 2
    canvas = np.ones((count * (side + gap), 2 * side + gap))
    for i in range(count):
        top = i * (side + gap)
        canvas[top:top + side, :side] = adv_set.originals[i, 1:].reshape(side, side)
        canvas[top:top + side, side + gap:] = adv_set.adversarial[i, 1:].reshape(side, side)
    img = Image.fromarray((255 * (1 - canvas)).astype(np.uint8))
    img = img.resize((img.width * scale, img.height * scale), Image.NEAREST)
    img.save(path)
