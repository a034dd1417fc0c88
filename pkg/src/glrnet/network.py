"""Feed-forward networks with Gaussian noise added to every neuron.

Layer ``t`` maps its input ``x`` (with ``x[0] == 1`` carrying the bias) to

    v = theta @ x + r,      r ~ Normal(0, sigma2)
    x_next = phi(v)

and the final layer's ``phi(v)`` is the network output. All routines accept
arbitrary leading batch dimensions; the last axis is always the neuron axis.
"""

from __future__ import annotations

import enum
import io
import json
from dataclasses import dataclass, field
from os import PathLike
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError, FormatError, StructuralError, UnsupportedActivationError


class Activation(str, enum.Enum):
    SIGMOID = "sigmoid"
    THRESHOLD = "threshold"
    ABS = "abs"


@dataclass(frozen=True)
class ActivationSpec:
    kind: Activation = Activation.SIGMOID
    slope: float = 1.0  # only read by SIGMOID

    def __post_init__(self):
        object.__setattr__(self, "kind", Activation(self.kind))
        if self.kind is Activation.SIGMOID and not self.slope > 0:
            raise ConfigurationError(f"sigmoid slope must be positive, got {self.slope}")

    @property
    def smooth(self) -> bool:
        return self.kind is Activation.SIGMOID


@dataclass(frozen=True)
class NoiseSpec:
    sigma2: float = 4.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ConfigurationError(f"noise variance must be positive, got {self.sigma2}")

    @property
    def std(self) -> float:
        return float(np.sqrt(self.sigma2))


@dataclass(frozen=True)
class NetworkSpec:
    """Layer widths exclude the constant bias slot: ``[196, 20, 10]``."""

    widths: tuple[int, ...]
    activation: ActivationSpec = field(default_factory=ActivationSpec)
    noise: NoiseSpec | None = field(default_factory=NoiseSpec)

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 2 or min(widths) < 1:
            raise StructuralError(f"need at least two layers of positive width, got {widths}")
        object.__setattr__(self, "widths", widths)

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [(m_out, m_in + 1) for m_in, m_out in zip(self.widths[:-1], self.widths[1:])]

    @property
    def n_params(self) -> int:
        return sum(a * b for a, b in self.shapes)

    @property
    def input_size(self) -> int:
        """Length of an input vector including the bias slot."""
        return self.widths[0] + 1


class ParameterSet:
    """Synaptic weights, one ``(m_out, m_in + 1)`` matrix per layer.

    Column 0 of each matrix multiplies the bias slot. Instances are treated as
    immutable values: the stored arrays are read-only and every update
    returns a new object.
    """

    def __init__(self, layers: Sequence[np.ndarray]):
        frozen = []
        for w in layers:
            w = np.array(w, dtype=np.float64)
            if w.ndim != 2:
                raise StructuralError(f"weight matrices must be 2-D, got shape {w.shape}")
            if not np.all(np.isfinite(w)):
                raise StructuralError("weights must be finite")
            w.setflags(write=False)
            frozen.append(w)
        for prev, nxt in zip(frozen[:-1], frozen[1:]):
            if nxt.shape[1] != prev.shape[0] + 1:
                raise StructuralError(
                    f"layer of shape {nxt.shape} cannot follow layer of shape {prev.shape}"
                )
        self.layers: tuple[np.ndarray, ...] = tuple(frozen)

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [w.shape for w in self.layers]

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.layers[0].shape[1] - 1,) + tuple(w.shape[0] for w in self.layers)

    def check(self, spec: NetworkSpec) -> None:
        if self.shapes != spec.shapes:
            raise StructuralError(f"parameter shapes {self.shapes} do not match {spec.shapes}")

    def flat(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.layers])

    @classmethod
    def from_flat(cls, shapes: Sequence[tuple[int, int]], vec: np.ndarray) -> "ParameterSet":
        vec = np.asarray(vec, dtype=np.float64)
        total = sum(a * b for a, b in shapes)
        if vec.shape != (total,):
            raise StructuralError(f"expected {total} values, got {vec.shape}")
        layers, start = [], 0
        for a, b in shapes:
            layers.append(vec[start:start + a * b].reshape(a, b))
            start += a * b
        return cls(layers)

    def index(self, flat_index: int) -> tuple[int, int, int]:
        """Map a flat parameter index to ``(layer, a, b)``."""
        start = 0
        for layer, (a, b) in enumerate(self.shapes):
            if flat_index < start + a * b:
                i, j = divmod(flat_index - start, b)
                return layer, i, j
            start += a * b
        raise IndexError(flat_index)

    def perturbed(self, layer: int, a: int, b: int, delta: float) -> "ParameterSet":
        layers = [w.copy() for w in self.layers]
        layers[layer][a, b] += delta
        return ParameterSet(layers)

    def step(self, grads: Sequence[np.ndarray], lr: float) -> "ParameterSet":
        """Return ``self - lr * grads``."""
        if len(grads) != len(self.layers):
            raise StructuralError("gradient has the wrong number of layers")
        return ParameterSet([w - lr * np.asarray(g) for w, g in zip(self.layers, grads)])

    def __eq__(self, other):
        if not isinstance(other, ParameterSet):
            return NotImplemented
        return self.shapes == other.shapes and all(
            np.array_equal(a, b) for a, b in zip(self.layers, other.layers)
        )

    def __repr__(self):
        return f"ParameterSet(widths={self.widths})"


def init_params(spec: NetworkSpec, rng: np.random.Generator) -> ParameterSet:
    """I.i.d. Uniform(-0.5, 0.5) weights, drawn layer by layer in row-major order."""
    return ParameterSet([rng.uniform(-0.5, 0.5, size=shape) for shape in spec.shapes])


def activate(spec: ActivationSpec, v):
    """Apply the activation elementwise. The threshold maps 0 to 0."""
    v = np.asarray(v, dtype=np.float64)
    if spec.kind is Activation.SIGMOID:
        return expit(spec.slope * v)
    if spec.kind is Activation.THRESHOLD:
        return (v > 0).astype(np.float64)
    return np.abs(v)


def activation_derivative(spec: ActivationSpec, v):
    if spec.kind is not Activation.SIGMOID:
        raise UnsupportedActivationError(
            f"{spec.kind.value} activation has no usable derivative"
        )
    y = expit(spec.slope * np.asarray(v, dtype=np.float64))
    return spec.slope * y * (1.0 - y)


@dataclass
class ForwardTrace:
    """Everything a forward pass produced.

    ``inputs[t]`` is the bias-prefixed input of weight layer ``t``,
    ``pre[t]`` its noisy pre-activation and ``noise[t]`` the noise draw that
    went into it. ``output`` is the activated last layer.
    """

    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    noise: list[np.ndarray]
    output: np.ndarray

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.output.shape[:-1]


def _with_bias(x: np.ndarray) -> np.ndarray:
    out = np.empty(x.shape[:-1] + (x.shape[-1] + 1,))
    out[..., 0] = 1.0
    out[..., 1:] = x
    return out


def _check_inputs(spec: NetworkSpec, params: ParameterSet, inputs) -> np.ndarray:
    params.check(spec)
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] != spec.input_size:
        raise StructuralError(
            f"input must have {spec.input_size} entries (bias slot first), got shape {x.shape}"
        )
    if not np.all(x[..., 0] == 1.0):
        raise StructuralError("bias slot of every input must hold 1")
    return x


def draw_noise(spec: NetworkSpec, batch_shape: tuple[int, ...], rng: np.random.Generator):
    """Noise for every non-input neuron, drawn layer by layer."""
    if spec.noise is None:
        raise ConfigurationError("network has no noise; use forward_deterministic")
    std = spec.noise.std
    return [rng.normal(0.0, std, size=batch_shape + (m,)) for m in spec.widths[1:]]


def forward_with_noise(spec: NetworkSpec, params: ParameterSet, inputs, noise) -> ForwardTrace:
    """Forward pass with caller-supplied noise (one array per weight layer).

    Noise arrays may carry extra leading dimensions; ``inputs`` broadcasts
    against them.
    """
    x = _check_inputs(spec, params, inputs)
    if len(noise) != len(params.layers):
        raise StructuralError("need one noise array per weight layer")
    trace = ForwardTrace([], [], [], x)
    for w, r in zip(params.layers, noise):
        r = np.asarray(r, dtype=np.float64)
        if r.shape[-1] != w.shape[0]:
            raise StructuralError(f"noise of width {r.shape[-1]} for layer of width {w.shape[0]}")
        v = x @ w.T + r
        trace.inputs.append(np.broadcast_to(x, v.shape[:-1] + x.shape[-1:]))
        trace.pre.append(v)
        trace.noise.append(r)
        y = activate(spec.activation, v)
        x = _with_bias(y)
    trace.output = y
    return trace


def forward(spec: NetworkSpec, params: ParameterSet, inputs, rng: np.random.Generator,
            replicates: int | None = None) -> ForwardTrace:
    """Noisy forward pass.

    With ``replicates=K`` every input is pushed through ``K`` independent
    noise draws and the trace gains a leading axis of length ``K``.
    """
    x = _check_inputs(spec, params, inputs)
    batch = x.shape[:-1] if replicates is None else (int(replicates),) + x.shape[:-1]
    return forward_with_noise(spec, params, x, draw_noise(spec, batch, rng))


def forward_deterministic(spec: NetworkSpec, params: ParameterSet, inputs) -> ForwardTrace:
    x = _check_inputs(spec, params, inputs)
    zeros = [np.zeros(x.shape[:-1] + (m,)) for m in spec.widths[1:]]
    return forward_with_noise(spec, params, x, zeros)


def predict(spec: NetworkSpec, params: ParameterSet, inputs) -> np.ndarray:
    """Noise-free class prediction; ties go to the lowest index."""
    return np.argmax(forward_deterministic(spec, params, inputs).output, axis=-1)


# ----------------------------------------------------------------------------
# checkpoint format
#
#   line 1   UTF-8 JSON object terminated by '\n':
#            {"format": "glrnet-params", "version": 1, "widths": [...],
#             "activation": "...", "slope": s, "sigma2": v-or-null, "meta": {...}}
#   rest     all weights as little-endian float64, layer by layer, row-major
# ----------------------------------------------------------------------------

PARAMS_FORMAT = "glrnet-params"


def dumps_params(spec: NetworkSpec, params: ParameterSet, meta: dict | None = None) -> bytes:
    params.check(spec)
    header = {
        "format": PARAMS_FORMAT,
        "version": 1,
        "widths": list(spec.widths),
        "activation": spec.activation.kind.value,
        "slope": spec.activation.slope,
        "sigma2": None if spec.noise is None else spec.noise.sigma2,
        "meta": meta or {},
    }
    line = json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n"
    return line + params.flat().astype("<f8").tobytes()


def loads_params(blob: bytes) -> tuple[NetworkSpec, ParameterSet, dict]:
    stream = io.BytesIO(blob)
    line = stream.readline()
    try:
        header = json.loads(line)
    except ValueError as exc:
        raise FormatError(f"header: not a JSON line ({exc})") from None
    if header.get("format") != PARAMS_FORMAT:
        raise FormatError(f"format: expected {PARAMS_FORMAT!r}, got {header.get('format')!r}")
    sigma2 = header.get("sigma2")
    spec = NetworkSpec(
        tuple(header["widths"]),
        ActivationSpec(header["activation"], header["slope"]),
        None if sigma2 is None else NoiseSpec(sigma2),
    )
    body = stream.read()
    if len(body) != 8 * spec.n_params:
        raise FormatError(f"weights: expected {8 * spec.n_params} bytes, got {len(body)}")
    params = ParameterSet.from_flat(spec.shapes, np.frombuffer(body, dtype="<f8"))
    return spec, params, header.get("meta", {})


def save_params(path: str | PathLike, spec: NetworkSpec, params: ParameterSet,
                meta: dict | None = None) -> None:
    with open(path, "wb") as f:
        f.write(dumps_params(spec, params, meta))


def load_params(path: str | PathLike) -> tuple[NetworkSpec, ParameterSet, dict]:
    with open(path, "rb") as f:
        return loads_params(f.read())
