"""Binary sample-set files, input manifests and CSV helpers.

Sample-set layout (little-endian)::

    line 1    UTF-8 JSON header terminated by '\\n', with at least
              {"format": "glrnet-samples", "version": 1, "count": n,
               "width": w, "paired": bool, "flags": bool,
               "method": str, "params": {...}, "manifest": {...}}
    body      paired:   n records of (original float32[w], altered float32[w])
              unpaired: n records of float32[w]
    labels    n unsigned bytes
    flags     n unsigned bytes (0/1), present when "flags" is true

Pixels are stored without the bias slot; readers put it back.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import SampleSet, add_bias
from .errors import FormatError

SAMPLES_FORMAT = "glrnet-samples"


@dataclass
class SampleFile:
    x: np.ndarray                    # (n, w + 1), bias-prefixed
    labels: np.ndarray
    originals: np.ndarray | None = None
    flags: np.ndarray | None = None
    method: str = ""
    params: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)

    def samples(self) -> SampleSet:
        return SampleSet(self.x, self.labels)


def dumps_samples(x, labels, originals=None, flags=None, method: str = "",
                  params: dict | None = None, manifest: dict | None = None) -> bytes:
    x = np.asarray(x)
    pix = x[:, 1:].astype("<f4")
    n, w = pix.shape
    header = {
        "format": SAMPLES_FORMAT,
        "version": 1,
        "count": n,
        "width": w,
        "paired": originals is not None,
        "flags": flags is not None,
        "method": method,
        "params": params or {},
        "manifest": manifest or {},
    }
    if originals is not None:
        orig = np.asarray(originals)[:, 1:].astype("<f4")
        body = np.stack([orig, pix], axis=1).tobytes()
    else:
        body = pix.tobytes()
    out = json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n" + body
    out += np.asarray(labels, dtype=np.uint8).tobytes()
    if flags is not None:
        out += np.asarray(flags, dtype=np.uint8).tobytes()
    return out


def loads_samples(blob: bytes) -> SampleFile:
    stream = io.BytesIO(blob)
    try:
        header = json.loads(stream.readline())
    except ValueError as exc:
        raise FormatError(f"header: not a JSON line ({exc})") from None
    if header.get("format") != SAMPLES_FORMAT:
        raise FormatError(f"format: expected {SAMPLES_FORMAT!r}, got {header.get('format')!r}")
    n, w = int(header["count"]), int(header["width"])
    per = 2 if header["paired"] else 1
    rest = stream.read()
    need = 4 * n * w * per + n + (n if header["flags"] else 0)
    if len(rest) != need:
        raise FormatError(f"body: expected {need} bytes after header, got {len(rest)}")
    pix = np.frombuffer(rest, dtype="<f4", count=n * w * per).astype(np.float64)
    pix = pix.reshape(n, per, w)
    off = 4 * n * w * per
    labels = np.frombuffer(rest, dtype=np.uint8, count=n, offset=off).astype(np.int64)
    flags = None
    if header["flags"]:
        flags = np.frombuffer(rest, dtype=np.uint8, count=n, offset=off + n).astype(bool)
    return SampleFile(
        x=add_bias(pix[:, -1]),
        labels=labels,
        originals=add_bias(pix[:, 0]) if per == 2 else None,
        flags=flags,
        method=header.get("method", ""),
        params=header.get("params", {}),
        manifest=header.get("manifest", {}),
    )


def save_samples(path, *args, **kwargs) -> None:
    Path(path).write_bytes(dumps_samples(*args, **kwargs))


def load_samples(path) -> SampleFile:
    return loads_samples(Path(path).read_bytes())


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest(inputs, config: dict | None = None) -> dict:
    """SHA-256 of every input file (keyed by file name) plus a digest of the config."""
    out = {"inputs": {Path(p).name: file_digest(p) for p in inputs}}
    if config is not None:
        blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
        out["config"] = hashlib.sha256(blob).hexdigest()
    return out


def write_csv(path, columns, rows, header_lines=()) -> None:
    """Write rows with optional leading ``# ...`` comment lines; floats use ``repr``."""
    with open(path, "w", newline="") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        w = csv.writer(f)
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        lines = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(lines))
