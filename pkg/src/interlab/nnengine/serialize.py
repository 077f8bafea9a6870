"""Model files.

Layout: the 8-byte magic ``b"ILMODEL\\n"`` followed by a UTF-8 JSON document::

    {"format_version": 1, "name": ..., "input_dim": n, "num_classes": C,
     "layers": [{"type": "dense", "in": a, "out": b,
                 "weight": <b64 LE float64, row-major>, "bias": <b64>},
                {"type": "activation", "activation": "softplus", "beta": 10.0},
                {"type": "residual", "layers": [...]}]}
"""
from __future__ import annotations

import base64
import json
from pathlib import Path
from typing import Optional

import numpy as np

from interlab.errors import MalformedFileError, ModelFormatError
from interlab.nnengine.model import Activation, Dense, Model, Residual

MAGIC = b"ILMODEL\n"
FORMAT_VERSION = 1


def _b64(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _unb64(s: str, shape) -> np.ndarray:
    buf = base64.b64decode(s.encode("ascii"), validate=True)
    return np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)


def _encode(layers) -> list:
    out = []
    for layer in layers:
        if isinstance(layer, Dense):
            out.append({"type": "dense", "in": layer.in_dim, "out": layer.out_dim,
                        "weight": _b64(layer.weight), "bias": _b64(layer.bias)})
        elif isinstance(layer, Activation):
            out.append({"type": "activation", "activation": layer.kind, "beta": layer.beta})
        else:
            out.append({"type": "residual", "layers": _encode(layer.layers)})
    return out


def _decode(items) -> tuple:
    layers = []
    for item in items:
        t = item["type"]
        if t == "dense":
            shape = (item["out"], item["in"])
            layers.append(Dense(_unb64(item["weight"], shape), _unb64(item["bias"], (item["out"],))))
        elif t == "activation":
            layers.append(Activation(item["activation"], item["beta"]))
        elif t == "residual":
            layers.append(Residual(_decode(item["layers"])))
        else:
            raise MalformedFileError(f"unknown layer type {t!r}")
    return tuple(layers)


def dumps_model(model: Model, meta: Optional[dict] = None) -> bytes:
    """``meta`` is stored verbatim under ``"meta"`` and ignored when loading."""
    doc = {"format_version": FORMAT_VERSION, "name": model.name,
           "input_dim": model.input_dim, "num_classes": model.num_classes,
           "layers": _encode(model.layers)}
    if meta:
        doc["meta"] = meta
    return MAGIC + json.dumps(doc, sort_keys=True).encode("utf-8")


def loads_model(raw: bytes) -> Model:
    if not raw.startswith(MAGIC):
        raise ModelFormatError("not a model file (bad magic bytes)")
    try:
        doc = json.loads(raw[len(MAGIC):].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedFileError(f"model file is truncated or corrupt: {exc}") from exc
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format_version {version}, expected {FORMAT_VERSION}")
    try:
        return Model(_decode(doc["layers"]), doc["input_dim"], doc["num_classes"], doc.get("name", "model"))
    except (KeyError, ValueError, TypeError) as exc:
        raise MalformedFileError(f"model file is corrupt: {exc}") from exc


def save_model(model: Model, path, meta: Optional[dict] = None) -> None:
    Path(path).write_bytes(dumps_model(model, meta))


def load_model(path) -> Model:
    return loads_model(Path(path).read_bytes())
