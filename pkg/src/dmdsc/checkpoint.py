"""Checkpoint files: JSON text with a version tag and a payload checksum.

Floats are written with Python's shortest round-trip repr (at most 17
significant digits), so every array reloads bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from dmdsc._io import atomic_write_text
from dmdsc.errors import CheckpointIntegrityError, CheckpointVersionError
from dmdsc.etf import EtfCenters, MarginSchedule
from dmdsc.net import NetConfig, NetParams

FORMAT_TAG = "dmdsc-checkpoint"
FORMAT_VERSION = 1


@dataclass(eq=False)
class Checkpoint:
    net_config: NetConfig
    params: NetParams
    centers: EtfCenters
    margins: MarginSchedule
    metadata: dict = field(default_factory=dict)
    # RMSprop running averages, aligned with params.arrays()
    optimizer_state: Optional[list] = None


def _array(a):
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "values": a.ravel().tolist()}


def _unarray(d):
    return np.array(d["values"], dtype=np.float64).reshape(d["shape"])


def _payload(ckpt):
    return {
        "net_config": asdict(ckpt.net_config),
        "params": [_array(a) for a in ckpt.params.arrays()],
        "centers": {
            "num_classes": ckpt.centers.num_classes,
            "embed_dim": ckpt.centers.embed_dim,
            "radius": ckpt.centers.radius,
            "values": _array(ckpt.centers.centers),
        },
        "margins": {
            "per_class_margin": _array(ckpt.margins.per_class_margin),
            "m_min": ckpt.margins.m_min,
            "m_max": ckpt.margins.m_max,
            "class_counts": list(ckpt.margins.class_counts),
        },
        "metadata": ckpt.metadata,
        "optimizer_state": (
            None if ckpt.optimizer_state is None else [_array(a) for a in ckpt.optimizer_state]
        ),
    }


def _digest(payload):
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def dumps(ckpt):
    payload = _payload(ckpt)
    doc = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "sha256": _digest(payload),
        "payload": payload,
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def loads(text, source="<string>"):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise CheckpointIntegrityError(f"{source}: not a complete checkpoint document ({e})") from e
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_TAG:
        raise CheckpointIntegrityError(f"{source}: missing {FORMAT_TAG!r} format tag")
    if doc.get("version") != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{source}: checkpoint version {doc.get('version')!r} is not supported "
            f"(expected {FORMAT_VERSION})"
        )
    payload = doc.get("payload")
    if not isinstance(payload, dict) or _digest(payload) != doc.get("sha256"):
        raise CheckpointIntegrityError(f"{source}: checksum mismatch")
    try:
        cfg = dict(payload["net_config"])
        cfg["hidden_dims"] = tuple(cfg["hidden_dims"])
        c = payload["centers"]
        m = payload["margins"]
        opt = payload["optimizer_state"]
        return Checkpoint(
            net_config=NetConfig(**cfg),
            params=NetParams.from_arrays([_unarray(a) for a in payload["params"]]),
            centers=EtfCenters(c["num_classes"], c["embed_dim"], c["radius"], _unarray(c["values"])),
            margins=MarginSchedule(
                _unarray(m["per_class_margin"]), m["m_min"], m["m_max"], m["class_counts"]
            ),
            metadata=payload["metadata"],
            optimizer_state=None if opt is None else [_unarray(a) for a in opt],
        )
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointIntegrityError(f"{source}: malformed checkpoint payload ({e})") from e


def save_checkpoint(ckpt, path):
    atomic_write_text(path, dumps(ckpt))


def load_checkpoint(path):
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return loads(text, source=str(path))
